#ifndef DCOHINF_H
#define DCOHINF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DcoStatus {
  DCO_STATUS_OK = 0,
  DCO_STATUS_NULL_POINTER = 1,
  DCO_STATUS_INVALID_UTF8 = 2,
  DCO_STATUS_INVALID_CONFIG = 3,
  DCO_STATUS_SEED_FAILURE = 4,
  DCO_STATUS_SOLVER_FAILURE = 5,
  DCO_STATUS_DIVERGED = 6,
  DCO_STATUS_INVALID_GAINS = 7,
  DCO_STATUS_IO = 8,
  // The requested quantity does not exist, e.g. `J` without a disturbance.
  DCO_STATUS_UNDEFINED = 9,
  DCO_STATUS_PANIC = 10,
} DcoStatus;

// A validated configuration with its reduced model and network.
typedef struct DcoConfig DcoConfig;

// Gains with an optional certificate, bound to the configuration that
// created or loaded them.
typedef struct DcoDesign DcoDesign;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *dco_last_error(void);

// Parses and validates a JSON configuration.
//
// # Safety
// `json` must be a nul-terminated string and `out` writable.
enum DcoStatus dco_config_from_json(const char *json, struct DcoConfig **out);

// Reads a JSON configuration from a file.
//
// # Safety
// `path` must be a nul-terminated string and `out` writable.
enum DcoStatus dco_config_from_path(const char *path, struct DcoConfig **out);

// # Safety
// `config` must come from a `dco_config_*` constructor or be null.
void dco_config_free(struct DcoConfig *config);

// Runs the full alternating design.
//
// # Safety
// `config` must be a live handle and `out` writable.
enum DcoStatus dco_design_run(const struct DcoConfig *config, struct DcoDesign **out);

// Loads a gains file (JSON text) against the network of `config`.
//
// # Safety
// `config` must be a live handle, `json` nul-terminated and `out` writable.
enum DcoStatus dco_design_from_json(const struct DcoConfig *config,
                                    const char *json,
                                    struct DcoDesign **out);

// Serializes a design. Release the string with [`dco_string_free`].
//
// # Safety
// `design` must be a live handle and `out` writable.
enum DcoStatus dco_design_to_json(const struct DcoDesign *design, char **out);

// `γ = √ρ` of the certificate, `Undefined` when the design has none.
//
// # Safety
// `design` must be a live handle and `out` writable.
enum DcoStatus dco_design_gamma(const struct DcoDesign *design, double *out);

// Checks the stability certificate. Without a stored `P` the certificate is
// recovered at the stored `τ` first. `passed` is set to 1 or 0; a failed
// check is not an error.
//
// # Safety
// Both handles must be live and `passed` writable.
enum DcoStatus dco_design_verify(const struct DcoConfig *config,
                                 const struct DcoDesign *design,
                                 int *passed);

// Simulates with the configured disturbance and returns `J`.
//
// # Safety
// Both handles must be live and `out` writable.
enum DcoStatus dco_simulate_ratio(const struct DcoConfig *config,
                                  const struct DcoDesign *design,
                                  double *out);

// # Safety
// `design` must come from a `dco_design_*` constructor or be null.
void dco_design_free(struct DcoDesign *design);

// # Safety
// `s` must come from this library or be null.
void dco_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCOHINF_H */
