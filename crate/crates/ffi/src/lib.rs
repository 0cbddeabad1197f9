//! C ABI over the design, verification and simulation pipeline.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a [`DcoStatus`];
//! on failure [`dco_last_error`] describes the cause. Panics never cross the
//! boundary and surface as [`DcoStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dcohinf::config::{DisturbancePreset, RunConfig};
use dcohinf::design::{
    algorithm1, minimize_rho_over_p, verify_certificate, DesignContext, DesignError, GainSet, LyapunovCertificate,
    PerformanceWeights,
};
use dcohinf::io::GainsFile;
use dcohinf::network::SensorNetwork;
use dcohinf::simulate::{performance_ratio, simulate, SimulationError};
use dcohinf::spectral::ModalSystem;
use dcohinf::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    SeedFailure = 4,
    SolverFailure = 5,
    Diverged = 6,
    InvalidGains = 7,
    Io = 8,
    /// The requested quantity does not exist, e.g. `J` without a disturbance.
    Undefined = 9,
    Panic = 10,
}

impl From<&Error> for DcoStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Spectral(_) | Error::Network(_) => Self::InvalidConfig,
            Error::Io { .. } => Self::Io,
            Error::Gains(_) => Self::InvalidGains,
            Error::Lmi(_) => Self::SolverFailure,
            Error::Design(d) => match d {
                DesignError::SeedFailure { .. } => Self::SeedFailure,
                DesignError::PatternViolation(_) | DesignError::Dimension(_) => Self::InvalidGains,
                DesignError::InvalidWeights(_) => Self::InvalidConfig,
                DesignError::Solver { .. } | DesignError::NumericalFailure(_) => Self::SolverFailure,
            },
            Error::Simulation(s) => match s {
                SimulationError::Diverged { .. } => Self::Diverged,
                SimulationError::UndefinedRatio => Self::Undefined,
                SimulationError::Dimension(_) => Self::InvalidGains,
                _ => Self::InvalidConfig,
            },
        }
    }
}

/// A validated configuration with its reduced model and network.
pub struct DcoConfig {
    cfg: RunConfig,
    modal: ModalSystem,
    net: SensorNetwork,
    weights: PerformanceWeights,
}

/// Gains with an optional certificate, bound to the configuration that
/// created or loaded them.
pub struct DcoDesign {
    file: GainsFile,
    gains: GainSet,
    cert: Option<LyapunovCertificate>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(DcoStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(DcoStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DcoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DcoStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DcoStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(DcoStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DcoStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(DcoStatus::NullPointer, format!("{what} is null")))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(DcoStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

impl DcoConfig {
    fn build(cfg: RunConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let modal = cfg.build_modal(cfg.simulation.modes)?;
        let net = cfg.build_network(&modal)?;
        let weights = cfg.weights()?;
        Ok(Self {
            cfg,
            modal,
            net,
            weights,
        })
    }

    fn ctx(&self) -> DesignContext<'_> {
        DesignContext {
            modal: &self.modal,
            net: &self.net,
            weights: &self.weights,
            kappa1: self.modal.kappa1.value,
        }
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dco_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses and validates a JSON configuration.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dco_config_from_json(json: *const c_char, out: *mut *mut DcoConfig) -> DcoStatus {
    guard(|| {
        out_arg(out, "out")?;
        let text = str_arg(json, "json")?;
        let cfg = DcoConfig::build(RunConfig::from_json_str(text)?)?;
        *out = Box::into_raw(Box::new(cfg));
        Ok(())
    })
}

/// Reads a JSON configuration from a file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dco_config_from_path(path: *const c_char, out: *mut *mut DcoConfig) -> DcoStatus {
    guard(|| {
        out_arg(out, "out")?;
        let p = str_arg(path, "path")?;
        let cfg = DcoConfig::build(RunConfig::from_path(Path::new(p))?)?;
        *out = Box::into_raw(Box::new(cfg));
        Ok(())
    })
}

/// # Safety
/// `config` must come from a `dco_config_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn dco_config_free(config: *mut DcoConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the full alternating design.
///
/// # Safety
/// `config` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dco_design_run(config: *const DcoConfig, out: *mut *mut DcoDesign) -> DcoStatus {
    guard(|| {
        out_arg(out, "out")?;
        let c = ref_arg(config, "config")?;
        let res = algorithm1(&c.ctx(), &c.cfg.algorithm_params()).map_err(Error::from)?;
        let d = DcoDesign {
            file: GainsFile::from_design(&res, &c.net),
            gains: res.gains,
            cert: Some(res.cert),
        };
        *out = Box::into_raw(Box::new(d));
        Ok(())
    })
}

/// Loads a gains file (JSON text) against the network of `config`.
///
/// # Safety
/// `config` must be a live handle, `json` nul-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dco_design_from_json(
    config: *const DcoConfig,
    json: *const c_char,
    out: *mut *mut DcoDesign,
) -> DcoStatus {
    guard(|| {
        out_arg(out, "out")?;
        let c = ref_arg(config, "config")?;
        let file = GainsFile::from_json_str(str_arg(json, "json")?)?;
        let gains = file.gains(&c.net, c.modal.n_slow(), c.modal.q_u())?;
        let cert = file.full_certificate(c.modal.n_slow())?;
        *out = Box::into_raw(Box::new(DcoDesign { file, gains, cert }));
        Ok(())
    })
}

/// Serializes a design. Release the string with [`dco_string_free`].
///
/// # Safety
/// `design` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dco_design_to_json(design: *const DcoDesign, out: *mut *mut c_char) -> DcoStatus {
    guard(|| {
        out_arg(out, "out")?;
        let d = ref_arg(design, "design")?;
        let s = CString::new(d.file.to_json_pretty()).expect("JSON has no nul bytes");
        *out = s.into_raw();
        Ok(())
    })
}

/// `γ = √ρ` of the certificate, `Undefined` when the design has none.
///
/// # Safety
/// `design` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dco_design_gamma(design: *const DcoDesign, out: *mut f64) -> DcoStatus {
    guard(|| {
        out_arg(out, "out")?;
        let d = ref_arg(design, "design")?;
        let gamma = d
            .cert
            .as_ref()
            .map(|c| c.gamma())
            .or_else(|| d.file.design.as_ref().map(|s| s.gamma))
            .ok_or_else(|| Fail(DcoStatus::Undefined, "design has no certificate".into()))?;
        *out = gamma;
        Ok(())
    })
}

/// Checks the stability certificate. Without a stored `P` the certificate is
/// recovered at the stored `τ` first. `passed` is set to 1 or 0; a failed
/// check is not an error.
///
/// # Safety
/// Both handles must be live and `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn dco_design_verify(
    config: *const DcoConfig,
    design: *const DcoDesign,
    passed: *mut c_int,
) -> DcoStatus {
    guard(|| {
        out_arg(passed, "passed")?;
        let c = ref_arg(config, "config")?;
        let d = ref_arg(design, "design")?;
        let cert = match &d.cert {
            Some(cert) => cert.clone(),
            None => {
                let tau = d
                    .file
                    .tau()
                    .ok_or_else(|| Fail(DcoStatus::InvalidGains, "no certificate: tau is required".into()))?;
                match minimize_rho_over_p(&c.ctx(), &d.gains, tau, &c.cfg.algorithm_params().solver, None) {
                    Ok((cert, _)) => cert,
                    Err(_) => {
                        *passed = 0;
                        return Ok(());
                    }
                }
            }
        };
        let r = verify_certificate(&c.modal, &c.net, &d.gains, &cert, &c.weights, c.modal.kappa1.value);
        *passed = c_int::from(r.passed);
        Ok(())
    })
}

/// Simulates with the configured disturbance and returns `J`.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dco_simulate_ratio(
    config: *const DcoConfig,
    design: *const DcoDesign,
    out: *mut f64,
) -> DcoStatus {
    guard(|| {
        out_arg(out, "out")?;
        let c = ref_arg(config, "config")?;
        let d = ref_arg(design, "design")?;
        if c.cfg.simulation.disturbance == DisturbancePreset::None {
            return Err(Fail(DcoStatus::Undefined, "no disturbance configured".into()));
        }
        d.gains.check_pattern(&c.net.sparsity_pattern()).map_err(Error::from)?;
        let trace = simulate(
            &c.modal,
            &c.net,
            &d.gains,
            &c.cfg.disturbance(),
            &c.weights.q,
            &c.weights.r,
            &c.cfg.simulation_options(),
        )
        .map_err(Error::from)?;
        *out = performance_ratio(&trace).map_err(Error::from)?;
        Ok(())
    })
}

/// # Safety
/// `design` must come from a `dco_design_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn dco_design_free(design: *mut DcoDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dco_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
