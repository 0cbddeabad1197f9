//! Batch commands: `design`, `simulate`, `verify` and `compare`.
//!
//! Every command reads a [`RunConfig`] and reports on the writer it is given,
//! so the binary and the tests share one code path. Failures map onto the
//! exit codes of [`ExitCode`].

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{DisturbancePreset, InitialPreset, RunConfig};
use crate::design::{
    algorithm1, minimize_rho_over_p, verify_certificate, DesignContext, DesignError, DesignResult, GainSet,
    LyapunovCertificate, PerformanceWeights,
};
use crate::error::{Error, Result};
use crate::io::{write_field, write_trace, GainsFile};
use crate::network::SensorNetwork;
use crate::simulate::{consensus_disagreement, simulate, SimulationError, SimulationTrace};
use crate::spectral::ModalSystem;

/// Environment variable read by the binary for the log filter.
pub const LOG_ENV: &str = "DCOHINF_LOG";

/// Process exit codes.
///
/// | code | meaning |
/// |------|---------|
/// | 0 | success |
/// | 2 | invalid configuration or command line |
/// | 3 | design seed phase found no feasible point |
/// | 4 | SDP solver or numerical failure |
/// | 5 | simulation diverged |
/// | 6 | verification failed |
/// | 7 | file could not be read or written |
/// | 8 | invalid gains file or gain sparsity violated |
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitCode {
    Ok = 0,
    InvalidConfig = 2,
    SeedFailure = 3,
    SolverFailure = 4,
    Diverged = 5,
    VerifyFailed = 6,
    Io = 7,
    InvalidGains = 8,
}

impl ExitCode {
    pub fn code(self) -> u8 {
        self as u8
    }
}

impl From<&Error> for ExitCode {
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
                SimulationError::Dimension(_) => Self::InvalidGains,
                _ => Self::InvalidConfig,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dcohinf", version, about = "Consensus-observer H-infinity control of the Kuramoto-Sivashinsky equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the alternating design and write the gains, certificate and log.
    Design(DesignArgs),
    /// Simulate the closed loop with a gains file and report J.
    Simulate(SimulateArgs),
    /// Check the stability certificate of a gains file.
    Verify(VerifyArgs),
    /// Design and simulate the network and the single-observer variant.
    Compare(CompareArgs),
}

/// Settings that override the `simulation` section of the config.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, value_name = "none|reference|random")]
    pub disturbance: Option<DisturbancePreset>,
    /// Seed of the `random` disturbance.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Retained modes, slow and fast together.
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long, value_name = "auto|model|zero")]
    pub initial: Option<InitialPreset>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.simulation;
        if let Some(d) = self.disturbance {
            s.disturbance = d;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.dt {
            s.dt = v;
        }
        if let Some(v) = self.modes {
            s.modes = v;
        }
        if let Some(v) = self.initial {
            s.initial = v;
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Where to write the design JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub gains: PathBuf,
    /// Trace CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Field snapshots CSV on a uniform grid.
    #[arg(long)]
    pub field_out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub gains: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for the two design files and traces.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Runs one command, printing errors to stderr.
pub fn run(cli: &Cli, out: &mut dyn Write) -> ExitCode {
    let res = match &cli.command {
        Command::Design(a) => cmd_design(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Compare(a) => cmd_compare(a, out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(&e)
        }
    }
}

/// Config, reduced model, network and weights shared by every command.
struct Setup {
    cfg: RunConfig,
    modal: ModalSystem,
    net: SensorNetwork,
    weights: PerformanceWeights,
}

impl Setup {
    fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let mut cfg = RunConfig::from_path(path)?;
        overrides.apply(&mut cfg);
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

    fn ctx<'a>(&'a self, net: &'a SensorNetwork) -> DesignContext<'a> {
        DesignContext {
            modal: &self.modal,
            net,
            weights: &self.weights,
            kappa1: self.modal.kappa1.value,
        }
    }

    fn load_gains(&self, path: &Path) -> Result<(GainsFile, GainSet)> {
        let file = GainsFile::read(path)?;
        let gains = file.gains(&self.net, self.modal.n_slow(), self.modal.q_u())?;
        Ok((file, gains))
    }

    fn simulate(&self, net: &SensorNetwork, gains: &GainSet) -> Result<SimulationTrace> {
        Ok(simulate(
            &self.modal,
            net,
            gains,
            &self.cfg.disturbance(),
            &self.weights.q,
            &self.weights.r,
            &self.cfg.simulation_options(),
        )?)
    }
}

fn design_summary(out: &mut dyn Write, res: &DesignResult) -> std::io::Result<()> {
    writeln!(out, "kappa1 = {:.6}", res.kappa1)?;
    writeln!(
        out,
        "seed phase: beta = {:.6e} after {} alternation(s)",
        res.seed_beta, res.seed_alternations
    )?;
    writeln!(
        out,
        "rho phase: {} iteration(s), {}",
        res.rho_history.len().saturating_sub(1),
        if res.converged { "converged" } else { "stopped at the iteration cap" }
    )?;
    writeln!(out, "tau = {:.6}", res.cert.tau)?;
    writeln!(out, "gamma = {:.6}", res.gamma)
}

fn io_err(path: &str) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_string(),
        source,
    }
}

const STDOUT: &str = "<stdout>";

pub fn cmd_design(args: &DesignArgs, out: &mut dyn Write) -> Result<ExitCode> {
    let s = Setup::load(&args.config, &args.overrides)?;
    let res = algorithm1(&s.ctx(&s.net), &s.cfg.algorithm_params())?;
    GainsFile::from_design(&res, &s.net).write(&args.out)?;
    design_summary(out, &res).map_err(io_err(STDOUT))?;
    Ok(ExitCode::Ok)
}

/// `J` of a trace, or `None` without an external disturbance. The fast-mode
/// leakage in `v̄` carries energy even then, but the ratio is meaningless.
fn trace_ratio(trace: &SimulationTrace, disturbed: bool) -> Option<f64> {
    let last = trace.samples.last()?;
    (disturbed && last.dist_integral > 0.0).then(|| last.perf_integral.sqrt() / last.dist_integral.sqrt())
}

fn report_trace(out: &mut dyn Write, trace: &SimulationTrace, disturbed: bool) -> std::io::Result<Option<f64>> {
    let last = trace.samples.last().expect("trace has the initial sample");
    writeln!(out, "t_f = {}", last.t)?;
    writeln!(out, "final |x_s| = {:.6e}", last.x_s_norm())?;
    writeln!(out, "final |x_f| = {:.6e}", last.x_f_norm)?;
    writeln!(out, "final field L2 norm = {:.6e}", last.field_norm())?;
    for (i, e) in last.estimation_errors().iter().enumerate() {
        writeln!(out, "final |e_{}| = {:.6e}", i + 1, e)?;
    }
    if let Some(d) = consensus_disagreement(trace).last() {
        writeln!(out, "final observer disagreement = {d:.6e}")?;
    }
    let j = trace_ratio(trace, disturbed);
    if let Some(j) = j {
        writeln!(out, "J = {j:.6e}")?;
    }
    Ok(j)
}

/// Uniform grid on `[-π, π]` used for field snapshots.
pub fn field_grid(points: usize) -> Vec<f64> {
    let h = 2.0 * std::f64::consts::PI / (points - 1) as f64;
    (0..points).map(|k| -std::f64::consts::PI + k as f64 * h).collect()
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<ExitCode> {
    let s = Setup::load(&args.config, &args.overrides)?;
    let (file, gains) = s.load_gains(&args.gains)?;
    gains.check_pattern(&s.net.sparsity_pattern())?;
    let trace = s.simulate(&s.net, &gains)?;
    if let Some(p) = &args.out {
        write_trace(p, &trace)?;
    }
    if let Some(p) = &args.field_out {
        write_field(p, &trace, &field_grid(129))?;
    }
    let disturbed = s.cfg.simulation.disturbance != DisturbancePreset::None;
    let j = report_trace(out, &trace, disturbed).map_err(io_err(STDOUT))?;
    if let (Some(j), Some(gamma)) = (j, file.design.as_ref().map(|d| d.gamma)) {
        writeln!(out, "gamma = {gamma:.6} (J < gamma: {})", if j < gamma { "yes" } else { "no" })
            .map_err(io_err(STDOUT))?;
    }
    Ok(ExitCode::Ok)
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<ExitCode> {
    let s = Setup::load(&args.config, &args.overrides)?;
    let (file, gains) = s.load_gains(&args.gains)?;
    let n = s.modal.n_slow();
    let cert = match file.full_certificate(n)? {
        Some(c) => c,
        None => {
            let tau = file
                .tau()
                .ok_or_else(|| Error::Gains("no certificate: tau is required".into()))?;
            if let Err(e) = gains.check_pattern(&s.net.sparsity_pattern()) {
                writeln!(out, "sparsity: FAIL ({e})").map_err(io_err(STDOUT))?;
                return Ok(ExitCode::VerifyFailed);
            }
            let params = s.cfg.algorithm_params();
            match minimize_rho_over_p(&s.ctx(&s.net), &gains, tau, &params.solver, None) {
                Ok((c, _)) => {
                    writeln!(out, "P recovered at tau = {tau} (rho = {:.6})", c.rho).map_err(io_err(STDOUT))?;
                    c
                }
                Err(e) => {
                    writeln!(out, "no certificate at tau = {tau}: {e}").map_err(io_err(STDOUT))?;
                    return Ok(ExitCode::VerifyFailed);
                }
            }
        }
    };
    let passed = report_verification(out, &s, &gains, &cert).map_err(io_err(STDOUT))?;
    Ok(if passed { ExitCode::Ok } else { ExitCode::VerifyFailed })
}

fn report_verification(
    out: &mut dyn Write,
    s: &Setup,
    gains: &GainSet,
    cert: &LyapunovCertificate,
) -> std::io::Result<bool> {
    let r = verify_certificate(&s.modal, &s.net, gains, cert, &s.weights, s.modal.kappa1.value);
    let verdict = |ok: bool| if ok { "ok" } else { "FAIL" };
    writeln!(out, "lambda_max(A) = {:.6e} [{}]", r.lambda_max_a, verdict(r.lambda_max_a < 0.0))?;
    writeln!(out, "lambda_min(P) = {:.6e} [{}]", r.lambda_min_p, verdict(r.lambda_min_p > 0.0))?;
    writeln!(out, "sparsity: {}", verdict(r.sparsity_ok))?;
    writeln!(out, "tau = {:.6}", r.tau)?;
    writeln!(out, "gamma = {:.6}", r.gamma)?;
    if let Some(e) = &r.error {
        writeln!(out, "error: {e}")?;
    }
    writeln!(out, "verification {}", if r.passed { "passed" } else { "FAILED" })?;
    Ok(r.passed)
}

/// One arm of the comparison.
#[derive(Debug, Clone)]
pub struct ArmOutcome {
    pub name: &'static str,
    pub nodes: usize,
    pub design: DesignResult,
    pub j: Option<f64>,
}

/// Designs and simulates the full network and its first node alone. The two
/// arms run on separate threads.
pub fn compare(cfg_path: &Path, overrides: &Overrides) -> Result<(Vec<ArmOutcome>, Vec<SimulationTrace>)> {
    let s = Setup::load(cfg_path, overrides)?;
    let so = s.net.single_observer(0)?;
    let params = s.cfg.algorithm_params();
    let arms: [(&'static str, &SensorNetwork); 2] = [("DCO", &s.net), ("SO", &so)];
    let results: Vec<Result<(ArmOutcome, SimulationTrace)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = arms
            .iter()
            .map(|&(name, net)| {
                let (s, params) = (&s, &params);
                scope.spawn(move || -> Result<(ArmOutcome, SimulationTrace)> {
                    let design = algorithm1(&s.ctx(net), params)?;
                    let trace = s.simulate(net, &design.gains)?;
                    let j = trace_ratio(&trace, s.cfg.simulation.disturbance != DisturbancePreset::None);
                    Ok((
                        ArmOutcome {
                            name,
                            nodes: net.node_count(),
                            design,
                            j,
                        },
                        trace,
                    ))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("design thread panicked")).collect()
    });
    let mut arms_out = Vec::new();
    let mut traces = Vec::new();
    for r in results {
        let (a, t) = r?;
        arms_out.push(a);
        traces.push(t);
    }
    Ok((arms_out, traces))
}

pub fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<ExitCode> {
    let (arms, traces) = compare(&args.config, &args.overrides)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(io_err(&dir.display().to_string()))?;
        let s = Setup::load(&args.config, &args.overrides)?;
        let so = s.net.single_observer(0)?;
        for ((arm, trace), net) in arms.iter().zip(&traces).zip([&s.net, &so]) {
            let stem = arm.name.to_lowercase();
            GainsFile::from_design(&arm.design, net).write(&dir.join(format!("{stem}_design.json")))?;
            write_trace(&dir.join(format!("{stem}_trace.csv")), trace)?;
        }
    }
    let w = |e| io_err(STDOUT)(e);
    writeln!(out, "{:<6}{:>6}{:>14}{:>14}", "arm", "nodes", "gamma", "J").map_err(w)?;
    for a in &arms {
        let j = a.j.map_or_else(|| "-".to_string(), |j| format!("{j:.6e}"));
        writeln!(out, "{:<6}{:>6}{:>14.6}{:>14}", a.name, a.nodes, a.design.gamma, j).map_err(w)?;
    }
    let (dco, so) = (&arms[0], &arms[1]);
    writeln!(
        out,
        "gamma_DCO < gamma_SO: {}",
        if dco.design.gamma < so.design.gamma { "yes" } else { "no" }
    )
    .map_err(w)?;
    if let (Some(a), Some(b)) = (dco.j, so.j) {
        writeln!(out, "J_DCO < J_SO: {}", if a < b { "yes" } else { "no" }).map_err(w)?;
    }
    Ok(ExitCode::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let all = [
            ExitCode::Ok,
            ExitCode::InvalidConfig,
            ExitCode::SeedFailure,
            ExitCode::SolverFailure,
            ExitCode::Diverged,
            ExitCode::VerifyFailed,
            ExitCode::Io,
            ExitCode::InvalidGains,
        ];
        let mut codes: Vec<u8> = all.iter().map(|c| c.code()).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), all.len());
    }

    #[test]
    fn error_mapping() {
        assert_eq!(ExitCode::from(&Error::Config("x".into())), ExitCode::InvalidConfig);
        assert_eq!(ExitCode::from(&Error::Gains("x".into())), ExitCode::InvalidGains);
        let seed = Error::Design(DesignError::SeedFailure { alternations: 3, beta: 1.0 });
        assert_eq!(ExitCode::from(&seed), ExitCode::SeedFailure);
        let div = Error::Simulation(SimulationError::Diverged { t: 1.0 });
        assert_eq!(ExitCode::from(&div), ExitCode::Diverged);
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "dcohinf", "simulate", "--config", "c.json", "--gains", "g.json", "--disturbance", "none", "--dt", "1e-3",
            "--modes", "16",
        ])
        .unwrap();
        let Command::Simulate(a) = cli.command else { panic!() };
        assert_eq!(a.overrides.disturbance, Some(DisturbancePreset::None));
        assert_eq!(a.overrides.modes, Some(16));
        assert!(Cli::try_parse_from(["dcohinf", "simulate", "--disturbance", "loud"]).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = field_grid(5);
        assert_eq!(g[0], -std::f64::consts::PI);
        assert!((g[4] - std::f64::consts::PI).abs() < 1e-15);
    }
}
