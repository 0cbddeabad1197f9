//! Affine matrix inequalities and a small dense SDP solver.
//!
//! A problem is `min cᵀθ` over `θ ∈ ℝᵐ` subject to
//! `sense_j · (F0_j + Σ θ_i F_ij) ⪰ margin_j · I` and optional box bounds.
//! Solving runs a Phase I that minimizes a common shift `s` of every block
//! (certifying feasibility or infeasibility), then the optimization phase.
//! The returned point is always replayed through direct eigenvalue checks and,
//! if it misses by rounding, pulled back toward the strictly feasible Phase I
//! point.
//!
//! # Debug dump format
//!
//! With [`SolverOptions::dump_dir`] set, every solve writes
//! `sdp-<counter>.json`:
//!
//! ```json
//! {
//!   "variables": [{"name": "tau", "lower": 1e-8, "upper": null}],
//!   "objective": [0.0, 1.0],
//!   "constraints": [{
//!     "name": "xi", "sense": "negative", "margin": 1e-6,
//!     "f0": [[...]], "coefficients": [{"var": 0, "matrix": [[...]]}]
//!   }]
//! }
//! ```
//!
//! Only nonzero coefficient matrices are listed.

mod ipm;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::linalg::{asymmetry, lambda_max, lambda_min, max_abs, symmetrize, to_rows, Mat, Vector};
use ipm::{DenseBlock, DualForm, IpmExit, IpmSettings};

pub const DEFAULT_DIM_CAP: usize = 64;
pub const DEFAULT_RELATIVE_MARGIN: f64 = 1e-8;
/// Slack allowed when replaying a returned point.
pub const REPLAY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("problem is infeasible (best common shift {shift:.3e})")]
    Infeasible { shift: f64 },
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} > {tol:.3e})")]
    Asymmetric { asymmetry: f64, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    NegativeDefinite,
    PositiveDefinite,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::NegativeDefinite => -1.0,
            Sense::PositiveDefinite => 1.0,
        }
    }
}

/// `F(θ) = F0 + Σ θ_i F_i` with a definiteness requirement.
#[derive(Debug, Clone)]
pub struct AffineMatrixConstraint {
    pub name: String,
    pub f0: Mat,
    pub coeffs: Vec<Mat>,
    pub sense: Sense,
    /// Absolute strictness margin; the solver default applies when `None`.
    pub margin: Option<f64>,
}

impl AffineMatrixConstraint {
    /// Extracts the affine form of `eval` by evaluating it at `0` and at every
    /// unit vector.
    pub fn from_affine(
        name: impl Into<String>,
        variable_count: usize,
        sense: Sense,
        eval: impl Fn(&[f64]) -> Mat,
    ) -> Result<Self, LmiError> {
        let mut theta = vec![0.0; variable_count];
        let f0 = eval(&theta);
        let mut coeffs = Vec::with_capacity(variable_count);
        for i in 0..variable_count {
            theta[i] = 1.0;
            let fi = eval(&theta) - &f0;
            theta[i] = 0.0;
            coeffs.push(fi);
        }
        let c = Self {
            name: name.into(),
            f0,
            coeffs,
            sense,
            margin: None,
        };
        c.check_symmetry()?;
        Ok(c)
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self
    }

    pub fn dim(&self) -> usize {
        self.f0.nrows()
    }

    pub fn evaluate(&self, theta: &[f64]) -> Mat {
        let mut out = self.f0.clone();
        for (t, f) in theta.iter().zip(&self.coeffs) {
            if *t != 0.0 {
                out += f * *t;
            }
        }
        out
    }

    fn check_symmetry(&self) -> Result<(), LmiError> {
        for m in std::iter::once(&self.f0).chain(&self.coeffs) {
            let tol = 1e-12 * (1.0 + max_abs(m));
            let a = asymmetry(m);
            if a > tol {
                return Err(LmiError::Asymmetric { asymmetry: a, tol });
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue of `sense·F(θ)`; positive means satisfied.
    pub fn slack(&self, theta: &[f64]) -> f64 {
        lambda_min(&(symmetrize(&self.evaluate(theta)) * self.sense.sign()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub names: Vec<String>,
    pub objective: Vec<f64>,
    pub constraints: Vec<AffineMatrixConstraint>,
    pub bounds: Vec<Bound>,
}

impl SdpProblem {
    pub fn new(names: Vec<String>) -> Self {
        let m = names.len();
        Self {
            names,
            objective: vec![0.0; m],
            constraints: Vec::new(),
            bounds: vec![Bound::default(); m],
        }
    }

    pub fn with_unnamed(m: usize) -> Self {
        Self::new((0..m).map(|i| format!("theta{i}")).collect())
    }

    pub fn variable_count(&self) -> usize {
        self.names.len()
    }

    pub fn minimize(&mut self, var: usize) {
        self.objective = vec![0.0; self.variable_count()];
        self.objective[var] = 1.0;
    }

    pub fn add(&mut self, c: AffineMatrixConstraint) {
        self.constraints.push(c);
    }

    pub fn bound(&mut self, var: usize, lower: Option<f64>, upper: Option<f64>) {
        self.bounds[var] = Bound { lower, upper };
    }

    fn validate(&self, opts: &SolverOptions) -> Result<(), LmiError> {
        let m = self.variable_count();
        if self.objective.len() != m || self.bounds.len() != m {
            return Err(LmiError::Malformed("objective or bounds length differs from variable count".into()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LmiError::Malformed("non-finite objective".into()));
        }
        for (i, b) in self.bounds.iter().enumerate() {
            if let (Some(l), Some(u)) = (b.lower, b.upper) {
                if l > u {
                    return Err(LmiError::Malformed(format!(
                        "bound on {} has lower {l} > upper {u}",
                        self.names[i]
                    )));
                }
            }
        }
        for c in &self.constraints {
            let d = c.dim();
            if d == 0 || c.f0.ncols() != d {
                return Err(LmiError::Malformed(format!("constraint {} is not square", c.name)));
            }
            if d > opts.dim_cap {
                return Err(LmiError::Malformed(format!(
                    "constraint {} has dimension {d} above the cap {}",
                    c.name, opts.dim_cap
                )));
            }
            if c.coeffs.len() != m {
                return Err(LmiError::Malformed(format!(
                    "constraint {} has {} coefficients for {m} variables",
                    c.name,
                    c.coeffs.len()
                )));
            }
            if c.coeffs.iter().any(|f| f.shape() != (d, d)) {
                return Err(LmiError::Malformed(format!("constraint {} mixes block sizes", c.name)));
            }
            if std::iter::once(&c.f0)
                .chain(&c.coeffs)
                .any(|f| f.iter().any(|v| !v.is_finite()))
            {
                return Err(LmiError::Malformed(format!("constraint {} has non-finite data", c.name)));
            }
            c.check_symmetry()?;
        }
        Ok(())
    }

    fn margins(&self, opts: &SolverOptions) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                c.margin
                    .unwrap_or(opts.relative_margin * (1.0 + c.f0.norm()))
            })
            .collect()
    }

    fn effective_bounds(&self, opts: &SolverOptions) -> Vec<Bound> {
        self.bounds
            .iter()
            .map(|b| match opts.radius {
                Some(r) => Bound {
                    lower: Some(b.lower.map_or(-r, |l| l.max(-r))),
                    upper: Some(b.upper.map_or(r, |u| u.min(r))),
                },
                None => *b,
            })
            .collect()
    }

    /// Worst violation over constraints and bounds, measured against the
    /// margins. Nonnegative means satisfied with margin.
    fn worst_slack(&self, theta: &[f64], margins: &[f64], bounds: &[Bound]) -> f64 {
        let mut worst = f64::INFINITY;
        for (c, m) in self.constraints.iter().zip(margins) {
            worst = worst.min(c.slack(theta) - m);
        }
        for (t, b) in theta.iter().zip(bounds) {
            if let Some(l) = b.lower {
                worst = worst.min(t - l);
            }
            if let Some(u) = b.upper {
                worst = worst.min(u - t);
            }
        }
        worst
    }

    pub fn dump_json(&self, opts: &SolverOptions) -> serde_json::Value {
        let margins = self.margins(opts);
        let vars: Vec<_> = self
            .names
            .iter()
            .zip(&self.bounds)
            .map(|(n, b)| json!({"name": n, "lower": b.lower, "upper": b.upper}))
            .collect();
        let cons: Vec<_> = self
            .constraints
            .iter()
            .zip(&margins)
            .map(|(c, m)| {
                let coeffs: Vec<_> = c
                    .coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| max_abs(f) > 0.0)
                    .map(|(i, f)| json!({"var": i, "matrix": to_rows(f)}))
                    .collect();
                json!({
                    "name": c.name,
                    "sense": match c.sense { Sense::NegativeDefinite => "negative", Sense::PositiveDefinite => "positive" },
                    "margin": m,
                    "f0": to_rows(&c.f0),
                    "coefficients": coeffs,
                })
            })
            .collect();
        json!({"variables": vars, "objective": self.objective, "constraints": cons})
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Default margin is `relative_margin · (1 + ‖F0‖)`.
    pub relative_margin: f64,
    pub dim_cap: usize,
    /// Optional box `|θ_i| ≤ radius` added to every variable.
    pub radius: Option<f64>,
    /// Threshold on the Phase I shift below which a problem counts as feasible.
    pub feasibility_tol: f64,
    /// Candidate point, tried before Phase I.
    pub start: Option<Vec<f64>>,
    pub dump_dir: Option<PathBuf>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
            relative_margin: DEFAULT_RELATIVE_MARGIN,
            dim_cap: DEFAULT_DIM_CAP,
            radius: None,
            feasibility_tol: 1e-9,
            start: None,
            dump_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped on the loose tolerance; the point still replays.
    Inaccurate,
    /// Pure feasibility problem; a strictly feasible point was found.
    Feasible,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub phase1_iterations: usize,
    /// Smallest constraint slack beyond the margin at `theta`.
    pub min_slack: f64,
    pub pulled_back: bool,
}

static DUMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

fn dual_form(
    problem: &SdpProblem,
    margins: &[f64],
    bounds: &[Bound],
    shift_var: bool,
) -> DualForm {
    let m = problem.variable_count();
    let total = m + usize::from(shift_var);
    let mut blocks = Vec::with_capacity(problem.constraints.len());
    for (c, margin) in problem.constraints.iter().zip(margins) {
        let s = c.sense.sign();
        let d = c.dim();
        let mut cj = symmetrize(&c.f0) * s - Mat::identity(d, d) * *margin;
        let mut a: Vec<(usize, Mat)> = c
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, f)| max_abs(f) > 0.0)
            .map(|(i, f)| (i, symmetrize(f) * (-s)))
            .collect();
        let scale = a.iter().map(|(_, f)| f.norm()).fold(cj.norm(), f64::max);
        if scale > 0.0 {
            cj /= scale;
            for (_, f) in a.iter_mut() {
                *f /= scale;
            }
        }
        if shift_var {
            a.push((m, -Mat::identity(d, d)));
        }
        blocks.push(DenseBlock { c: cj, a });
    }

    let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    for (i, b) in bounds.iter().enumerate() {
        // θ_i − l ≥ 0  ⇔  −l − (−1)θ_i ≥ 0
        if let Some(l) = b.lower {
            let sc = 1.0_f64.max(l.abs());
            rows.push((-l / sc, vec![(i, -1.0 / sc)]));
        }
        if let Some(u) = b.upper {
            let sc = 1.0_f64.max(u.abs());
            rows.push((u / sc, vec![(i, 1.0 / sc)]));
        }
    }
    if shift_var {
        rows.push((1.0, vec![(m, -1.0)]));
    }
    let k = rows.len();
    let mut lp_c = Vector::zeros(k);
    let mut lp_a = Mat::zeros(k, total);
    for (r, (c, entries)) in rows.into_iter().enumerate() {
        lp_c[r] = c;
        for (i, v) in entries {
            lp_a[(r, i)] = v;
        }
    }

    let mut b = Vector::zeros(total);
    if shift_var {
        b[m] = -1.0;
    } else {
        for i in 0..m {
            b[i] = -problem.objective[i];
        }
    }
    DualForm {
        m: total,
        b,
        blocks,
        lp_c,
        lp_a,
    }
}

/// Solves the problem. Errors distinguish infeasibility, unboundedness and
/// numerical breakdown.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution, LmiError> {
    problem.validate(opts)?;
    if let Some(dir) = &opts.dump_dir {
        let k = DUMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let path = dir.join(format!("sdp-{k}.json"));
        if let Err(e) = std::fs::write(&path, problem.dump_json(opts).to_string()) {
            log::warn!("could not write SDP dump {}: {e}", path.display());
        }
    }
    let m = problem.variable_count();
    let margins = problem.margins(opts);
    let bounds = problem.effective_bounds(opts);
    let settings = IpmSettings {
        tol: opts.tol,
        loose_tol: 1e-6_f64.max(opts.tol),
        max_iter: opts.max_iter,
    };
    let is_feasibility = problem.objective.iter().all(|c| *c == 0.0);

    // Phase I, skipped when the caller's candidate already satisfies everything.
    let mut phase1_iterations = 0;
    let candidate = opts
        .start
        .as_ref()
        .filter(|s| s.len() == m)
        .filter(|s| problem.worst_slack(s, &margins, &bounds) >= 0.0)
        .cloned();
    let interior = match candidate {
        Some(p) => p,
        None => {
            let form = dual_form(problem, &margins, &bounds, true);
            let mut stop = |y: &Vector| {
                let theta: Vec<f64> = y.iter().take(m).copied().collect();
                problem.worst_slack(&theta, &margins, &bounds) >= 0.0
            };
            let res = ipm::solve(&form, settings, &mut stop);
            phase1_iterations = res.iterations;
            let theta: Vec<f64> = res.y.iter().take(m).copied().collect();
            let shift = res.y[m];
            match res.exit {
                IpmExit::Stopped => theta,
                IpmExit::Converged { .. } => {
                    if problem.worst_slack(&theta, &margins, &bounds) >= 0.0 {
                        theta
                    } else if shift >= -opts.feasibility_tol {
                        return Err(LmiError::Infeasible { shift });
                    } else {
                        return Err(LmiError::NumericalFailure(format!(
                            "phase I shift {shift:.3e} but the point does not replay"
                        )));
                    }
                }
                IpmExit::Unbounded => {
                    return Err(LmiError::NumericalFailure("phase I diverged".into()))
                }
                IpmExit::Failed(why) => {
                    if shift.is_finite() && shift > 0.0 && res.iterations > 0 {
                        return Err(LmiError::Infeasible { shift });
                    }
                    return Err(LmiError::NumericalFailure(format!("phase I: {why}")));
                }
            }
        }
    };

    if is_feasibility || m == 0 {
        let min_slack = problem.worst_slack(&interior, &margins, &bounds);
        return Ok(SdpSolution {
            status: SolveStatus::Feasible,
            objective: 0.0,
            theta: interior,
            iterations: 0,
            phase1_iterations,
            min_slack,
            pulled_back: false,
        });
    }

    let form = dual_form(problem, &margins, &bounds, false);
    let res = ipm::solve(&form, settings, &mut |_| false);
    let status = match res.exit {
        IpmExit::Converged { loose: false } => SolveStatus::Optimal,
        IpmExit::Converged { loose: true } => SolveStatus::Inaccurate,
        IpmExit::Unbounded => return Err(LmiError::Unbounded),
        IpmExit::Failed(why) => return Err(LmiError::NumericalFailure(why)),
        IpmExit::Stopped => unreachable!("optimization phase has no stop rule"),
    };
    let raw: Vec<f64> = res.y.iter().copied().collect();
    let (theta, pulled_back) = if problem.worst_slack(&raw, &margins, &bounds) >= -REPLAY_TOL {
        (raw, false)
    } else {
        (pull_back(problem, &raw, &interior, &margins, &bounds), true)
    };
    let objective = problem
        .objective
        .iter()
        .zip(&theta)
        .map(|(c, t)| c * t)
        .sum();
    let min_slack = problem.worst_slack(&theta, &margins, &bounds);
    Ok(SdpSolution {
        status,
        theta,
        objective,
        iterations: res.iterations,
        phase1_iterations,
        min_slack,
        pulled_back,
    })
}

/// Smallest step from `theta` toward the strictly feasible `interior` that
/// replays. Constraint slacks are concave along the segment, so bisection on
/// the step applies.
fn pull_back(
    problem: &SdpProblem,
    theta: &[f64],
    interior: &[f64],
    margins: &[f64],
    bounds: &[Bound],
) -> Vec<f64> {
    let at = |t: f64| -> Vec<f64> {
        theta
            .iter()
            .zip(interior)
            .map(|(a, b)| a + t * (b - a))
            .collect()
    };
    let ok = |t: f64| problem.worst_slack(&at(t), margins, bounds) >= 0.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut t = 1e-12;
    while t < 1.0 {
        if ok(t) {
            hi = t;
            break;
        }
        lo = t;
        t *= 10.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    at(hi)
}

/// Sign decision for a symmetric matrix. Returns the verdict and the relevant
/// extreme eigenvalue (`λ_max` for negative, `λ_min` for positive sense).
pub fn check_definiteness(m: &Mat, sense: Sense, tol: f64) -> Result<(bool, f64), LmiError> {
    if m.nrows() != m.ncols() {
        return Err(LmiError::Malformed("matrix is not square".into()));
    }
    let a = asymmetry(m);
    if a > tol {
        return Err(LmiError::Asymmetric { asymmetry: a, tol });
    }
    Ok(match sense {
        Sense::NegativeDefinite => {
            let l = lambda_max(m);
            (l < 0.0, l)
        }
        Sense::PositiveDefinite => {
            let l = lambda_min(m);
            (l > 0.0, l)
        }
    })
}
