use log::{debug, info, warn};
use nalgebra::Schur;

use crate::linalg::{put, Mat};
use crate::lmi::{self, AffineMatrixConstraint, LmiError, SdpProblem, Sense, SolverOptions};

use super::{
    assemble_augmented, assemble_bmi, lower_of, sym_from_lower, sym_len, AlgorithmParams,
    DesignContext, DesignError, DesignResult, GainLayout, GainSet, IterationRecord,
    LyapunovCertificate, Stage,
};

fn solver_err(stage: &'static str) -> impl Fn(LmiError) -> DesignError {
    move |source| DesignError::Solver { stage, source }
}

fn bmi(ctx: &DesignContext, gains: &GainSet, cert: &LyapunovCertificate) -> Mat {
    let aug = assemble_augmented(ctx.modal, ctx.net, gains)
        .expect("gain layout always respects the sparsity pattern");
    assemble_bmi(&aug, cert, ctx.weights, ctx.kappa1, gains)
        .expect("certificate sized from the augmented system")
}

fn state_dim(ctx: &DesignContext) -> usize {
    ctx.modal.n_slow() * (ctx.net.node_count() + 1)
}

/// `diag(P, 0, 0, 0)` padded to the size of `Ξ`.
fn pad_p(p: &Mat, size: usize) -> Mat {
    let mut out = Mat::zeros(size, size);
    put(&mut out, 0, 0, p);
    out
}

/// Gains-group problem with `P` fixed. The last variable is the objective:
/// `β` when `rho` is `Some` (seed phase), `ρ` otherwise.
fn gains_problem(
    ctx: &DesignContext,
    layout: &GainLayout,
    p: &Mat,
    rho: Option<f64>,
    params: &AlgorithmParams,
) -> Result<SdpProblem, DesignError> {
    let nl = layout.len();
    let mut names = layout.names();
    names.push("tau".into());
    names.push(if rho.is_some() { "beta" } else { "rho" }.into());
    let m = names.len();
    let stage = if rho.is_some() { "OP1" } else { "OP3" };
    let eval = |t: &[f64]| {
        let gains = layout.unpack(&t[..nl]);
        let cert = LyapunovCertificate {
            p: p.clone(),
            tau: t[nl],
            rho: rho.unwrap_or(t[nl + 1]),
        };
        let xi = bmi(ctx, &gains, &cert);
        match rho {
            Some(_) => {
                let size = xi.nrows();
                xi - pad_p(p, size) * t[nl + 1]
            }
            None => xi,
        }
    };
    let c = AffineMatrixConstraint::from_affine("xi", m, Sense::NegativeDefinite, eval)
        .map_err(solver_err(stage))?;
    let mut prob = SdpProblem::new(names);
    prob.add(c);
    for i in 0..nl {
        prob.bound(i, Some(-params.gain_bound), Some(params.gain_bound));
    }
    prob.bound(nl, Some(params.tau_min), Some(params.tau_max));
    prob.minimize(nl + 1);
    Ok(prob)
}

/// Affine pieces of `Ξ` in `(lower(P), ρ)` with gains and `τ` fixed, plus the
/// `P ≻ 0` constraint.
fn p_constraints(
    ctx: &DesignContext,
    gains: &GainSet,
    tau: f64,
    rho: Option<f64>,
) -> Result<(AffineMatrixConstraint, AffineMatrixConstraint), LmiError> {
    let d = state_dim(ctx);
    let s = sym_len(d);
    let m = s + usize::from(rho.is_none());
    let xi = AffineMatrixConstraint::from_affine("xi", m, Sense::NegativeDefinite, |t| {
        let cert = LyapunovCertificate {
            p: sym_from_lower(&t[..s], d),
            tau,
            rho: rho.unwrap_or_else(|| t[s]),
        };
        bmi(ctx, gains, &cert)
    })?;
    let pos = AffineMatrixConstraint::from_affine("P", m, Sense::PositiveDefinite, |t| {
        sym_from_lower(&t[..s], d)
    })?;
    Ok((xi, pos))
}

fn p_names(d: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(sym_len(d));
    for c in 0..d {
        for r in c..d {
            out.push(format!("P[{},{}]", r + 1, c + 1));
        }
    }
    out
}

/// Largest real part of the eigenvalues of a square matrix.
fn spectral_abscissa(a: &Mat) -> f64 {
    Schur::new(a.clone())
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Minimizes `β` over `P` for fixed gains and `τ` by bisection on the
/// generalized eigenvalue problem `Ξ(P) − β·diag(P) ≺ 0`, `P ≻ 0`.
/// `beta_hi` must be attained by `p_hi`.
#[allow(clippy::too_many_arguments)]
fn minimize_beta_over_p(
    ctx: &DesignContext,
    gains: &GainSet,
    tau: f64,
    rho0: f64,
    p_hi: &Mat,
    beta_hi: f64,
    params: &AlgorithmParams,
) -> Result<(Mat, f64, usize), DesignError> {
    let d = state_dim(ctx);
    let s = sym_len(d);
    let (xi, pos) = p_constraints(ctx, gains, tau, Some(rho0)).map_err(solver_err("OP2"))?;
    let size = xi.dim();
    let shift: Vec<Mat> = (0..s)
        .map(|i| {
            let mut e = vec![0.0; s];
            e[i] = 1.0;
            pad_p(&sym_from_lower(&e, d), size)
        })
        .collect();

    // P(Ã + βI/2) + * ≺ 0 needs β > 2·α(Ã), so that value is infeasible.
    let aug = assemble_augmented(ctx.modal, ctx.net, gains)?;
    let mut lo = 2.0 * spectral_abscissa(&aug.a_tilde);
    let mut hi = beta_hi;
    let mut best = p_hi.clone();
    let mut solves = 0;
    if lo >= hi {
        return Ok((best, hi, solves));
    }
    let mut start = Some(lower_of(p_hi));
    for _ in 0..100 {
        if hi - lo <= params.bisection_tol * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let mut c = xi.clone();
        for (f, sh) in c.coeffs.iter_mut().zip(&shift) {
            *f -= sh * mid;
        }
        let mut prob = SdpProblem::new(p_names(d));
        prob.add(c);
        prob.add(pos.clone());
        let opts = SolverOptions {
            start: start.clone(),
            ..params.solver.clone()
        };
        solves += 1;
        match lmi::solve(&prob, &opts) {
            Ok(sol) => {
                hi = mid;
                best = sym_from_lower(&sol.theta, d);
                start = Some(sol.theta);
            }
            Err(LmiError::Infeasible { .. }) | Err(LmiError::NumericalFailure(_)) => lo = mid,
            Err(e) => return Err(solver_err("OP2")(e)),
        }
    }
    Ok((best, hi, solves))
}

/// OP4: minimizes `ρ` over `P` with gains and `τ` fixed.
pub fn minimize_rho_over_p(
    ctx: &DesignContext,
    gains: &GainSet,
    tau: f64,
    solver: &SolverOptions,
    start: Option<(&Mat, f64)>,
) -> Result<(LyapunovCertificate, usize), DesignError> {
    gains.check_pattern(&ctx.net.sparsity_pattern())?;
    let d = state_dim(ctx);
    let s = sym_len(d);
    let (xi, pos) = p_constraints(ctx, gains, tau, None).map_err(solver_err("OP4"))?;
    let mut names = p_names(d);
    names.push("rho".into());
    let mut prob = SdpProblem::new(names);
    prob.add(xi);
    prob.add(pos);
    prob.minimize(s);
    let opts = SolverOptions {
        start: start.map(|(p, rho)| {
            let mut v = lower_of(p);
            v.push(rho);
            v
        }),
        ..solver.clone()
    };
    let sol = lmi::solve(&prob, &opts).map_err(solver_err("OP4"))?;
    Ok((
        LyapunovCertificate {
            p: sym_from_lower(&sol.theta[..s], d),
            tau,
            rho: sol.theta[s],
        },
        sol.iterations + sol.phase1_iterations,
    ))
}

/// OP1 / OP3: gains and `τ` with `P` fixed. Returns the objective value.
fn solve_gains(
    ctx: &DesignContext,
    layout: &GainLayout,
    p: &Mat,
    rho: Option<f64>,
    params: &AlgorithmParams,
    start: Option<Vec<f64>>,
) -> Result<(GainSet, f64, f64, usize), DesignError> {
    let stage = if rho.is_some() { "OP1" } else { "OP3" };
    let prob = gains_problem(ctx, layout, p, rho, params)?;
    let opts = SolverOptions {
        start,
        ..params.solver.clone()
    };
    let sol = lmi::solve(&prob, &opts).map_err(solver_err(stage))?;
    let nl = layout.len();
    Ok((
        layout.unpack(&sol.theta[..nl]),
        sol.theta[nl],
        sol.theta[nl + 1],
        sol.iterations + sol.phase1_iterations,
    ))
}

fn pack_start(layout: &GainLayout, gains: &GainSet, tau: f64, last: f64) -> Vec<f64> {
    let mut v = layout.pack(gains);
    v.push(tau);
    v.push(last);
    v
}

/// Result of the seed phase: a point satisfying the BMI with `ρ = ρ₀`.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub gains: GainSet,
    pub tau: f64,
    pub p: Mat,
    pub beta: f64,
    /// `k` when `β ≤ 0` was reached.
    pub alternations: usize,
    /// Stage that continues from this point.
    pub next: Stage,
    pub log: Vec<IterationRecord>,
}

/// Alternates OP1 (gains, `τ`, `β` with `P` fixed) and OP2 (`P`, `β` with
/// gains fixed) from `P = ξI` until `β ≤ 0`.
pub fn seed_feasibility(
    ctx: &DesignContext,
    params: &AlgorithmParams,
) -> Result<SeedOutcome, DesignError> {
    let layout = GainLayout::new(&ctx.net.sparsity_pattern(), ctx.modal.n_slow(), ctx.modal.q_u());
    let d = state_dim(ctx);
    let mut p = Mat::identity(d, d) * params.xi;
    let mut k = 0;
    let mut log = Vec::new();
    let mut start: Option<Vec<f64>> = None;
    loop {
        let (gains, tau, beta, its) = solve_gains(ctx, &layout, &p, Some(params.rho0), params, start.take())?;
        info!("seed k={k} OP1 beta={beta:.6e} tau={tau:.6e}");
        log.push(IterationRecord {
            stage: Stage::Op1,
            counter: k,
            value: beta,
            tau,
            solver_iterations: its,
        });
        if beta <= params.beta_tol {
            return Ok(SeedOutcome {
                gains,
                tau,
                p,
                beta,
                alternations: k,
                next: Stage::Op4,
                log,
            });
        }
        k += 1;
        if k >= params.seed_cap {
            return Err(DesignError::SeedFailure {
                alternations: k,
                beta,
            });
        }

        let (p_new, beta2, its) = minimize_beta_over_p(ctx, &gains, tau, params.rho0, &p, beta, params)?;
        info!("seed k={k} OP2 beta={beta2:.6e}");
        log.push(IterationRecord {
            stage: Stage::Op2,
            counter: k,
            value: beta2,
            tau,
            solver_iterations: its,
        });
        p = p_new;
        if beta2 <= params.beta_tol {
            return Ok(SeedOutcome {
                gains,
                tau,
                p,
                beta: beta2,
                alternations: k,
                next: Stage::Op3,
                log,
            });
        }
        k += 1;
        if k >= params.seed_cap {
            return Err(DesignError::SeedFailure {
                alternations: k,
                beta: beta2,
            });
        }
        start = Some(pack_start(&layout, &gains, tau, beta2));
    }
}

/// Full design: seed phase, then OP3/OP4 alternation minimizing `ρ` until
/// `|ρ_l − ρ_{l−1}| < δ_ρ`.
pub fn algorithm1(ctx: &DesignContext, params: &AlgorithmParams) -> Result<DesignResult, DesignError> {
    let seed = seed_feasibility(ctx, params)?;
    let layout = GainLayout::new(&ctx.net.sparsity_pattern(), ctx.modal.n_slow(), ctx.modal.q_u());
    let mut log = seed.log.clone();
    let mut gains = seed.gains.clone();
    let mut tau = seed.tau;
    let mut p = seed.p.clone();
    let mut rho = params.rho0;
    let mut history = vec![rho];
    let mut stage = seed.next;
    let mut converged = false;

    for l in 1..=params.rho_cap {
        let (new_gains, new_tau, new_p, new_rho, its) = match stage {
            Stage::Op3 => {
                let start = pack_start(&layout, &gains, tau, rho);
                let (g, t, r, its) = solve_gains(ctx, &layout, &p, None, params, Some(start))?;
                (g, t, p.clone(), r, its)
            }
            _ => {
                let (cert, its) = minimize_rho_over_p(ctx, &gains, tau, &params.solver, Some((&p, rho)))?;
                (gains.clone(), tau, cert.p, cert.rho, its)
            }
        };
        debug!("l={l} {stage:?} rho={new_rho:.6e} tau={new_tau:.6e}");
        log.push(IterationRecord {
            stage,
            counter: l,
            value: new_rho,
            tau: new_tau,
            solver_iterations: its,
        });
        if new_rho > rho {
            let noise = params.delta_rho.max(1e-6 * rho.abs());
            if new_rho - rho <= noise {
                warn!("rho rose from {rho} to {new_rho} within noise; keeping the incumbent");
                converged = true;
                break;
            }
            return Err(DesignError::NumericalFailure(format!(
                "rho increased from {rho} to {new_rho} at l={l}"
            )));
        }
        let step = rho - new_rho;
        gains = new_gains;
        tau = new_tau;
        p = new_p;
        rho = new_rho;
        history.push(rho);
        info!("l={l} rho={rho:.6} gamma={:.6}", rho.sqrt());
        if step < params.delta_rho {
            converged = true;
            break;
        }
        stage = if stage == Stage::Op3 { Stage::Op4 } else { Stage::Op3 };
    }
    if !converged {
        warn!("rho phase hit its cap of {} alternations", params.rho_cap);
    }
    Ok(DesignResult {
        gamma: rho.sqrt(),
        cert: LyapunovCertificate { p, tau, rho },
        gains,
        kappa1: ctx.kappa1,
        log,
        seed_alternations: seed.alternations,
        seed_beta: seed.beta,
        rho_history: history,
        converged,
    })
}
