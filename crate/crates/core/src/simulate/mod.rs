//! Closed-loop simulation of the truncated PDE with the observer bank.
//!
//! The state `[x (all modes); x̂_1; …; x̂_p]` has a diagonal linear part
//! (the operator eigenvalues and the diagonal `A_s` for each observer), which
//! is propagated exactly. Everything else goes through a second-order
//! exponential Runge–Kutta step (ETD2RK).

mod disturbance;
mod trace;

use thiserror::Error;

use crate::design::GainSet;
use crate::linalg::{Mat, Vector};
use crate::network::SensorNetwork;
use crate::spectral::{nonlinear_galerkin, ModalSystem};

pub use disturbance::{reference_disturbance, DisturbanceSpec, SignalFn};
pub use trace::{write_field_csv, write_trace_csv, SimulationTrace, TraceSample};

use disturbance::Signals;

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_DECIMATION: usize = 100;
pub const DIVERGENCE_THRESHOLD: f64 = 1e9;

#[derive(Debug, Error, PartialEq)]
pub enum SimulationError {
    #[error("state diverged at t = {t}")]
    Diverged { t: f64 },
    #[error("performance ratio undefined: disturbance energy is zero")]
    UndefinedRatio,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid disturbance: {0}")]
    InvalidDisturbance(String),
    #[error("invalid simulation options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    /// Modal projection of the configured initial field.
    Model,
    Zero,
}

#[derive(Debug, Clone)]
pub struct SimulationOptions {
    pub t_f: f64,
    pub dt: f64,
    pub decimation: usize,
    pub initial: InitialCondition,
    /// Turning this off leaves only linear dynamics (used by self-checks).
    pub nonlinear: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            t_f: 4.0,
            dt: DEFAULT_DT,
            decimation: DEFAULT_DECIMATION,
            initial: InitialCondition::Model,
            nonlinear: true,
        }
    }
}

/// Plant modes, observer estimates and time.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub x_s: Vector,
    pub x_f: Vector,
    pub x_hat: Vec<Vector>,
    pub t: f64,
}

/// Everything the right-hand side needs, precomputed.
pub struct ClosedLoop<'a> {
    modal: &'a ModalSystem,
    net: &'a SensorNetwork,
    gains: &'a GainSet,
    signals: Signals,
    b_u: Mat,
    b_w: Mat,
    k_bar: Mat,
    linear: Vector,
    nonlinear: bool,
    dims: Vec<usize>,
}

/// Instantaneous signals at one state.
struct Outputs {
    u: Vector,
    w: Vector,
    y: Vec<Vector>,
    v_bar: Vec<Vector>,
}

fn phi_functions(z: f64) -> (f64, f64, f64) {
    if z.abs() < 1e-2 {
        let phi1 = 1.0 + z / 2.0 + z * z / 6.0 + z.powi(3) / 24.0 + z.powi(4) / 120.0 + z.powi(5) / 720.0;
        let phi2 = 0.5 + z / 6.0 + z * z / 24.0 + z.powi(3) / 120.0 + z.powi(4) / 720.0 + z.powi(5) / 5040.0;
        (z.exp(), phi1, phi2)
    } else {
        let em1 = z.exp_m1();
        (z.exp(), em1 / z, (em1 - z) / (z * z))
    }
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        modal: &'a ModalSystem,
        net: &'a SensorNetwork,
        gains: &'a GainSet,
        disturbance: &DisturbanceSpec,
        nonlinear: bool,
    ) -> Result<Self, SimulationError> {
        let n = modal.n_slow();
        if gains.n != n || gains.k.len() != net.node_count() || gains.q_u != modal.q_u() {
            return Err(SimulationError::Dimension("gains do not match the model and network".into()));
        }
        if net.c_f.iter().any(|c| c.ncols() != modal.n_fast()) {
            return Err(SimulationError::Dimension("network is bound to a different mode count".into()));
        }
        let p = net.node_count();
        let mut linear = Vector::zeros(modal.n_total() + p * n);
        for (i, l) in modal.eigen.eigenvalues.iter().enumerate() {
            linear[i] = *l;
        }
        for i in 0..p {
            for r in 0..n {
                linear[modal.n_total() + i * n + r] = modal.a_s[(r, r)];
            }
        }
        Ok(Self {
            signals: Signals::bind(disturbance, modal.q_w(), net)?,
            b_u: modal.b_u(),
            b_w: modal.b_w(),
            k_bar: gains.k_bar(),
            linear,
            nonlinear,
            dims: net.output_dims(),
            modal,
            net,
            gains,
        })
    }

    fn n(&self) -> usize {
        self.modal.n_slow()
    }

    fn pack(&self, s: &ClosedLoopState) -> Vector {
        let mut z = Vector::zeros(self.linear.len());
        let n = self.n();
        let nt = self.modal.n_total();
        z.rows_mut(0, n).copy_from(&s.x_s);
        z.rows_mut(n, nt - n).copy_from(&s.x_f);
        for (i, xh) in s.x_hat.iter().enumerate() {
            z.rows_mut(nt + i * n, n).copy_from(xh);
        }
        z
    }

    fn unpack(&self, z: &Vector, t: f64) -> ClosedLoopState {
        let n = self.n();
        let nt = self.modal.n_total();
        ClosedLoopState {
            x_s: z.rows(0, n).into_owned(),
            x_f: z.rows(n, nt - n).into_owned(),
            x_hat: (0..self.net.node_count())
                .map(|i| z.rows(nt + i * n, n).into_owned())
                .collect(),
            t,
        }
    }

    fn outputs(&self, z: &Vector, t: f64) -> Outputs {
        let n = self.n();
        let nt = self.modal.n_total();
        let p = self.net.node_count();
        let x_hat = z.rows(nt, n * p);
        let u = &self.k_bar * x_hat;
        let (w, v) = self.signals.eval(t, self.modal.q_w(), &self.dims);
        let x_s = z.rows(0, n);
        let x_f = z.rows(n, nt - n);
        let mut y = Vec::with_capacity(p);
        let mut v_bar = Vec::with_capacity(p);
        for i in 0..p {
            let spill = &self.net.c_f[i] * x_f + &v[i];
            y.push(&self.net.c_s[i] * x_s + &spill);
            v_bar.push(spill);
        }
        Outputs { u, w, y, v_bar }
    }

    /// Everything except the diagonal linear part.
    fn rhs(&self, z: &Vector, t: f64) -> Vector {
        let n = self.n();
        let nt = self.modal.n_total();
        let p = self.net.node_count();
        let out = self.outputs(z, t);
        let mut dz = Vector::zeros(z.len());
        let mut plant = &self.b_u * &out.u + &self.b_w * &out.w;
        if self.nonlinear {
            let x: Vec<f64> = z.rows(0, nt).iter().copied().collect();
            let f = nonlinear_galerkin(&self.modal.eigen.wavenumbers, &x);
            for (a, b) in plant.iter_mut().zip(f) {
                *a += b;
            }
        }
        dz.rows_mut(0, nt).copy_from(&plant);
        let bu_s = &self.modal.b_u_s * &out.u;
        for i in 0..p {
            let xi = z.rows(nt + i * n, n);
            let mut d = &bu_s + &self.gains.l[i] * (&out.y[i] - &self.net.c_s[i] * xi);
            for (&(a, b), g) in &self.gains.g_bar {
                if a == i {
                    let xj = z.rows(nt + b * n, n);
                    d += g * (xi - xj);
                }
            }
            dz.rows_mut(nt + i * n, n).copy_from(&d);
        }
        dz
    }

    /// One ETD2RK step of size `dt`.
    pub fn step(&self, state: &ClosedLoopState, dt: f64) -> Result<ClosedLoopState, SimulationError> {
        if !(dt > 0.0) {
            return Err(SimulationError::InvalidOptions(format!("dt must be positive, got {dt}")));
        }
        let coeffs: Vec<(f64, f64, f64)> = self.linear.iter().map(|l| phi_functions(l * dt)).collect();
        let z = self.pack(state);
        let next = self.advance(&z, state.t, dt, &coeffs);
        let t = state.t + dt;
        check_divergence(&next, t)?;
        Ok(self.unpack(&next, t))
    }

    fn advance(&self, z: &Vector, t: f64, h: f64, coeffs: &[(f64, f64, f64)]) -> Vector {
        let n0 = self.rhs(z, t);
        let a = Vector::from_iterator(
            z.len(),
            (0..z.len()).map(|i| coeffs[i].0 * z[i] + h * coeffs[i].1 * n0[i]),
        );
        let n1 = self.rhs(&a, t + h);
        Vector::from_iterator(
            z.len(),
            (0..z.len()).map(|i| a[i] + h * coeffs[i].2 * (n1[i] - n0[i])),
        )
    }

    pub fn initial_state(&self, initial: InitialCondition) -> ClosedLoopState {
        let n = self.n();
        let (x_s, x_f) = match initial {
            InitialCondition::Model => (self.modal.x_s0.clone(), self.modal.x_f0.clone()),
            InitialCondition::Zero => (Vector::zeros(n), Vector::zeros(self.modal.n_fast())),
        };
        ClosedLoopState {
            x_s,
            x_f,
            x_hat: vec![Vector::zeros(n); self.net.node_count()],
            t: 0.0,
        }
    }

    fn sample(&self, z: &Vector, t: f64, perf: f64, dist: f64) -> TraceSample {
        let out = self.outputs(z, t);
        let s = self.unpack(z, t);
        TraceSample {
            t,
            x: z.rows(0, self.modal.n_total()).iter().copied().collect(),
            x_s: s.x_s.iter().copied().collect(),
            x_f_norm: s.x_f.norm(),
            x_hat: s.x_hat.iter().map(|v| v.iter().copied().collect()).collect(),
            u: out.u.iter().copied().collect(),
            w: out.w.iter().copied().collect(),
            y: out.y.iter().map(|v| v.iter().copied().collect()).collect(),
            v_bar: out.v_bar.iter().map(|v| v.iter().copied().collect()).collect(),
            perf_integral: perf,
            dist_integral: dist,
        }
    }

    /// Integrands `x_sᵀQx_s + uᵀRu` and `w̃ᵀw̃`.
    fn integrands(&self, z: &Vector, t: f64, q: &Mat, r: &Mat) -> (f64, f64) {
        let out = self.outputs(z, t);
        let x_s = z.rows(0, self.n()).into_owned();
        let perf = x_s.dot(&(q * &x_s)) + out.u.dot(&(r * &out.u));
        let dist = out.w.norm_squared() + out.v_bar.iter().map(|v| v.norm_squared()).sum::<f64>();
        (perf, dist)
    }
}

fn check_divergence(z: &Vector, t: f64) -> Result<(), SimulationError> {
    if z.iter().any(|v| !v.is_finite()) || z.amax() > DIVERGENCE_THRESHOLD {
        return Err(SimulationError::Diverged { t });
    }
    Ok(())
}

/// Runs the closed loop on `[0, t_f]` and records every `decimation`-th step.
pub fn simulate(
    modal: &ModalSystem,
    net: &SensorNetwork,
    gains: &GainSet,
    disturbance: &DisturbanceSpec,
    weights_q: &Mat,
    weights_r: &Mat,
    opts: &SimulationOptions,
) -> Result<SimulationTrace, SimulationError> {
    if !(opts.dt > 0.0 && opts.t_f > 0.0) || opts.decimation == 0 {
        return Err(SimulationError::InvalidOptions(format!(
            "need dt > 0, t_f > 0, decimation >= 1 (got {}, {}, {})",
            opts.dt, opts.t_f, opts.decimation
        )));
    }
    let cl = ClosedLoop::new(modal, net, gains, disturbance, opts.nonlinear)?;
    let steps = (opts.t_f / opts.dt).round() as usize;
    let h = opts.t_f / steps as f64;
    let coeffs: Vec<(f64, f64, f64)> = cl.linear.iter().map(|l| phi_functions(l * h)).collect();
    let mut z = cl.pack(&cl.initial_state(opts.initial));
    check_divergence(&z, 0.0)?;
    let (mut perf, mut dist) = (0.0, 0.0);
    let (mut f_perf, mut f_dist) = cl.integrands(&z, 0.0, weights_q, weights_r);
    let mut samples = vec![cl.sample(&z, 0.0, 0.0, 0.0)];
    for k in 1..=steps {
        let t0 = (k - 1) as f64 * h;
        let t1 = k as f64 * h;
        z = cl.advance(&z, t0, h, &coeffs);
        check_divergence(&z, t1)?;
        let (g_perf, g_dist) = cl.integrands(&z, t1, weights_q, weights_r);
        perf += 0.5 * h * (f_perf + g_perf);
        dist += 0.5 * h * (f_dist + g_dist);
        f_perf = g_perf;
        f_dist = g_dist;
        if k % opts.decimation == 0 || k == steps {
            samples.push(cl.sample(&z, t1, perf, dist));
        }
    }
    Ok(SimulationTrace {
        samples,
        n: modal.n_slow(),
        p: net.node_count(),
        wavenumbers: modal.eigen.wavenumbers.clone(),
        dt: h,
        final_state: cl.unpack(&z, steps as f64 * h),
    })
}

/// `J = √∫(x_sᵀQx_s + uᵀRu) / √∫w̃ᵀw̃` over the whole trace.
pub fn performance_ratio(trace: &SimulationTrace) -> Result<f64, SimulationError> {
    let last = trace.samples.last().ok_or(SimulationError::UndefinedRatio)?;
    if !(last.dist_integral > 0.0) {
        return Err(SimulationError::UndefinedRatio);
    }
    Ok(last.perf_integral.sqrt() / last.dist_integral.sqrt())
}

/// `max_{i,j} ‖x̂_i − x̂_j‖` per sample; empty for a single observer.
pub fn consensus_disagreement(trace: &SimulationTrace) -> Vec<f64> {
    if trace.p < 2 {
        return Vec::new();
    }
    trace
        .samples
        .iter()
        .map(|s| {
            let mut worst: f64 = 0.0;
            for i in 0..s.x_hat.len() {
                for j in (i + 1)..s.x_hat.len() {
                    let d: f64 = s.x_hat[i]
                        .iter()
                        .zip(&s.x_hat[j])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(d);
                }
            }
            worst
        })
        .collect()
}
