//! Spectral reduction of the Kuramoto–Sivashinsky operator
//! `𝒜 = −𝒢 ∂⁴/∂z⁴ − ∂²/∂z²` on `[−π, π]`.
//!
//! The basis is the odd sine family `φ_j(z) = sin(jz)/√π`. Cosine and constant
//! modes that periodic boundary conditions also admit are not represented, so
//! everything here lives in the odd-function subspace.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Mat, Vector};
use crate::quadrature::{GaussLegendre, DEFAULT_NODES};

/// Smallest κ₁ ever handed to the design, so a linear plant does not zero out
/// the nonlinearity channel of the certificate.
pub const KAPPA1_FLOOR: f64 = 1e-12;
pub const DEFAULT_KAPPA1_SAMPLES: usize = 10_000;
pub const DEFAULT_KAPPA1_SEED: u64 = 0x6b61_7070_61;
pub const DEFAULT_RADIUS_FACTOR: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("invalid operator: {0}")]
    InvalidSpec(String),
    #[error("reduction invalid: {0}")]
    ReductionInvalid(String),
    #[error("location {0} lies outside the open domain (-π, π)")]
    OutOfDomain(f64),
    #[error("kappa1 estimator needs at least one sample")]
    Degenerate,
}

/// Parameters of the KSE operator and of its actuators and disturbances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    /// The instability parameter 𝒢.
    pub instability: f64,
    pub n_slow: usize,
    pub n_total: usize,
    pub actuator_locations: Vec<f64>,
    pub disturbance_locations: Vec<f64>,
    pub input_gain: f64,
    pub disturbance_gain: f64,
}

impl OperatorSpec {
    pub fn validate(&self) -> Result<(), SpectralError> {
        if !(self.instability.is_finite() && self.instability > 0.0) {
            return Err(SpectralError::InvalidSpec(format!(
                "instability must be positive, got {}",
                self.instability
            )));
        }
        if self.n_slow < 1 {
            return Err(SpectralError::InvalidSpec("n_slow must be at least 1".into()));
        }
        if self.n_total < self.n_slow {
            return Err(SpectralError::InvalidSpec(format!(
                "n_total ({}) < n_slow ({})",
                self.n_total, self.n_slow
            )));
        }
        if self.actuator_locations.is_empty() {
            return Err(SpectralError::InvalidSpec("no actuators".into()));
        }
        for &z in self
            .actuator_locations
            .iter()
            .chain(&self.disturbance_locations)
        {
            check_location(z)?;
        }
        Ok(())
    }
}

pub fn check_location(z: f64) -> Result<(), SpectralError> {
    if z.is_finite() && z > -PI && z < PI {
        Ok(())
    } else {
        Err(SpectralError::OutOfDomain(z))
    }
}

/// `λ_j = −𝒢j⁴ + j²`.
pub fn kse_eigenvalue(instability: f64, j: u32) -> f64 {
    let j = j as f64;
    -instability * j.powi(4) + j * j
}

/// `φ_j(z) = sin(jz)/√π`.
pub fn eigenfunction(j: u32, z: f64) -> f64 {
    (j as f64 * z).sin() / PI.sqrt()
}

/// Retained modes ordered by eigenvalue, largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigensystem {
    pub eigenvalues: Vec<f64>,
    /// Wavenumber `j` of each retained mode, in eigenvalue order.
    pub wavenumbers: Vec<u32>,
    pub n_slow: usize,
    pub epsilon: f64,
}

impl Eigensystem {
    pub fn n_total(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Values of the retained eigenfunctions at `z`.
    pub fn basis_at(&self, z: f64) -> Vec<f64> {
        self.wavenumbers.iter().map(|&j| eigenfunction(j, z)).collect()
    }
}

pub fn eigenpairs(spec: &OperatorSpec) -> Result<Eigensystem, SpectralError> {
    if spec.n_slow < 1 || spec.n_total < spec.n_slow {
        return Err(SpectralError::InvalidSpec(format!(
            "need n_total >= n_slow >= 1, got n_slow={} n_total={}",
            spec.n_slow, spec.n_total
        )));
    }
    if !(spec.instability > 0.0) {
        return Err(SpectralError::InvalidSpec("instability must be positive".into()));
    }
    // λ_j is unimodal in j with its peak near 1/√(2𝒢); past that it decreases.
    let peak = (1.0 / (2.0 * spec.instability)).sqrt().ceil() as usize;
    let candidates = (spec.n_total + peak + 1) as u32;
    let mut modes: Vec<(f64, u32)> = (1..=candidates)
        .map(|j| (kse_eigenvalue(spec.instability, j), j))
        .collect();
    modes.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    modes.truncate(spec.n_total);

    let eigenvalues: Vec<f64> = modes.iter().map(|m| m.0).collect();
    let wavenumbers: Vec<u32> = modes.iter().map(|m| m.1).collect();

    // λ_{n+1} is needed even when every retained mode is slow.
    let next = if spec.n_total > spec.n_slow {
        eigenvalues[spec.n_slow]
    } else {
        let mut extra: Vec<f64> = (1..=candidates + 1)
            .filter(|j| !wavenumbers.contains(j))
            .map(|j| kse_eigenvalue(spec.instability, j))
            .collect();
        extra.sort_by(|a, b| b.total_cmp(a));
        extra[0]
    };
    if next >= 0.0 {
        return Err(SpectralError::ReductionInvalid(format!(
            "first fast eigenvalue {next} is not negative"
        )));
    }
    let lead = eigenvalues
        .iter()
        .copied()
        .find(|l| *l != 0.0)
        .unwrap_or(next);
    let epsilon = lead.abs() / next.abs();
    if epsilon >= 1.0 {
        return Err(SpectralError::ReductionInvalid(format!(
            "epsilon = {epsilon} is not below 1"
        )));
    }
    Ok(Eigensystem {
        eigenvalues,
        wavenumbers,
        n_slow: spec.n_slow,
        epsilon,
    })
}

/// Modal coefficients `gain·φ_j(location)` of a point device, for the first
/// `mode_count` wavenumbers `1..=mode_count`.
pub fn project_point_device(location: f64, gain: f64, mode_count: usize) -> Vec<f64> {
    (1..=mode_count as u32)
        .map(|j| gain * eigenfunction(j, location))
        .collect()
}

/// Same as [`project_point_device`] but following an explicit wavenumber list.
pub fn project_point_on(location: f64, gain: f64, wavenumbers: &[u32]) -> Vec<f64> {
    wavenumbers
        .iter()
        .map(|&j| gain * eigenfunction(j, location))
        .collect()
}

/// `⟨gain·shape, φ_j⟩` for a distributed device shape.
pub fn project_distributed(
    shape: impl Fn(f64) -> f64,
    gain: f64,
    wavenumbers: &[u32],
    quad: &GaussLegendre,
) -> Vec<f64> {
    wavenumbers
        .iter()
        .map(|&j| gain * quad.integrate(|z| shape(z) * eigenfunction(j, z)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kappa1Source {
    Configured,
    Estimated { samples: usize, seed: u64 },
}

/// Lipschitz-type bound `‖f_s(x_s, 0)‖ ≤ κ₁‖x_s‖` and the ball it holds on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa1 {
    pub value: f64,
    /// Radius of the ball in slow coordinates; `None` when configured directly.
    pub radius: Option<f64>,
    pub source: Kappa1Source,
}

impl Kappa1 {
    pub fn configured(value: f64) -> Self {
        Self {
            value: value.max(KAPPA1_FLOOR),
            radius: None,
            source: Kappa1Source::Configured,
        }
    }
}

/// Slow/fast modal system of the reduced PDE.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalSystem {
    pub eigen: Eigensystem,
    pub a_s: Mat,
    pub a_f: Mat,
    pub b_u_s: Mat,
    pub b_u_f: Mat,
    pub b_w_s: Mat,
    pub b_w_f: Mat,
    pub x_s0: Vector,
    pub x_f0: Vector,
    pub kappa1: Kappa1,
}

impl ModalSystem {
    pub fn n_slow(&self) -> usize {
        self.eigen.n_slow
    }
    pub fn n_total(&self) -> usize {
        self.eigen.n_total()
    }
    pub fn n_fast(&self) -> usize {
        self.n_total() - self.n_slow()
    }
    pub fn q_u(&self) -> usize {
        self.b_u_s.ncols()
    }
    pub fn q_w(&self) -> usize {
        self.b_w_s.ncols()
    }
    /// Full input matrices over all retained modes.
    pub fn b_u(&self) -> Mat {
        stack_rows(&self.b_u_s, &self.b_u_f)
    }
    pub fn b_w(&self) -> Mat {
        stack_rows(&self.b_w_s, &self.b_w_f)
    }
    pub fn x0(&self) -> Vector {
        Vector::from_iterator(
            self.n_total(),
            self.x_s0.iter().chain(self.x_f0.iter()).copied(),
        )
    }

    /// `f_s(x_s, 0)`: slow part of the nonlinearity with fast modes frozen at 0.
    pub fn slow_nonlinearity(&self, x_s: &[f64]) -> Vec<f64> {
        let n = self.n_slow();
        let mut x = vec![0.0; self.n_total()];
        x[..n].copy_from_slice(x_s);
        let mut f = nonlinear_galerkin(&self.eigen.wavenumbers, &x);
        f.truncate(n);
        f
    }
}

fn stack_rows(top: &Mat, bottom: &Mat) -> Mat {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

fn device_matrix(locations: &[f64], gain: f64, wavenumbers: &[u32]) -> Mat {
    let mut m = DMatrix::zeros(wavenumbers.len(), locations.len());
    for (c, &z) in locations.iter().enumerate() {
        for (r, v) in project_point_on(z, gain, wavenumbers).into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    m
}

/// Builds the modal system. κ₁ is estimated on the default ball of radius
/// `1.5·‖x_s,0‖` (radius 1 when `x_s,0 = 0`); callers may override it.
pub fn build_modal_system(
    spec: &OperatorSpec,
    initial_field: impl Fn(f64) -> f64,
) -> Result<ModalSystem, SpectralError> {
    spec.validate()?;
    let eigen = eigenpairs(spec)?;
    let n = spec.n_slow;
    let n_total = spec.n_total;
    let lam = &eigen.eigenvalues;

    let a_s = Mat::from_diagonal(&Vector::from_column_slice(&lam[..n]));
    let a_f = Mat::from_diagonal(&Vector::from_column_slice(&lam[n..]));

    let b_u = device_matrix(&spec.actuator_locations, spec.input_gain, &eigen.wavenumbers);
    let b_w = device_matrix(
        &spec.disturbance_locations,
        spec.disturbance_gain,
        &eigen.wavenumbers,
    );

    let quad = GaussLegendre::new(DEFAULT_NODES.max(8 * n_total), -PI, PI);
    let x0: Vec<f64> = eigen
        .wavenumbers
        .iter()
        .map(|&j| quad.integrate(|z| initial_field(z) * eigenfunction(j, z)))
        .collect();

    let mut sys = ModalSystem {
        a_s,
        a_f,
        b_u_s: b_u.rows(0, n).into_owned(),
        b_u_f: b_u.rows(n, n_total - n).into_owned(),
        b_w_s: b_w.rows(0, n).into_owned(),
        b_w_f: b_w.rows(n, n_total - n).into_owned(),
        x_s0: Vector::from_column_slice(&x0[..n]),
        x_f0: Vector::from_column_slice(&x0[n..]),
        kappa1: Kappa1::configured(KAPPA1_FLOOR),
        eigen,
    };
    let norm = sys.x_s0.norm();
    let radius = if norm > 0.0 { DEFAULT_RADIUS_FACTOR * norm } else { 1.0 };
    let value = estimate_kappa1(&sys, radius, DEFAULT_KAPPA1_SAMPLES, DEFAULT_KAPPA1_SEED)?;
    sys.kappa1 = Kappa1 {
        value,
        radius: Some(radius),
        source: Kappa1Source::Estimated {
            samples: DEFAULT_KAPPA1_SAMPLES,
            seed: DEFAULT_KAPPA1_SEED,
        },
    };
    Ok(sys)
}

/// Galerkin projection of `−U U_z` onto the retained sine modes, using
/// product-to-sum identities:
///
/// `f_k = j_k/(4√π) · Σ_a Σ_b x_a x_b ([|j_a − j_b| = j_k] − [j_a + j_b = j_k])`.
pub fn nonlinear_galerkin(wavenumbers: &[u32], x: &[f64]) -> Vec<f64> {
    assert_eq!(wavenumbers.len(), x.len(), "coefficient count mismatch");
    let jmax = wavenumbers.iter().copied().max().unwrap_or(0) as usize;
    let mut slot = vec![usize::MAX; jmax + 1];
    for (k, &j) in wavenumbers.iter().enumerate() {
        slot[j as usize] = k;
    }
    let mut acc = vec![0.0; jmax + 1];
    for (a, &ja) in wavenumbers.iter().enumerate() {
        if x[a] == 0.0 {
            continue;
        }
        for (b, &jb) in wavenumbers.iter().enumerate() {
            let w = x[a] * x[b];
            let diff = ja.abs_diff(jb) as usize;
            if diff > 0 && diff <= jmax {
                acc[diff] += w;
            }
            let sum = (ja + jb) as usize;
            if sum <= jmax {
                acc[sum] -= w;
            }
        }
    }
    let scale = 1.0 / (4.0 * PI.sqrt());
    wavenumbers
        .iter()
        .map(|&j| {
            debug_assert!(slot[j as usize] != usize::MAX);
            j as f64 * scale * acc[j as usize]
        })
        .collect()
}

/// Quadrature evaluation of the same projection.
pub fn nonlinear_galerkin_quadrature(
    wavenumbers: &[u32],
    x: &[f64],
    quad: &GaussLegendre,
) -> Vec<f64> {
    let sqrt_pi = PI.sqrt();
    let (u, uz): (Vec<f64>, Vec<f64>) = quad
        .nodes
        .iter()
        .map(|&z| {
            wavenumbers.iter().zip(x).fold((0.0, 0.0), |(u, uz), (&j, &c)| {
                let jf = j as f64;
                (u + c * (jf * z).sin() / sqrt_pi, uz + c * jf * (jf * z).cos() / sqrt_pi)
            })
        })
        .unzip();
    wavenumbers
        .iter()
        .map(|&j| {
            quad.nodes
                .iter()
                .zip(&quad.weights)
                .enumerate()
                .map(|(i, (&z, &w))| -w * u[i] * uz[i] * eigenfunction(j, z))
                .sum()
        })
        .collect()
}

/// Sampled estimate of `max ‖f_s(x_s, 0)‖/‖x_s‖` over the ball of the given
/// radius. Each sample draws a uniform direction and is evaluated on the
/// sphere and at one uniformly distributed interior radius.
pub fn estimate_kappa1(
    system: &ModalSystem,
    radius: f64,
    sample_count: usize,
    seed: u64,
) -> Result<f64, SpectralError> {
    if sample_count < 1 {
        return Err(SpectralError::Degenerate);
    }
    if !(radius > 0.0) {
        return Err(SpectralError::InvalidSpec(format!(
            "kappa1 radius must be positive, got {radius}"
        )));
    }
    let n = system.n_slow();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    let mut dir = vec![0.0; n];
    for _ in 0..sample_count {
        let norm = loop {
            for d in dir.iter_mut() {
                *d = standard_normal(&mut rng);
            }
            let s = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if s > 1e-12 {
                break s;
            }
        };
        let inner: f64 = rng.gen::<f64>().powf(1.0 / n as f64);
        for r in [radius, radius * inner] {
            if r <= 0.0 {
                continue;
            }
            let xs: Vec<f64> = dir.iter().map(|d| d / norm * r).collect();
            let f = system.slow_nonlinearity(&xs);
            let ratio = f.iter().map(|v| v * v).sum::<f64>().sqrt() / r;
            best = best.max(ratio);
        }
    }
    Ok(best.max(KAPPA1_FLOOR))
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box–Muller, one value per call.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// `U(z) = Σ_j x_j φ_j(z)` on the given grid.
pub fn reconstruct_field(wavenumbers: &[u32], x: &[f64], z_grid: &[f64]) -> Vec<f64> {
    z_grid
        .iter()
        .map(|&z| {
            wavenumbers
                .iter()
                .zip(x)
                .map(|(&j, &c)| c * eigenfunction(j, z))
                .sum()
        })
        .collect()
}

/// The operator used in the worked example: 𝒢 = 0.4, two slow modes.
pub fn kse_example_spec(n_total: usize) -> OperatorSpec {
    OperatorSpec {
        instability: 0.4,
        n_slow: 2,
        n_total,
        actuator_locations: vec![-0.2 * PI, 0.4 * PI],
        disturbance_locations: vec![-0.1 * PI, 0.2 * PI],
        input_gain: 1.0,
        disturbance_gain: 1.0,
    }
}

/// `3 sin z + 2 sin 2z − sin 3z`.
pub fn kse_example_initial_field(z: f64) -> f64 {
    3.0 * z.sin() + 2.0 * (2.0 * z).sin() - (3.0 * z).sin()
}
