//! Augmented closed loop, certificate matrices and the alternating
//! double-LMI design procedure.

mod algorithm;
mod assemble;
mod gains;
mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Mat, Vector};
use crate::lmi::{LmiError, SolverOptions};
use crate::network::SensorNetwork;
use crate::spectral::ModalSystem;

pub use algorithm::{algorithm1, minimize_rho_over_p, seed_feasibility, SeedOutcome};
pub use assemble::{
    assemble_augmented, assemble_bmi, assemble_certificate_matrix, eliminate_last_block, AugmentedSystem,
};
pub use gains::{lower_of, sym_from_lower, sym_len, GainLayout, GainSet};
pub use verify::{verify_certificate, VerificationReport};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("gain sparsity violated: {0}")]
    PatternViolation(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("no feasible seed after {alternations} alternations (last beta {beta:.6e})")]
    SeedFailure { alternations: usize, beta: f64 },
    #[error("{stage} failed: {source}")]
    Solver {
        stage: &'static str,
        #[source]
        source: LmiError,
    },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// Lyapunov matrix `P` over `x̃_s` with the multipliers `τ` and `ρ = γ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub p: Mat,
    pub tau: f64,
    pub rho: f64,
}

impl LyapunovCertificate {
    pub fn gamma(&self) -> f64 {
        self.rho.sqrt()
    }

    /// Block `P_ij` (0-based, block 0 is the plant slot) of size `n × n`.
    pub fn block(&self, i: usize, j: usize, n: usize) -> Mat {
        self.p.view((i * n, j * n), (n, n)).into_owned()
    }

    /// Rebuilds `P` from its lower-triangle blocks `P_ij`, `j ≤ i`.
    pub fn from_blocks(blocks: &[Vec<Mat>], n: usize, tau: f64, rho: f64) -> Result<Self, DesignError> {
        let count = blocks.len();
        let mut p = Mat::zeros(count * n, count * n);
        for (i, row) in blocks.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(DesignError::Dimension(format!(
                    "block row {i} has {} entries, expected {}",
                    row.len(),
                    i + 1
                )));
            }
            for (j, b) in row.iter().enumerate() {
                if b.shape() != (n, n) {
                    return Err(DesignError::Dimension(format!("P block ({i}, {j}) is {:?}", b.shape())));
                }
                p.view_mut((i * n, j * n), (n, n)).copy_from(b);
                if i != j {
                    p.view_mut((j * n, i * n), (n, n)).copy_from(&b.transpose());
                }
            }
        }
        Ok(Self { p, tau, rho })
    }

    pub fn lower_blocks(&self, n: usize) -> Vec<Vec<Mat>> {
        let count = self.p.nrows() / n;
        (0..count)
            .map(|i| (0..=i).map(|j| self.block(i, j, n)).collect())
            .collect()
    }
}

/// `Q`, `R = D_RᵀD_R` and the horizon used by simulations.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceWeights {
    pub q: Mat,
    pub r: Mat,
    pub d_r: Mat,
    pub t_f: f64,
}

impl PerformanceWeights {
    pub fn diagonal(q: &[f64], r: &[f64], t_f: f64) -> Result<Self, DesignError> {
        if q.iter().chain(r).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DesignError::InvalidWeights("Q and R diagonals must be nonnegative".into()));
        }
        if !(t_f > 0.0) {
            return Err(DesignError::InvalidWeights(format!("t_f must be positive, got {t_f}")));
        }
        let rv = Vector::from_column_slice(r);
        Ok(Self {
            q: Mat::from_diagonal(&Vector::from_column_slice(q)),
            r: Mat::from_diagonal(&rv),
            d_r: Mat::from_diagonal(&rv.map(f64::sqrt)),
            t_f,
        })
    }
}

/// Everything the design needs besides the decision variables.
#[derive(Debug, Clone, Copy)]
pub struct DesignContext<'a> {
    pub modal: &'a ModalSystem,
    pub net: &'a SensorNetwork,
    pub weights: &'a PerformanceWeights,
    pub kappa1: f64,
}

#[derive(Debug, Clone)]
pub struct AlgorithmParams {
    pub rho0: f64,
    pub xi: f64,
    pub delta_rho: f64,
    pub seed_cap: usize,
    pub rho_cap: usize,
    /// `β ≤ beta_tol` counts as `β ≤ 0`.
    pub beta_tol: f64,
    /// Box bound on every gain entry.
    pub gain_bound: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Relative width at which the generalized-eigenvalue bisection stops.
    pub bisection_tol: f64,
    pub solver: SolverOptions,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            rho0: 900.0,
            xi: 900.0,
            delta_rho: 0.01,
            seed_cap: 50,
            rho_cap: 200,
            beta_tol: 1e-9,
            gain_bound: 1e3,
            tau_min: 1e-8,
            tau_max: 1e8,
            bisection_tol: 1e-3,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Op1,
    Op2,
    Op3,
    Op4,
}

/// One solve of the alternation. `value` is `β` in the seed phase and `ρ`
/// afterwards; `counter` is `k` or `l` respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub stage: Stage,
    pub counter: usize,
    pub value: f64,
    pub tau: f64,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub gains: GainSet,
    pub cert: LyapunovCertificate,
    pub gamma: f64,
    pub kappa1: f64,
    pub log: Vec<IterationRecord>,
    /// `k` at which the seed phase reached `β ≤ 0`.
    pub seed_alternations: usize,
    pub seed_beta: f64,
    /// `ρ_0, ρ_1, …` including the initial `ρ₀`.
    pub rho_history: Vec<f64>,
    /// False when the ρ phase stopped on its iteration cap.
    pub converged: bool,
}
