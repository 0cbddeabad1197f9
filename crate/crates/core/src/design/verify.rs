use serde::{Deserialize, Serialize};

use crate::linalg::{lambda_max, lambda_min};
use crate::network::SensorNetwork;
use crate::spectral::ModalSystem;

use super::{assemble_augmented, assemble_certificate_matrix, GainSet, LyapunovCertificate, PerformanceWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub lambda_max_a: f64,
    pub lambda_min_p: f64,
    pub sparsity_ok: bool,
    pub tau: f64,
    pub gamma: f64,
    pub passed: bool,
    /// Set when the certificate could not be assembled at all.
    pub error: Option<String>,
}

/// Re-assembles the certificate matrix from scratch and checks `𝐀 ≺ 0`,
/// `P ≻ 0`, `τ > 0`, `ρ > 0` and exact sparsity.
pub fn verify_certificate(
    modal: &ModalSystem,
    net: &SensorNetwork,
    gains: &GainSet,
    cert: &LyapunovCertificate,
    weights: &PerformanceWeights,
    kappa1: f64,
) -> VerificationReport {
    let sparsity_ok = gains.check_pattern(&net.sparsity_pattern()).is_ok();
    let gamma = if cert.rho >= 0.0 { cert.rho.sqrt() } else { f64::NAN };
    let fail = |msg: String| VerificationReport {
        lambda_max_a: f64::NAN,
        lambda_min_p: f64::NAN,
        sparsity_ok,
        tau: cert.tau,
        gamma,
        passed: false,
        error: Some(msg),
    };
    // Assemble without the pattern gate so that a sparsity failure still
    // reports the eigenvalues.
    let mut masked = gains.clone();
    let pattern = net.sparsity_pattern();
    masked.g_bar.retain(|&(i, j), _| i < pattern.g_mask.len() && j < pattern.g_mask.len() && pattern.g_mask[i][j]);
    for (i, k) in masked.k.iter_mut().enumerate() {
        if i < pattern.k_mask.len() && !pattern.k_mask[i] {
            k.fill(0.0);
        }
    }
    let aug = match assemble_augmented(modal, net, &masked) {
        Ok(a) => a,
        Err(e) => return fail(e.to_string()),
    };
    // Off-pattern K blocks still act in the real loop; put them back.
    let a = match assemble_certificate_matrix(&aug_with_gains(&aug, modal, gains), cert, weights, kappa1, gains) {
        Ok(a) => a,
        Err(e) => return fail(e.to_string()),
    };
    let lambda_max_a = lambda_max(&a);
    let lambda_min_p = lambda_min(&cert.p);
    let passed = sparsity_ok
        && lambda_max_a < 0.0
        && lambda_min_p > 0.0
        && cert.tau > 0.0
        && cert.rho > 0.0;
    VerificationReport {
        lambda_max_a,
        lambda_min_p,
        sparsity_ok,
        tau: cert.tau,
        gamma,
        passed,
        error: None,
    }
}

/// Rebuilds the plant row of `Ã` from the unmasked controller gains so that
/// an off-pattern `K_i` shows up in the eigenvalue as well as the verdict.
fn aug_with_gains(
    aug: &super::AugmentedSystem,
    modal: &ModalSystem,
    gains: &GainSet,
) -> super::AugmentedSystem {
    let mut out = aug.clone();
    if gains.k.len() == aug.p && gains.k.iter().all(|k| k.shape() == (modal.q_u(), aug.n)) {
        let n = aug.n;
        let top = &modal.a_s + &modal.b_u_s * gains.k_sum();
        out.a_tilde.view_mut((0, 0), (n, n)).copy_from(&top);
        let kb = -(&modal.b_u_s * gains.k_bar());
        out.a_tilde.view_mut((0, n), (n, n * aug.p)).copy_from(&kb);
    }
    out
}
