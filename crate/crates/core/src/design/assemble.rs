use crate::linalg::{block_diag, kron_eye, kron_ones, plus_transpose, put, Mat};
use crate::network::SensorNetwork;
use crate::spectral::ModalSystem;

use super::{DesignError, GainSet, LyapunovCertificate, PerformanceWeights};

/// Slow augmented closed loop in the coordinates `x̃_s = [x_s; ē_s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub a_tilde: Mat,
    pub b_tilde: Mat,
    pub h1: Mat,
    /// `[F_1; …; F_p]`, so that `x̂_s,i = F_i x̃_s`.
    pub f: Mat,
    pub n: usize,
    pub p: usize,
}

impl AugmentedSystem {
    pub fn state_dim(&self) -> usize {
        self.a_tilde.nrows()
    }
    pub fn disturbance_dim(&self) -> usize {
        self.b_tilde.ncols()
    }
}

pub fn assemble_augmented(
    modal: &ModalSystem,
    net: &SensorNetwork,
    gains: &GainSet,
) -> Result<AugmentedSystem, DesignError> {
    gains.check_pattern(&net.sparsity_pattern())?;
    let n = modal.n_slow();
    let p = net.node_count();
    if gains.n != n || gains.q_u != modal.q_u() {
        return Err(DesignError::Dimension(format!(
            "gains are shaped for n={}, q_u={} but the model has n={n}, q_u={}",
            gains.n,
            gains.q_u,
            modal.q_u()
        )));
    }
    let big = n * (p + 1);
    let a_s = &modal.a_s;
    let b_u = &modal.b_u_s;
    let b_w = &modal.b_w_s;

    let mut a_tilde = Mat::zeros(big, big);
    put(&mut a_tilde, 0, 0, &(a_s + b_u * gains.k_sum()));
    put(&mut a_tilde, 0, n, &(-(b_u * gains.k_bar())));
    let l_bar = gains.l_bar();
    let c_bar = block_diag(&net.c_s);
    let err = kron_eye(p, a_s) - &l_bar * c_bar + gains.g_matrix();
    put(&mut a_tilde, n, n, &err);

    let q_w = modal.q_w();
    let q_y = net.total_outputs();
    let mut b_tilde = Mat::zeros(big, q_w + q_y);
    put(&mut b_tilde, 0, 0, b_w);
    put(&mut b_tilde, n, 0, &kron_ones(p, b_w));
    put(&mut b_tilde, n, q_w, &(-l_bar));

    let eye = Mat::identity(n, n);
    let mut h1 = Mat::zeros(n, big);
    put(&mut h1, 0, 0, &eye);
    let mut f = Mat::zeros(n * p, big);
    for i in 0..p {
        put(&mut f, i * n, 0, &eye);
        put(&mut f, i * n, n * (i + 1), &(-&eye));
    }
    Ok(AugmentedSystem {
        a_tilde,
        b_tilde,
        h1,
        f,
        n,
        p,
    })
}

fn check_cert(aug: &AugmentedSystem, cert: &LyapunovCertificate) -> Result<(), DesignError> {
    let d = aug.state_dim();
    if cert.p.shape() != (d, d) {
        return Err(DesignError::Dimension(format!(
            "P is {:?}, expected {d}×{d}",
            cert.p.shape()
        )));
    }
    Ok(())
}

/// Upper-left block shared by both certificate matrices:
/// `PÃ + ÃᵀP + τκ₁²H₁ᵀH₁ + H₁ᵀQH₁`.
fn lead_block(
    aug: &AugmentedSystem,
    cert: &LyapunovCertificate,
    weights: &PerformanceWeights,
    kappa1: f64,
) -> Mat {
    let h1 = &aug.h1;
    plus_transpose(&(&cert.p * &aug.a_tilde))
        + h1.transpose() * h1 * (cert.tau * kappa1 * kappa1)
        + h1.transpose() * &weights.q * h1
}

/// The certificate matrix `𝐀 = Ω₁ + Ω₂ + Ω₃` with block rows
/// `x̃_s`, `f_s`, `w̃`. Its negativity certifies the design.
pub fn assemble_certificate_matrix(
    aug: &AugmentedSystem,
    cert: &LyapunovCertificate,
    weights: &PerformanceWeights,
    kappa1: f64,
    gains: &GainSet,
) -> Result<Mat, DesignError> {
    check_cert(aug, cert)?;
    let d = aug.state_dim();
    let n = aug.n;
    let qw = aug.disturbance_dim();
    let dr_kf = &weights.d_r * gains.k_bar() * &aug.f;
    if dr_kf.ncols() != d {
        return Err(DesignError::Dimension("K̄F does not match the augmented state".into()));
    }
    let mut out = Mat::zeros(d + n + qw, d + n + qw);
    let lead = lead_block(aug, cert, weights, kappa1) + dr_kf.transpose() * &dr_kf;
    put(&mut out, 0, 0, &lead);
    let ones = kron_ones(aug.p + 1, &Mat::identity(n, n));
    let r2 = ones.transpose() * &cert.p;
    let r3 = aug.b_tilde.transpose() * &cert.p;
    put(&mut out, d, 0, &r2);
    put(&mut out, 0, d, &r2.transpose());
    put(&mut out, d + n, 0, &r3);
    put(&mut out, 0, d + n, &r3.transpose());
    put(&mut out, d, d, &(-Mat::identity(n, n) * cert.tau));
    put(&mut out, d + n, d + n, &(-Mat::identity(qw, qw) * cert.rho));
    Ok(out)
}

/// The compact BMI `Ξ`: the certificate matrix with the control-penalty term
/// lifted into a fourth block row `[D_R K̄F, 0, 0, −I]`.
pub fn assemble_bmi(
    aug: &AugmentedSystem,
    cert: &LyapunovCertificate,
    weights: &PerformanceWeights,
    kappa1: f64,
    gains: &GainSet,
) -> Result<Mat, DesignError> {
    check_cert(aug, cert)?;
    let d = aug.state_dim();
    let n = aug.n;
    let qw = aug.disturbance_dim();
    let dr_kf = &weights.d_r * gains.k_bar() * &aug.f;
    let qu = dr_kf.nrows();
    let size = d + n + qw + qu;
    let mut out = Mat::zeros(size, size);
    put(&mut out, 0, 0, &lead_block(aug, cert, weights, kappa1));
    let ones = kron_ones(aug.p + 1, &Mat::identity(n, n));
    let r2 = ones.transpose() * &cert.p;
    let r3 = aug.b_tilde.transpose() * &cert.p;
    put(&mut out, d, 0, &r2);
    put(&mut out, 0, d, &r2.transpose());
    put(&mut out, d + n, 0, &r3);
    put(&mut out, 0, d + n, &r3.transpose());
    put(&mut out, d + n + qw, 0, &dr_kf);
    put(&mut out, 0, d + n + qw, &dr_kf.transpose());
    put(&mut out, d, d, &(-Mat::identity(n, n) * cert.tau));
    put(&mut out, d + n, d + n, &(-Mat::identity(qw, qw) * cert.rho));
    put(&mut out, d + n + qw, d + n + qw, &(-Mat::identity(qu, qu)));
    Ok(out)
}

/// Eliminates the trailing `−I` block of `Ξ` by Schur complement:
/// `Ξ₁₁ − Ξ₁₂ (−I)⁻¹ Ξ₂₁ = Ξ₁₁ + Ξ₁₂Ξ₂₁`.
pub fn eliminate_last_block(xi: &Mat, q_u: usize) -> Mat {
    let k = xi.nrows() - q_u;
    let a = xi.view((0, 0), (k, k)).into_owned();
    let b = xi.view((0, k), (k, q_u)).into_owned();
    let d = xi.view((k, k), (q_u, q_u)).into_owned();
    let d_inv = d.try_inverse().expect("trailing block must be invertible");
    a - &b * d_inv * b.transpose()
}
