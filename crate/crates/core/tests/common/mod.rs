#![allow(dead_code)]

use std::path::PathBuf;

use dcohinf::config::RunConfig;
use dcohinf::design::{
    assemble_augmented, assemble_bmi, assemble_certificate_matrix, eliminate_last_block, minimize_rho_over_p,
    AlgorithmParams, DesignContext, GainSet, LyapunovCertificate, PerformanceWeights,
};
use dcohinf::linalg::{Mat, Vector};
use dcohinf::lmi::{AffineMatrixConstraint, SdpProblem, Sense};
use dcohinf::network::SensorNetwork;
use dcohinf::spectral::ModalSystem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PUBLISHED_TAU: f64 = 88.8032;

pub fn example_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples")
}

pub fn example_config() -> RunConfig {
    RunConfig::from_path(&example_dir().join("kse.json")).expect("bundled config")
}

/// The worked example: modal system with `modes` retained modes and κ₁ as
/// configured, the four-node network and the weights.
pub struct Example {
    pub cfg: RunConfig,
    pub modal: ModalSystem,
    pub net: SensorNetwork,
    pub so: SensorNetwork,
    pub weights: PerformanceWeights,
}

impl Example {
    pub fn new(modes: usize) -> Self {
        let cfg = example_config();
        let modal = cfg.build_modal(modes).unwrap();
        let net = cfg.build_network(&modal).unwrap();
        let so = net.single_observer(0).unwrap();
        let weights = cfg.weights().unwrap();
        Self {
            cfg,
            modal,
            net,
            so,
            weights,
        }
    }

    pub fn kappa1(&self) -> f64 {
        self.modal.kappa1.value
    }

    pub fn ctx<'a>(&'a self, net: &'a SensorNetwork) -> DesignContext<'a> {
        DesignContext {
            modal: &self.modal,
            net,
            weights: &self.weights,
            kappa1: self.kappa1(),
        }
    }

    /// Published gains with the certificate recovered at the published `τ`.
    pub fn published_certificate(&self) -> (GainSet, LyapunovCertificate) {
        let g = published_gains(&self.net);
        let (cert, _) = minimize_rho_over_p(
            &self.ctx(&self.net),
            &g,
            PUBLISHED_TAU,
            &AlgorithmParams::default().solver,
            None,
        )
        .expect("certificate at the published tau");
        (g, cert)
    }
}

pub fn m(r: usize, c: usize, v: &[f64]) -> Mat {
    Mat::from_row_slice(r, c, v)
}

pub fn published_gains(net: &SensorNetwork) -> GainSet {
    let mut g = GainSet::zeros(net, 2, 2);
    g.k[0] = m(2, 2, &[-10.9647, 5.9002, -17.8487, -0.9818]);
    g.l[0] = m(2, 1, &[-15.8461, 12.9702]);
    g.l[1] = m(2, 1, &[-8.3935, -12.5294]);
    g.l[2] = m(2, 1, &[6.7134, 12.8918]);
    g.l[3] = m(2, 1, &[12.7132, -4.2852]);
    // Unit edge weights, so Ḡ_ij = G_ij.
    g.g_bar.insert((0, 1), m(2, 2, &[0.3431, -7.7177, -1.5052, -8.5611]));
    g.g_bar.insert((0, 3), m(2, 2, &[-6.0126, -1.5679, 2.3492, -4.1418]));
    g.g_bar.insert((1, 0), m(2, 2, &[-6.7274, 5.5842, 3.9281, -4.3532]));
    g.g_bar.insert((2, 0), m(2, 2, &[-9.0659, 3.2268, 5.3902, -4.4743]));
    g.g_bar.insert((3, 2), m(2, 2, &[-1.3052, -2.6255, 0.8020, -7.9942]));
    g
}

pub fn published_so_gains(so: &SensorNetwork) -> GainSet {
    let mut g = GainSet::zeros(so, 2, 2);
    g.k[0] = m(2, 2, &[-6.5255, 0.9326, -10.8377, 2.8401]);
    g.l[0] = m(2, 1, &[-11.7498, 0.1848]);
    g
}

// ---------------------------------------------------------------- oracles

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(m: &Mat) -> Vec<f64> {
    let n = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (m[(i, j)] + m[(j, i)])).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn jacobi_max(m: &Mat) -> f64 {
    *jacobi_eigenvalues(m).last().unwrap()
}

/// True when the symmetric matrix admits a Cholesky factorization.
pub fn cholesky_ok(m: &Mat) -> bool {
    let n = m.nrows();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return false;
        }
        l[j][j] = d.sqrt();
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / l[j][j];
        }
    }
    true
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Mat {
    let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) * scale);
    (&a + a.transpose()) * 0.5
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + Mat::identity(n, n) * 0.5
}

/// Random orthogonal matrix from the QR factor of a Gaussian-like draw.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.qr().q()
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b))
}

// ------------------------------------------------------ SDP regression set

pub struct SdpCase {
    pub label: String,
    pub problem: SdpProblem,
    /// Optimal value from an oracle that does not use the solver.
    pub oracle: f64,
}

/// Twenty seeded instances: eigenvalue shifts (oracle: Jacobi), generalized
/// eigenvalue bounds (oracle: Cholesky bisection) and one-parameter minimax
/// eigenvalue problems (oracle: golden section over Jacobi).
pub fn sdp_cases() -> Vec<SdpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5d9);
    let mut cases = Vec::new();
    for k in 0..8 {
        let n = 2 + k % 7;
        let a = random_symmetric(&mut rng, n, 3.0);
        let oracle = jacobi_max(&a);
        let mut p = SdpProblem::with_unnamed(1);
        let a2 = a.clone();
        p.add(
            AffineMatrixConstraint::from_affine("shift", 1, Sense::NegativeDefinite, move |t| {
                &a2 - Mat::identity(n, n) * t[0]
            })
            .unwrap(),
        );
        p.minimize(0);
        cases.push(SdpCase {
            label: format!("eigen-shift n={n}"),
            problem: p,
            oracle,
        });
    }
    for k in 0..6 {
        let n = 2 + k % 5;
        let a = random_symmetric(&mut rng, n, 2.0);
        let b = random_spd(&mut rng, n);
        // t·B − A ≻ 0 holds exactly for t above the largest generalized eigenvalue.
        let (mut lo, mut hi) = (-1e3, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cholesky_ok(&(&b * mid - &a)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut p = SdpProblem::with_unnamed(1);
        p.add(
            AffineMatrixConstraint::from_affine("gevp", 1, Sense::PositiveDefinite, move |t| &b * t[0] - &a).unwrap(),
        );
        p.minimize(0);
        cases.push(SdpCase {
            label: format!("generalized n={n}"),
            problem: p,
            oracle: hi,
        });
    }
    for k in 0..6 {
        let n = 3 + k % 4;
        let a0 = random_symmetric(&mut rng, n, 2.0);
        let q = random_orthogonal(&mut rng, n);
        let mut d = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        d[0] = 1.0;
        d[1] = -1.0;
        let a1 = &q * Mat::from_diagonal(&d) * q.transpose();
        let (f0, f1) = (a0.clone(), a1.clone());
        let oracle = golden_min(move |x| jacobi_max(&(&f0 + &f1 * x)), -100.0, 100.0);
        let mut p = SdpProblem::new(vec!["t".into(), "x".into()]);
        p.add(
            AffineMatrixConstraint::from_affine("minimax", 2, Sense::NegativeDefinite, move |v| {
                &a0 + &a1 * v[1] - Mat::identity(n, n) * v[0]
            })
            .unwrap(),
        );
        p.minimize(0);
        cases.push(SdpCase {
            label: format!("minimax n={n}"),
            problem: p,
            oracle,
        });
    }
    cases
}

// ------------------------------------------------------ Schur equivalence

/// A random instance around the published certificate: gains and `P` are
/// perturbed at `scale`, `R` is a random diagonal so the fourth block is
/// not trivial.
pub struct SchurInstance {
    pub gains: GainSet,
    pub cert: LyapunovCertificate,
    pub weights: PerformanceWeights,
}

pub fn schur_instance(ex: &Example, base: &(GainSet, LyapunovCertificate), seed: u64) -> SchurInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 10f64.powf(rng.gen_range(-7.0..-1.0));
    let (g0, c0) = base;
    let mut g = g0.clone();
    for k in g.k.iter_mut().take(1) {
        *k += Mat::from_fn(k.nrows(), k.ncols(), |_, _| rng.gen_range(-1.0..1.0)) * scale * 10.0;
    }
    for l in g.l.iter_mut() {
        *l += Mat::from_fn(l.nrows(), l.ncols(), |_, _| rng.gen_range(-1.0..1.0)) * scale * 10.0;
    }
    for gb in g.g_bar.values_mut() {
        *gb += Mat::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0)) * scale * 10.0;
    }
    let d = c0.p.nrows();
    let p = &c0.p + random_symmetric(&mut rng, d, scale * 0.1);
    // A larger ρ buys slack through the −ρI block, so small perturbations
    // keep the certificate while large ones break it.
    let cert = LyapunovCertificate {
        p,
        tau: c0.tau * rng.gen_range(0.9..1.1),
        rho: c0.rho * rng.gen_range(1.0..10.0),
    };
    let r = [rng.gen_range(0.0..1e-3), rng.gen_range(0.0..1e-3)];
    let weights = PerformanceWeights::diagonal(&[0.1, 0.1], &r, ex.weights.t_f).unwrap();
    SchurInstance { gains: g, cert, weights }
}

pub struct SchurOutcome {
    pub lambda_xi: f64,
    pub lambda_a: f64,
    /// Entrywise distance between the eliminated Ξ and the directly
    /// assembled 𝐀, relative to ‖𝐀‖.
    pub elimination_error: f64,
}

pub fn schur_check(ex: &Example, inst: &SchurInstance) -> SchurOutcome {
    let k1 = ex.kappa1();
    let aug = assemble_augmented(&ex.modal, &ex.net, &inst.gains).unwrap();
    let xi = assemble_bmi(&aug, &inst.cert, &inst.weights, k1, &inst.gains).unwrap();
    let a = assemble_certificate_matrix(&aug, &inst.cert, &inst.weights, k1, &inst.gains).unwrap();
    let reduced = eliminate_last_block(&xi, ex.modal.q_u());
    let scale = a.abs().max().max(1.0);
    SchurOutcome {
        lambda_xi: jacobi_max(&xi),
        lambda_a: jacobi_max(&reduced),
        elimination_error: (&reduced - &a).abs().max() / scale,
    }
}

/// Largest deviation from affinity of `f` along `θ(s) = (1−s)a + s·b` at
/// three points, relative to the size of the values.
pub fn three_point_defect(f: impl Fn(f64) -> Mat, s: f64) -> f64 {
    let (fa, fb, fs) = (f(0.0), f(1.0), f(s));
    let interp = &fa * (1.0 - s) + &fb * s;
    let scale = fa.abs().max().max(fb.abs().max()).max(1.0);
    (&fs - interp).abs().max() / scale
}
