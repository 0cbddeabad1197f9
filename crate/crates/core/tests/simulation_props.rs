mod common;

use std::sync::OnceLock;

use dcohinf::design::{assemble_augmented, verify_certificate, GainSet, LyapunovCertificate};
use dcohinf::linalg::Vector;
use dcohinf::simulate::{
    performance_ratio, simulate, DisturbanceSpec, InitialCondition, SimulationOptions, SimulationTrace,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{published_gains, Example};

fn example() -> &'static (Example, (GainSet, LyapunovCertificate)) {
    static F: OnceLock<(Example, (GainSet, LyapunovCertificate))> = OnceLock::new();
    F.get_or_init(|| {
        let ex = Example::new(30);
        let base = ex.published_certificate();
        (ex, base)
    })
}

fn run(ex: &Example, gains: &GainSet, d: &DisturbanceSpec, opts: &SimulationOptions) -> SimulationTrace {
    simulate(&ex.modal, &ex.net, gains, d, &ex.weights.q, &ex.weights.r, opts).unwrap()
}

#[test]
fn linear_modes_use_the_exact_propagator() {
    let (ex, _) = example();
    let zero = GainSet::zeros(&ex.net, 2, 2);
    let dt = 1e-4;
    let opts = SimulationOptions {
        t_f: 0.005,
        dt,
        decimation: 1,
        initial: InitialCondition::Model,
        nonlinear: false,
    };
    let tr = run(ex, &zero, &DisturbanceSpec::None, &opts);
    let lambdas = &ex.modal.eigen.eigenvalues;
    for w in tr.samples.windows(2) {
        for (j, lam) in lambdas.iter().enumerate() {
            let expect = w[0].x[j] * (lam * dt).exp();
            assert!((w[1].x[j] - expect).abs() <= 1e-12 * (1.0 + w[0].x[j].abs()), "mode {j}");
        }
    }
}

fn final_state(tr: &SimulationTrace) -> Vec<f64> {
    let s = tr.final_state.clone();
    s.x_s.iter().chain(s.x_f.iter()).chain(s.x_hat.iter().flat_map(|v| v.iter())).copied().collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn second_order_convergence() {
    let (ex, (g, _)) = example();
    let states: Vec<Vec<f64>> = [4e-4, 2e-4, 1e-4, 5e-5]
        .iter()
        .map(|&dt| {
            let opts = SimulationOptions {
                t_f: 1.0,
                dt,
                decimation: 1000,
                initial: InitialCondition::Model,
                nonlinear: true,
            };
            final_state(&run(ex, g, &DisturbanceSpec::Reference, &opts))
        })
        .collect();
    let e1 = dist(&states[0], &states[1]);
    let e2 = dist(&states[1], &states[2]);
    let e3 = dist(&states[2], &states[3]);
    let order1 = (e1 / e2).log2();
    let order2 = (e2 / e3).log2();
    assert!(order1 > 1.9 && order2 > 1.9, "observed orders {order1:.3}, {order2:.3}");
}

#[test]
fn doubling_modes_barely_moves_the_trace() {
    let (ex, (g, _)) = example();
    let ex60 = Example::new(60);
    let opts = SimulationOptions {
        initial: InitialCondition::Zero,
        ..SimulationOptions::default()
    };
    let a = run(ex, g, &DisturbanceSpec::Reference, &opts);
    let b = run(&ex60, &published_gains(&ex60.net), &DisturbanceSpec::Reference, &opts);
    let sup = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(s, t)| dist(&s.x_s, &t.x_s))
        .fold(0.0, f64::max);
    assert!(sup < 1e-4, "sup deviation {sup}");
    let (ja, jb) = (performance_ratio(&a).unwrap(), performance_ratio(&b).unwrap());
    assert!(((ja - jb) / ja).abs() < 0.05, "J {ja} vs {jb}");
}

#[test]
fn control_matches_augmented_form() {
    let (ex, (g, _)) = example();
    let aug = assemble_augmented(&ex.modal, &ex.net, g).unwrap();
    let kf = g.k_bar() * &aug.f;
    let opts = SimulationOptions {
        t_f: 0.5,
        decimation: 10,
        ..SimulationOptions::default()
    };
    let tr = run(ex, g, &DisturbanceSpec::Reference, &opts);
    for s in &tr.samples {
        let mut xt = Vec::with_capacity(10);
        xt.extend_from_slice(&s.x_s);
        for xh in &s.x_hat {
            xt.extend(s.x_s.iter().zip(xh).map(|(a, b)| a - b));
        }
        let u = &kf * Vector::from_vec(xt);
        let scale = 1.0 + s.u.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in u.iter().zip(&s.u) {
            assert!((a - b).abs() <= 1e-12 * scale, "t = {}: {a} vs {b}", s.t);
        }
    }
}

/// `∫x_sᵀQx_s + uᵀRu ≤ ρ ∫w̃ᵀw̃` from rest for bounded random disturbances.
#[test]
fn attenuation_bound_holds_for_random_disturbances() {
    let (ex, (g, cert)) = example();
    assert!(verify_certificate(&ex.modal, &ex.net, g, cert, &ex.weights, ex.kappa1()).passed);
    for seed in 1..=5u64 {
        let opts = SimulationOptions {
            initial: InitialCondition::Zero,
            ..SimulationOptions::default()
        };
        let tr = run(ex, g, &DisturbanceSpec::RandomBounded { seed, amplitude: 1.0 }, &opts);
        let last = tr.samples.last().unwrap();
        let bound = cert.rho * last.dist_integral;
        assert!(
            last.perf_integral <= bound * (1.0 + 1e-3),
            "seed {seed}: {} > {}",
            last.perf_integral,
            bound
        );
    }
}

/// Integrates the slow augmented loop `x̃' = Ãx̃ + (1⊗I) f_s(x_s)` with RK4.
fn slow_loop_decay(ex: &Example, g: &GainSet, x0: &Vector, t_end: f64) -> f64 {
    let aug = assemble_augmented(&ex.modal, &ex.net, g).unwrap();
    let n = 2;
    let d = aug.state_dim();
    let rhs = |x: &Vector| -> Vector {
        let fs = ex.modal.slow_nonlinearity(&[x[0], x[1]]);
        let mut out = &aug.a_tilde * x;
        for blk in 0..d / n {
            out[blk * n] += fs[0];
            out[blk * n + 1] += fs[1];
        }
        out
    };
    let h = 1e-3;
    let mut x = x0.clone();
    for _ in 0..(t_end / h).round() as usize {
        let k1 = rhs(&x);
        let k2 = rhs(&(&x + &k1 * (h / 2.0)));
        let k3 = rhs(&(&x + &k2 * (h / 2.0)));
        let k4 = rhs(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x.norm() / x0.norm()
}

#[test]
fn certified_design_decays_inside_the_ball() {
    let (ex, (g, _)) = example();
    let radius = ex.modal.kappa1.radius.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..10 {
        let dir = Vector::from_fn(10, |_, _| rng.gen_range(-1.0..1.0));
        // ‖x̃‖ ≤ radius keeps x_s inside the ball where κ₁ was estimated.
        let x0 = dir.normalize() * (radius * rng.gen_range(0.2..1.0));
        let ratio = slow_loop_decay(ex, g, &x0, 20.0);
        assert!(ratio < 1e-6, "decay ratio {ratio}");
    }
}
