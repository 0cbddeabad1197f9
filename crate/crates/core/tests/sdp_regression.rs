mod common;

use dcohinf::linalg::{symmetrize, Mat};
use dcohinf::lmi::{check_definiteness, solve, AffineMatrixConstraint, LmiError, SdpProblem, Sense, SolverOptions};
use proptest::prelude::*;

use common::{random_spd, random_symmetric, sdp_cases};

fn replays(problem: &SdpProblem, theta: &[f64]) -> bool {
    problem
        .constraints
        .iter()
        .all(|c| check_definiteness(&symmetrize(&c.evaluate(theta)), c.sense, 1e-9).unwrap().0)
}

#[test]
fn oracle_instances() {
    let cases = sdp_cases();
    assert_eq!(cases.len(), 20);
    for case in &cases {
        let sol = solve(&case.problem, &SolverOptions::default()).unwrap_or_else(|e| panic!("{}: {e}", case.label));
        let rel = (sol.objective - case.oracle).abs() / case.oracle.abs().max(1.0);
        assert!(rel <= 1e-6, "{}: {} vs oracle {} (rel {rel:.2e})", case.label, sol.objective, case.oracle);
        assert!(replays(&case.problem, &sol.theta), "{}: returned point violates a constraint", case.label);
    }
}

#[test]
fn solves_are_reproducible() {
    for case in sdp_cases().iter().take(5) {
        let a = solve(&case.problem, &SolverOptions::default()).unwrap();
        let b = solve(&case.problem, &SolverOptions::default()).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.theta), bits(&b.theta));
    }
}

fn lyapunov_problem(a: &Mat) -> SdpProblem {
    // P ≻ 0 and AᵀP + PA ≺ 0 in the three entries of a 2×2 P.
    let unpack = |t: &[f64]| Mat::from_row_slice(2, 2, &[t[0], t[1], t[1], t[2]]);
    let mut p = SdpProblem::with_unnamed(3);
    p.add(AffineMatrixConstraint::from_affine("P", 3, Sense::PositiveDefinite, unpack).unwrap());
    let a = a.clone();
    p.add(
        AffineMatrixConstraint::from_affine("lyap", 3, Sense::NegativeDefinite, move |t| {
            let pm = unpack(t);
            a.transpose() * &pm + &pm * &a
        })
        .unwrap(),
    );
    p.bound(0, None, Some(10.0));
    p.bound(2, None, Some(10.0));
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// A strictly feasible point known to the test implies the solver finds
    /// a feasible point as well.
    #[test]
    fn finds_feasible_point_when_one_exists(seed in 0u64..10_000) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let a0 = random_symmetric(&mut rng, n, 2.0);
        let a1 = random_symmetric(&mut rng, n, 1.0);
        let x_star: f64 = rand::Rng::gen_range(&mut rng, -2.0..2.0);
        // Shift so that x_star is strictly feasible with slack one.
        let shift = common::jacobi_max(&(&a0 + &a1 * x_star)) + 1.0;
        let f0 = &a0 - Mat::identity(n, n) * shift;
        let mut p = SdpProblem::with_unnamed(1);
        p.add(AffineMatrixConstraint::from_affine("c", 1, Sense::NegativeDefinite, move |t| &f0 + &a1 * t[0]).unwrap());
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        prop_assert!(replays(&p, &sol.theta));
    }

    /// Adding a constraint never turns an infeasible problem feasible.
    #[test]
    fn feasibility_is_monotone(seed in 0u64..10_000) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = random_symmetric(&mut rng, 2, 3.0);
        let base = lyapunov_problem(&a);
        let base_feasible = !matches!(solve(&base, &SolverOptions::default()), Err(LmiError::Infeasible { .. }));
        let mut more = base.clone();
        let extra = random_spd(&mut rng, 2);
        more.add(AffineMatrixConstraint::from_affine("extra", 3, Sense::PositiveDefinite, move |t| {
            &extra - Mat::from_row_slice(2, 2, &[t[0], t[1], t[1], t[2]])
        }).unwrap());
        let more_feasible = !matches!(solve(&more, &SolverOptions::default()), Err(LmiError::Infeasible { .. }));
        prop_assert!(base_feasible || !more_feasible);
        // Hurwitz A always admits a Lyapunov certificate.
        let ev = common::jacobi_eigenvalues(&a);
        if ev[1] < -1e-3 {
            prop_assert!(base_feasible);
        }
    }
}
