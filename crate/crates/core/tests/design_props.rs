mod common;

use std::sync::OnceLock;

use dcohinf::design::{algorithm1, verify_certificate, DesignResult, GainLayout, Stage};
use dcohinf::io::GainsFile;
use dcohinf::linalg::Mat;

use common::Example;

fn designed() -> &'static (Example, DesignResult) {
    static F: OnceLock<(Example, DesignResult)> = OnceLock::new();
    F.get_or_init(|| {
        let ex = Example::new(30);
        let res = algorithm1(&ex.ctx(&ex.net), &ex.cfg.algorithm_params()).unwrap();
        (ex, res)
    })
}

#[test]
fn gains_stay_in_the_pattern_bit_exactly() {
    let (ex, res) = designed();
    let pattern = ex.net.sparsity_pattern();
    for (i, k) in res.gains.k.iter().enumerate() {
        if !pattern.k_mask[i] {
            assert!(k.iter().all(|v| v.to_bits() == 0), "K_{i} is not exactly zero");
        }
    }
    for &(i, j) in res.gains.g_bar.keys() {
        assert!(pattern.g_mask[i][j], "consensus block on non-edge ({i}, {j})");
    }
    // Repacking through the layout loses nothing.
    let layout = GainLayout::new(&pattern, 2, 2);
    let again = layout.unpack(&layout.pack(&res.gains));
    assert_eq!(again.k, res.gains.k);
    assert_eq!(again.l, res.gains.l);
}

#[test]
fn rho_log_is_non_increasing() {
    let (_, res) = designed();
    let h = &res.rho_history;
    assert!(h.len() >= 2);
    for w in h.windows(2) {
        assert!(w[1] <= w[0], "rho went up: {:?}", h);
    }
    assert_eq!(res.gamma, res.cert.rho.sqrt());
    assert_eq!(*h.last().unwrap(), res.cert.rho);
    assert!(res.log.iter().any(|r| matches!(r.stage, Stage::Op1 | Stage::Op2)));
}

#[test]
fn written_design_reverifies_bit_identically() {
    let (ex, res) = designed();
    let file = GainsFile::from_design(res, &ex.net);
    let text = file.to_json_pretty();
    let back = GainsFile::from_json_str(&text).unwrap();
    assert_eq!(back.to_json_pretty(), text);
    let gains = back.gains(&ex.net, 2, 2).unwrap();
    let cert = back.full_certificate(2).unwrap().unwrap();
    assert_eq!(gains, res.gains);
    assert_eq!(cert, res.cert);
    let a = verify_certificate(&ex.modal, &ex.net, &res.gains, &res.cert, &ex.weights, ex.kappa1());
    let b = verify_certificate(&ex.modal, &ex.net, &gains, &cert, &ex.weights, ex.kappa1());
    assert!(a.passed);
    assert_eq!(a.lambda_max_a.to_bits(), b.lambda_max_a.to_bits());
}

#[test]
fn design_is_deterministic() {
    let (ex, res) = designed();
    let again = algorithm1(&ex.ctx(&ex.net), &ex.cfg.algorithm_params()).unwrap();
    assert_eq!(
        GainsFile::from_design(&again, &ex.net).to_json_pretty(),
        GainsFile::from_design(res, &ex.net).to_json_pretty()
    );
}

#[test]
fn forced_identity_certificate_fails() {
    let (ex, res) = designed();
    let mut cert = res.cert.clone();
    cert.p = Mat::identity(cert.p.nrows(), cert.p.ncols());
    let r = verify_certificate(&ex.modal, &ex.net, &res.gains, &cert, &ex.weights, ex.kappa1());
    assert!(!r.passed);
    assert!(r.lambda_max_a > 0.0);
}

#[test]
fn stable_plant_designs_easily() {
    let mut cfg = common::example_config();
    cfg.model.instability = 1.5;
    cfg.model.kappa1 = dcohinf::config::Kappa1Config::Value(0.05);
    cfg.validate().unwrap();
    let modal = cfg.build_modal(8).unwrap();
    let net = cfg.build_network(&modal).unwrap();
    let weights = cfg.weights().unwrap();
    let ctx = dcohinf::design::DesignContext {
        modal: &modal,
        net: &net,
        weights: &weights,
        kappa1: modal.kappa1.value,
    };
    let res = algorithm1(&ctx, &cfg.algorithm_params()).unwrap();
    assert!(res.gamma.is_finite() && res.gamma > 0.0);
}
