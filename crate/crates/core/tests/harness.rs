use darcylab::harness::*;
use darcylab::Error;
use proptest::prelude::*;

fn small_config(forcing: &str) -> ExperimentConfig {
    let json = format!(
        r#"{{
        "spec": {{"alpha": 1.5, "hole": {{"kind": "ball", "rho": 0.5}}}},
        "epsilons": [0.5, 0.25],
        "grid": {{"kind": "explicit", "n": [16, 32]}},
        "law": {{"kind": "newtonian", "eta0": 2.0}},
        "forcing": {forcing},
        "permeability": {{"kind": "given", "matrix": [[9.42,0,0],[0,9.42,0],[0,0,9.42]]}},
        "tol": 1e-8
    }}"#
    );
    serde_json::from_str(&json).unwrap()
}

#[test]
fn fit_examples() {
    let eps = [0.25, 0.125, 0.0625];
    assert!((fit_rate(&eps, &eps).unwrap().slope - 1.0).abs() < 1e-12);
    let e: Vec<f64> = eps.iter().map(|x| 3.0 * x.powf(0.2)).collect();
    assert!((fit_rate(&eps, &e).unwrap().slope - 0.2).abs() < 1e-12);
    let flat = fit_rate(&[0.25, 0.125], &[1e-2, 1e-2]).unwrap();
    assert_eq!(flat.slope, 0.0);
    assert!(!rate_pass(&[1e-2, 1e-2], flat.slope, 1.0));
    assert!(matches!(fit_rate(&[0.25], &[1.0]), Err(Error::Fit(_))));
    assert!(matches!(fit_rate(&[0.25, 0.125], &[1.0, 0.0]), Err(Error::Fit(_))));
}

#[test]
fn exponent_ranges() {
    assert!((predicted_exponent(2.0, true, Setting::TorusStationary).unwrap() - 1.0).abs() < 1e-12);
    assert!(predicted_exponent(1.6, false, Setting::TorusStationary).is_err());
    assert!(predicted_exponent(0.9, true, Setting::TorusStationary).is_err());
}

#[test]
fn sweep_writes_a_deterministic_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(r#"{"kind": "single_mode", "k": [1, 0, 0], "amp": [1.0, 1.0, 0.0]}"#);
    cfg.out = Some(dir.path().join("a"));
    let first = run_sweep(&cfg).unwrap();
    cfg.out = Some(dir.path().join("b"));
    cfg.workers = Some(1);
    let second = run_sweep(&cfg).unwrap();
    let a = std::fs::read(dir.path().join("a/results.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/results.csv")).unwrap();
    assert_eq!(a, b);
    for f in ["manifest.json", "plots/velocity_error.svg", "plots/pressure_error.svg"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }
    assert_eq!(first.cases.len(), 2);
    assert_eq!(first.cases[0].velocity_error_sq, second.cases[0].velocity_error_sq);
    let csv = String::from_utf8(a).unwrap();
    let row = csv.lines().find(|l| l.contains("velocity_error_sq")).unwrap();
    let value: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((value / first.cases[0].velocity_error_sq - 1.0).abs() < 1e-8);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["pass"].as_bool().unwrap(), first.all_pass());
    assert!(manifest["permeability"]["m"].is_array());
}

#[test]
fn zero_forcing_sweep_is_degenerate() {
    let cfg = small_config(r#"{"kind": "constant", "value": [0.0, 0.0, 0.0]}"#);
    let r = run_sweep(&cfg).unwrap();
    assert!(r.degenerate);
    assert!(r.velocity_fit.is_none());
    for c in &r.cases {
        assert_eq!(c.velocity_error_sq, 0.0);
        assert_eq!(c.pressure_error_l1, 0.0);
    }
    assert!(!r.all_pass());
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small_config(r#"{"kind": "constant", "value": [1.0, 0.0, 0.0]}"#);
    cfg.epsilons = vec![0.25];
    assert!(matches!(run_sweep(&cfg), Err(Error::Config(_))));
    let mut cfg = small_config(r#"{"kind": "constant", "value": [1.0, 0.0, 0.0]}"#);
    cfg.lambda = Some(1.0);
    assert!(run_sweep(&cfg).is_err());
}

proptest! {
    #[test]
    fn exact_power_laws_are_recovered(c in 1e-6f64..1e3, p in -2.0f64..3.0, k in 2usize..6) {
        let eps: Vec<f64> = (0..k).map(|i| 0.5f64.powi(i as i32 + 1)).collect();
        let e: Vec<f64> = eps.iter().map(|x| c * x.powf(p)).collect();
        let fit = fit_rate(&eps, &e).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-10);
        for s in fit.pair_slopes {
            prop_assert!((s - p).abs() < 1e-10);
        }
    }

    #[test]
    fn pass_requires_strict_decrease(v in prop::collection::vec(1e-6f64..1.0, 2..5), pred in 0.0f64..2.0) {
        let eps: Vec<f64> = (0..v.len()).map(|i| 0.5f64.powi(i as i32 + 2)).collect();
        let slope = fit_rate(&eps, &v).unwrap().slope;
        if rate_pass(&v, slope, pred) {
            prop_assert!(strictly_decreasing(&v));
            prop_assert!(slope >= pred - SLOPE_TOLERANCE);
        }
    }
}
