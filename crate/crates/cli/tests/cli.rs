use std::path::Path;
use std::process::{Command, Output};

fn darcylab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_darcylab")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.json",
        r#"{
        "spec": {"alpha": 1.5, "hole": {"kind": "ball", "rho": 0.5}},
        "epsilons": [0.5, 0.25],
        "grid": {"kind": "explicit", "n": [16, 32]},
        "law": {"kind": "newtonian", "eta0": 2.0},
        "permeability": {"kind": "given", "matrix": [[9.42,0,0],[0,9.42,0],[0,0,9.42]]}
    }"#,
    );
    let run = dir.path().join("run");
    let out = darcylab(&["sweep", "--config", &cfg, "--out", s(&run), "--workers", "1"]);
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 1, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.json", "results.csv", "plots/velocity_error.svg"] {
        assert!(run.join(f).exists());
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(code == 0, manifest["pass"].as_bool().unwrap());
    let csv = std::fs::read(run.join("results.csv")).unwrap();
    let rep = darcylab(&["report", s(&run)]);
    assert_eq!(rep.status.code().unwrap(), code);
    assert_eq!(std::fs::read(run.join("results.csv")).unwrap(), csv);
    assert!(String::from_utf8_lossy(&rep.stdout).contains("overall pass"));
}

#[test]
fn solve_writes_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "solve.json",
        r#"{
        "spec": {"epsilon": 0.5, "alpha": 1.5, "hole": {"kind": "ball", "rho": 0.5}},
        "n": 16,
        "law": {"kind": "carreau_yasuda", "eta0": 2.0, "eta_inf": 1.0, "kappa0": 1.0, "r": 1.5, "a": 2.0},
        "lambda": 2.5,
        "tol": 1e-7
    }"#,
    );
    let run = dir.path().join("solve");
    let out = darcylab(&["solve", "--config", &cfg, "--out", s(&run), "--checkpoint-every", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("checkpoint_00001.json").exists());
    assert!(run.join("checkpoint_00001.bin").exists());
    let header: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run.join("solution.json")).unwrap()).unwrap();
    assert_eq!(header["n"], 16);
    assert_eq!(std::fs::metadata(run.join("solution.bin")).unwrap().len(), 32 * 16 * 16 * 16);
    assert!(run.join("diagnostics.json").exists());
}

#[test]
fn evolutionary_solve_from_darcy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "evo.json",
        r#"{
        "spec": {"epsilon": 0.25, "alpha": 2.0, "hole": {"kind": "ball", "rho": 1.0}},
        "n": 32,
        "window": {"slab": {"axis": 0}},
        "law": {"kind": "newtonian", "eta0": 2.0},
        "lambda": 3.0,
        "mode": {"kind": "evolutionary", "dt": 1e-3, "t_end": 3e-3, "u0": "darcy"},
        "permeability": {"kind": "given", "matrix": [[17,0,0],[0,17,0],[0,0,17]]}
    }"#,
    );
    let run = dir.path().join("evo");
    let out = darcylab(&["solve", "--config", &cfg, "--out", s(&run), "--checkpoint-every", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("checkpoint_00002.json").exists());
    assert!(!run.join("checkpoint_00001.json").exists());
    assert!(run.join("steps.json").exists());
}

#[test]
fn darcy_and_probe() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "darcy.json",
        r#"{
        "hole": {"kind": "ball", "rho": 0.1},
        "permeability": {"kind": "given", "matrix": [[1.9,0,0],[0,1.9,0],[0,0,1.9]]},
        "eta0": 2.0,
        "n": 16,
        "forcing": {"kind": "single_mode", "k": [1, 1, 0], "amp": [1.0, 0.0, 0.5]}
    }"#,
    );
    let out = darcylab(&["darcy", "--config", &cfg, "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("darcy.bin").exists());

    let cfg = write(
        dir.path(),
        "probe.json",
        r#"{"probe": "korn", "alpha": 1.5, "hole": {"kind": "ball", "rho": 0.5}, "epsilons": [0.5], "n": 16, "samples": 5}"#,
    );
    let out = darcylab(&["probe", "--config", &cfg, "--out", s(dir.path()), "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("probes.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("korn,"));
}

#[test]
fn perm_with_coarse_exterior_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "perm.json",
        r#"{"hole": {"kind": "ball", "rho": 0.1}, "truncations": [8, 16], "cells_per_radius": 2}"#,
    );
    let out = darcylab(&["perm", "--config", &cfg, "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("permeability.json")).unwrap()).unwrap();
    assert!(m["m"][0][0].as_f64().unwrap() > 0.0);
}

#[test]
fn errors_exit_with_code_two() {
    assert_eq!(darcylab(&["sweep"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"spec": {"epsilon": 0.3, "alpha": 1.5, "hole": {"kind": "ball", "rho": 0.5}}, "n": 16, "law": {"kind": "newtonian", "eta0": 1.0}}"#);
    let out = darcylab(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
