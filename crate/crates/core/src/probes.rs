//! Sampled measurements of the Poincare, Korn and Bogovskii constants on perforated masks.

use crate::error::{Error, Result};
use crate::geometry::{build_mask_window, DomainMask, GridSpec, HoleShape, PerforationSpec, Window};
use crate::harness::fit_rate;
use crate::linalg::krylov::{dot, pcg};
use crate::linalg::multigrid::{cell_laplacian, MgOptions, Multigrid};
use crate::mesh::Grid;
use crate::ops;
use crate::stokes::StokesSystem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Allowed relative deviation of a measured Poincare ratio from `2^exponent`.
pub const POINCARE_RATIO_TOLERANCE: f64 = 0.3;
/// Slack on the Bogovskii growth envelope.
pub const BOGOVSKII_SLACK: f64 = 1.3;
/// Slack on the Korn bound `sqrt(2)`.
pub const KORN_SLACK: f64 = 0.05;

/// `(3 - (3 - q) alpha) / q`, the exponent of the Poincare constant.
pub fn poincare_exponent(alpha: f64, q: f64) -> f64 {
    (3.0 - (3.0 - q) * alpha) / q
}

/// `((3 - q) alpha - 3) / q`, the exponent of the Bogovskii operator norm.
pub fn bogovskii_exponent(alpha: f64, q: f64) -> f64 {
    ((3.0 - q) * alpha - 3.0) / q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareResult {
    pub constant: f64,
    pub eigenvalue: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// `1 / sqrt(lambda_1)` of the cell Laplacian with Dirichlet data on solid cells, by inverse power iteration.
pub fn poincare_constant(mask: &DomainMask, tol: f64) -> Result<PoincareResult> {
    if !mask.solid.iter().any(|s| *s) {
        return Err(Error::Precondition("Poincare constant needs at least one hole in the mask".into()));
    }
    let grid = &mask.grid;
    let active = mask.fluid();
    let lap = cell_laplacian(grid, &active, 0.0);
    let mg = Multigrid::new(lap.clone(), MgOptions::default());
    let vol = grid.cell_volumes();
    let n = grid.len();
    let mut x: Vec<f64> = active.iter().map(|a| if *a { 1.0 } else { 0.0 }).collect();
    let mut y = vec![0.0; n];
    let mut ly = vec![0.0; n];
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    for it in 1..=500 {
        let b: Vec<f64> = x.iter().zip(&vol).map(|(v, w)| v * w).collect();
        pcg(&mut |p, q| lap.apply(p, q), &mut |r, z| mg.apply(r, z), &b, &mut y, 1e-10, 2000)?;
        lap.apply(&y, &mut ly);
        let mass: f64 = y.iter().zip(&vol).map(|(v, w)| v * v * w).sum();
        let lambda = dot(&y, &ly) / mass;
        history.push(lambda);
        let s = 1.0 / mass.sqrt();
        x.iter_mut().zip(&y).for_each(|(a, b)| *a = b * s);
        y.iter_mut().for_each(|v| *v *= s);
        if (prev - lambda).abs() <= tol * lambda {
            return Ok(PoincareResult { constant: 1.0 / lambda.sqrt(), eigenvalue: lambda, iterations: it, history });
        }
        prev = lambda;
    }
    Err(Error::NumericalQuality(format!(
        "inverse power iteration did not reach relative tolerance {tol:e} in 500 steps"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KornReport {
    pub samples: usize,
    /// Largest `||grad u|| / ||D u||`.
    pub max_ratio: f64,
    /// Largest `| ||grad u||^2 - 2 ||D u||^2 + ||div u||^2 | / ||grad u||^2`.
    pub max_identity_residual: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `(||grad u|| / ||D u||, relative identity residual)`, `None` when `||D u|| < 1e-8`.
pub fn korn_ratio(grid: &Grid, u: &[f64]) -> Option<(f64, f64)> {
    let (g, d, dv) = ops::korn_terms(grid, u);
    if d.sqrt() < 1e-8 {
        return None;
    }
    Some(((g / d).sqrt(), (g - 2.0 * d + dv).abs() / g))
}

/// Smooth random field: a few random Fourier modes on the grid's box.
fn random_modes(grid: &Grid, rng: &mut ChaCha8Rng, modes: usize, kmax: i32, comps: usize) -> Vec<Vec<f64>> {
    let len = grid.lengths();
    let mut spec = Vec::new();
    for _ in 0..modes {
        let k = [0; 3].map(|_: i32| rng.gen_range(-kmax..=kmax));
        let amp: Vec<f64> = (0..comps).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let phase = rng.gen_range(0.0..2.0 * PI);
        spec.push((k, amp, phase));
    }
    (0..comps)
        .map(|c| {
            let eval = |x: [f64; 3]| {
                spec.iter()
                    .map(|(k, amp, ph)| {
                        let t: f64 = (0..3).map(|a| 2.0 * PI * k[a] as f64 * x[a] / len[a]).sum();
                        amp[c] * (t + ph).sin()
                    })
                    .sum::<f64>()
            };
            if comps == 3 {
                ops::sample_faces(grid, |a, x| if a == c { eval(x) } else { 0.0 })
            } else {
                ops::sample_cells(grid, eval)
            }
        })
        .collect()
}

fn random_velocity(mask: &DomainMask, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = mask.grid.len();
    let parts = random_modes(&mask.grid, rng, 4, 3, 3);
    let mut u = vec![0.0; 3 * n];
    for (c, p) in parts.iter().enumerate() {
        u[c * n..(c + 1) * n].copy_from_slice(&p[c * n..(c + 1) * n]);
    }
    for (v, s) in u.iter_mut().zip(&mask.face_solid) {
        if *s {
            *v = 0.0;
        }
    }
    u
}

/// Korn ratios of `n_samples` random smooth fields vanishing on solid-adjacent faces.
pub fn korn_identity_check(mask: &DomainMask, n_samples: usize, seed: u64) -> KornReport {
    let bound = 2f64.sqrt() + KORN_SLACK;
    let results: Vec<(f64, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            loop {
                let u = random_velocity(mask, &mut rng);
                if let Some(r) = korn_ratio(&mask.grid, &u) {
                    return r;
                }
            }
        })
        .collect();
    let max_ratio = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_identity_residual = results.iter().map(|r| r.1).fold(0.0, f64::max);
    KornReport { samples: n_samples, max_ratio, max_identity_residual, bound, pass: max_ratio <= bound }
}

/// Minimal-energy `Phi` with `div Phi = g` on fluid cells and `Phi = 0` on solid-adjacent faces.
pub fn bogovskii_solve(mask: &DomainMask, g: &[f64], tol: f64) -> Result<Vec<f64>> {
    let grid = &mask.grid;
    let n = grid.len();
    if g.len() != n {
        return Err(Error::GridMismatch("divergence datum does not match the grid".into()));
    }
    let vol = grid.cell_volumes();
    let fluid = mask.fluid();
    let total: f64 = (0..n).filter(|q| fluid[*q]).map(|q| vol[q]).sum();
    let mean: f64 = (0..n).filter(|q| fluid[*q]).map(|q| vol[q] * g[q]).sum::<f64>() / total;
    let scale: f64 = (0..n).filter(|q| fluid[*q]).map(|q| vol[q] * g[q].abs()).sum::<f64>() / total;
    if mean.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition(format!("divergence datum has nonzero fluid mean {mean:e}")));
    }
    let target: Vec<f64> = (0..n).map(|q| if fluid[q] { vol[q] * (g[q] - mean) } else { 0.0 }).collect();
    let mut sys = StokesSystem::new(grid.clone(), mask.face_solid.clone());
    let sol = sys.solve(&vec![2.0; n], &vec![0.0; 3 * n], None, Some(&target), None, tol, 5000)?;
    Ok(sol.u)
}

/// `||grad Phi|| / ||g||`, `None` for `g = 0`.
pub fn bogovskii_ratio(mask: &DomainMask, g: &[f64], tol: f64) -> Result<Option<f64>> {
    let vol = mask.grid.cell_volumes();
    let gn: f64 = g.iter().zip(&vol).map(|(v, w)| v * v * w).sum::<f64>().sqrt();
    if gn == 0.0 {
        return Ok(None);
    }
    let phi = bogovskii_solve(mask, g, tol)?;
    Ok(Some(ops::gradient_energy(&mask.grid, &phi).sqrt() / gn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BogovskiiReport {
    pub epsilon: f64,
    pub samples: usize,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

fn random_divergence(mask: &DomainMask, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut g = random_modes(&mask.grid, rng, 6, 4, 1).remove(0);
    let vol = mask.grid.cell_volumes();
    let fluid = mask.fluid();
    let (mut s, mut v) = (0.0, 0.0);
    for q in 0..g.len() {
        if fluid[q] {
            s += vol[q] * g[q];
            v += vol[q];
        }
    }
    let m = s / v;
    for q in 0..g.len() {
        g[q] = if fluid[q] { g[q] - m } else { 0.0 };
    }
    g
}

/// Largest sampled `||grad Phi|| / ||g||` over `n_samples` random zero-mean data.
pub fn bogovskii_norm_probe(mask: &DomainMask, n_samples: usize, seed: u64, tol: f64) -> Result<BogovskiiReport> {
    let ratios: Vec<Result<Option<f64>>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            bogovskii_ratio(mask, &random_divergence(mask, &mut rng), tol)
        })
        .collect();
    let mut out = Vec::new();
    for r in ratios {
        if let Some(v) = r? {
            out.push(v);
        }
    }
    let max_ratio = out.iter().cloned().fold(0.0, f64::max);
    Ok(BogovskiiReport { epsilon: mask.epsilon, samples: n_samples, ratios: out, max_ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Poincare,
    Korn,
    Bogovskii,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub epsilon: f64,
    pub alpha: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    pub points: Vec<ProbePoint>,
    pub predicted_exponent: Option<f64>,
    pub slope: Option<f64>,
    /// Value ratios between consecutive points, `v(eps) / v(eps / 2)` for Poincare and the inverse for Bogovskii.
    pub ratios: Vec<f64>,
    pub pass: Option<bool>,
    pub notes: Vec<String>,
}

fn slope(points: &[ProbePoint]) -> Option<f64> {
    let e: Vec<f64> = points.iter().map(|p| p.epsilon).collect();
    let v: Vec<f64> = points.iter().map(|p| p.value).collect();
    fit_rate(&e, &v).ok().map(|f| f.slope)
}

/// Compare consecutive Poincare constants with `2^((3 - alpha)/2)` (epsilons halving).
pub fn poincare_report(points: Vec<ProbePoint>, in_model: bool) -> ProbeReport {
    let mut notes = Vec::new();
    let ratios: Vec<f64> = points.windows(2).map(|w| w[0].value / w[1].value).collect();
    let (predicted, pass) = if in_model && points.len() >= 2 {
        let alpha = points[0].alpha;
        let e = poincare_exponent(alpha, 2.0);
        if e < 0.15 {
            notes.push(format!("weak constraint regime: exponent {e:.3} leaves the constant nearly flat"));
        }
        let ok = points.windows(2).zip(&ratios).all(|(w, r)| {
            let expected = (w[0].epsilon / w[1].epsilon).powf(e);
            (r / expected - 1.0).abs() <= POINCARE_RATIO_TOLERANCE
        });
        (Some(e), Some(ok))
    } else {
        notes.push("outside the small-hole scaling: no predicted exponent applies".into());
        (None, None)
    };
    ProbeReport { kind: ProbeKind::Poincare, slope: slope(&points), points, predicted_exponent: predicted, ratios, pass, notes }
}

/// Growth of the sampled Bogovskii ratio against a shape-calibrated envelope `C eps^((alpha-3)/2)`.
pub fn bogovskii_report(points: Vec<ProbePoint>) -> ProbeReport {
    let mut notes = vec!["envelope constant calibrated at the largest epsilon; sampled ratios bound the norm from below".into()];
    let ratios: Vec<f64> = points.windows(2).map(|w| w[1].value / w[0].value).collect();
    let (predicted, pass) = if points.len() >= 2 {
        let e = bogovskii_exponent(points[0].alpha, 2.0);
        let ok = points
            .windows(2)
            .zip(&ratios)
            .all(|(w, r)| *r <= BOGOVSKII_SLACK * (w[0].epsilon / w[1].epsilon).powf(-e));
        (Some(e), Some(ok))
    } else {
        notes.push("single point: growth not evaluated".into());
        (None, None)
    };
    ProbeReport { kind: ProbeKind::Bogovskii, slope: slope(&points), points, predicted_exponent: predicted, ratios, pass, notes }
}

pub fn korn_probe_report(epsilon: f64, alpha: f64, k: &KornReport) -> ProbeReport {
    ProbeReport {
        kind: ProbeKind::Korn,
        points: vec![ProbePoint { epsilon, alpha, value: k.max_ratio }],
        predicted_exponent: None,
        slope: None,
        ratios: Vec::new(),
        pass: Some(k.pass),
        notes: vec![format!("largest identity residual {:.3e}", k.max_identity_residual)],
    }
}

/// Poincare constants on one period cell with `m` cells per side for each epsilon.
pub fn poincare_sweep(alpha: f64, hole: &HoleShape, epsilons: &[f64], m: usize, tol: f64) -> Result<ProbeReport> {
    let mut points = Vec::new();
    let mut in_model = true;
    for &eps in epsilons {
        let spec = PerforationSpec::new(eps, alpha, hole.clone());
        let cells = spec.check()?;
        in_model &= cells > 1;
        let mask = build_mask_window(&spec, GridSpec::new(m * cells), Window::Cell)?;
        let r = poincare_constant(&mask, tol)?;
        points.push(ProbePoint { epsilon: eps, alpha, value: r.constant });
    }
    Ok(poincare_report(points, in_model))
}

/// Bogovskii probe on the full torus at `n` cells per axis for each epsilon.
pub fn bogovskii_sweep(
    alpha: f64,
    hole: &HoleShape,
    epsilons: &[f64],
    n: usize,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<ProbeReport> {
    let mut points = Vec::new();
    for &eps in epsilons {
        let spec = PerforationSpec::new(eps, alpha, hole.clone());
        let mask = build_mask_window(&spec, GridSpec::new(n), Window::Full)?;
        let r = bogovskii_norm_probe(&mask, samples, seed, tol)?;
        points.push(ProbePoint { epsilon: eps, alpha, value: r.max_ratio });
    }
    Ok(bogovskii_report(points))
}

/// CSV rows `(probe, epsilon, alpha, value, predicted_exponent, slope, pass)`.
pub fn probe_csv(reports: &[ProbeReport]) -> String {
    let mut s = String::from("probe,epsilon,alpha,value,predicted_exponent,slope,pass\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for r in reports {
        let kind = match r.kind {
            ProbeKind::Poincare => "poincare",
            ProbeKind::Korn => "korn",
            ProbeKind::Bogovskii => "bogovskii",
        };
        for p in &r.points {
            s.push_str(&format!(
                "{kind},{:.6e},{:.4},{:.9e},{},{},{}\n",
                p.epsilon,
                p.alpha,
                p.value,
                opt(r.predicted_exponent),
                opt(r.slope),
                r.pass.map_or(String::new(), |b| b.to_string())
            ));
        }
    }
    s
}
