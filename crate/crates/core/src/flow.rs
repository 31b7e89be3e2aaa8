//! Stationary and evolutionary scaled flow on the perforated torus.
//!
//! Discrete problem on a MAC grid with `u = 0` on every face touching a solid cell:
//! `-eps^{3-alpha} div(eta(eps^{3-alpha}|Du|) Du) + eps^lambda div(u (x) u) + grad p = f`, `div u = 0`.
//! Picard iterations freeze the viscosity and the convective term at the previous iterate.

use crate::constitutive::ViscosityLaw;
use crate::error::{Error, Result};
use crate::geometry::{DomainMask, Window};
use crate::mesh::Grid;
use crate::ops;
use crate::stokes::{SaddleMethod, StokesSystem};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub lambda: f64,
    pub law: ViscosityLaw,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub method: SaddleMethod,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    200
}

impl SolveConfig {
    pub fn new(lambda: f64, law: ViscosityLaw) -> Self {
        Self { lambda, law, tol: default_tol(), max_iter: default_max_iter(), method: SaddleMethod::Minres }
    }

    /// `lambda' = lambda - 2 (3 - alpha)`, the inertia exponent of the unscaled form.
    pub fn lambda_prime(&self, alpha: f64) -> f64 {
        self.lambda - 2.0 * (3.0 - alpha)
    }

    pub fn validate(&self, alpha: f64) -> Result<()> {
        if !(self.lambda > alpha) {
            return Err(Error::Config(format!("lambda = {} must exceed alpha = {alpha}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        self.law.validate()
    }
}

/// Face velocities and cell pressures on the grid of a [`DomainMask`].
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredField {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl StaggeredField {
    pub fn zeros(grid: &Grid) -> Self {
        Self { u: vec![0.0; 3 * grid.len()], p: vec![0.0; grid.len()] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundChecks {
    /// `eps^{(3-alpha)/2} ||grad u||_2` on the torus.
    pub scaled_gradient: f64,
    pub l2: f64,
    /// `eps^{(3-alpha)(r-1)/r} ||grad u||_r`, only for `r > 2`.
    pub scaled_gradient_r: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub inner_iterations: Vec<usize>,
    /// `eps^{3-alpha} int eta |Du|^2` (torus integral).
    pub energy_lhs: f64,
    /// `int f . u` (torus integral).
    pub energy_rhs: f64,
    pub energy_residual: f64,
    pub bounds: BoundChecks,
    pub degenerate: bool,
}

/// Energy accounting of one implicit Euler step (torus integrals).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub kinetic_before: f64,
    pub kinetic_after: f64,
    pub dissipation: f64,
    pub work: f64,
    /// `kinetic_after + dt * dissipation - kinetic_before - dt * work` (non-positive up to tolerance).
    pub defect: f64,
    pub diagnostics: SolveDiagnostics,
}

/// Scaled flow problem on a fixed mask with fixed forcing.
pub struct FlowSolver {
    grid: Grid,
    pub window: Window,
    pub epsilon: f64,
    pub alpha: f64,
    pub cfg: SolveConfig,
    solid: Vec<bool>,
    face_solid: Vec<bool>,
    force: Vec<f64>,
    force_norm: f64,
    sys: StokesSystem,
    face_volume: Vec<f64>,
    cell_volume: Vec<f64>,
    /// Window volume fraction of the torus.
    fraction: f64,
}

impl FlowSolver {
    /// `force` holds face-normal samples of `f` (length `3 len`).
    pub fn new(mask: &DomainMask, alpha: f64, cfg: SolveConfig, force: &[f64]) -> Result<Self> {
        cfg.validate(alpha)?;
        let grid = mask.grid.clone();
        let n = grid.len();
        if force.len() != 3 * n {
            return Err(Error::GridMismatch("forcing does not match the mask grid".into()));
        }
        let face_volume = grid.face_volumes();
        let cell_volume = grid.cell_volumes();
        let mut fint = vec![0.0; 3 * n];
        for i in 0..3 * n {
            if !mask.face_solid[i] {
                fint[i] = face_volume[i] * force[i];
            }
        }
        let force_norm = fint.iter().zip(&face_volume).map(|(f, v)| f * f / v).sum::<f64>().sqrt();
        let sys = StokesSystem::new(grid.clone(), mask.face_solid.clone()).with_method(cfg.method);
        Ok(Self {
            grid,
            window: mask.window,
            epsilon: mask.epsilon,
            alpha,
            cfg,
            solid: mask.solid.clone(),
            face_solid: mask.face_solid.clone(),
            force: fint,
            force_norm,
            sys,
            face_volume,
            cell_volume,
            fraction: mask.window.fraction(mask.epsilon),
        })
    }

    /// Effective resistance used by the pressure preconditioner (for instance `eta0 m0 / 2` in the Darcy regime).
    pub fn set_friction(&mut self, friction: f64) {
        self.sys.friction = friction;
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn solid(&self) -> &[bool] {
        &self.solid
    }

    pub fn face_solid(&self) -> &[bool] {
        &self.face_solid
    }

    /// Integrated forcing `V_f f` (zero on solid faces).
    pub fn forcing(&self) -> &[f64] {
        &self.force
    }

    fn beta(&self) -> f64 {
        self.epsilon.powf(3.0 - self.alpha)
    }

    fn inertia(&self) -> f64 {
        self.epsilon.powf(self.cfg.lambda)
    }

    /// Cell viscosity `eps^{3-alpha} eta(eps^{3-alpha} |Du|)`.
    pub fn viscosity(&self, u: &[f64]) -> Vec<f64> {
        let b = self.beta();
        if self.cfg.law.is_newtonian() {
            return vec![b * self.cfg.law.eta0(); self.grid.len()];
        }
        ops::strain_magnitude(&self.grid, u)
            .into_iter()
            .map(|s| b * self.cfg.law.eta_unchecked(b * s))
            .collect()
    }

    /// Relative nonlinear residual `max(|momentum|, |continuity|) / |F|` with optional mass term.
    pub fn residual(&self, u: &[f64], p: &[f64], mass: Option<(f64, &[f64])>) -> f64 {
        let n = self.grid.len();
        let nu = self.viscosity(u);
        let ne = ops::edge_viscosity(&self.grid, &nu);
        let mut r = vec![0.0; 3 * n];
        ops::viscous_apply(&self.grid, &nu, &ne, u, &mut r);
        ops::add_gradient(&self.grid, p, 1.0, &mut r);
        let lam = self.inertia();
        if lam != 0.0 {
            let mut c = vec![0.0; 3 * n];
            ops::convective(&self.grid, u, &mut c);
            r.iter_mut().zip(&c).for_each(|(r, c)| *r += lam * c);
        }
        let mut mom = 0.0;
        for i in 0..3 * n {
            if self.face_solid[i] {
                continue;
            }
            let mut v = self.force[i] - r[i];
            if let Some((sigma, old)) = mass {
                v -= sigma * self.face_volume[i] * (u[i] - old[i]);
            }
            mom += v * v / self.face_volume[i];
        }
        let mut d = vec![0.0; n];
        ops::divergence(&self.grid, u, &mut d);
        let cont: f64 = (0..n)
            .filter(|q| !self.solid[*q])
            .map(|q| d[q] * d[q] / self.cell_volume[q])
            .sum();
        let scale = match mass {
            Some((sigma, old)) => {
                let m: f64 = (0..3 * n)
                    .filter(|i| !self.face_solid[*i])
                    .map(|i| {
                        let v = self.force[i] + sigma * self.face_volume[i] * old[i];
                        v * v / self.face_volume[i]
                    })
                    .sum();
                m.sqrt()
            }
            None => self.force_norm,
        };
        mom.sqrt().max(cont.sqrt()) / scale.max(f64::MIN_POSITIVE)
    }

    fn picard(
        &mut self,
        start: &StaggeredField,
        mass: Option<(f64, &[f64])>,
        observe: &mut dyn FnMut(usize, &StaggeredField, f64) -> Result<()>,
    ) -> Result<(StaggeredField, SolveDiagnostics)> {
        let n = self.grid.len();
        let mut diag = SolveDiagnostics::default();
        let rhs_zero = self.force_norm == 0.0 && mass.map_or(true, |(_, old)| old.iter().all(|v| *v == 0.0));
        if rhs_zero {
            diag.degenerate = true;
            let z = StaggeredField::zeros(&self.grid);
            self.finish(&z, &mut diag);
            return Ok((z, diag));
        }
        let sigma = mass.map_or(0.0, |(s, _)| s);
        self.sys.set_sigma(sigma);
        let lam = self.inertia();
        let inner_tol = 1e-2 * self.cfg.tol;
        let mut cur = start.clone();
        let mut result = Err(Error::Solver { iterations: 0, residual: f64::NAN, history: Vec::new() });
        for k in 0..self.cfg.max_iter {
            let nu = self.viscosity(&cur.u);
            let mut rhs = self.force.clone();
            if let Some((s, old)) = mass {
                for i in 0..3 * n {
                    if !self.face_solid[i] {
                        rhs[i] += s * self.face_volume[i] * old[i];
                    }
                }
            }
            if lam != 0.0 {
                let mut c = vec![0.0; 3 * n];
                ops::convective(&self.grid, &cur.u, &mut c);
                rhs.iter_mut().zip(&c).for_each(|(r, c)| *r -= lam * c);
            }
            let sol = match self.sys.solve(&nu, &rhs, None, None, Some((&cur.u, &cur.p)), inner_tol, 5000) {
                Ok(s) => s,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            };
            diag.inner_iterations.push(sol.stats.iterations);
            let prev_norm = l2(&cur.u, &self.face_volume);
            cur = StaggeredField { u: sol.u, p: sol.p };
            let res = self.residual(&cur.u, &cur.p, mass);
            diag.residual_history.push(res);
            diag.iterations = k + 1;
            observe(k + 1, &cur, res)?;
            if !res.is_finite() {
                result = Err(Error::Instability(format!("non-finite residual at Picard step {}", k + 1)));
                break;
            }
            if res <= self.cfg.tol {
                result = Ok(());
                break;
            }
            let norm = l2(&cur.u, &self.face_volume);
            if k >= 1 && prev_norm > 0.0 && norm > 2.0 * prev_norm {
                result = Err(Error::Instability(format!(
                    "velocity norm doubled at Picard step {} ({prev_norm:.3e} -> {norm:.3e}); increase lambda or reduce the forcing",
                    k + 1
                )));
                break;
            }
            let h = &diag.residual_history;
            if h.len() > 10 && res > 0.99 * h[h.len() - 11] {
                result = Err(Error::Divergence { iterations: k + 1, residual: res, history: h.clone() });
                break;
            }
            if k + 1 == self.cfg.max_iter {
                result = Err(Error::Solver { iterations: k + 1, residual: res, history: h.clone() });
            }
        }
        result?;
        self.finish(&cur, &mut diag);
        Ok((cur, diag))
    }

    fn finish(&self, f: &StaggeredField, diag: &mut SolveDiagnostics) {
        let nu = self.viscosity(&f.u);
        let ne = ops::edge_viscosity(&self.grid, &nu);
        let w = 1.0 / self.fraction;
        diag.energy_lhs = w * ops::strain_energy(&self.grid, &nu, &ne, &f.u);
        diag.energy_rhs = w * self.force.iter().zip(&f.u).map(|(a, b)| a * b).sum::<f64>();
        let abs: f64 = w * self.force.iter().zip(&f.u).map(|(a, b)| (a * b).abs()).sum::<f64>();
        diag.energy_residual = if abs > 0.0 { (diag.energy_lhs - diag.energy_rhs).abs() / abs } else { 0.0 };
        diag.bounds = self.bounds(&f.u);
    }

    /// Scaled a-priori bound quantities of a velocity field (torus norms).
    pub fn bounds(&self, u: &[f64]) -> BoundChecks {
        let w = 1.0 / self.fraction;
        let (g2, _, _) = ops::korn_terms(&self.grid, u);
        let l2sq: f64 = u.iter().zip(&self.face_volume).map(|(v, fv)| v * v * fv).sum();
        let r = self.cfg.law.r();
        let e = self.epsilon;
        BoundChecks {
            scaled_gradient: e.powf((3.0 - self.alpha) / 2.0) * (w * g2).sqrt(),
            l2: (w * l2sq).sqrt(),
            scaled_gradient_r: (r > 2.0).then(|| {
                e.powf((3.0 - self.alpha) * (r - 1.0) / r) * (w * ops::gradient_power_sum(&self.grid, u, r)).powf(1.0 / r)
            }),
        }
    }

    pub fn solve_stationary(&mut self, guess: Option<&StaggeredField>) -> Result<(StaggeredField, SolveDiagnostics)> {
        self.solve_stationary_observed(guess, &mut |_, _, _| Ok(()))
    }

    /// As `solve_stationary`, calling `observe(iteration, field, residual)` after every Picard step.
    pub fn solve_stationary_observed(
        &mut self,
        guess: Option<&StaggeredField>,
        observe: &mut dyn FnMut(usize, &StaggeredField, f64) -> Result<()>,
    ) -> Result<(StaggeredField, SolveDiagnostics)> {
        let start = guess.cloned().unwrap_or_else(|| StaggeredField::zeros(&self.grid));
        self.picard(&start, None, observe)
    }

    /// One implicit Euler step of length `dt`.
    pub fn step(&mut self, state: &StaggeredField, dt: f64) -> Result<(StaggeredField, StepReport)> {
        if !(dt > 0.0) {
            return Err(Error::Config("time step must be positive".into()));
        }
        let sigma = self.inertia() / dt;
        let (next, diagnostics) = self.picard(state, Some((sigma, &state.u)), &mut |_, _, _| Ok(()))?;
        let w = 1.0 / self.fraction;
        let lam = self.inertia();
        let kinetic = |u: &[f64]| 0.5 * lam * w * u.iter().zip(&self.face_volume).map(|(v, fv)| v * v * fv).sum::<f64>();
        let kinetic_before = kinetic(&state.u);
        let kinetic_after = kinetic(&next.u);
        let dissipation = diagnostics.energy_lhs;
        let work = diagnostics.energy_rhs;
        let defect = kinetic_after + dt * dissipation - kinetic_before - dt * work;
        Ok((next, StepReport { kinetic_before, kinetic_after, dissipation, work, defect, diagnostics }))
    }

    /// Squared torus `L^2` norm of a face field.
    pub fn torus_l2_sq(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.face_volume).map(|(v, fv)| v * v * fv).sum::<f64>() / self.fraction
    }
}

fn l2(u: &[f64], fv: &[f64]) -> f64 {
    u.iter().zip(fv).map(|(v, w)| v * v * w).sum::<f64>().sqrt()
}

/// Admissible field closest to `u` in the Dirichlet energy: zero on solid faces and discretely divergence-free.
pub fn project_onto_admissible(mask: &DomainMask, u: &[f64], tol: f64) -> Result<Vec<f64>> {
    let grid = &mask.grid;
    let n = grid.len();
    let masked: Vec<f64> = u.iter().zip(&mask.face_solid).map(|(v, s)| if *s { 0.0 } else { *v }).collect();
    let mut div = vec![0.0; n];
    ops::divergence(grid, &masked, &mut div);
    if div.iter().all(|d| *d == 0.0) {
        return Ok(masked);
    }
    div.iter_mut().for_each(|d| *d = -*d);
    let mut sys = StokesSystem::new(grid.clone(), mask.face_solid.clone());
    let nu = vec![1.0; n];
    let sol = sys.solve(&nu, &vec![0.0; 3 * n], None, Some(&div), None, tol, 5000)?;
    Ok(masked.iter().zip(&sol.u).map(|(a, b)| a + b).collect())
}

/// Zero extension of a fluid-region field to the whole grid.
pub fn extend_by_zero(field: &StaggeredField, mask: &DomainMask) -> StaggeredField {
    let u = field
        .u
        .iter()
        .zip(&mask.face_solid)
        .map(|(v, s)| if *s { 0.0 } else { *v })
        .collect();
    let p = field.p.iter().zip(&mask.solid).map(|(v, s)| if *s { 0.0 } else { *v }).collect();
    StaggeredField { u, p }
}

/// `|eps^{3-alpha} int eta |Du|^2 - int f.u| / int |f.u|`, zero (degenerate) when nothing is forced.
pub fn energy_identity_residual(diag: &SolveDiagnostics) -> (f64, bool) {
    if diag.degenerate || (diag.energy_lhs == 0.0 && diag.energy_rhs == 0.0) {
        return (0.0, true);
    }
    (diag.energy_residual, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub epsilon: f64,
    pub bounds: BoundChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    /// Columns whose value grew more than 2x between consecutive sweep points.
    pub flagged: Vec<String>,
    /// Largest max/min ratio over the sweep among the active columns.
    pub spread: f64,
}

pub fn uniform_bound_report(rows: &[BoundRow]) -> Result<BoundReport> {
    if rows.len() < 2 {
        return Err(Error::Precondition("uniform bound report needs at least two sweep points".into()));
    }
    let mut flagged = Vec::new();
    let mut spread: f64 = 1.0;
    let cols: [(&str, fn(&BoundChecks) -> Option<f64>); 3] = [
        ("scaled_gradient", |b| Some(b.scaled_gradient)),
        ("l2", |b| Some(b.l2)),
        ("scaled_gradient_r", |b| b.scaled_gradient_r),
    ];
    for (name, get) in cols {
        let vals: Vec<f64> = rows.iter().filter_map(|r| get(&r.bounds)).collect();
        if vals.len() < 2 {
            continue;
        }
        if vals.windows(2).any(|w| w[1] > 2.0 * w[0]) {
            flagged.push(name.to_string());
        }
        let mx = vals.iter().cloned().fold(0.0f64, f64::max);
        let mn = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if mn > 0.0 {
            spread = spread.max(mx / mn);
        }
    }
    Ok(BoundReport { rows: rows.to_vec(), flagged, spread })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dims: [usize; 3],
    pub n: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub law: ViscosityLaw,
    pub iteration: usize,
    pub residual: f64,
    #[serde(default)]
    pub time: Option<f64>,
}

/// Write `<stem>.json` and `<stem>.bin` (little-endian f64: faces then cells).
pub fn save_checkpoint(stem: &Path, header: &CheckpointHeader, field: &StaggeredField) -> Result<()> {
    std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(header)?)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(stem.with_extension("bin"))?);
    for v in field.u.iter().chain(&field.p) {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> Result<(CheckpointHeader, StaggeredField)> {
    let header: CheckpointHeader = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
    let bytes = std::fs::read(stem.with_extension("bin"))?;
    let len: usize = header.dims.iter().product();
    if bytes.len() != 32 * len {
        return Err(Error::GridMismatch(format!("checkpoint holds {} bytes, expected {}", bytes.len(), 32 * len)));
    }
    let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, StaggeredField { u: vals[..3 * len].to_vec(), p: vals[3 * len..].to_vec() }))
}
