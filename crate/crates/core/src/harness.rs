//! Epsilon sweeps against the Darcy reference, rate fits and run outputs.

use crate::constitutive::ViscosityLaw;
use crate::darcy::{solve_darcy, DarcySolution};
use crate::error::{Error, Result};
use crate::flow::{
    extend_by_zero, project_onto_admissible, uniform_bound_report, BoundReport, BoundRow, FlowSolver, SolveConfig,
    SolveDiagnostics, StaggeredField,
};
use crate::forcing::Forcing;
use crate::geometry::{build_mask_window, inverse_period, DomainMask, GridSpec, HoleShape, PerforationSpec, Window};
use crate::micro::{permeability, ExteriorGrid, Mat3, PermeabilityTensor};
use crate::stokes::SaddleMethod;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Allowed shortfall of a fitted slope below its predicted exponent.
pub const SLOPE_TOLERANCE: f64 = 0.3;
/// Margin used for the open-ended exponents of the pressure estimate.
pub const PRESSURE_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    TorusStationary,
    TorusEvolutionary,
    BoundedStationary,
    BoundedEvolutionary,
}

fn range_check(alpha: f64, newtonian: bool, what: &str) -> Result<()> {
    let hi = if newtonian { 3.0 } else { 1.5 };
    if !(alpha > 1.0 && alpha < hi) {
        return Err(Error::Range {
            estimate: what.into(),
            detail: format!(
                "alpha = {alpha} outside (1, {hi}) for {} flow",
                if newtonian { "Newtonian" } else { "non-Newtonian" }
            ),
        });
    }
    Ok(())
}

/// Exponent of the squared `L^2` velocity error.
pub fn predicted_exponent(alpha: f64, newtonian: bool, setting: Setting) -> Result<f64> {
    let bounded = matches!(setting, Setting::BoundedStationary | Setting::BoundedEvolutionary);
    range_check(alpha, newtonian, if bounded { "the bounded-domain rate estimate" } else { "the torus rate estimate" })?;
    let middle = if bounded { (3.0 - alpha) / 2.0 } else { 3.0 - alpha };
    let mut e = (alpha - 1.0).min(middle);
    if !newtonian {
        e = e.min(2.0 * (3.0 - 2.0 * alpha));
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureExponent {
    pub value: f64,
    /// Amount subtracted from the open-ended terms.
    pub margin: f64,
}

/// Exponent of the `L^1` pressure error in the stationary torus setting.
pub fn predicted_pressure_exponent(alpha: f64, lambda: f64, r: f64, newtonian: bool) -> Result<PressureExponent> {
    range_check(alpha, newtonian, "the pressure rate estimate")?;
    let m = PRESSURE_MARGIN;
    let mut e = ((alpha - 1.0) / 2.0).min((3.0 - alpha) / 2.0).min(lambda - alpha - m);
    if !newtonian {
        e = e.min(3.0 - 2.0 * alpha - m);
        if r > 2.0 {
            e = e.min((3.0 - 2.0 * alpha) * (r - 2.0) / r);
        }
    }
    Ok(PressureExponent { value: e, margin: m })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Slopes between consecutive sweep points.
    pub pair_slopes: Vec<f64>,
}

/// Least-squares slope of `log(error)` against `log(eps)`.
pub fn fit_rate(eps: &[f64], errors: &[f64]) -> Result<RateFit> {
    if eps.len() != errors.len() || eps.len() < 2 {
        return Err(Error::Fit("need at least two (epsilon, error) pairs".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::Fit(format!("non-positive error {e}")));
    }
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Fit("non-positive epsilon".into()));
    }
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all epsilons coincide".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let pair_slopes = x.windows(2).zip(y.windows(2)).map(|(a, b)| (b[1] - b[0]) / (a[1] - a[0])).collect();
    Ok(RateFit { slope, intercept: my - slope * mx, pair_slopes })
}

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Errors strictly decrease along the sweep and the slope clears `max(predicted - 0.3, 0)`.
pub fn rate_pass(errors: &[f64], slope: f64, predicted: f64) -> bool {
    strictly_decreasing(errors) && slope >= (predicted - SLOPE_TOLERANCE).max(0.0)
}

/// `1/2 eps^lambda int |u_eps - U|^2` over the fluid faces (torus integral).
pub fn relative_energy(u_eps: &[f64], big_u: &[f64], lambda: f64, mask: &DomainMask) -> Result<f64> {
    let n3 = 3 * mask.grid.len();
    if u_eps.len() != n3 || big_u.len() != n3 {
        return Err(Error::GridMismatch("relative energy: field lengths differ from the mask grid".into()));
    }
    let fv = mask.grid.face_volumes();
    let s: f64 = (0..n3)
        .filter(|i| !mask.face_solid[*i])
        .map(|i| fv[i] * (u_eps[i] - big_u[i]).powi(2))
        .sum();
    Ok(0.5 * mask.epsilon.powf(lambda) * s / mask.window.fraction(mask.epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecTemplate {
    pub alpha: f64,
    pub hole: HoleShape,
    #[serde(default)]
    pub x0: [f64; 3],
}

impl SpecTemplate {
    pub fn at(&self, epsilon: f64) -> PerforationSpec {
        PerforationSpec::new(epsilon, self.alpha, self.hole.clone()).with_offset(self.x0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridRule {
    /// `max(64, 8 / eps^alpha)` rounded up to a multiple of `1/eps`.
    #[default]
    Default,
    /// `k` cells per hole radius, an even number of cells per period cell.
    CellsPerRadius { k: usize },
    Explicit { n: Vec<usize> },
}

impl GridRule {
    pub fn resolve(&self, spec: &PerforationSpec, index: usize) -> Result<usize> {
        let cells = spec.check()?;
        let n = match self {
            GridRule::Default => {
                let target = (8.0 / spec.hole_scale()).ceil().max(64.0) as usize;
                target.div_ceil(cells) * cells
            }
            GridRule::CellsPerRadius { k } => {
                let r = spec.hole_radius();
                if r <= 0.0 {
                    return Ok(GridSpec::required_for(spec).max(2 * cells));
                }
                let ratio = spec.epsilon / r;
                let mut m = 2 * ((*k as f64 * ratio / 2.0).round() as usize).max(1);
                while r * m as f64 / spec.epsilon < 2.0 {
                    m += 2;
                }
                m * cells
            }
            GridRule::Explicit { n } => *n
                .get(index)
                .ok_or_else(|| Error::Config(format!("explicit grid list has no entry {index}")))?,
        };
        Ok(n)
    }

    pub fn cells_per_radius(&self) -> Option<usize> {
        match self {
            GridRule::CellsPerRadius { k } => Some(*k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowRule {
    /// A slab when the forcing varies along one axis only, the full torus otherwise.
    #[default]
    Auto,
    Full,
    Slab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialDatum {
    Zero,
    /// Darcy velocity projected onto admissible discrete fields.
    #[default]
    Darcy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Stationary,
    Evolutionary {
        dt: f64,
        t_end: f64,
        #[serde(default)]
        u0: InitialDatum,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PermSource {
    Computed {
        #[serde(default = "default_truncations")]
        truncations: Vec<f64>,
        /// Defaults to the grid rule's cells per radius (or 6).
        #[serde(default)]
        cells_per_radius: Option<usize>,
        #[serde(default = "default_perm_tol")]
        tol: f64,
    },
    Given {
        matrix: Mat3,
    },
}

fn default_truncations() -> Vec<f64> {
    vec![16.0, 32.0]
}

fn default_perm_tol() -> f64 {
    1e-6
}

impl Default for PermSource {
    fn default() -> Self {
        PermSource::Computed { truncations: default_truncations(), cells_per_radius: None, tol: default_perm_tol() }
    }
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: SpecTemplate,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub grid: GridRule,
    #[serde(default)]
    pub window: WindowRule,
    pub law: ViscosityLaw,
    /// Defaults to `alpha + 1`.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub forcing: Forcing,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub permeability: PermSource,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub method: SaddleMethod,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(self.spec.alpha + 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.len() < 2 {
            return Err(Error::Config("a sweep needs at least two epsilons".into()));
        }
        if !strictly_decreasing(&self.epsilons) {
            return Err(Error::Config("epsilons must be strictly decreasing".into()));
        }
        for &e in &self.epsilons {
            if inverse_period(e).is_none() {
                return Err(Error::Config(format!("1/epsilon = {} is not an integer", 1.0 / e)));
            }
            self.spec.at(e).check()?;
        }
        let cfg = SolveConfig::new(self.lambda(), self.law);
        cfg.validate(self.spec.alpha)?;
        if let RunMode::Evolutionary { dt, t_end, .. } = self.mode {
            if !(dt > 0.0 && t_end >= dt) {
                return Err(Error::Config("evolutionary runs need 0 < dt <= t_end".into()));
            }
        }
        Ok(())
    }

    pub fn window(&self) -> Window {
        match self.window {
            WindowRule::Full => Window::Full,
            WindowRule::Slab => Window::Slab { axis: self.forcing.varies_only_along().unwrap_or(0) },
            WindowRule::Auto => match self.forcing.varies_only_along() {
                Some(axis) => Window::Slab { axis },
                None => Window::Full,
            },
        }
    }

    fn solve_config(&self) -> SolveConfig {
        let mut c = SolveConfig::new(self.lambda(), self.law);
        c.tol = self.tol;
        c.max_iter = self.max_iter;
        c.method = self.method;
        c
    }
}

/// Permeability for the configured hole (exterior solves or a given matrix).
pub fn resolve_permeability(cfg: &ExperimentConfig) -> Result<PermeabilityTensor> {
    resolve_perm_source(&cfg.permeability, &cfg.spec.hole, cfg.grid.cells_per_radius())
}

/// `fallback_k` is used when a computed source does not fix its own resolution (6 if neither does).
pub fn resolve_perm_source(src: &PermSource, hole: &HoleShape, fallback_k: Option<usize>) -> Result<PermeabilityTensor> {
    match src {
        PermSource::Given { matrix } => PermeabilityTensor::from_matrix(*matrix, &hole.describe()),
        PermSource::Computed { truncations, cells_per_radius, tol } => {
            let k = cells_per_radius.or(fallback_k).unwrap_or(6);
            let rule = ExteriorGrid { cells_per_radius: k, ..Default::default() };
            permeability(hole, truncations, rule, *tol)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSummary {
    pub steps: usize,
    /// `sum dt ||u(t) - u_darcy||^2` over the steps.
    pub time_integrated_error: f64,
    /// Largest energy-inequality defect relative to the step's energy scale.
    pub max_energy_defect: f64,
    pub energy_inequality_holds: bool,
    pub distance_mid: f64,
    pub distance_final: f64,
    pub relaxes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub epsilon: f64,
    pub n: usize,
    pub dims: [usize; 3],
    pub window: Window,
    /// `||u~_eps - u||^2` on the torus.
    pub velocity_error_sq: f64,
    /// `||p~_eps - p||_1` on the torus, both with zero torus mean.
    pub pressure_error_l1: f64,
    pub relative_energy: f64,
    pub diagnostics: SolveDiagnostics,
    pub evolution: Option<EvolutionSummary>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub cases: Vec<CaseResult>,
    pub failures: Vec<String>,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub permeability: PermeabilityTensor,
    pub predicted_velocity: Option<f64>,
    pub predicted_pressure: Option<PressureExponent>,
    pub velocity_fit: Option<RateFit>,
    pub pressure_fit: Option<RateFit>,
    pub velocity_pass: bool,
    pub pressure_decreasing: bool,
    pub degenerate: bool,
    pub bounds: Option<BoundReport>,
    pub notes: Vec<String>,
}

impl RateReport {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
            && self.velocity_pass
            && self.pressure_decreasing
            && self.cases.iter().all(|c| c.evolution.as_ref().map_or(true, |e| e.energy_inequality_holds))
    }
}

struct Reference {
    darcy: DarcySolution,
    faces: Vec<f64>,
}

fn reference(m0: &PermeabilityTensor, eta0: f64, mask: &DomainMask, forcing: &Forcing) -> Result<Reference> {
    let field = forcing.load()?;
    let darcy = solve_darcy(m0, eta0, &mask.grid, &field.sample_cells(&mask.grid))?;
    let faces = darcy.sample_faces(&mask.grid)?;
    Ok(Reference { darcy, faces })
}

fn errors(solver: &FlowSolver, mask: &DomainMask, field: &StaggeredField, r: &Reference) -> (f64, f64) {
    let ext = extend_by_zero(field, mask);
    let diff: Vec<f64> = ext.u.iter().zip(&r.faces).map(|(a, b)| a - b).collect();
    let e2 = solver.torus_l2_sq(&diff);
    let vols = mask.grid.cell_volumes();
    let total: f64 = vols.iter().sum();
    let mean = |p: &[f64]| p.iter().zip(&vols).map(|(a, v)| a * v).sum::<f64>() / total;
    let (mp, md) = (mean(&ext.p), mean(&r.darcy.p));
    let e1: f64 = ext
        .p
        .iter()
        .zip(&r.darcy.p)
        .zip(&vols)
        .map(|((a, b), v)| v * ((a - mp) - (b - md)).abs())
        .sum::<f64>()
        / mask.window.fraction(mask.epsilon);
    (e2, e1)
}

fn run_case(cfg: &ExperimentConfig, m0: &PermeabilityTensor, index: usize) -> Result<CaseResult> {
    let start = Instant::now();
    let eps = cfg.epsilons[index];
    let spec = cfg.spec.at(eps);
    let n = cfg.grid.resolve(&spec, index)?;
    let window = cfg.window();
    let mask = build_mask_window(&spec, GridSpec::new(n), window)?;
    let field = cfg.forcing.load()?;
    let f = field.sample_faces(&mask.grid);
    let eta0 = cfg.law.eta0();
    let reference = reference(m0, eta0, &mask, &cfg.forcing)?;
    let mut solver = FlowSolver::new(&mask, cfg.spec.alpha, cfg.solve_config(), &f)?;
    solver.set_friction(0.5 * eta0 * (m0.m[0][0] + m0.m[1][1] + m0.m[2][2]) / 3.0);
    let (stat, diagnostics) = solver.solve_stationary(None)?;
    let lambda = cfg.lambda();
    let (velocity_error_sq, pressure_error_l1, relative, evolution) = match cfg.mode {
        RunMode::Stationary => {
            let (e2, e1) = errors(&solver, &mask, &stat, &reference);
            (e2, e1, relative_energy(&stat.u, &reference.faces, lambda, &mask)?, None)
        }
        RunMode::Evolutionary { dt, t_end, u0 } => {
            let steps = (t_end / dt).round().max(1.0) as usize;
            let mut state = StaggeredField::zeros(&mask.grid);
            if u0 == InitialDatum::Darcy {
                state.u = project_onto_admissible(&mask, &reference.faces, 1e-2 * cfg.tol)?;
            }
            let dist = |s: &FlowSolver, u: &[f64]| {
                let d: Vec<f64> = u.iter().zip(&stat.u).map(|(a, b)| a - b).collect();
                s.torus_l2_sq(&d).sqrt()
            };
            let mut summary = EvolutionSummary { steps, energy_inequality_holds: true, ..Default::default() };
            let mut last = (0.0, 0.0);
            for k in 1..=steps {
                let (next, rep) = solver.step(&state, dt)?;
                let scale = rep.kinetic_before + rep.kinetic_after + dt * (rep.dissipation + rep.work.abs());
                let rel = if scale > 0.0 { rep.defect / scale } else { 0.0 };
                summary.max_energy_defect = summary.max_energy_defect.max(rel);
                if rel > 1e-6 {
                    summary.energy_inequality_holds = false;
                }
                state = next;
                last = errors(&solver, &mask, &state, &reference);
                summary.time_integrated_error += dt * last.0;
                if k == steps.div_ceil(2) {
                    summary.distance_mid = dist(&solver, &state.u);
                }
            }
            summary.distance_final = dist(&solver, &state.u);
            summary.relaxes = summary.distance_final <= summary.distance_mid;
            let rel = relative_energy(&state.u, &reference.faces, lambda, &mask)?;
            (summary.time_integrated_error, last.1, rel, Some(summary))
        }
    };
    Ok(CaseResult {
        epsilon: eps,
        n,
        dims: mask.grid.dims(),
        window,
        velocity_error_sq,
        pressure_error_l1,
        relative_energy: relative,
        diagnostics,
        evolution,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Run every case, fit rates and (if `cfg.out` is set) write the run directory.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<RateReport> {
    cfg.validate()?;
    let m0 = resolve_permeability(cfg)?;
    let results: Vec<Result<CaseResult>> = {
        let work = || (0..cfg.epsilons.len()).into_par_iter().map(|i| run_case(cfg, &m0, i)).collect();
        match cfg.workers {
            Some(w) => rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?
                .install(work),
            None => work(),
        }
    };
    let mut cases = Vec::new();
    let mut failures = Vec::new();
    for (eps, r) in cfg.epsilons.iter().zip(results) {
        match r {
            Ok(c) => cases.push(c),
            Err(e) => failures.push(format!("epsilon = {eps}: {e}")),
        }
    }
    let report = assemble(cfg, m0, cases, failures);
    if let Some(dir) = &cfg.out {
        write_run(dir, cfg, &report)?;
    }
    if let Some(first) = report.failures.first() {
        return Err(Error::Sweep(format!("{} failed case(s); first failure: {first}", report.failures.len())));
    }
    Ok(report)
}

fn assemble(cfg: &ExperimentConfig, m0: PermeabilityTensor, cases: Vec<CaseResult>, failures: Vec<String>) -> RateReport {
    let alpha = cfg.spec.alpha;
    let lambda = cfg.lambda();
    let newtonian = cfg.law.is_newtonian();
    let mut notes = Vec::new();
    let setting = match cfg.mode {
        RunMode::Stationary => Setting::TorusStationary,
        RunMode::Evolutionary { .. } => Setting::TorusEvolutionary,
    };
    let predicted_velocity = match predicted_exponent(alpha, newtonian, setting) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    };
    let predicted_pressure = match predicted_pressure_exponent(alpha, lambda, cfg.law.r(), newtonian) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    };
    let eps: Vec<f64> = cases.iter().map(|c| c.epsilon).collect();
    let ev: Vec<f64> = cases.iter().map(|c| c.velocity_error_sq).collect();
    let ep: Vec<f64> = cases.iter().map(|c| c.pressure_error_l1).collect();
    let degenerate = cfg.forcing.is_zero() || ev.iter().all(|e| *e == 0.0);
    let complete = failures.is_empty() && cases.len() >= 2;
    let velocity_fit = if complete && !degenerate { fit_rate(&eps, &ev).ok() } else { None };
    let pressure_fit = if complete && !degenerate { fit_rate(&eps, &ep).ok() } else { None };
    let velocity_pass = match (&velocity_fit, predicted_velocity) {
        (Some(f), Some(p)) => rate_pass(&ev, f.slope, p),
        _ => false,
    };
    let pressure_decreasing = complete && !degenerate && strictly_decreasing(&ep);
    if degenerate {
        notes.push("zero forcing: all errors vanish and no slope is defined".into());
    }
    notes.push(format!(
        "pass iff errors strictly decrease and the fitted slope is at least the predicted exponent minus {SLOPE_TOLERANCE}; \
         three-point sweeps resolve exponents to roughly 0.2-0.3"
    ));
    let rows: Vec<BoundRow> = cases.iter().map(|c| BoundRow { epsilon: c.epsilon, bounds: c.diagnostics.bounds.clone() }).collect();
    let bounds = uniform_bound_report(&rows).ok();
    RateReport {
        cases,
        failures,
        lambda,
        lambda_prime: cfg.solve_config().lambda_prime(alpha),
        permeability: m0,
        predicted_velocity,
        predicted_pressure,
        velocity_fit,
        pressure_fit,
        velocity_pass,
        pressure_decreasing,
        degenerate,
        bounds,
        notes,
    }
}

/// CSV rows `(epsilon, n, metric, value)` with fixed formatting.
pub fn results_csv(report: &RateReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(["epsilon", "n", "metric", "value"]).map_err(io)?;
    for c in &report.cases {
        let mut metrics = vec![
            ("velocity_error_sq", c.velocity_error_sq),
            ("pressure_error_l1", c.pressure_error_l1),
            ("relative_energy", c.relative_energy),
            ("energy_residual", c.diagnostics.energy_residual),
            ("scaled_gradient", c.diagnostics.bounds.scaled_gradient),
            ("velocity_l2", c.diagnostics.bounds.l2),
            ("picard_iterations", c.diagnostics.iterations as f64),
        ];
        if let Some(g) = c.diagnostics.bounds.scaled_gradient_r {
            metrics.push(("scaled_gradient_r", g));
        }
        if let Some(e) = &c.evolution {
            metrics.push(("max_energy_defect", e.max_energy_defect));
            metrics.push(("distance_mid", e.distance_mid));
            metrics.push(("distance_final", e.distance_final));
        }
        for (name, v) in metrics {
            w.write_record([format!("{:.6e}", c.epsilon), c.n.to_string(), name.to_string(), format!("{v:.9e}")])
                .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Log-log plot of `values` against `eps` with a guide line of slope `predicted` through the first point.
pub fn loglog_svg(title: &str, eps: &[f64], values: &[f64], predicted: Option<f64>) -> String {
    let (w, h, pad) = (480.0, 360.0, 50.0);
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(values)
        .filter(|(e, v)| **e > 0.0 && **v > 0.0)
        .map(|(e, v)| (e.log10(), v.log10()))
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n",
        w / 2.0
    );
    if pts.is_empty() {
        svg.push_str("<text x=\"50\" y=\"180\">no positive data</text>\n</svg>\n");
        return svg;
    }
    let mut guide: Vec<(f64, f64)> = Vec::new();
    if let Some(p) = predicted {
        let (x0, y0) = pts[0];
        guide = pts.iter().map(|(x, _)| (*x, y0 + p * (x - x0))).collect();
    }
    let all: Vec<&(f64, f64)> = pts.iter().chain(&guide).collect();
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &all {
        xmin = xmin.min(*x);
        xmax = xmax.max(*x);
        ymin = ymin.min(*y);
        ymax = ymax.max(*y);
    }
    if xmax - xmin < 1e-12 {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if ymax - ymin < 1e-12 {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let sx = |x: f64| pad + (x - xmin) / (xmax - xmin) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - ymin) / (ymax - ymin) * (h - 2.0 * pad);
    svg.push_str(&format!(
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        w - 2.0 * pad,
        h - 2.0 * pad
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">log10 epsilon</text>\n<text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">log10 error</text>\n",
        w / 2.0,
        h - 12.0,
        h / 2.0,
        h / 2.0
    ));
    let line = |p: &[(f64, f64)], style: &str| {
        let d: Vec<String> = p.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        format!("<polyline points=\"{}\" fill=\"none\" {style}/>\n", d.join(" "))
    };
    if !guide.is_empty() {
        svg.push_str(&line(&guide, "stroke=\"#c33\" stroke-dasharray=\"6 4\""));
    }
    svg.push_str(&line(&pts, "stroke=\"#236\" stroke-width=\"2\""));
    for (x, y) in &pts {
        svg.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#236\"/>\n", sx(*x), sy(*y)));
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    version: &'static str,
    permeability: &'a PermeabilityTensor,
    report: &'a RateReport,
    pass: bool,
}

/// Write `manifest.json`, `results.csv` and `plots/*.svg` under `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, report: &RateReport) -> Result<()> {
    std::fs::create_dir_all(dir.join("plots"))?;
    let manifest = Manifest {
        config: cfg,
        version: env!("CARGO_PKG_VERSION"),
        permeability: &report.permeability,
        report,
        pass: report.all_pass(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    std::fs::write(dir.join("results.csv"), results_csv(report)?)?;
    let eps: Vec<f64> = report.cases.iter().map(|c| c.epsilon).collect();
    let ev: Vec<f64> = report.cases.iter().map(|c| c.velocity_error_sq).collect();
    let ep: Vec<f64> = report.cases.iter().map(|c| c.pressure_error_l1).collect();
    std::fs::write(
        dir.join("plots/velocity_error.svg"),
        loglog_svg("squared L2 velocity error", &eps, &ev, report.predicted_velocity),
    )?;
    std::fs::write(
        dir.join("plots/pressure_error.svg"),
        loglog_svg("L1 pressure error", &eps, &ep, report.predicted_pressure.map(|p| p.value)),
    )?;
    Ok(())
}
