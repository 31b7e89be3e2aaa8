use clap::{Parser, Subcommand};
use darcylab::constitutive::ViscosityLaw;
use darcylab::darcy::solve_darcy;
use darcylab::flow::{
    extend_by_zero, project_onto_admissible, save_checkpoint, CheckpointHeader, FlowSolver, SolveConfig, StaggeredField,
};
use darcylab::forcing::Forcing;
use darcylab::geometry::{build_mask_window, GridSpec, HoleShape, PerforationSpec, Window};
use darcylab::harness::{
    loglog_svg, resolve_perm_source, results_csv, run_sweep, ExperimentConfig, InitialDatum, PermSource, RateReport,
    RunMode,
};
use darcylab::micro::{build_corrector, corrector_norms, pairing_matrix, permeability, solve_exterior_stokes, ExteriorGrid};
use darcylab::probes::{
    bogovskii_sweep, korn_identity_check, korn_probe_report, poincare_sweep, probe_csv, ProbeReport,
};
use darcylab::stokes::SaddleMethod;
use darcylab::{Error, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "darcylab", version, about = "Perforated-domain flow solver and homogenization rate harness")]
struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for sampled probes and sweeps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Permeability tensor of a model hole from exterior Stokes solves.
    Perm {
        /// Ball radius, overriding the config hole.
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Corrector norms on one periodicity cell.
    Corrector,
    /// A single flow solve on a perforated mask.
    Solve {
        /// Write a checkpoint every k Picard iterations (or time steps).
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Spectral Darcy reference solution.
    Darcy,
    /// Poincare, Korn and Bogovskii probes.
    Probe,
    /// Rate sweep over epsilon.
    Sweep,
    /// Summarize an existing run directory.
    Report {
        /// Run directory (defaults to --out).
        dir: Option<PathBuf>,
    },
}

fn load_config<T: DeserializeOwned>(path: &Option<PathBuf>) -> Result<Option<T>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            Ok(Some(serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?))
        }
    }
}

fn require<T: DeserializeOwned>(path: &Option<PathBuf>, what: &str) -> Result<T> {
    load_config(path)?.ok_or_else(|| Error::Config(format!("`{what}` needs --config <file.json>")))
}

fn write_json<T: Serialize>(dir: &Option<PathBuf>, name: &str, value: &T) -> Result<()> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
        std::fs::write(d.join(name), serde_json::to_string_pretty(value)?)?;
    }
    Ok(())
}

fn default_truncations() -> Vec<f64> {
    vec![16.0, 32.0]
}
fn default_k() -> usize {
    6
}
fn default_perm_tol() -> f64 {
    1e-6
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    200
}

#[derive(Debug, Serialize, Deserialize)]
struct PermConfig {
    hole: HoleShape,
    #[serde(default = "default_truncations")]
    truncations: Vec<f64>,
    #[serde(default = "default_k")]
    cells_per_radius: usize,
    #[serde(default = "default_perm_tol")]
    tol: f64,
}

impl Default for PermConfig {
    fn default() -> Self {
        Self { hole: HoleShape::ball(0.1), truncations: default_truncations(), cells_per_radius: 6, tol: 1e-6 }
    }
}

fn cmd_perm(cli: &Cli, rho: Option<f64>) -> Result<bool> {
    let mut cfg: PermConfig = load_config(&cli.config)?.unwrap_or_default();
    if let Some(r) = rho {
        cfg.hole = HoleShape::ball(r);
    }
    let rule = ExteriorGrid { cells_per_radius: cfg.cells_per_radius, ..Default::default() };
    let m0 = permeability(&cfg.hole, &cfg.truncations, rule, cfg.tol)?;
    println!("hole {}", m0.hole);
    for row in &m0.m {
        println!("  [{:12.6} {:12.6} {:12.6}]", row[0], row[1], row[2]);
    }
    println!("eigenvalues {:?}", m0.eigenvalues);
    if let HoleShape::Ball { rho } = cfg.hole {
        println!("6 pi rho = {:.6}", 6.0 * std::f64::consts::PI * rho);
    }
    let pass = !m0.degenerate && m0.eigenvalues[0] > 0.0;
    write_json(&cli.out, "permeability.json", &m0)?;
    Ok(pass)
}

#[derive(Debug, Serialize, Deserialize)]
struct CorrectorConfig {
    spec: PerforationSpec,
    /// Grid cells per period cell side.
    cells: usize,
    #[serde(default = "default_truncation")]
    truncation: f64,
    #[serde(default = "default_k")]
    cells_per_radius: usize,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_q")]
    q: Vec<f64>,
}

fn default_truncation() -> f64 {
    16.0
}
fn default_q() -> Vec<f64> {
    vec![2.0]
}

fn cmd_corrector(cli: &Cli) -> Result<bool> {
    let cfg: CorrectorConfig = require(&cli.config, "corrector")?;
    let rule = ExteriorGrid { cells_per_radius: cfg.cells_per_radius, ..Default::default() };
    let ext = solve_exterior_stokes(&cfg.spec.hole, cfg.truncation, rule, cfg.tol)?;
    let cf = build_corrector(&cfg.spec, cfg.cells, &ext, cfg.tol)?;
    let mut norms = Vec::new();
    for &q in &cfg.q {
        let n = corrector_norms(&cf, q)?;
        println!(
            "q = {q}: |W - I| = {:.6e}  |grad W| = {:.6e}  |Q| = {:.6e}  max|W| = {:.4}",
            n.w_minus_id, n.grad_w, n.pressure, n.w_max
        );
        norms.push(n);
    }
    let pairing = pairing_matrix(&cf);
    println!("pairing diagonal {:.4} {:.4} {:.4}", pairing[0][0], pairing[1][1], pairing[2][2]);
    let h = cf.grid.axis(0).width(0);
    let div_ok = cf.max_divergence.iter().all(|d| d * h <= 1e-6);
    #[derive(Serialize)]
    struct Out<'a> {
        norms: &'a [darcylab::micro::CorrectorNorms],
        pairing: [[f64; 3]; 3],
        max_divergence: [f64; 3],
        pass: bool,
    }
    write_json(&cli.out, "corrector.json", &Out { norms: &norms, pairing, max_divergence: cf.max_divergence, pass: div_ok })?;
    Ok(div_ok)
}

#[derive(Debug, Serialize, Deserialize)]
struct SolveRun {
    spec: PerforationSpec,
    n: usize,
    #[serde(default)]
    window: Window,
    law: ViscosityLaw,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    forcing: Forcing,
    #[serde(default)]
    mode: RunMode,
    /// Needed for the preconditioner friction and for a Darcy initial datum.
    #[serde(default)]
    permeability: Option<PermSource>,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
    #[serde(default)]
    method: SaddleMethod,
}

fn cmd_solve(cli: &Cli, every: Option<usize>) -> Result<bool> {
    let run: SolveRun = require(&cli.config, "solve")?;
    let mask = build_mask_window(&run.spec, GridSpec::new(run.n), run.window)?;
    let lambda = run.lambda.unwrap_or(run.spec.alpha + 1.0);
    let mut cfg = SolveConfig::new(lambda, run.law);
    cfg.tol = run.tol;
    cfg.max_iter = run.max_iter;
    cfg.method = run.method;
    let field = run.forcing.load()?;
    let f = field.sample_faces(&mask.grid);
    let mut solver = FlowSolver::new(&mask, run.spec.alpha, cfg, &f)?;
    let m0 = match &run.permeability {
        Some(src) => Some(resolve_perm_source(src, &run.spec.hole, None)?),
        None => None,
    };
    if let Some(m) = &m0 {
        solver.set_friction(0.5 * run.law.eta0() * (m.m[0][0] + m.m[1][1] + m.m[2][2]) / 3.0);
    }
    let every = every.filter(|k| *k > 0);
    if every.is_some() && cli.out.is_none() {
        return Err(Error::Config("--checkpoint-every needs --out".into()));
    }
    let out = cli.out.clone();
    if let Some(d) = &out {
        std::fs::create_dir_all(d)?;
    }
    let header = |iteration: usize, residual: f64, time: Option<f64>| CheckpointHeader {
        dims: mask.grid.dims(),
        n: run.n,
        epsilon: run.spec.epsilon,
        alpha: run.spec.alpha,
        lambda,
        law: run.law,
        iteration,
        residual,
        time,
    };
    match run.mode {
        RunMode::Stationary => {
            let mut observe = |k: usize, fld: &StaggeredField, res: f64| -> Result<()> {
                if let (Some(e), Some(d)) = (every, &out) {
                    if k % e == 0 {
                        save_checkpoint(&d.join(format!("checkpoint_{k:05}")), &header(k, res, None), fld)?;
                    }
                }
                Ok(())
            };
            let (sol, diag) = solver.solve_stationary_observed(None, &mut observe)?;
            let res = diag.residual_history.last().copied().unwrap_or(0.0);
            println!(
                "converged in {} Picard iterations, residual {:.3e}, energy identity residual {:.3e}",
                diag.iterations, res, diag.energy_residual
            );
            println!(
                "scaled gradient {:.4e}, L2 {:.4e}",
                diag.bounds.scaled_gradient, diag.bounds.l2
            );
            if let Some(d) = &out {
                save_checkpoint(&d.join("solution"), &header(diag.iterations, res, None), &extend_by_zero(&sol, &mask))?;
            }
            write_json(&out, "diagnostics.json", &diag)?;
            Ok(diag.degenerate || diag.energy_residual <= 1e-6)
        }
        RunMode::Evolutionary { dt, t_end, u0 } => {
            let mut state = StaggeredField::zeros(&mask.grid);
            if u0 == InitialDatum::Darcy {
                let m = m0.as_ref().ok_or_else(|| {
                    Error::Config("a Darcy initial datum needs a `permeability` entry".into())
                })?;
                let d = solve_darcy(m, run.law.eta0(), &mask.grid, &field.sample_cells(&mask.grid))?;
                state.u = project_onto_admissible(&mask, &d.sample_faces(&mask.grid)?, 1e-2 * run.tol)?;
            }
            let steps = (t_end / dt).round().max(1.0) as usize;
            let mut holds = true;
            let mut reports = Vec::with_capacity(steps);
            for k in 1..=steps {
                let (next, rep) = solver.step(&state, dt)?;
                let scale = rep.kinetic_before + rep.kinetic_after + dt * (rep.dissipation + rep.work.abs());
                let rel = if scale > 0.0 { rep.defect / scale } else { 0.0 };
                holds &= rel <= 1e-6;
                state = next;
                let res = rep.diagnostics.residual_history.last().copied().unwrap_or(0.0);
                if let (Some(e), Some(d)) = (every, &out) {
                    if k % e == 0 {
                        save_checkpoint(&d.join(format!("checkpoint_{k:05}")), &header(k, res, Some(k as f64 * dt)), &state)?;
                    }
                }
                println!("step {k:5}  t = {:.4e}  kinetic {:.6e}  defect {:.3e}", k as f64 * dt, rep.kinetic_after, rel);
                reports.push(rep);
            }
            if let Some(d) = &out {
                save_checkpoint(&d.join("solution"), &header(steps, 0.0, Some(steps as f64 * dt)), &extend_by_zero(&state, &mask))?;
            }
            write_json(&out, "steps.json", &reports)?;
            Ok(holds)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DarcyRun {
    hole: HoleShape,
    permeability: PermSource,
    eta0: f64,
    n: usize,
    #[serde(default)]
    forcing: Forcing,
}

fn cmd_darcy(cli: &Cli) -> Result<bool> {
    let run: DarcyRun = require(&cli.config, "darcy")?;
    let m0 = resolve_perm_source(&run.permeability, &run.hole, None)?;
    let grid = Window::Full.grid(run.n, 1.0);
    let f = run.forcing.load()?.sample_cells(&grid);
    let sol = solve_darcy(&m0, run.eta0, &grid, &f)?;
    let defect = sol.divergence_defect();
    let umax = sol.u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    println!("max |u| = {umax:.6e}, spectral divergence defect {defect:.3e}");
    if let Some(d) = &cli.out {
        std::fs::create_dir_all(d)?;
        let header = CheckpointHeader {
            dims: grid.dims(),
            n: run.n,
            epsilon: 0.0,
            alpha: 0.0,
            lambda: 0.0,
            law: ViscosityLaw::newtonian(run.eta0),
            iteration: 0,
            residual: defect,
            time: None,
        };
        save_checkpoint(&d.join("darcy"), &header, &sol.to_staggered(&grid)?)?;
    }
    Ok(defect <= 1e-10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
enum ProbeSelect {
    Poincare,
    Korn,
    Bogovskii,
    #[default]
    All,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbeConfig {
    #[serde(default)]
    probe: ProbeSelect,
    alpha: f64,
    hole: HoleShape,
    epsilons: Vec<f64>,
    /// Cells per period cell side for the Poincare probe.
    #[serde(default = "default_m")]
    m: usize,
    /// Torus cells per axis for the Korn and Bogovskii probes.
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default = "default_tol")]
    tol: f64,
}

fn default_m() -> usize {
    64
}
fn default_n() -> usize {
    48
}
fn default_samples() -> usize {
    20
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            probe: ProbeSelect::All,
            alpha: 1.5,
            hole: HoleShape::ball(0.5),
            epsilons: vec![0.25, 0.125],
            m: default_m(),
            n: default_n(),
            samples: default_samples(),
            tol: 1e-8,
        }
    }
}

fn cmd_probe(cli: &Cli) -> Result<bool> {
    let cfg: ProbeConfig = load_config(&cli.config)?.unwrap_or_default();
    let seed = cli.seed.unwrap_or(0);
    let mut reports: Vec<ProbeReport> = Vec::new();
    let want = |p: ProbeSelect| cfg.probe == ProbeSelect::All || cfg.probe == p;
    if want(ProbeSelect::Poincare) {
        reports.push(poincare_sweep(cfg.alpha, &cfg.hole, &cfg.epsilons, cfg.m, cfg.tol)?);
    }
    if want(ProbeSelect::Korn) {
        for &eps in &cfg.epsilons {
            let spec = PerforationSpec::new(eps, cfg.alpha, cfg.hole.clone());
            let mask = build_mask_window(&spec, GridSpec::new(cfg.n), Window::Full)?;
            let k = korn_identity_check(&mask, cfg.samples.max(1), seed);
            reports.push(korn_probe_report(eps, cfg.alpha, &k));
        }
    }
    if want(ProbeSelect::Bogovskii) {
        reports.push(bogovskii_sweep(cfg.alpha, &cfg.hole, &cfg.epsilons, cfg.n, cfg.samples, seed, cfg.tol)?);
    }
    for r in &reports {
        let values: Vec<String> = r.points.iter().map(|p| format!("{:.4e}", p.value)).collect();
        println!(
            "{:?}: values [{}] predicted {:?} slope {:?} pass {:?}",
            r.kind,
            values.join(", "),
            r.predicted_exponent,
            r.slope,
            r.pass
        );
        for n in &r.notes {
            println!("  note: {n}");
        }
    }
    if let Some(d) = &cli.out {
        std::fs::create_dir_all(d)?;
        std::fs::write(d.join("probes.csv"), probe_csv(&reports))?;
        std::fs::write(d.join("probes.json"), serde_json::to_string_pretty(&reports)?)?;
    }
    Ok(reports.iter().all(|r| r.pass != Some(false)))
}

fn cmd_sweep(cli: &Cli) -> Result<bool> {
    let mut cfg: ExperimentConfig = require(&cli.config, "sweep")?;
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let report = run_sweep(&cfg)?;
    print_report(&report);
    Ok(report.all_pass())
}

fn print_report(r: &RateReport) {
    println!("{:>10} {:>6} {:>16} {:>16} {:>10}", "epsilon", "n", "|u - U|^2", "|p - P|_1", "seconds");
    for c in &r.cases {
        println!(
            "{:>10.5} {:>6} {:>16.6e} {:>16.6e} {:>10.1}",
            c.epsilon, c.n, c.velocity_error_sq, c.pressure_error_l1, c.seconds
        );
    }
    if let (Some(f), Some(p)) = (&r.velocity_fit, r.predicted_velocity) {
        println!("velocity slope {:.3} (predicted {:.3}) pass {}", f.slope, p, r.velocity_pass);
    }
    if let Some(f) = &r.pressure_fit {
        println!("pressure slope {:.3}, strictly decreasing {}", f.slope, r.pressure_decreasing);
    }
    for n in &r.notes {
        println!("note: {n}");
    }
    for f in &r.failures {
        println!("failure: {f}");
    }
}

#[derive(Deserialize)]
struct Manifest {
    report: RateReport,
    pass: bool,
}

fn cmd_report(cli: &Cli, dir: Option<PathBuf>) -> Result<bool> {
    let dir = dir.or_else(|| cli.out.clone()).ok_or_else(|| Error::Config("`report` needs a run directory".into()))?;
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let m: Manifest = serde_json::from_str(&text)?;
    print_report(&m.report);
    regenerate(&dir, &m.report)?;
    println!("overall pass {}", m.pass);
    Ok(m.pass)
}

fn regenerate(dir: &Path, r: &RateReport) -> Result<()> {
    std::fs::create_dir_all(dir.join("plots"))?;
    std::fs::write(dir.join("results.csv"), results_csv(r)?)?;
    let eps: Vec<f64> = r.cases.iter().map(|c| c.epsilon).collect();
    let ev: Vec<f64> = r.cases.iter().map(|c| c.velocity_error_sq).collect();
    let ep: Vec<f64> = r.cases.iter().map(|c| c.pressure_error_l1).collect();
    std::fs::write(dir.join("plots/velocity_error.svg"), loglog_svg("squared L2 velocity error", &eps, &ev, r.predicted_velocity))?;
    std::fs::write(
        dir.join("plots/pressure_error.svg"),
        loglog_svg("L1 pressure error", &eps, &ep, r.predicted_pressure.map(|p| p.value)),
    )?;
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Perm { rho } => cmd_perm(cli, *rho),
        Command::Corrector => cmd_corrector(cli),
        Command::Solve { checkpoint_every } => cmd_solve(cli, *checkpoint_every),
        Command::Darcy => cmd_darcy(cli),
        Command::Probe => cmd_probe(cli),
        Command::Sweep => cmd_sweep(cli),
        Command::Report { dir } => cmd_report(cli, dir.clone()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            eprintln!("warning: worker pool already initialised: {e}");
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more pass flags are false");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
