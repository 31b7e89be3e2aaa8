//! Exterior Stokes cell problem, permeability tensor and oscillating correctors.

use crate::error::{Error, Result};
use crate::geometry::HoleShape;
use crate::linalg::krylov::KrylovStats;
use crate::mesh::{for_each_cell, Axis, Grid};
use crate::ops;
use crate::stokes::StokesSystem;
use serde::{Deserialize, Serialize};

/// Graded box grid around a hole, in units of the hole's bounding radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExteriorGrid {
    /// Cells per hole radius in the uniform core.
    pub cells_per_radius: usize,
    /// Half-width of the uniform core in hole radii.
    pub core: f64,
    /// Geometric growth factor outside the core.
    pub growth: f64,
}

impl Default for ExteriorGrid {
    fn default() -> Self {
        Self { cells_per_radius: 6, core: 1.5, growth: 1.1 }
    }
}

impl ExteriorGrid {
    /// Symmetric axis on `[-r_trunc, r_trunc]` with a node at 0, plus one boundary cell on each side.
    pub fn axis(&self, r_trunc: f64) -> Axis {
        let h = 1.0 / self.cells_per_radius as f64;
        let n_core = (self.core * self.cells_per_radius as f64).ceil() as usize;
        let core = n_core as f64 * h;
        let mut outer = Vec::new();
        let mut w = h;
        let mut s = 0.0;
        while s < r_trunc - core - 1e-12 {
            w *= self.growth;
            outer.push(w);
            s += w;
        }
        if s > 0.0 {
            let fix = (r_trunc - core) / s;
            outer.iter_mut().for_each(|v| *v *= fix);
        }
        let mut half: Vec<f64> = vec![h; n_core];
        half.extend(outer);
        let edge = *half.last().unwrap_or(&h);
        let mut widths = vec![edge];
        widths.extend(half.iter().rev());
        widths.extend(half.iter());
        widths.push(edge);
        Axis::from_widths(-r_trunc - edge, widths)
    }

    pub fn grid(&self, r_trunc: f64) -> Grid {
        let ax = self.axis(r_trunc);
        Grid::new([ax.clone(), ax.clone(), ax])
    }

    pub fn cells(&self, r_trunc: f64) -> usize {
        self.axis(r_trunc).n()
    }
}

/// Velocities `v^i` and pressures `q^i` of the three exterior problems.
#[derive(Debug, Clone)]
pub struct ExteriorSolution {
    pub grid: Grid,
    pub solid: Vec<bool>,
    pub boundary: Vec<bool>,
    pub v: [Vec<f64>; 3],
    pub q: [Vec<f64>; 3],
    /// Truncation half-width in hole radii.
    pub truncation: f64,
    /// Hole bounding radius in reference-cell units; the grid is measured in this unit.
    pub scale: f64,
    pub spacing: f64,
    /// Raw energy matrix `sum 2 D(v^i):D(v^j)` in hole-radius units.
    pub energy: [[f64; 3]; 3],
    pub stats: Vec<KrylovStats>,
}

fn is_boundary_cell(grid: &Grid, c: [usize; 3]) -> bool {
    let d = grid.dims();
    (0..3).any(|a| c[a] == 0 || c[a] + 1 == d[a])
}

/// Solve the three exterior problems around `hole` on a box of half-width `r_trunc` hole radii.
pub fn solve_exterior_stokes(hole: &HoleShape, r_trunc: f64, rule: ExteriorGrid, tol: f64) -> Result<ExteriorSolution> {
    if r_trunc < 8.0 {
        return Err(Error::Precondition(format!("truncation {r_trunc} below 8 hole radii")));
    }
    if rule.cells_per_radius < 2 {
        return Err(Error::Unresolved { cells: 2.0 * rule.cells_per_radius as f64, required_n: 4 });
    }
    let grid = rule.grid(r_trunc);
    let n = grid.len();
    let scale = hole.bounding_radius();
    let mut solid = vec![false; n];
    let mut boundary = vec![false; n];
    for_each_cell(&grid, |q, c| {
        boundary[q] = is_boundary_cell(&grid, c);
        if scale > 0.0 {
            let x = grid.cell_center(c);
            solid[q] = hole.contains(x.map(|t| t * scale));
        }
    });
    let spacing = 1.0 / rule.cells_per_radius as f64;
    let unit = |i: usize| {
        let mut v = vec![0.0; 3 * n];
        v[i * n..(i + 1) * n].iter_mut().for_each(|x| *x = 1.0);
        v
    };
    if !solid.iter().any(|s| *s) {
        return Ok(ExteriorSolution {
            grid,
            solid,
            boundary,
            v: [unit(0), unit(1), unit(2)],
            q: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            truncation: r_trunc,
            scale,
            spacing,
            energy: [[0.0; 3]; 3],
            stats: Vec::new(),
        });
    }

    let mut fixed = vec![false; 3 * n];
    let mut on_boundary = vec![false; 3 * n];
    for_each_cell(&grid, |q, c| {
        for a in 0..3 {
            let qp = grid.prev(a, q, c[a]);
            if solid[q] || solid[qp] {
                fixed[a * n + q] = true;
            } else if boundary[q] || boundary[qp] {
                fixed[a * n + q] = true;
                on_boundary[a * n + q] = true;
            }
        }
    });
    let nu = vec![2.0; n];
    let rhs = vec![0.0; 3 * n];
    let mut sys = StokesSystem::new(grid.clone(), fixed);
    let mut v: [Vec<f64>; 3] = Default::default();
    let mut q: [Vec<f64>; 3] = Default::default();
    let mut stats = Vec::new();
    for i in 0..3 {
        let mut data = vec![0.0; 3 * n];
        for f in i * n..(i + 1) * n {
            if on_boundary[f] {
                data[f] = 1.0;
            }
        }
        let sol = sys.solve(&nu, &rhs, Some(&data), None, None, tol, 4000)?;
        v[i] = sol.u;
        q[i] = sol.p;
        stats.push(sol.stats);
    }
    let ne = ops::edge_viscosity(&grid, &nu);
    let mut energy = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            energy[i][j] = ops::strain_product(&grid, &nu, &ne, &v[i], &v[j]);
        }
    }
    Ok(ExteriorSolution { grid, solid, boundary, v, q, truncation: r_trunc, scale, spacing, energy, stats })
}

fn locate(pos: impl Fn(usize) -> f64, count: usize, y: f64) -> Option<(usize, f64)> {
    if count < 2 || y < pos(0) || y > pos(count - 1) {
        return None;
    }
    let (mut lo, mut hi) = (0, count - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if pos(mid) <= y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo, (y - pos(lo)) / (pos(hi) - pos(lo))))
}

/// Trilinear interpolation of a face field component (`Some(c)`) or a cell field (`None`).
fn interpolate(grid: &Grid, field: &[f64], comp: Option<usize>, y: [f64; 3]) -> Option<f64> {
    let mut idx = [(0usize, 0.0f64); 3];
    for a in 0..3 {
        let ax = grid.axis(a);
        idx[a] = if comp == Some(a) {
            locate(|i| ax.node(i), ax.n(), y[a])?
        } else {
            locate(|i| ax.center(i), ax.n(), y[a])?
        };
    }
    let mut v = 0.0;
    for corner in 0..8 {
        let mut w = 1.0;
        let mut c = [0usize; 3];
        for a in 0..3 {
            let up = (corner >> a) & 1 == 1;
            c[a] = idx[a].0 + up as usize;
            w *= if up { idx[a].1 } else { 1.0 - idx[a].1 };
        }
        if w != 0.0 {
            v += w * field[grid.index(c[0], c[1], c[2])];
        }
    }
    Some(v)
}

impl ExteriorSolution {
    /// `v^i` at `y` (hole-radius units); `None` outside the truncated box.
    pub fn velocity(&self, i: usize, y: [f64; 3]) -> Option<[f64; 3]> {
        let n = self.grid.len();
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = interpolate(&self.grid, &self.v[i][c * n..(c + 1) * n], Some(c), y)?;
        }
        Some(out)
    }

    pub fn pressure(&self, i: usize, y: [f64; 3]) -> Option<f64> {
        interpolate(&self.grid, &self.q[i], None, y)
    }

    /// Max of `|v^i - e_i|` over faces at max-norm distance at least `radius` inside the truncation.
    pub fn far_field_deviation(&self, i: usize, radius: f64) -> f64 {
        let n = self.grid.len();
        let mut dev: f64 = 0.0;
        for_each_cell(&self.grid, |q, c| {
            for comp in 0..3 {
                let x = self.grid.face_center(comp, c);
                let r = x.iter().fold(0.0f64, |m, t| m.max(t.abs()));
                if r >= radius && r <= self.truncation && !self.boundary[q] {
                    let target = if comp == i { 1.0 } else { 0.0 };
                    dev = dev.max((self.v[i][comp * n + q] - target).abs());
                }
            }
        });
        dev
    }

    /// Energy matrix in reference-cell units (drag scales linearly with hole size).
    pub fn scaled_energy(&self) -> Mat3 {
        self.energy.map(|row| row.map(|e| e * self.scale))
    }
}

pub type Mat3 = [[f64; 3]; 3];

/// Symmetric positive definite permeability matrix with its extrapolation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermeabilityTensor {
    pub m: Mat3,
    pub truncations: Vec<f64>,
    pub raw: Vec<Mat3>,
    /// Largest relative asymmetry of the raw energy matrices.
    pub asymmetry: f64,
    pub eigenvalues: [f64; 3],
    pub degenerate: bool,
    pub hole: String,
    pub cells_per_radius: usize,
}

fn frob3(m: &Mat3) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn sym_eigenvalues(m: &Mat3) -> [f64; 3] {
    let a = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
    let mut e: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(|x, y| x.total_cmp(y));
    [e[0], e[1], e[2]]
}

impl PermeabilityTensor {
    /// Wrap a given symmetric matrix, verifying positive definiteness.
    pub fn from_matrix(m: Mat3, hole: &str) -> Result<Self> {
        let asym = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .fold(0.0f64, |a, (i, j)| a.max((m[i][j] - m[j][i]).abs()));
        if asym > 1e-12 * frob3(&m) {
            return Err(Error::NumericalQuality("permeability matrix is not symmetric".into()));
        }
        let eigenvalues = sym_eigenvalues(&m);
        if eigenvalues[0] <= 0.0 {
            return Err(Error::NumericalQuality(format!("permeability not positive definite: {eigenvalues:?}")));
        }
        Ok(Self {
            m,
            truncations: Vec::new(),
            raw: Vec::new(),
            asymmetry: 0.0,
            eigenvalues,
            degenerate: false,
            hole: hole.to_string(),
            cells_per_radius: 0,
        })
    }

    pub fn isotropic(value: f64) -> Result<Self> {
        Self::from_matrix([[value, 0.0, 0.0], [0.0, value, 0.0], [0.0, 0.0, value]], "isotropic")
    }

    pub fn inverse(&self) -> Mat3 {
        let a = nalgebra::Matrix3::from_fn(|i, j| self.m[i][j]);
        let inv = a.try_inverse().unwrap_or_else(nalgebra::Matrix3::zeros);
        [0, 1, 2].map(|i| [0, 1, 2].map(|j| inv[(i, j)]))
    }
}

/// Least-squares fit `M(R) = M_inf + B / R` per entry; exact two-point Richardson for two truncations.
pub fn richardson(truncations: &[f64], raw: &[Mat3]) -> Mat3 {
    let k = truncations.len() as f64;
    let xs: Vec<f64> = truncations.iter().map(|r| 1.0 / r).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let my = raw.iter().map(|m| m[i][j]).sum::<f64>() / k;
            let sxy: f64 = xs.iter().zip(raw).map(|(x, m)| (x - mx) * (m[i][j] - my)).sum();
            out[i][j] = my - sxy / sxx * mx;
        }
    }
    out
}

/// Permeability of `hole` from exterior solves at increasing truncations (hole radii).
pub fn permeability(hole: &HoleShape, truncations: &[f64], rule: ExteriorGrid, tol: f64) -> Result<PermeabilityTensor> {
    if truncations.len() < 2 || truncations.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("need at least two increasing truncations".into()));
    }
    let mut raw = Vec::new();
    let mut asymmetry: f64 = 0.0;
    for &r in truncations {
        let ext = solve_exterior_stokes(hole, r, rule, tol)?;
        let e = ext.scaled_energy();
        let norm = frob3(&e);
        if norm > 0.0 {
            for i in 0..3 {
                for j in 0..3 {
                    asymmetry = asymmetry.max((e[i][j] - e[j][i]).abs() / norm);
                }
            }
        }
        raw.push(e);
    }
    let mut m = richardson(truncations, &raw);
    for i in 0..3 {
        for j in 0..i {
            let v = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    let degenerate = hole.is_empty() || frob3(&m) == 0.0;
    let eigenvalues = sym_eigenvalues(&m);
    if !degenerate && eigenvalues[0] <= 0.0 {
        return Err(Error::NumericalQuality(format!(
            "extrapolated permeability not positive definite: eigenvalues {eigenvalues:?}"
        )));
    }
    Ok(PermeabilityTensor {
        m,
        truncations: truncations.to_vec(),
        raw,
        asymmetry,
        eigenvalues,
        degenerate,
        hole: hole.describe(),
        cells_per_radius: rule.cells_per_radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Identity,
    Annulus,
    Exterior,
    Hole,
}

/// Oscillating test functions on one periodicity cell centered at a hole.
#[derive(Debug, Clone)]
pub struct CorrectorField {
    /// Cell `[-eps/2, eps/2]^3` relative to the hole center.
    pub grid: Grid,
    pub epsilon: f64,
    pub alpha: f64,
    /// Column `i` of `W` as a face field.
    pub w: [Vec<f64>; 3],
    pub q: [Vec<f64>; 3],
    pub region: Vec<Region>,
    pub solid_faces: Vec<bool>,
    /// Largest pointwise divergence over fluid cells, per column.
    pub max_divergence: [f64; 3],
    pub stats: Vec<KrylovStats>,
}

fn classify(z: [f64; 3], eps: f64) -> Region {
    let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
    if r < 0.25 * eps {
        Region::Exterior
    } else if r < 0.5 * eps {
        Region::Annulus
    } else {
        Region::Identity
    }
}

/// Assemble `W_eps`, `Q_eps` on a cell of `cells` grid cells per side.
pub fn build_corrector(
    spec: &crate::geometry::PerforationSpec,
    cells: usize,
    ext: &ExteriorSolution,
    tol: f64,
) -> Result<CorrectorField> {
    spec.check()?;
    let eps = spec.epsilon;
    let hole_scale = spec.hole_scale();
    let reach = hole_scale * spec.hole.bounding_radius();
    if reach >= 0.25 * eps {
        return Err(Error::Precondition(format!(
            "hole radius {reach} does not fit inside the inner ball of radius {}",
            0.25 * eps
        )));
    }
    let h = eps / cells as f64;
    if reach > 0.0 && 2.0 * reach < 4.0 * h {
        return Err(Error::Unresolved { cells: 2.0 * reach / h, required_n: (cells as f64 * 4.0 * h / (2.0 * reach)).ceil() as usize });
    }
    let ext_unit = hole_scale * ext.scale;
    let required = if ext_unit > 0.0 { 0.25 * eps / ext_unit } else { 0.0 };
    if ext.scale > 0.0 && required > ext.truncation {
        return Err(Error::Truncation { required, available: ext.truncation });
    }
    let ax = Axis::from_widths(-0.5 * eps, vec![h; cells]);
    let grid = Grid::new([ax.clone(), ax.clone(), ax]);
    let n = grid.len();

    let mut solid = vec![false; n];
    let mut region = vec![Region::Identity; n];
    for_each_cell(&grid, |q, c| {
        let z = grid.cell_center(c);
        solid[q] = hole_scale > 0.0 && spec.hole.contains(z.map(|t| t / hole_scale));
        region[q] = if solid[q] { Region::Hole } else { classify(z, eps) };
    });
    let mut solid_faces = vec![false; 3 * n];
    let mut face_region = vec![Region::Identity; 3 * n];
    for_each_cell(&grid, |q, c| {
        for a in 0..3 {
            let f = a * n + q;
            let qp = grid.prev(a, q, c[a]);
            solid_faces[f] = solid[q] || solid[qp];
            face_region[f] = if solid_faces[f] { Region::Hole } else { classify(grid.face_center(a, c), eps) };
        }
    });

    let annulus_fixed: Vec<bool> = face_region.iter().map(|r| *r != Region::Annulus).collect();
    let proj_fixed: Vec<bool> = face_region
        .iter()
        .map(|r| matches!(r, Region::Identity | Region::Hole))
        .collect();
    let mut annulus = StokesSystem::new(grid.clone(), annulus_fixed);
    let mut repair = StokesSystem::new(grid.clone(), proj_fixed);
    let nu = vec![2.0; n];
    let zero = vec![0.0; 3 * n];
    let cv = grid.cell_volumes();

    let mut w: [Vec<f64>; 3] = Default::default();
    let mut qf: [Vec<f64>; 3] = Default::default();
    let mut max_div = [0.0; 3];
    let mut stats = Vec::new();
    for i in 0..3 {
        let mut data = vec![0.0; 3 * n];
        let mut failed = None;
        for_each_cell(&grid, |q, c| {
            for comp in 0..3 {
                let f = comp * n + q;
                data[f] = match face_region[f] {
                    Region::Hole | Region::Annulus => 0.0,
                    Region::Identity => (comp == i) as u8 as f64,
                    Region::Exterior => {
                        let y = grid.face_center(comp, c).map(|t| t / ext_unit);
                        match ext.velocity(i, y) {
                            Some(v) => v[comp],
                            None => {
                                failed = Some(y);
                                0.0
                            }
                        }
                    }
                };
            }
        });
        if failed.is_some() {
            return Err(Error::Truncation { required, available: ext.truncation });
        }
        let ann = annulus.solve(&nu, &zero, Some(&data), None, None, tol, 4000)?;
        stats.push(ann.stats.clone());
        // minimal-energy correction removing the interpolation divergence inside the ball
        let mut target = vec![0.0; n];
        ops::divergence(&grid, &ann.u, &mut target);
        target.iter_mut().for_each(|t| *t = -*t);
        let fix = repair.solve(&nu, &zero, None, Some(&target), None, tol, 4000)?;
        stats.push(fix.stats.clone());
        let col: Vec<f64> = ann.u.iter().zip(&fix.u).map(|(a, b)| a + b).collect();

        let mut div = vec![0.0; n];
        ops::divergence(&grid, &col, &mut div);
        max_div[i] = (0..n).filter(|q| !solid[*q]).fold(0.0f64, |m, q| m.max((div[q] / cv[q]).abs()));

        let mut p = vec![0.0; n];
        for_each_cell(&grid, |q, c| {
            p[q] = match region[q] {
                Region::Exterior => {
                    let y = grid.cell_center(c).map(|t| t / ext_unit);
                    ext.pressure(i, y).unwrap_or(0.0) / ext_unit
                }
                Region::Annulus => ann.p[q],
                _ => 0.0,
            };
        });
        let fluid_vol: f64 = (0..n).filter(|q| !solid[*q]).map(|q| cv[q]).sum();
        let mean = (0..n).filter(|q| !solid[*q]).map(|q| cv[q] * p[q]).sum::<f64>() / fluid_vol;
        for q in 0..n {
            p[q] = if solid[q] { 0.0 } else { p[q] - mean };
        }
        w[i] = col;
        qf[i] = p;
    }
    Ok(CorrectorField {
        grid,
        epsilon: eps,
        alpha: spec.alpha,
        w,
        q: qf,
        region,
        solid_faces,
        max_divergence: max_div,
        stats,
    })
}

/// Torus norms of `W - Id`, `grad W` and `Q` in `L^q`, from one cell and periodicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectorNorms {
    pub q: f64,
    pub w_minus_id: f64,
    pub grad_w: f64,
    pub pressure: f64,
    /// Largest entry of `W`.
    pub w_max: f64,
    /// Present for `q = 3`, where the bound carries a `|log eps|^{1/3}` factor.
    pub log_factor: Option<f64>,
}

fn accumulate(acc: &mut f64, v: f64, vol: f64, q: f64) {
    if q.is_infinite() {
        *acc = acc.max(v.abs());
    } else {
        *acc += vol * v.abs().powf(q);
    }
}

fn field_norms(grid: &Grid, w: &[Vec<f64>; 3], pr: &[Vec<f64>; 3], copies: f64, q: f64) -> (f64, f64, f64, f64) {
    let n = grid.len();
    let (mut a, mut g, mut p, mut wmax) = (0.0, 0.0, 0.0, 0.0f64);
    for_each_cell(grid, |cell, c| {
        let vol = grid.cell_volume(c);
        for i in 0..3 {
            accumulate(&mut p, pr[i][cell], vol, q);
            for comp in 0..3 {
                let f = comp * n + cell;
                let val = w[i][f];
                wmax = wmax.max(val.abs());
                accumulate(&mut a, val - (comp == i) as u8 as f64, grid.face_volume(comp, c), q);
                let d = (w[i][comp * n + grid.next(comp, cell, c[comp])] - val) / grid.axis(comp).width(c[comp]);
                accumulate(&mut g, d, vol, q);
                for b in 0..3 {
                    if b == comp {
                        continue;
                    }
                    let e = crate::mesh::edge_of(comp, b);
                    let d = (val - w[i][comp * n + grid.prev(b, cell, c[b])]) / grid.axis(b).center_gap(c[b]);
                    accumulate(&mut g, d, grid.edge_volume(e, c), q);
                }
            }
        }
    });
    let fin = |s: f64| if q.is_infinite() { s } else { (copies * s).powf(1.0 / q) };
    (fin(a), fin(g), fin(p), wmax)
}

pub fn corrector_norms(cf: &CorrectorField, q: f64) -> Result<CorrectorNorms> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::Domain(format!("norm exponent {q} below 1")));
    }
    let copies = (1.0 / cf.epsilon).round().powi(3);
    let (a, g, p, wmax) = field_norms(&cf.grid, &cf.w, &cf.q, copies, q);
    Ok(CorrectorNorms {
        q,
        w_minus_id: a,
        grad_w: g,
        pressure: p,
        w_max: wmax,
        log_factor: (q == 3.0).then(|| cf.epsilon.ln().abs().powf(1.0 / 3.0)),
    })
}

/// Replicate the cell `reps` times per axis; the block is treated as one period of size `reps * eps`.
pub fn tile_corrector(cf: &CorrectorField, reps: usize) -> CorrectorField {
    let d = cf.grid.dims();
    let axes = [0, 1, 2].map(|a| {
        let ax = cf.grid.axis(a);
        let widths: Vec<f64> = (0..reps).flat_map(|_| ax.widths().iter().copied()).collect();
        Axis::from_widths(ax.origin(), widths)
    });
    let grid = Grid::new(axes);
    let n = grid.len();
    let n0 = cf.grid.len();
    let src = |c: [usize; 3]| cf.grid.index(c[0] % d[0], c[1] % d[1], c[2] % d[2]);
    let mut w: [Vec<f64>; 3] = [vec![0.0; 3 * n], vec![0.0; 3 * n], vec![0.0; 3 * n]];
    let mut q: [Vec<f64>; 3] = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut region = vec![Region::Identity; n];
    let mut solid_faces = vec![false; 3 * n];
    for_each_cell(&grid, |t, c| {
        let s = src(c);
        region[t] = cf.region[s];
        for i in 0..3 {
            q[i][t] = cf.q[i][s];
            for comp in 0..3 {
                w[i][comp * n + t] = cf.w[i][comp * n0 + s];
            }
        }
        for comp in 0..3 {
            solid_faces[comp * n + t] = cf.solid_faces[comp * n0 + s];
        }
    });
    CorrectorField {
        grid,
        epsilon: cf.epsilon * reps as f64,
        alpha: cf.alpha,
        w,
        q,
        region,
        solid_faces,
        max_divergence: cf.max_divergence,
        stats: Vec::new(),
    }
}

/// Pairing `eps^{3-alpha} <-Delta W e_i + grad Q e_i, phi (W e_j)>` for constant `phi = 1`,
/// the discrete counterpart of `int M0 e_i . e_j` as `eps -> 0`.
pub fn pairing_matrix(cf: &CorrectorField) -> Mat3 {
    let n = cf.grid.len();
    let nu = vec![2.0; n];
    let ne = ops::edge_viscosity(&cf.grid, &nu);
    let copies = (1.0 / cf.epsilon).round().powi(3);
    let scale = cf.epsilon.powf(3.0 - cf.alpha) * copies;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        let mut aw = vec![0.0; 3 * n];
        ops::viscous_apply(&cf.grid, &nu, &ne, &cf.w[i], &mut aw);
        ops::add_gradient(&cf.grid, &cf.q[i], 1.0, &mut aw);
        for j in 0..3 {
            out[i][j] = scale * aw.iter().zip(&cf.w[j]).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}
