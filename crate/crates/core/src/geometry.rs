//! Periodically perforated torus: hole lattice, voxel masks and their validation.

use crate::error::{Error, Result};
use crate::mesh::{for_each_cell, Grid};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Resolution of reference voxel hole masks.
pub const VOXEL_RES: usize = 64;
/// Radius of the ball that must contain the reference hole.
pub const CONTAINMENT_RADIUS: f64 = 0.125;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoleShape {
    Ball {
        rho: f64,
    },
    /// Reference mask on a `VOXEL_RES^3` lattice covering `[-extent, extent]^3`, x fastest.
    Voxel {
        extent: f64,
        #[serde(with = "mask_bits")]
        solid: Vec<bool>,
    },
}

mod mask_bits {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let text: String = v.iter().map(|b| if *b { '1' } else { '0' }).collect();
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let text = String::deserialize(d)?;
        Ok(text.bytes().map(|b| b == b'1').collect())
    }
}

impl HoleShape {
    pub fn ball(rho: f64) -> Self {
        HoleShape::Ball { rho }
    }

    /// Voxelize an indicator function on the reference lattice.
    pub fn voxel_from(extent: f64, inside: impl Fn([f64; 3]) -> bool) -> Self {
        let r = VOXEL_RES;
        let h = 2.0 * extent / r as f64;
        let mut solid = vec![false; r * r * r];
        for k in 0..r {
            for j in 0..r {
                for i in 0..r {
                    let y = [i, j, k].map(|t| -extent + (t as f64 + 0.5) * h);
                    solid[i + r * (j + r * k)] = inside(y);
                }
            }
        }
        HoleShape::Voxel { extent, solid }
    }

    pub fn contains(&self, y: [f64; 3]) -> bool {
        match self {
            HoleShape::Ball { rho } => y[0] * y[0] + y[1] * y[1] + y[2] * y[2] < rho * rho,
            HoleShape::Voxel { extent, solid } => {
                let r = VOXEL_RES as f64;
                let mut idx = [0usize; 3];
                for a in 0..3 {
                    let t = (y[a] + extent) / (2.0 * extent) * r;
                    if !(0.0..r).contains(&t) {
                        return false;
                    }
                    idx[a] = t as usize;
                }
                solid[idx[0] + VOXEL_RES * (idx[1] + VOXEL_RES * idx[2])]
            }
        }
    }

    /// Radius of the smallest origin-centered ball containing the hole.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            HoleShape::Ball { rho } => *rho,
            HoleShape::Voxel { extent, solid } => {
                let r = VOXEL_RES;
                let h = 2.0 * extent / r as f64;
                let mut best: f64 = 0.0;
                for k in 0..r {
                    for j in 0..r {
                        for i in 0..r {
                            if solid[i + r * (j + r * k)] {
                                // farthest corner of the voxel
                                let d2: f64 = [i, j, k]
                                    .iter()
                                    .map(|&t| {
                                        let lo = -extent + t as f64 * h;
                                        lo.abs().max((lo + h).abs()).powi(2)
                                    })
                                    .sum();
                                best = best.max(d2.sqrt());
                            }
                        }
                    }
                }
                best
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            HoleShape::Ball { rho } => *rho <= 0.0,
            HoleShape::Voxel { solid, .. } => !solid.iter().any(|s| *s),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            HoleShape::Ball { rho } => format!("ball(rho={rho})"),
            HoleShape::Voxel { extent, .. } => format!("voxel(extent={extent})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerforationSpec {
    pub epsilon: f64,
    pub alpha: f64,
    pub hole: HoleShape,
    #[serde(default)]
    pub x0: [f64; 3],
}

/// Number of cells `1/epsilon` if it is a positive integer (to 1e-9).
pub fn inverse_period(epsilon: f64) -> Option<usize> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return None;
    }
    let inv = 1.0 / epsilon;
    let r = inv.round();
    ((inv - r).abs() <= 1e-9 * inv).then_some(r as usize)
}

impl PerforationSpec {
    pub fn new(epsilon: f64, alpha: f64, hole: HoleShape) -> Self {
        Self {
            epsilon,
            alpha,
            hole,
            x0: [0.0; 3],
        }
    }

    pub fn with_offset(mut self, x0: [f64; 3]) -> Self {
        self.x0 = x0;
        self
    }

    /// Hard validity (errors): integer tiling, alpha range, offset range.
    pub fn check(&self) -> Result<usize> {
        let cells = inverse_period(self.epsilon).ok_or_else(|| {
            Error::InvalidSpec(format!("1/epsilon = {} is not a positive integer", 1.0 / self.epsilon))
        })?;
        if !(self.alpha > 1.0 && self.alpha < 3.0) {
            return Err(Error::InvalidSpec(format!("alpha = {} outside (1, 3)", self.alpha)));
        }
        if self.x0.iter().any(|x| !(*x > -0.5 && *x < 0.5)) {
            return Err(Error::InvalidSpec(format!("x0 = {:?} outside (-1/2, 1/2)^3", self.x0)));
        }
        Ok(cells)
    }

    pub fn cells_per_axis(&self) -> usize {
        inverse_period(self.epsilon).unwrap_or(0)
    }

    /// Physical scale factor of the holes, `epsilon^alpha`.
    pub fn hole_scale(&self) -> f64 {
        self.epsilon.powf(self.alpha)
    }

    /// Bounding radius of each hole in torus units.
    pub fn hole_radius(&self) -> f64 {
        self.hole_scale() * self.hole.bounding_radius()
    }

    /// Analytic solid volume fraction for ball holes.
    pub fn analytic_solid_fraction(&self) -> Option<f64> {
        match self.hole {
            HoleShape::Ball { rho } => {
                let cells = self.cells_per_axis() as f64;
                Some(cells.powi(3) * 4.0 / 3.0 * std::f64::consts::PI * (self.hole_scale() * rho).powi(3))
            }
            HoleShape::Voxel { .. } => None,
        }
    }

    /// Whether torus point `x` lies in a hole.
    pub fn in_hole(&self, x: [f64; 3]) -> bool {
        let e = self.epsilon;
        let s = self.hole_scale();
        let mut y = [0.0; 3];
        for a in 0..3 {
            let rel = x[a] / e - self.x0[a];
            y[a] = (rel - rel.round()) * e / s;
        }
        self.hole.contains(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Smallest admissible `n` (multiple of `1/epsilon`) resolving the hole with 4 cells per diameter.
    pub fn required_for(spec: &PerforationSpec) -> usize {
        let cells = spec.cells_per_axis().max(1);
        let r = spec.hole_radius();
        if r <= 0.0 {
            return cells;
        }
        let n_min = (2.0 / r).ceil() as usize;
        n_min.div_ceil(cells) * cells
    }
}

/// Part of the torus on which fields are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// The whole unit torus.
    #[default]
    Full,
    /// `[0,1]` along `axis` times one period `epsilon` along the other two axes.
    Slab { axis: usize },
    /// The single period cell `[0, epsilon]^3`.
    Cell,
}

impl Window {
    pub fn grid(&self, n: usize, epsilon: f64) -> Grid {
        let h = 1.0 / n as f64;
        match *self {
            Window::Full => Grid::uniform([n, n, n], h),
            Window::Slab { axis } => {
                let m = (n as f64 * epsilon).round() as usize;
                let mut dims = [m; 3];
                dims[axis] = n;
                Grid::uniform(dims, h)
            }
            Window::Cell => {
                let m = (n as f64 * epsilon).round() as usize;
                Grid::uniform([m; 3], h)
            }
        }
    }

    /// Volume of the window relative to the torus.
    pub fn fraction(&self, epsilon: f64) -> f64 {
        match self {
            Window::Full => 1.0,
            Window::Slab { .. } => epsilon * epsilon,
            Window::Cell => epsilon.powi(3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DomainMask {
    pub grid: Grid,
    pub window: Window,
    pub epsilon: f64,
    /// Solid indicator per cell.
    pub solid: Vec<bool>,
    /// Solid indicator per face (`3 * len`): true iff an adjacent cell is solid.
    pub face_solid: Vec<bool>,
    pub porosity: f64,
    /// Number of holes on the whole torus.
    pub holes: usize,
}

impl DomainMask {
    pub fn from_solid(grid: Grid, window: Window, epsilon: f64, solid: Vec<bool>, holes: usize) -> Self {
        let n = grid.len();
        let mut face_solid = vec![false; 3 * n];
        for_each_cell(&grid, |q, c| {
            for a in 0..3 {
                face_solid[a * n + q] = solid[q] || solid[grid.prev(a, q, c[a])];
            }
        });
        let mut fluid = 0.0;
        let mut total = 0.0;
        for_each_cell(&grid, |q, c| {
            let v = grid.cell_volume(c);
            total += v;
            if !solid[q] {
                fluid += v;
            }
        });
        Self {
            grid,
            window,
            epsilon,
            solid,
            face_solid,
            porosity: fluid / total,
            holes,
        }
    }

    pub fn solid_cells(&self) -> usize {
        self.solid.iter().filter(|s| **s).count()
    }

    pub fn fluid(&self) -> Vec<bool> {
        self.solid.iter().map(|s| !s).collect()
    }

    /// Persist as `<stem>.bin` (one byte per cell, 0 fluid, 1 solid, x fastest) and `<stem>.json`.
    pub fn save(&self, stem: &Path, spec: &PerforationSpec) -> Result<()> {
        let bytes: Vec<u8> = self.solid.iter().map(|s| *s as u8).collect();
        std::fs::write(stem.with_extension("bin"), bytes)?;
        let header = MaskHeader {
            n: match self.window {
                Window::Full => self.grid.dims()[0],
                Window::Slab { axis } => self.grid.dims()[axis],
                Window::Cell => (self.grid.dims()[0] as f64 / self.epsilon).round() as usize,
            },
            dims: self.grid.dims(),
            epsilon: spec.epsilon,
            alpha: spec.alpha,
            x0: spec.x0,
            shape: spec.hole.describe(),
            window: self.window,
        };
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<(MaskHeader, Self)> {
        let header: MaskHeader = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let bytes = std::fs::read(stem.with_extension("bin"))?;
        let len: usize = header.dims.iter().product();
        if bytes.len() != len {
            return Err(Error::GridMismatch(format!(
                "mask has {} bytes, header implies {len}",
                bytes.len()
            )));
        }
        let grid = Grid::uniform(header.dims, 1.0 / header.n as f64);
        let solid = bytes.iter().map(|b| *b != 0).collect();
        let holes = inverse_period(header.epsilon).map(|c| c.pow(3)).unwrap_or(0);
        let mask = DomainMask::from_solid(grid, header.window, header.epsilon, solid, holes);
        Ok((header, mask))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub n: usize,
    pub dims: [usize; 3],
    pub epsilon: f64,
    pub alpha: f64,
    pub x0: [f64; 3],
    pub shape: String,
    #[serde(default)]
    pub window: Window,
}

/// Hole centers `epsilon (x0 + k) mod 1` for `k` in `{0..1/epsilon}^3`.
pub fn hole_centers(spec: &PerforationSpec) -> Result<Vec<[f64; 3]>> {
    let cells = spec.check()?;
    let e = spec.epsilon;
    let mut out = Vec::with_capacity(cells.pow(3));
    for k in 0..cells {
        for j in 0..cells {
            for i in 0..cells {
                let c = [i, j, k];
                out.push([0, 1, 2].map(|a| (e * (spec.x0[a] + c[a] as f64)).rem_euclid(1.0)));
            }
        }
    }
    Ok(out)
}

/// Voxelize the full torus at `n` cells per axis.
pub fn build_mask(spec: &PerforationSpec, grid: GridSpec) -> Result<DomainMask> {
    build_mask_window(spec, grid, Window::Full)
}

pub fn build_mask_window(spec: &PerforationSpec, grid: GridSpec, window: Window) -> Result<DomainMask> {
    let cells = spec.check()?;
    if grid.n == 0 || grid.n % cells != 0 {
        return Err(Error::InvalidSpec(format!(
            "n = {} is not a multiple of 1/epsilon = {cells}",
            grid.n
        )));
    }
    let radius = spec.hole_radius();
    if radius > 0.0 {
        if radius > 0.375 * spec.epsilon {
            return Err(Error::InvalidSpec(format!(
                "hole radius {radius:.4e} leaves less than epsilon/8 to the cell boundary (epsilon = {})",
                spec.epsilon
            )));
        }
        if 2.0 * radius < 4.0 * grid.h() {
            return Err(Error::Unresolved {
                cells: 2.0 * radius / grid.h(),
                required_n: GridSpec::required_for(spec),
            });
        }
    }
    let g = window.grid(grid.n, spec.epsilon);
    let mut solid = vec![false; g.len()];
    if radius > 0.0 {
        for_each_cell(&g, |q, c| solid[q] = spec.in_hole(g.cell_center(c)));
    }
    Ok(DomainMask::from_solid(g, window, spec.epsilon, solid, cells.pow(3)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    Tiling { n: usize, cells: f64 },
    NonIntegerPeriod { inverse: f64 },
    AlphaRange { alpha: f64 },
    Offset { x0: [f64; 3] },
    Containment { radius: f64 },
    Separation { radius: f64, limit: f64 },
    Resolvability { diameter_cells: f64, required_n: usize },
}

/// Report every violated invariant of `(spec, grid)`; empty iff valid.
pub fn validate_spec(spec: &PerforationSpec, grid: GridSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let cells = inverse_period(spec.epsilon);
    match cells {
        None => out.push(Violation::NonIntegerPeriod {
            inverse: 1.0 / spec.epsilon,
        }),
        Some(c) => {
            if grid.n == 0 || grid.n % c != 0 {
                out.push(Violation::Tiling {
                    n: grid.n,
                    cells: grid.n as f64 * spec.epsilon,
                });
            }
        }
    }
    if !(spec.alpha > 1.0 && spec.alpha < 3.0) {
        out.push(Violation::AlphaRange { alpha: spec.alpha });
    }
    if spec.x0.iter().any(|x| !(*x > -0.5 && *x < 0.5)) {
        out.push(Violation::Offset { x0: spec.x0 });
    }
    let rb = spec.hole.bounding_radius();
    if rb > CONTAINMENT_RADIUS + 1e-12 {
        out.push(Violation::Containment { radius: rb });
    }
    let radius = spec.hole_radius();
    if radius > 0.0 {
        if radius > 0.375 * spec.epsilon {
            out.push(Violation::Separation {
                radius,
                limit: 0.375 * spec.epsilon,
            });
        }
        if cells.is_some() && 2.0 * radius < 4.0 * grid.h() {
            out.push(Violation::Resolvability {
                diameter_cells: 2.0 * radius / grid.h(),
                required_n: GridSpec::required_for(spec),
            });
        }
    }
    out
}
