//! Linear Stokes saddle-point solves on MAC grids with fixed (Dirichlet) faces.
//!
//! Solves `(A_nu + sigma M) u + grad p = F`, `div u = g` where `A_nu` is the
//! strain operator `u . A v = sum nu D(u):D(v)`. Faces flagged as fixed keep
//! prescribed values; a cell carries a pressure unknown iff at least one of
//! its faces is free.

use crate::error::{Error, Result};
use crate::linalg::krylov::{self, KrylovStats};
use crate::linalg::multigrid::{component_operator, MgOptions, Multigrid};
use crate::linalg::spectral::PeriodicPoisson;
use crate::mesh::{for_each_cell, Grid};
use crate::ops;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SaddleMethod {
    /// Block-diagonal preconditioned MINRES on the full system.
    #[default]
    Minres,
    /// Conjugate gradients on the pressure Schur complement with inner velocity solves.
    SchurCg,
}

#[derive(Debug, Clone)]
pub struct StokesSystem {
    pub grid: Grid,
    pub fixed: Vec<bool>,
    pub active_cell: Vec<bool>,
    /// Mass coefficient (e.g. `eps^lambda / dt`).
    pub sigma: f64,
    /// Effective zero-order resistance used only by the pressure preconditioner.
    pub friction: f64,
    pub method: SaddleMethod,
    pub mg: MgOptions,
    poisson: Option<std::sync::Arc<PeriodicPoisson>>,
    velocity_null: [bool; 3],
    cell_volume: Vec<f64>,
    face_volume: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StokesSolution {
    /// Face velocities including fixed values.
    pub u: Vec<f64>,
    /// Cell pressures, zero on inactive cells, zero volume-mean over active cells.
    pub p: Vec<f64>,
    pub stats: KrylovStats,
}

impl StokesSystem {
    pub fn new(grid: Grid, fixed: Vec<bool>) -> Self {
        let n = grid.len();
        let mut active_cell = vec![false; n];
        for_each_cell(&grid, |q, c| {
            active_cell[q] = (0..3).any(|a| !fixed[a * n + q] || !fixed[a * n + grid.next(a, q, c[a])]);
        });
        let mut velocity_null = [false; 3];
        for (a, vn) in velocity_null.iter_mut().enumerate() {
            *vn = !fixed[a * n..(a + 1) * n].iter().any(|f| *f);
        }
        let cell_volume = grid.cell_volumes();
        let face_volume = grid.face_volumes();
        Self {
            grid,
            fixed,
            active_cell,
            sigma: 0.0,
            friction: 0.0,
            method: SaddleMethod::Minres,
            mg: MgOptions::default(),
            poisson: None,
            velocity_null,
            cell_volume,
            face_volume,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.set_sigma(sigma);
        self
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        let n = self.grid.len();
        self.sigma = sigma;
        for a in 0..3 {
            self.velocity_null[a] = sigma == 0.0 && !self.fixed[a * n..(a + 1) * n].iter().any(|f| *f);
        }
    }

    /// Enable the spectral pressure preconditioner term with resistance `friction`.
    pub fn with_friction(mut self, friction: f64) -> Self {
        self.friction = friction;
        self
    }

    pub fn with_method(mut self, method: SaddleMethod) -> Self {
        self.method = method;
        self
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn face_volumes(&self) -> &[f64] {
        &self.face_volume
    }

    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volume
    }

    fn uniform_spacings(&self) -> Option<[f64; 3]> {
        let mut h = [0.0; 3];
        for (a, ha) in h.iter_mut().enumerate() {
            let ax = self.grid.axis(a);
            if !ax.is_uniform() {
                return None;
            }
            *ha = ax.width(0);
        }
        Some(h)
    }

    fn ensure_poisson(&mut self) {
        if self.poisson.is_none() && self.sigma + self.friction > 0.0 {
            if let Some(h) = self.uniform_spacings() {
                self.poisson = Some(std::sync::Arc::new(PeriodicPoisson::new(self.grid.dims(), h)));
            }
        }
    }

    /// `y = (A + sigma M) u + grad p` on free faces and `-div u` on active cells.
    fn apply_full(&self, ctx: &Ctx, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        let (u, p) = x.split_at(3 * n);
        let (yu, yp) = y.split_at_mut(3 * n);
        ops::viscous_apply(&self.grid, ctx.nu, &ctx.nu_edge, u, yu);
        if self.sigma != 0.0 {
            for i in 0..3 * n {
                yu[i] += self.sigma * self.face_volume[i] * u[i];
            }
        }
        ops::add_gradient(&self.grid, p, 1.0, yu);
        for i in 0..3 * n {
            if self.fixed[i] {
                yu[i] = 0.0;
            }
        }
        ops::divergence(&self.grid, u, yp);
        for q in 0..n {
            yp[q] = if self.active_cell[q] { -yp[q] } else { 0.0 };
        }
    }

    fn apply_velocity(&self, ctx: &Ctx, u: &[f64], y: &mut [f64]) {
        let n = self.len();
        ops::viscous_apply(&self.grid, ctx.nu, &ctx.nu_edge, u, y);
        if self.sigma != 0.0 {
            for i in 0..3 * n {
                y[i] += self.sigma * self.face_volume[i] * u[i];
            }
        }
        for i in 0..3 * n {
            if self.fixed[i] {
                y[i] = 0.0;
            }
        }
    }

    fn project_velocity(&self, v: &mut [f64]) {
        let n = self.len();
        for a in 0..3 {
            if self.velocity_null[a] {
                let s = &mut v[a * n..(a + 1) * n];
                let m = s.iter().sum::<f64>() / n as f64;
                s.iter_mut().for_each(|x| *x -= m);
            }
        }
    }

    fn project_pressure(&self, p: &mut [f64]) {
        let cnt = self.active_cell.iter().filter(|a| **a).count().max(1);
        let m: f64 = p
            .iter()
            .zip(&self.active_cell)
            .filter(|(_, a)| **a)
            .map(|(v, _)| *v)
            .sum::<f64>()
            / cnt as f64;
        for (v, a) in p.iter_mut().zip(&self.active_cell) {
            *v = if *a { *v - m } else { 0.0 };
        }
    }

    fn velocity_prec(&self, ctx: &Ctx, r: &[f64], z: &mut [f64]) {
        let n = self.len();
        let mut rr = r.to_vec();
        self.project_velocity(&mut rr);
        for a in 0..3 {
            ctx.mg[a].apply(&rr[a * n..(a + 1) * n], &mut z[a * n..(a + 1) * n]);
        }
        self.project_velocity(z);
    }

    fn pressure_prec(&self, ctx: &Ctx, r: &[f64], z: &mut [f64]) {
        let n = self.len();
        let mut rr = r.to_vec();
        self.project_pressure(&mut rr);
        for q in 0..n {
            z[q] = if self.active_cell[q] {
                ctx.nu[q] * rr[q] / self.cell_volume[q]
            } else {
                0.0
            };
        }
        if let Some(pp) = &self.poisson {
            let s = self.sigma + self.friction;
            let mut t = vec![0.0; n];
            pp.solve(&rr, &mut t);
            for q in 0..n {
                if self.active_cell[q] {
                    z[q] += s * t[q];
                }
            }
        }
        self.project_pressure(z);
    }

    /// Solve with cell viscosity `nu` (length `len`), integrated momentum source `rhs`
    /// (length `3 len`), values on fixed faces `fixed_values` and integrated divergence target.
    #[allow(clippy::too_many_arguments)]
    pub fn solve(
        &mut self,
        nu: &[f64],
        rhs: &[f64],
        fixed_values: Option<&[f64]>,
        div_target: Option<&[f64]>,
        guess: Option<(&[f64], &[f64])>,
        tol: f64,
        max_iter: usize,
    ) -> Result<StokesSolution> {
        let n = self.len();
        if nu.len() != n || rhs.len() != 3 * n {
            return Err(Error::GridMismatch("stokes: field lengths do not match the grid".into()));
        }
        self.ensure_poisson();
        let ctx = Ctx::new(self, nu);

        // lift fixed values
        let mut lift = vec![0.0; 3 * n];
        if let Some(fv) = fixed_values {
            for i in 0..3 * n {
                if self.fixed[i] {
                    lift[i] = fv[i];
                }
            }
        }
        let mut b = vec![0.0; 4 * n];
        {
            let mut al = vec![0.0; 4 * n];
            let mut xl = vec![0.0; 4 * n];
            xl[..3 * n].copy_from_slice(&lift);
            // apply without masking the divergence of fixed data
            let (u, _) = xl.split_at(3 * n);
            let (yu, yp) = al.split_at_mut(3 * n);
            ops::viscous_apply(&self.grid, ctx.nu, &ctx.nu_edge, u, yu);
            if self.sigma != 0.0 {
                for i in 0..3 * n {
                    yu[i] += self.sigma * self.face_volume[i] * u[i];
                }
            }
            ops::divergence(&self.grid, u, yp);
            for i in 0..3 * n {
                b[i] = if self.fixed[i] { 0.0 } else { rhs[i] - al[i] };
            }
            for q in 0..n {
                if self.active_cell[q] {
                    let g = div_target.map_or(0.0, |t| t[q]);
                    // -div(u_free) = -(g - div(lift))
                    b[3 * n + q] = -(g - al[3 * n + q]);
                }
            }
        }
        {
            let (bu, bp) = b.split_at_mut(3 * n);
            self.project_velocity(bu);
            self.project_pressure(bp);
        }

        let mut x = vec![0.0; 4 * n];
        if let Some((u0, p0)) = guess {
            for i in 0..3 * n {
                if !self.fixed[i] {
                    x[i] = u0[i];
                }
            }
            x[3 * n..].copy_from_slice(p0);
            let (_, xp) = x.split_at_mut(3 * n);
            self.project_pressure(xp);
        }

        let stats = match self.method {
            SaddleMethod::Minres => krylov::minres(
                &mut |x, y| self.apply_full(&ctx, x, y),
                &mut |r, z| {
                    let (ru, rp) = r.split_at(3 * n);
                    let (zu, zp) = z.split_at_mut(3 * n);
                    self.velocity_prec(&ctx, ru, zu);
                    self.pressure_prec(&ctx, rp, zp);
                },
                &b,
                &mut x,
                tol,
                max_iter,
            )?,
            SaddleMethod::SchurCg => self.schur_cg(&ctx, &b, &mut x, tol, max_iter)?,
        };

        let (xu, xp) = x.split_at_mut(3 * n);
        let mut u = xu.to_vec();
        self.project_velocity(&mut u);
        for i in 0..3 * n {
            if self.fixed[i] {
                u[i] = lift[i];
            }
        }
        let mut p = xp.to_vec();
        self.gauge_pressure(&mut p);
        Ok(StokesSolution { u, p, stats })
    }

    /// Zero volume-weighted mean over active cells.
    pub fn gauge_pressure(&self, p: &mut [f64]) {
        let mut s = 0.0;
        let mut v = 0.0;
        for q in 0..self.len() {
            if self.active_cell[q] {
                s += self.cell_volume[q] * p[q];
                v += self.cell_volume[q];
            }
        }
        let m = if v > 0.0 { s / v } else { 0.0 };
        for q in 0..self.len() {
            p[q] = if self.active_cell[q] { p[q] - m } else { 0.0 };
        }
    }

    fn inner_velocity_solve(&self, ctx: &Ctx, r: &[f64], z: &mut [f64], tol: f64) -> Result<usize> {
        z.iter_mut().for_each(|v| *v = 0.0);
        let mut rr = r.to_vec();
        self.project_velocity(&mut rr);
        let st = krylov::pcg(
            &mut |x, y| {
                self.apply_velocity(ctx, x, y);
                self.project_velocity(y);
            },
            &mut |r, z| self.velocity_prec(ctx, r, z),
            &rr,
            z,
            tol,
            2000,
        )?;
        Ok(st.iterations)
    }

    /// Uzawa iteration accelerated by CG on `S = B A^{-1} B^T`.
    fn schur_cg(&self, ctx: &Ctx, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<KrylovStats> {
        let n = self.len();
        let (bu, bp) = b.split_at(3 * n);
        let inner = (tol * 1e-2).max(1e-14);
        // u0 = A^{-1} f ; Schur rhs = B u0 - g
        let mut u0 = vec![0.0; 3 * n];
        self.inner_velocity_solve(ctx, bu, &mut u0, inner)?;
        let mut rhs_p = vec![0.0; n];
        ops::divergence(&self.grid, &u0, &mut rhs_p);
        for q in 0..n {
            rhs_p[q] = if self.active_cell[q] { -rhs_p[q] - bp[q] } else { 0.0 };
        }
        self.project_pressure(&mut rhs_p);
        let mut failure: Option<Error> = None;
        let mut p = x[3 * n..].to_vec();
        let mut tmp = vec![0.0; 3 * n];
        let mut w = vec![0.0; 3 * n];
        let stats = krylov::pcg(
            &mut |p, y| {
                tmp.iter_mut().for_each(|v| *v = 0.0);
                ops::add_gradient(&self.grid, p, 1.0, &mut tmp);
                for i in 0..3 * n {
                    if self.fixed[i] {
                        tmp[i] = 0.0;
                    }
                }
                if let Err(e) = self.inner_velocity_solve(ctx, &tmp, &mut w, inner) {
                    failure.get_or_insert(e);
                }
                ops::divergence(&self.grid, &w, y);
                for q in 0..n {
                    y[q] = if self.active_cell[q] { -y[q] } else { 0.0 };
                }
                self.project_pressure(y);
            },
            &mut |r, z| self.pressure_prec(ctx, r, z),
            &rhs_p,
            &mut p,
            tol,
            max_iter,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let stats = stats?;
        // u = A^{-1}(f - B^T p)
        let mut f = bu.to_vec();
        tmp.iter_mut().for_each(|v| *v = 0.0);
        ops::add_gradient(&self.grid, &p, 1.0, &mut tmp);
        for i in 0..3 * n {
            f[i] = if self.fixed[i] { 0.0 } else { f[i] - tmp[i] };
        }
        let mut u = vec![0.0; 3 * n];
        self.inner_velocity_solve(ctx, &f, &mut u, inner)?;
        x[..3 * n].copy_from_slice(&u);
        x[3 * n..].copy_from_slice(&p);
        Ok(stats)
    }

    /// Euclidean residual norms `(momentum, continuity)` of a solution, relative to `rhs`.
    pub fn residual(
        &self,
        nu: &[f64],
        rhs: &[f64],
        sol: &StokesSolution,
        div_target: Option<&[f64]>,
    ) -> (f64, f64) {
        let n = self.len();
        let ne = ops::edge_viscosity(&self.grid, nu);
        let mut y = vec![0.0; 3 * n];
        ops::viscous_apply(&self.grid, nu, &ne, &sol.u, &mut y);
        ops::add_gradient(&self.grid, &sol.p, 1.0, &mut y);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..3 * n {
            if !self.fixed[i] {
                let r = rhs[i] - y[i] - self.sigma * self.face_volume[i] * sol.u[i];
                num += r * r / self.face_volume[i];
                den += rhs[i] * rhs[i] / self.face_volume[i];
            }
        }
        let mut d = vec![0.0; n];
        ops::divergence(&self.grid, &sol.u, &mut d);
        let mut dn = 0.0;
        for q in 0..n {
            if self.active_cell[q] {
                let r = d[q] - div_target.map_or(0.0, |t| t[q]);
                dn += r * r / self.cell_volume[q];
            }
        }
        let scale = den.sqrt().max(f64::MIN_POSITIVE);
        (num.sqrt() / scale, dn.sqrt() / scale)
    }
}

struct Ctx<'a> {
    nu: &'a [f64],
    nu_edge: [Vec<f64>; 3],
    mg: [Multigrid; 3],
}

impl<'a> Ctx<'a> {
    fn new(sys: &StokesSystem, nu: &'a [f64]) -> Self {
        let nu_edge = ops::edge_viscosity(&sys.grid, nu);
        let mg = [0, 1, 2].map(|a| {
            let st = component_operator(&sys.grid, a, &sys.fixed, nu, &nu_edge, sys.sigma);
            Multigrid::new(st, sys.mg)
        });
        Self { nu, nu_edge, mg }
    }
}
