//! Aggregation multigrid for 7-point symmetric operators on periodic structured grids.
//!
//! A [`Stencil7`] stores the quadratic form `sum_links k (x_i - x_j)^2 + sum_i m_i x_i^2`
//! on a periodic `nx * ny * nz` lattice. Coarse levels aggregate 2x2x2 blocks
//! (pairs along axes that are still longer than one node), which keeps the
//! 7-point structure. The Galerkin Laplacian part is scaled by a constant
//! factor to compensate for piecewise-constant prolongation.

use crate::mesh::{for_each_cell, wrap, Grid};

#[derive(Debug, Clone)]
pub struct Stencil7 {
    pub dims: [usize; 3],
    /// Coupling to the next node along each axis (periodic wrap included).
    pub link: [Vec<f64>; 3],
    /// Couplings to fixed (Dirichlet) neighbours, folded onto the diagonal.
    pub bound: Vec<f64>,
    /// Zero-order mass term on the diagonal.
    pub mass: Vec<f64>,
    pub active: Vec<bool>,
    /// Lattice has a constant null space (no zero-order term anywhere).
    pub singular: bool,
    diag: Vec<f64>,
    inv_diag: Vec<f64>,
}

#[inline]
fn lin(d: [usize; 3], i: usize, j: usize, k: usize) -> usize {
    i + d[0] * (j + d[1] * k)
}

impl Stencil7 {
    /// Links touching inactive nodes must already be folded into `bound`.
    pub fn new(
        dims: [usize; 3],
        mut link: [Vec<f64>; 3],
        bound: Vec<f64>,
        mass: Vec<f64>,
        active: Vec<bool>,
    ) -> Self {
        let len = dims[0] * dims[1] * dims[2];
        for a in 0..3 {
            if dims[a] == 1 {
                link[a].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut diag: Vec<f64> = bound.iter().zip(&mass).map(|(b, m)| b + m).collect();
        let mut st = Self {
            dims,
            link,
            bound,
            mass,
            active,
            singular: false,
            diag: Vec::new(),
            inv_diag: Vec::new(),
        };
        for q in 0..len {
            if !st.active[q] {
                continue;
            }
            let c = st.coords(q);
            for a in 0..3 {
                if dims[a] == 1 {
                    continue;
                }
                let qp = st.prev(a, q, c[a]);
                diag[q] += st.link[a][q] + st.link[a][qp];
            }
        }
        for q in 0..len {
            if !st.active[q] {
                diag[q] = 1.0;
            }
        }
        st.singular = (0..len).all(|q| !st.active[q] || st.bound[q] + st.mass[q] == 0.0);
        st.inv_diag = diag.iter().map(|d| 1.0 / d).collect();
        st.diag = diag;
        st
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn coords(&self, q: usize) -> [usize; 3] {
        let i = q % self.dims[0];
        let r = q / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    fn stride(&self, a: usize) -> usize {
        match a {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    #[inline]
    fn next(&self, a: usize, q: usize, ia: usize) -> usize {
        if ia + 1 == self.dims[a] {
            q + self.stride(a) - self.dims[a] * self.stride(a)
        } else {
            q + self.stride(a)
        }
    }

    #[inline]
    fn prev(&self, a: usize, q: usize, ia: usize) -> usize {
        if ia == 0 {
            q + (self.dims[a] - 1) * self.stride(a)
        } else {
            q - self.stride(a)
        }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `y = A x` on active nodes; inactive entries of `y` are zero.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [nx, ny, nz] = self.dims;
        let [l0, l1, l2] = [&self.link[0], &self.link[1], &self.link[2]];
        for k in 0..nz {
            let (kn, kp) = wrap(k, nz);
            for j in 0..ny {
                let (jn, jp) = wrap(j, ny);
                let base = nx * (j + ny * k);
                let (rjn, rjp) = (nx * (jn + ny * k), nx * (jp + ny * k));
                let (rkn, rkp) = (nx * (j + ny * kn), nx * (j + ny * kp));
                for i in 0..nx {
                    let q = base + i;
                    if !self.active[q] {
                        y[q] = 0.0;
                        continue;
                    }
                    let (inx, ipv) = wrap(i, nx);
                    let (qxp, qyp, qzp) = (base + ipv, rjp + i, rkp + i);
                    y[q] = self.diag[q] * x[q]
                        - l0[q] * x[base + inx]
                        - l0[qxp] * x[qxp]
                        - l1[q] * x[rjn + i]
                        - l1[qyp] * x[qyp]
                        - l2[q] * x[rkn + i]
                        - l2[qzp] * x[qzp];
                }
            }
        }
    }

    fn gs_sweep(&self, b: &[f64], x: &mut [f64], forward: bool) {
        let [nx, ny, nz] = self.dims;
        let [l0, l1, l2] = [&self.link[0], &self.link[1], &self.link[2]];
        for kk in 0..nz {
            let k = if forward { kk } else { nz - 1 - kk };
            let (kn, kp) = wrap(k, nz);
            for jj in 0..ny {
                let j = if forward { jj } else { ny - 1 - jj };
                let (jn, jp) = wrap(j, ny);
                let base = nx * (j + ny * k);
                let (rjn, rjp) = (nx * (jn + ny * k), nx * (jp + ny * k));
                let (rkn, rkp) = (nx * (j + ny * kn), nx * (j + ny * kp));
                for ii in 0..nx {
                    let i = if forward { ii } else { nx - 1 - ii };
                    let q = base + i;
                    if !self.active[q] {
                        continue;
                    }
                    let (inx, ipv) = wrap(i, nx);
                    let (qxp, qyp, qzp) = (base + ipv, rjp + i, rkp + i);
                    let s = b[q]
                        + l0[q] * x[base + inx]
                        + l0[qxp] * x[qxp]
                        + l1[q] * x[rjn + i]
                        + l1[qyp] * x[qyp]
                        + l2[q] * x[rkn + i]
                        + l2[qzp] * x[qzp];
                    x[q] = s * self.inv_diag[q];
                }
            }
        }
    }

    fn coarsen(&self, scale: f64) -> Option<(Stencil7, [bool; 3])> {
        let mut cdims = self.dims;
        let mut split = [false; 3];
        for a in 0..3 {
            if self.dims[a] >= 2 {
                cdims[a] = self.dims[a].div_ceil(2);
                split[a] = true;
            }
        }
        if !split.iter().any(|s| *s) {
            return None;
        }
        let clen = cdims[0] * cdims[1] * cdims[2];
        let agg = |c: [usize; 3]| -> usize {
            let mut cc = c;
            for a in 0..3 {
                if split[a] {
                    cc[a] /= 2;
                }
            }
            lin(cdims, cc[0], cc[1], cc[2])
        };
        let mut active = vec![false; clen];
        let mut bound = vec![0.0; clen];
        let mut mass = vec![0.0; clen];
        let mut link = [vec![0.0; clen], vec![0.0; clen], vec![0.0; clen]];
        for q in 0..self.len() {
            if !self.active[q] {
                continue;
            }
            let c = self.coords(q);
            let cq = agg(c);
            active[cq] = true;
            bound[cq] += scale * self.bound[q];
            mass[cq] += self.mass[q];
            for a in 0..3 {
                if self.dims[a] == 1 {
                    continue;
                }
                let k = self.link[a][q];
                if k == 0.0 {
                    continue;
                }
                let qn = self.next(a, q, c[a]);
                // links inside an aggregate drop out of the aggregated form
                if agg(self.coords(qn)) != cq {
                    link[a][cq] += scale * k;
                }
            }
        }
        Some((Stencil7::new(cdims, link, bound, mass, active), split))
    }
}

/// Dense Cholesky of the active part of a small stencil.
struct DenseSolver {
    map: Vec<usize>,
    l: Vec<f64>,
    m: usize,
    singular: bool,
}

impl DenseSolver {
    fn new(st: &Stencil7) -> Self {
        let map: Vec<usize> = (0..st.len()).filter(|&q| st.active[q]).collect();
        let m = map.len();
        let mut pos = vec![usize::MAX; st.len()];
        for (r, &q) in map.iter().enumerate() {
            pos[q] = r;
        }
        let mut a = vec![0.0; m * m];
        let mut e = vec![0.0; st.len()];
        let mut col = vec![0.0; st.len()];
        for (r, &q) in map.iter().enumerate() {
            e[q] = 1.0;
            st.apply(&e, &mut col);
            for (s, &p) in map.iter().enumerate() {
                a[s * m + r] = col[p];
            }
            e[q] = 0.0;
        }
        let trace: f64 = (0..m).map(|i| a[i * m + i]).sum::<f64>() / m.max(1) as f64;
        if st.singular {
            for i in 0..m {
                a[i * m + i] += 1e-10 * trace;
            }
        }
        // in-place lower Cholesky
        for j in 0..m {
            let mut d = a[j * m + j];
            for k in 0..j {
                d -= a[j * m + k] * a[j * m + k];
            }
            let d = d.max(1e-300).sqrt();
            a[j * m + j] = d;
            for i in j + 1..m {
                let mut s = a[i * m + j];
                for k in 0..j {
                    s -= a[i * m + k] * a[j * m + k];
                }
                a[i * m + j] = s / d;
            }
        }
        Self {
            map,
            l: a,
            m,
            singular: st.singular,
        }
    }

    fn solve(&self, b: &[f64], x: &mut [f64]) {
        let m = self.m;
        let mut y: Vec<f64> = self.map.iter().map(|&q| b[q]).collect();
        if self.singular && m > 0 {
            let mean = y.iter().sum::<f64>() / m as f64;
            y.iter_mut().for_each(|v| *v -= mean);
        }
        for i in 0..m {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * m + k] * y[k];
            }
            y[i] = s / self.l[i * m + i];
        }
        for i in (0..m).rev() {
            let mut s = y[i];
            for k in i + 1..m {
                s -= self.l[k * m + i] * y[k];
            }
            y[i] = s / self.l[i * m + i];
        }
        if self.singular && m > 0 {
            let mean = y.iter().sum::<f64>() / m as f64;
            y.iter_mut().for_each(|v| *v -= mean);
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        for (r, &q) in self.map.iter().enumerate() {
            x[q] = y[r];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MgOptions {
    pub pre: usize,
    pub post: usize,
    /// Scaling of aggregated couplings (0.5 for 2x coarsening of a Laplacian).
    pub coarse_scale: f64,
    pub coarsest: usize,
}

impl Default for MgOptions {
    fn default() -> Self {
        Self {
            pre: 2,
            post: 2,
            coarse_scale: 0.5,
            coarsest: 600,
        }
    }
}

/// Multigrid hierarchy acting as a fixed symmetric preconditioner (one V-cycle).
pub struct Multigrid {
    levels: Vec<Stencil7>,
    splits: Vec<[bool; 3]>,
    coarse: Option<DenseSolver>,
    opts: MgOptions,
    work: std::cell::RefCell<Vec<[Vec<f64>; 3]>>,
}

impl Multigrid {
    pub fn new(fine: Stencil7, opts: MgOptions) -> Self {
        let mut levels = vec![fine];
        let mut splits = Vec::new();
        loop {
            let last = levels.last().unwrap();
            let nact = last.active.iter().filter(|a| **a).count();
            if nact <= opts.coarsest {
                break;
            }
            match last.coarsen(opts.coarse_scale) {
                Some((c, s)) => {
                    levels.push(c);
                    splits.push(s);
                }
                None => break,
            }
        }
        let last = levels.last().unwrap();
        let nact = last.active.iter().filter(|a| **a).count();
        let coarse = (nact <= 4 * opts.coarsest).then(|| DenseSolver::new(last));
        let work = levels
            .iter()
            .map(|l| [vec![0.0; l.len()], vec![0.0; l.len()], vec![0.0; l.len()]])
            .collect();
        Self {
            levels,
            splits,
            coarse,
            opts,
            work: std::cell::RefCell::new(work),
        }
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn fine(&self) -> &Stencil7 {
        &self.levels[0]
    }

    /// One V-cycle from a zero initial guess: `x ~ A^{-1} b`.
    pub fn apply(&self, b: &[f64], x: &mut [f64]) {
        let mut work = self.work.borrow_mut();
        work[0][0].copy_from_slice(b);
        self.cycle(0, &mut work);
        x.copy_from_slice(&work[0][1]);
    }

    fn cycle(&self, lvl: usize, work: &mut [[Vec<f64>; 3]]) {
        let st = &self.levels[lvl];
        {
            let w = &mut work[lvl];
            w[1].iter_mut().for_each(|v| *v = 0.0);
        }
        if lvl + 1 == self.levels.len() {
            let w = &mut work[lvl];
            let (b, rest) = w.split_at_mut(1);
            match &self.coarse {
                Some(ds) => ds.solve(&b[0], &mut rest[0]),
                None => {
                    for _ in 0..20 {
                        st.gs_sweep(&b[0], &mut rest[0], true);
                        st.gs_sweep(&b[0], &mut rest[0], false);
                    }
                }
            }
            return;
        }
        {
            let w = &mut work[lvl];
            let (b, rest) = w.split_at_mut(1);
            for _ in 0..self.opts.pre {
                st.gs_sweep(&b[0], &mut rest[0], true);
            }
            let (x, r) = rest.split_at_mut(1);
            st.apply(&x[0], &mut r[0]);
            for q in 0..st.len() {
                r[0][q] = if st.active[q] { b[0][q] - r[0][q] } else { 0.0 };
            }
        }
        // restrict
        let split = self.splits[lvl];
        let cdims = self.levels[lvl + 1].dims;
        {
            let (lo, hi) = work.split_at_mut(lvl + 1);
            let r = &lo[lvl][2];
            let cb = &mut hi[0][0];
            cb.iter_mut().for_each(|v| *v = 0.0);
            let d = st.dims;
            let mut q = 0;
            for k in 0..d[2] {
                for j in 0..d[1] {
                    for i in 0..d[0] {
                        let c = aggregate(split, [i, j, k]);
                        cb[lin(cdims, c[0], c[1], c[2])] += r[q];
                        q += 1;
                    }
                }
            }
        }
        self.cycle(lvl + 1, work);
        {
            let (lo, hi) = work.split_at_mut(lvl + 1);
            let xc = &hi[0][1];
            let x = &mut lo[lvl][1];
            let d = st.dims;
            let mut q = 0;
            for k in 0..d[2] {
                for j in 0..d[1] {
                    for i in 0..d[0] {
                        if st.active[q] {
                            let c = aggregate(split, [i, j, k]);
                            x[q] += xc[lin(cdims, c[0], c[1], c[2])];
                        }
                        q += 1;
                    }
                }
            }
        }
        let w = &mut work[lvl];
        let (b, rest) = w.split_at_mut(1);
        for _ in 0..self.opts.post {
            st.gs_sweep(&b[0], &mut rest[0], false);
        }
    }
}

#[inline]
fn aggregate(split: [bool; 3], c: [usize; 3]) -> [usize; 3] {
    let mut out = c;
    for a in 0..3 {
        if split[a] {
            out[a] /= 2;
        }
    }
    out
}

/// Scalar operator `1/2 int nu |grad u_comp|^2 + sigma int u_comp^2` for one velocity component.
///
/// `fixed` marks faces that are not unknowns (length `3 * len`).
pub fn component_operator(
    grid: &Grid,
    comp: usize,
    fixed: &[bool],
    nu: &[f64],
    nu_edge: &[Vec<f64>; 3],
    sigma: f64,
) -> Stencil7 {
    let n = grid.len();
    let dims = grid.dims();
    let off = comp * n;
    let mut link = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut bound = vec![0.0; n];
    let mut mass = vec![0.0; n];
    let active: Vec<bool> = (0..n).map(|q| !fixed[off + q]).collect();
    for_each_cell(grid, |q, c| {
        if sigma != 0.0 && active[q] {
            mass[q] += sigma * grid.face_volume(comp, c);
        }
        for a in 0..3 {
            if dims[a] == 1 {
                continue;
            }
            let qn = grid.next(a, q, c[a]);
            let k = if a == comp {
                let w = grid.axis(a).width(c[a]);
                0.5 * grid.cell_volume(c) * nu[q] / (w * w)
            } else {
                let cn = grid.coords(qn);
                let e = crate::mesh::edge_of(comp, a);
                let g = grid.axis(a).center_gap(cn[a]);
                0.5 * grid.edge_volume(e, cn) * nu_edge[e][qn] / (g * g)
            };
            match (active[q], active[qn]) {
                (true, true) => link[a][q] = k,
                (true, false) => bound[q] += k,
                (false, true) => bound[qn] += k,
                (false, false) => {}
            }
        }
    });
    Stencil7::new(dims, link, bound, mass, active)
}

/// Cell-centered scalar Laplacian `int coef |grad phi|^2` with homogeneous Dirichlet data on inactive cells,
/// plus `mass * int phi^2`.
pub fn cell_laplacian(grid: &Grid, active: &[bool], mass: f64) -> Stencil7 {
    let n = grid.len();
    let dims = grid.dims();
    let mut link = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut bound = vec![0.0; n];
    let mut diag_mass = vec![0.0; n];
    for_each_cell(grid, |q, c| {
        if mass != 0.0 && active[q] {
            diag_mass[q] += mass * grid.cell_volume(c);
        }
        for a in 0..3 {
            if dims[a] == 1 {
                continue;
            }
            let qn = grid.next(a, q, c[a]);
            let cn = grid.coords(qn);
            let g = grid.axis(a).center_gap(cn[a]);
            let k = grid.face_area(a, c) / g;
            match (active[q], active[qn]) {
                (true, true) => link[a][q] = k,
                (true, false) => bound[q] += k,
                (false, true) => bound[qn] += k,
                (false, false) => {}
            }
        }
    });
    Stencil7::new(dims, link, bound, diag_mass, active.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::krylov::pcg;

    fn poisson(n: usize, holes: bool) -> Stencil7 {
        let g = Grid::uniform([n, n, n], 1.0 / n as f64);
        let active: Vec<bool> = (0..g.len())
            .map(|q| {
                let c = g.coords(q);
                !(holes && c.iter().all(|&i| i % 8 == 0))
            })
            .collect();
        cell_laplacian(&g, &active, 0.0)
    }

    #[test]
    fn apply_is_symmetric() {
        let st = poisson(8, true);
        let n = st.len();
        let x: Vec<f64> = (0..n).map(|i| ((i * 37) % 17) as f64 - 8.0).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let mut ax = vec![0.0; n];
        let mut ay = vec![0.0; n];
        st.apply(&x, &mut ax);
        st.apply(&y, &mut ay);
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter().zip(&st.active).map(|(v, a)| if *a { *v } else { 0.0 }).collect()
        };
        let (x, y) = (mask(&x), mask(&y));
        let l: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let r: f64 = ay.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((l - r).abs() < 1e-9 * l.abs().max(1.0));
    }

    #[test]
    fn vcycle_preconditioned_cg_is_fast() {
        let st = poisson(32, true);
        let n = st.len();
        let b: Vec<f64> = (0..n)
            .map(|q| if st.active[q] { ((q * 7919) % 101) as f64 / 50.0 - 1.0 } else { 0.0 })
            .collect();
        let mg = Multigrid::new(st.clone(), MgOptions::default());
        assert!(mg.levels() >= 3);
        let mut x = vec![0.0; n];
        let stats = pcg(
            &mut |x, y| st.apply(x, y),
            &mut |r, z| mg.apply(r, z),
            &b,
            &mut x,
            1e-10,
            200,
        )
        .unwrap();
        assert!(stats.iterations < 40, "{} iterations", stats.iterations);
    }

    #[test]
    fn singular_periodic_problem_is_handled() {
        let st = poisson(16, false);
        assert!(st.singular);
        let n = st.len();
        let mut b: Vec<f64> = (0..n).map(|q| ((q * 31) % 13) as f64).collect();
        let m = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= m);
        let mg = Multigrid::new(st.clone(), MgOptions::default());
        let mut x = vec![0.0; n];
        let stats = pcg(
            &mut |x, y| st.apply(x, y),
            &mut |r, z| {
                mg.apply(r, z);
                let m = z.iter().sum::<f64>() / z.len() as f64;
                z.iter_mut().for_each(|v| *v -= m);
            },
            &b,
            &mut x,
            1e-10,
            200,
        )
        .unwrap();
        assert!(stats.iterations < 40, "{}", stats.iterations);
    }
}
