//! Matrix-free MAC operators in integrated (finite-volume) form.
//!
//! All operators act on full-grid arrays: face fields have length `3 * len`,
//! cell fields length `len`. Values are "integrated": a momentum residual
//! entry carries the units of force density times the face control volume.

use crate::mesh::{for_each_cell, for_each_row, other_axes, wrap, Grid, EDGE_PAIRS};

/// Weighted divergence: `out[q] = sum_a A_a (u_a[next_a q] - u_a[q])`.
pub fn divergence(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let n = grid.len();
    let nx = grid.dims()[0];
    let (u0, rest) = u.split_at(n);
    let (u1, u2) = rest.split_at(n);
    let [w0, w1, w2] = [0, 1, 2].map(|a| grid.axis(a).widths());
    for_each_row(grid, |r| {
        let (wy, wz) = (w1[r.j], w2[r.k]);
        for i in 0..nx {
            let q = r.base + i;
            let (inx, _) = wrap(i, nx);
            out[q] = wy * wz * (u0[r.base + inx] - u0[q])
                + w0[i] * wz * (u1[r.jn + i] - u1[q])
                + w0[i] * wy * (u2[r.kn + i] - u2[q]);
        }
    });
}

/// Adds `scale * grad p` in integrated form: face `(a, q)` gets `A_a (p[q] - p[prev_a q])`.
/// This is minus the transpose of [`divergence`].
pub fn add_gradient(grid: &Grid, p: &[f64], scale: f64, out: &mut [f64]) {
    let n = grid.len();
    let nx = grid.dims()[0];
    let (o0, rest) = out.split_at_mut(n);
    let (o1, o2) = rest.split_at_mut(n);
    let [w0, w1, w2] = [0, 1, 2].map(|a| grid.axis(a).widths());
    for_each_row(grid, |r| {
        let (wy, wz) = (w1[r.j], w2[r.k]);
        for i in 0..nx {
            let q = r.base + i;
            let (_, ipv) = wrap(i, nx);
            o0[q] += scale * wy * wz * (p[q] - p[r.base + ipv]);
            o1[q] += scale * w0[i] * wz * (p[q] - p[r.jp + i]);
            o2[q] += scale * w0[i] * wy * (p[q] - p[r.kp + i]);
        }
    });
}

/// Shear viscosity on the three edge families, averaged from the four adjacent cells.
pub fn edge_viscosity(grid: &Grid, nu: &[f64]) -> [Vec<f64>; 3] {
    let n = grid.len();
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (e, &(a, b)) in EDGE_PAIRS.iter().enumerate() {
        let dst = &mut out[e];
        for_each_cell(grid, |q, c| {
            let qa = grid.prev(a, q, c[a]);
            let qb = grid.prev(b, q, c[b]);
            let cb = grid.coords(qa);
            let qab = grid.prev(b, qa, cb[b]);
            dst[q] = 0.25 * (nu[q] + nu[qa] + nu[qb] + nu[qab]);
        });
    }
    out
}

#[inline]
fn normal_strain(grid: &Grid, u: &[f64], a: usize, q: usize, c: [usize; 3]) -> f64 {
    let n = grid.len();
    (u[a * n + grid.next(a, q, c[a])] - u[a * n + q]) / grid.axis(a).width(c[a])
}

/// Symmetric shear strain `D_ab` at the lower `(a, b)` edge of cell `q`.
#[inline]
fn shear_strain(grid: &Grid, u: &[f64], e: usize, q: usize, c: [usize; 3]) -> f64 {
    let n = grid.len();
    let (a, b) = EDGE_PAIRS[e];
    let ga = grid.axis(a).center_gap(c[a]);
    let gb = grid.axis(b).center_gap(c[b]);
    let dab = (u[a * n + q] - u[a * n + grid.prev(b, q, c[b])]) / gb;
    let dba = (u[b * n + q] - u[b * n + grid.prev(a, q, c[a])]) / ga;
    0.5 * (dab + dba)
}

/// Viscous operator: `out = A u` with `u . A v = sum nu D(u):D(v)` (volume weighted).
pub fn viscous_apply(grid: &Grid, nu: &[f64], nu_edge: &[Vec<f64>; 3], u: &[f64], out: &mut [f64]) {
    let n = grid.len();
    let nx = grid.dims()[0];
    out.iter_mut().for_each(|v| *v = 0.0);
    let (u0, rest) = u.split_at(n);
    let (u1, u2) = rest.split_at(n);
    let (o0, rest) = out.split_at_mut(n);
    let (o1, o2) = rest.split_at_mut(n);
    let [w0, w1, w2] = [0, 1, 2].map(|a| grid.axis(a).widths());
    let [g0, g1, g2] = [0, 1, 2].map(|a| grid.axis(a).gaps());
    let [ne0, ne1, ne2] = [&nu_edge[0], &nu_edge[1], &nu_edge[2]];
    for_each_row(grid, |r| {
        let (wy, wz, gy, gz) = (w1[r.j], w2[r.k], g1[r.j], g2[r.k]);
        for i in 0..nx {
            let q = r.base + i;
            let (inx, ipv) = wrap(i, nx);
            let (qxn, qxp) = (r.base + inx, r.base + ipv);
            let (qyn, qyp, qzn, qzp) = (r.jn + i, r.jp + i, r.kn + i, r.kp + i);
            let wx = w0[i];
            let gx = g0[i];
            let vn = wx * wy * wz * nu[q];

            let s = vn * (u0[qxn] - u0[q]) / (wx * wx);
            o0[qxn] += s;
            o0[q] -= s;
            let s = vn * (u1[qyn] - u1[q]) / (wy * wy);
            o1[qyn] += s;
            o1[q] -= s;
            let s = vn * (u2[qzn] - u2[q]) / (wz * wz);
            o2[qzn] += s;
            o2[q] -= s;

            // (0,1) edge
            let t = gx * gy * wz * ne0[q] * 0.5 * ((u0[q] - u0[qyp]) / gy + (u1[q] - u1[qxp]) / gx);
            o0[q] += t / gy;
            o0[qyp] -= t / gy;
            o1[q] += t / gx;
            o1[qxp] -= t / gx;
            // (0,2) edge
            let t = gx * gz * wy * ne1[q] * 0.5 * ((u0[q] - u0[qzp]) / gz + (u2[q] - u2[qxp]) / gx);
            o0[q] += t / gz;
            o0[qzp] -= t / gz;
            o2[q] += t / gx;
            o2[qxp] -= t / gx;
            // (1,2) edge
            let t = gy * gz * wx * ne2[q] * 0.5 * ((u1[q] - u1[qzp]) / gz + (u2[q] - u2[qyp]) / gy);
            o1[q] += t / gz;
            o1[qzp] -= t / gz;
            o2[q] += t / gy;
            o2[qyp] -= t / gy;
        }
    });
}

/// `sum nu |D u|^2` over the grid, i.e. `u . A u`.
pub fn strain_energy(grid: &Grid, nu: &[f64], nu_edge: &[Vec<f64>; 3], u: &[f64]) -> f64 {
    let mut s = 0.0;
    for_each_cell(grid, |q, c| {
        let vol = grid.cell_volume(c);
        for a in 0..3 {
            let d = normal_strain(grid, u, a, q, c);
            s += vol * nu[q] * d * d;
        }
        for e in 0..3 {
            let d = shear_strain(grid, u, e, q, c);
            s += 2.0 * grid.edge_volume(e, c) * nu_edge[e][q] * d * d;
        }
    });
    s
}

/// Bilinear strain form `sum nu D(u):D(v)`.
pub fn strain_product(grid: &Grid, nu: &[f64], nu_edge: &[Vec<f64>; 3], u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for_each_cell(grid, |q, c| {
        let vol = grid.cell_volume(c);
        for a in 0..3 {
            s += vol * nu[q] * normal_strain(grid, u, a, q, c) * normal_strain(grid, v, a, q, c);
        }
        for e in 0..3 {
            s += 2.0
                * grid.edge_volume(e, c)
                * nu_edge[e][q]
                * shear_strain(grid, u, e, q, c)
                * shear_strain(grid, v, e, q, c);
        }
    });
    s
}

/// Squared norms `(||grad u||^2, ||D u||^2, ||div u||^2)` on the periodic grid.
pub fn korn_terms(grid: &Grid, u: &[f64]) -> (f64, f64, f64) {
    let n = grid.len();
    let (mut g, mut d, mut dv) = (0.0, 0.0, 0.0);
    for_each_cell(grid, |q, c| {
        let vol = grid.cell_volume(c);
        let mut div = 0.0;
        for a in 0..3 {
            let s = normal_strain(grid, u, a, q, c);
            g += vol * s * s;
            d += vol * s * s;
            div += s;
        }
        dv += vol * div * div;
        for (e, &(a, b)) in EDGE_PAIRS.iter().enumerate() {
            let ve = grid.edge_volume(e, c);
            let ga = grid.axis(a).center_gap(c[a]);
            let gb = grid.axis(b).center_gap(c[b]);
            let dab = (u[a * n + q] - u[a * n + grid.prev(b, q, c[b])]) / gb;
            let dba = (u[b * n + q] - u[b * n + grid.prev(a, q, c[a])]) / ga;
            g += ve * (dab * dab + dba * dba);
            let sh = 0.5 * (dab + dba);
            d += 2.0 * ve * sh * sh;
        }
    });
    (g, d, dv)
}

/// Gradient Dirichlet energy `||grad u||^2`.
pub fn gradient_energy(grid: &Grid, u: &[f64]) -> f64 {
    korn_terms(grid, u).0
}

/// Cell-centered strain magnitude `|D u|` (Frobenius), shear parts averaged from the cell's edges.
pub fn strain_magnitude(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut shear = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (e, sh) in shear.iter_mut().enumerate() {
        for_each_cell(grid, |q, c| {
            let d = shear_strain(grid, u, e, q, c);
            sh[q] = d * d;
        });
    }
    let mut out = vec![0.0; n];
    for_each_cell(grid, |q, c| {
        let mut s = 0.0;
        for a in 0..3 {
            let d = normal_strain(grid, u, a, q, c);
            s += d * d;
        }
        for (e, &(a, b)) in EDGE_PAIRS.iter().enumerate() {
            let qa = grid.next(a, q, c[a]);
            let qb = grid.next(b, q, c[b]);
            let ca = grid.coords(qa);
            let qab = grid.next(b, qa, ca[b]);
            s += 2.0 * 0.25 * (shear[e][q] + shear[e][qa] + shear[e][qb] + shear[e][qab]);
        }
        out[q] = s.sqrt();
    });
    out
}

/// `sum V |grad u|^r` with cell-centered `|grad u|`; off-diagonal derivatives are averaged from the cell's edges.
pub fn gradient_power_sum(grid: &Grid, u: &[f64], r: f64) -> f64 {
    let n = grid.len();
    let mut off = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (e, o) in off.iter_mut().enumerate() {
        let (a, b) = EDGE_PAIRS[e];
        for_each_cell(grid, |q, c| {
            let ga = grid.axis(a).center_gap(c[a]);
            let gb = grid.axis(b).center_gap(c[b]);
            let dab = (u[a * n + q] - u[a * n + grid.prev(b, q, c[b])]) / gb;
            let dba = (u[b * n + q] - u[b * n + grid.prev(a, q, c[a])]) / ga;
            o[q] = dab * dab + dba * dba;
        });
    }
    let mut total = 0.0;
    for_each_cell(grid, |q, c| {
        let mut s = 0.0;
        for a in 0..3 {
            let d = normal_strain(grid, u, a, q, c);
            s += d * d;
        }
        for (e, &(a, b)) in EDGE_PAIRS.iter().enumerate() {
            let qa = grid.next(a, q, c[a]);
            let qb = grid.next(b, q, c[b]);
            let qab = grid.next(b, qa, grid.coords(qa)[b]);
            s += 0.25 * (off[e][q] + off[e][qa] + off[e][qb] + off[e][qab]);
        }
        total += grid.cell_volume(c) * s.powf(0.5 * r);
    });
    total
}

/// Convective term `div(u (x) u)` in skew-consistent flux form, integrated over face control volumes.
///
/// For discretely divergence-free `u` the result satisfies `u . N(u) = 0` exactly.
pub fn convective(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let n = grid.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for_each_cell(grid, |q, c| {
        for a in 0..3 {
            // flux through the mid-plane of cell q along a, shared by faces q and next_a q
            let qn = grid.next(a, q, c[a]);
            let area = grid.face_area(a, c);
            let ua = 0.5 * (u[a * n + q] + u[a * n + qn]);
            let flux = area * ua * ua;
            out[a * n + q] += flux;
            out[a * n + qn] -= flux;
            let (b, t) = other_axes(a);
            for bb in [b, t] {
                // flux of u_bb through the lower-bb boundary of face (a, q)'s control volume
                let tt = 3 - a - bb;
                let wt = grid.axis(tt).width(c[tt]);
                let qpa = grid.prev(a, q, c[a]);
                let wa = grid.axis(a).width(c[a]);
                let wpa = grid.axis(a).width(grid.coords(qpa)[a]);
                let f = 0.5 * wt * (wa * u[bb * n + q] + wpa * u[bb * n + qpa]);
                let qpb = grid.prev(bb, q, c[bb]);
                let val = 0.5 * (u[a * n + q] + u[a * n + qpb]);
                out[a * n + q] -= f * val;
                out[a * n + qpb] += f * val;
            }
        }
    });
}

/// Integrated face values: `out[(a, q)] = V_face * f_a(face center)`.
pub fn integrate_faces(grid: &Grid, f: impl Fn(usize, [f64; 3]) -> f64) -> Vec<f64> {
    let n = grid.len();
    let mut out = vec![0.0; 3 * n];
    for a in 0..3 {
        for_each_cell(grid, |q, c| {
            out[a * n + q] = grid.face_volume(a, c) * f(a, grid.face_center(a, c));
        });
    }
    out
}

/// Sample a vector field at face centers.
pub fn sample_faces(grid: &Grid, f: impl Fn(usize, [f64; 3]) -> f64) -> Vec<f64> {
    let n = grid.len();
    let mut out = vec![0.0; 3 * n];
    for a in 0..3 {
        for_each_cell(grid, |q, c| {
            out[a * n + q] = f(a, grid.face_center(a, c));
        });
    }
    out
}

pub fn sample_cells(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for_each_cell(grid, |q, c| out[q] = f(grid.cell_center(c)));
    out
}

/// `sum V_face u_a v_a` over all faces.
pub fn face_dot(fv: &[f64], u: &[f64], v: &[f64]) -> f64 {
    fv.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
}
