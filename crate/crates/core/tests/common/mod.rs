#![allow(dead_code)]

use darcylab::constitutive::ViscosityLaw;
use darcylab::flow::{FlowSolver, SolveConfig};
use darcylab::geometry::{DomainMask, Window};
use darcylab::mesh::Grid;
use darcylab::ops;
use std::f64::consts::PI;

const K: f64 = 2.0 * PI;

/// Divergence-free periodic velocity and its gradient `g[i][j] = d_j u_i`.
pub fn tg_velocity(x: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let (sx, cx) = (K * x[0]).sin_cos();
    let (sy, cy) = (K * x[1]).sin_cos();
    let (sz, cz) = (K * x[2]).sin_cos();
    let u = [sx * cy * cz, cx * sy * cz, -2.0 * cx * cy * sz];
    let g = [
        [K * cx * cy * cz, -K * sx * sy * cz, -K * sx * cy * sz],
        [-K * sx * sy * cz, K * cx * cy * cz, -K * cx * sy * sz],
        [2.0 * K * sx * cy * sz, 2.0 * K * cx * sy * sz, -2.0 * K * cx * cy * cz],
    ];
    (u, g)
}

pub fn tg_pressure(x: [f64; 3]) -> (f64, [f64; 3]) {
    let (sx, cx) = (K * x[0]).sin_cos();
    let (sy, cy) = (K * x[1]).sin_cos();
    let (sz, cz) = (K * x[2]).sin_cos();
    (0.5 * sx * sy + cz, [0.5 * K * cx * sy, 0.5 * K * sx * cy, -K * sz])
}

/// Forcing for `-beta (eta0/2) Lap u + inertia (u . grad) u + grad p` at the pair above.
pub fn tg_forcing(x: [f64; 3], beta: f64, eta0: f64, inertia: f64) -> [f64; 3] {
    let (u, g) = tg_velocity(x);
    let (_, gp) = tg_pressure(x);
    let mut f = [0.0; 3];
    for i in 0..3 {
        let conv: f64 = (0..3).map(|j| u[j] * g[i][j]).sum();
        f[i] = beta * 0.5 * eta0 * 3.0 * K * K * u[i] + inertia * conv + gp[i];
    }
    f
}

pub fn hole_free(n: usize, epsilon: f64) -> DomainMask {
    DomainMask::from_solid(Grid::uniform([n; 3], 1.0 / n as f64), Window::Full, epsilon, vec![false; n * n * n], 0)
}

/// Discrete L2 velocity error and L2 pressure error (mean removed) of the manufactured Newtonian solve.
pub fn manufactured_errors(n: usize, epsilon: f64, alpha: f64, lambda: f64, eta0: f64) -> (f64, f64) {
    let mask = hole_free(n, epsilon);
    let grid = &mask.grid;
    let beta = epsilon.powf(3.0 - alpha);
    let inertia = epsilon.powf(lambda);
    let f = ops::sample_faces(grid, |a, x| tg_forcing(x, beta, eta0, inertia)[a]);
    let mut cfg = SolveConfig::new(lambda, ViscosityLaw::newtonian(eta0));
    cfg.tol = 1e-10;
    let mut solver = FlowSolver::new(&mask, alpha, cfg, &f).unwrap();
    let (sol, _) = solver.solve_stationary(None).unwrap();
    let exact_u = ops::sample_faces(grid, |a, x| tg_velocity(x).0[a]);
    let exact_p = ops::sample_cells(grid, |x| tg_pressure(x).0);
    let fv = grid.face_volumes();
    let cv = grid.cell_volumes();
    let eu: f64 = sol.u.iter().zip(&exact_u).zip(&fv).map(|((a, b), v)| v * (a - b).powi(2)).sum();
    let mp = sol.p.iter().zip(&cv).map(|(p, v)| p * v).sum::<f64>();
    let me = exact_p.iter().zip(&cv).map(|(p, v)| p * v).sum::<f64>();
    let ep: f64 = sol
        .p
        .iter()
        .zip(&exact_p)
        .zip(&cv)
        .map(|((a, b), v)| v * ((a - mp) - (b - me)).powi(2))
        .sum();
    (eu.sqrt(), ep.sqrt())
}

/// Observed order of accuracy between consecutive grids.
pub fn orders(ns: &[usize], errors: &[f64]) -> Vec<f64> {
    ns.windows(2)
        .zip(errors.windows(2))
        .map(|(n, e)| (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
        .collect()
}

/// Cofactor inverse of a 3x3 matrix.
pub fn inverse(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            out[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    out
}
