//! Spectral solver for the limit Darcy system `(eta0/2) M0 u = f - grad p`, `div u = 0` on a periodic box.

use crate::error::{Error, Result};
use crate::flow::StaggeredField;
use crate::linalg::spectral::Fft3;
use crate::mesh::Grid;
use crate::micro::{Mat3, PermeabilityTensor};
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct DarcySolution {
    pub dims: [usize; 3],
    pub lengths: [f64; 3],
    /// Cell-centered velocity, component-major.
    pub u: Vec<f64>,
    /// Cell-centered pressure with zero mean.
    pub p: Vec<f64>,
    pub m0: Mat3,
    pub eta0: f64,
    u_hat: [Vec<Complex64>; 3],
    p_hat: Vec<Complex64>,
}

fn uniform_box(grid: &Grid) -> Result<([usize; 3], [f64; 3])> {
    if (0..3).any(|a| !grid.axis(a).is_uniform()) {
        return Err(Error::GridMismatch("spectral Darcy solve needs an axis-uniform grid".into()));
    }
    Ok((grid.dims(), grid.lengths()))
}

/// Physical wave vector of a transform index; Nyquist modes get zero derivative.
fn xi(fft: &Fft3, lengths: &[f64; 3], idx: [usize; 3]) -> [f64; 3] {
    let d = fft.dims();
    [0, 1, 2].map(|a| {
        let k = fft.wavenumber(a, idx[a]);
        if d[a] % 2 == 0 && 2 * k.unsigned_abs() as usize == d[a] {
            0.0
        } else {
            2.0 * PI * k as f64 / lengths[a]
        }
    })
}

fn mat_vec<T>(m: &Mat3, v: [T; 3]) -> [T; 3]
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    [0, 1, 2].map(|i| v[0] * m[i][0] + v[1] * m[i][1] + v[2] * m[i][2])
}

/// Solve on the cell-centered grid of `grid` for cell samples `f` (component-major, `3 len`).
pub fn solve_darcy(m0: &PermeabilityTensor, eta0: f64, grid: &Grid, f: &[f64]) -> Result<DarcySolution> {
    if !(eta0 > 0.0) {
        return Err(Error::Config("eta0 must be positive".into()));
    }
    PermeabilityTensor::from_matrix(m0.m, &m0.hole)?;
    let (dims, lengths) = uniform_box(grid)?;
    let n = grid.len();
    if f.len() != 3 * n {
        return Err(Error::GridMismatch("forcing does not match the grid".into()));
    }
    let fft = Fft3::new(dims);
    let mob = m0.inverse().map(|row| row.map(|v| 2.0 * v / eta0));
    let fh: Vec<Vec<Complex64>> = (0..3).map(|a| fft.forward_real(&f[a * n..(a + 1) * n])).collect();
    let zero = Complex64::new(0.0, 0.0);
    let mut u_hat = [vec![zero; n], vec![zero; n], vec![zero; n]];
    let mut p_hat = vec![zero; n];
    let [nx, ny, _] = dims;
    for q in 0..n {
        let idx = [q % nx, (q / nx) % ny, q / (nx * ny)];
        let x = xi(&fft, &lengths, idx);
        let fq = [fh[0][q], fh[1][q], fh[2][q]];
        let ax = mat_vec(&mob, x);
        let den = x[0] * ax[0] + x[1] * ax[1] + x[2] * ax[2];
        let ph = if den > 0.0 {
            // xi . A (f - i xi p) = 0
            let num = fq[0] * ax[0] + fq[1] * ax[1] + fq[2] * ax[2];
            Complex64::new(0.0, -1.0) * num / den
        } else {
            zero
        };
        p_hat[q] = ph;
        let g = [0, 1, 2].map(|a| fq[a] - Complex64::new(0.0, x[a]) * ph);
        let uq = mat_vec(&mob, g);
        for a in 0..3 {
            u_hat[a][q] = uq[a];
        }
    }
    let mut u = vec![0.0; 3 * n];
    for a in 0..3 {
        u[a * n..(a + 1) * n].copy_from_slice(&fft.inverse_real(u_hat[a].clone()));
    }
    let p = fft.inverse_real(p_hat.clone());
    Ok(DarcySolution { dims, lengths, u, p, m0: m0.m, eta0, u_hat, p_hat })
}

impl DarcySolution {
    /// Trigonometric interpolant of the velocity sampled at the MAC faces of `grid`.
    pub fn sample_faces(&self, grid: &Grid) -> Result<Vec<f64>> {
        let (dims, _) = uniform_box(grid)?;
        if dims != self.dims {
            return Err(Error::GridMismatch(format!("faces on {dims:?}, solution on {:?}", self.dims)));
        }
        let n = grid.len();
        let fft = Fft3::new(dims);
        let [nx, ny, _] = dims;
        let mut out = vec![0.0; 3 * n];
        for a in 0..3 {
            let h = self.lengths[a] / dims[a] as f64;
            let mut c = self.u_hat[a].clone();
            for (q, v) in c.iter_mut().enumerate() {
                let idx = [q % nx, (q / nx) % ny, q / (nx * ny)];
                let x = xi(&fft, &self.lengths, idx)[a];
                *v *= Complex64::from_polar(1.0, -0.5 * h * x);
            }
            out[a * n..(a + 1) * n].copy_from_slice(&fft.inverse_real(c));
        }
        Ok(out)
    }

    /// Largest spectral divergence `|xi . u_hat|` relative to `max |u_hat|`.
    pub fn divergence_defect(&self) -> f64 {
        let fft = Fft3::new(self.dims);
        let [nx, ny, _] = self.dims;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for q in 0..self.p_hat.len() {
            let idx = [q % nx, (q / nx) % ny, q / (nx * ny)];
            let x = xi(&fft, &self.lengths, idx);
            let d = self.u_hat[0][q] * x[0] + self.u_hat[1][q] * x[1] + self.u_hat[2][q] * x[2];
            worst = worst.max(d.norm());
            scale = scale.max((0..3).map(|a| self.u_hat[a][q].norm()).fold(0.0, f64::max));
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    /// Face velocities and cell pressures in the flow solver's layout.
    pub fn to_staggered(&self, grid: &Grid) -> Result<StaggeredField> {
        Ok(StaggeredField { u: self.sample_faces(grid)?, p: self.p.clone() })
    }
}

/// Real trigonometric mode `cos_amp cos(theta) + sin_amp sin(theta)` with `theta = 2 pi sum k_a x_a / L_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode<T> {
    pub k: [i32; 3],
    pub cos_amp: T,
    pub sin_amp: T,
}

impl<T: Copy> Mode<T> {
    fn theta(&self, lengths: &[f64; 3], x: [f64; 3]) -> f64 {
        2.0 * PI * (0..3).map(|a| self.k[a] as f64 * x[a] / lengths[a]).sum::<f64>()
    }

    fn wave(&self, lengths: &[f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| 2.0 * PI * self.k[a] as f64 / lengths[a])
    }
}

fn check_band(k: [i32; 3], dims: [usize; 3]) -> Result<()> {
    for a in 0..3 {
        if 2 * k[a].unsigned_abs() as usize >= dims[a] {
            return Err(Error::BandLimit(format!(
                "mode {k:?} reaches the Nyquist limit {} along axis {a}",
                dims[a] / 2
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedError {
    pub velocity: f64,
    pub pressure: f64,
}

impl ManufacturedError {
    pub fn total(&self) -> f64 {
        self.velocity + self.pressure
    }
}

/// Solve with `f = (eta0/2) M0 u* + grad p*` and return the discrete `L^2` errors against `(u*, p*)`.
pub fn manufactured_check(
    m0: &PermeabilityTensor,
    eta0: f64,
    grid: &Grid,
    u_star: &[Mode<[f64; 3]>],
    p_star: &[Mode<f64>],
) -> Result<ManufacturedError> {
    let (dims, lengths) = uniform_box(grid)?;
    for m in u_star {
        check_band(m.k, dims)?;
        let w = m.wave(&lengths);
        let dc: f64 = (0..3).map(|a| w[a] * m.cos_amp[a]).sum();
        let ds: f64 = (0..3).map(|a| w[a] * m.sin_amp[a]).sum();
        if dc.abs() + ds.abs() > 1e-12 * (1.0 + w.iter().map(|v| v.abs()).sum::<f64>()) {
            return Err(Error::Contract(format!("manufactured velocity mode {:?} is not solenoidal", m.k)));
        }
    }
    for m in p_star {
        check_band(m.k, dims)?;
    }
    let n = grid.len();
    let mut u_ex = vec![0.0; 3 * n];
    let mut p_ex = vec![0.0; n];
    let mut f = vec![0.0; 3 * n];
    let half = m0.m.map(|row| row.map(|v| 0.5 * eta0 * v));
    crate::mesh::for_each_cell(grid, |q, c| {
        let x = grid.cell_center(c);
        let mut u = [0.0; 3];
        for m in u_star {
            let t = m.theta(&lengths, x);
            for a in 0..3 {
                u[a] += m.cos_amp[a] * t.cos() + m.sin_amp[a] * t.sin();
            }
        }
        let mut p = 0.0;
        let mut gp = [0.0; 3];
        for m in p_star {
            let t = m.theta(&lengths, x);
            let w = m.wave(&lengths);
            if m.k != [0; 3] {
                p += m.cos_amp * t.cos() + m.sin_amp * t.sin();
            }
            let d = -m.cos_amp * t.sin() + m.sin_amp * t.cos();
            for a in 0..3 {
                gp[a] += w[a] * d;
            }
        }
        let mu = mat_vec(&half, u);
        for a in 0..3 {
            u_ex[a * n + q] = u[a];
            f[a * n + q] = mu[a] + gp[a];
        }
        p_ex[q] = p;
    });
    let sol = solve_darcy(m0, eta0, grid, &f)?;
    let vol = grid.volume() / n as f64;
    let ev: f64 = sol.u.iter().zip(&u_ex).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * vol;
    let ep: f64 = sol.p.iter().zip(&p_ex).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * vol;
    Ok(ManufacturedError { velocity: ev.sqrt(), pressure: ep.sqrt() })
}
