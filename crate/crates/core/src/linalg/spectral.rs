//! 3D periodic FFT built from rustfft 1D plans, and a spectral inverse of the
//! discrete 7-point Laplacian on axis-uniform periodic grids.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct Fft3 {
    dims: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = [0, 1, 2].map(|a| planner.plan_fft_forward(dims[a]));
        let inv = [0, 1, 2].map(|a| planner.plan_fft_inverse(dims[a]));
        Self { dims, fwd, inv }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [nx, ny, nz] = self.dims;
        // axis 0 is contiguous
        for chunk in data.chunks_exact_mut(nx) {
            plans[0].process(chunk);
        }
        let mut line = vec![Complex64::new(0.0, 0.0); ny.max(nz)];
        for k in 0..nz {
            for i in 0..nx {
                for j in 0..ny {
                    line[j] = data[i + nx * (j + ny * k)];
                }
                plans[1].process(&mut line[..ny]);
                for j in 0..ny {
                    data[i + nx * (j + ny * k)] = line[j];
                }
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                for k in 0..nz {
                    line[k] = data[i + nx * (j + ny * k)];
                }
                plans[2].process(&mut line[..nz]);
                for k in 0..nz {
                    data[i + nx * (j + ny * k)] = line[k];
                }
            }
        }
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd);
    }

    /// Inverse transform including the `1/len` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut c);
        c
    }

    pub fn inverse_real(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut c);
        c.into_iter().map(|v| v.re).collect()
    }

    /// Signed integer wave number of index `i` along axis `a`.
    pub fn wavenumber(&self, a: usize, i: usize) -> i64 {
        let n = self.dims[a] as i64;
        let i = i as i64;
        if 2 * i > n {
            i - n
        } else {
            i
        }
    }
}

/// Pseudo-inverse of the integrated cell Laplacian `L = Div diag(1/V_face) Div^T`
/// on a periodic grid with uniform spacing `h[a]` along each axis.
pub struct PeriodicPoisson {
    fft: Fft3,
    inv_eig: Vec<f64>,
}

impl std::fmt::Debug for PeriodicPoisson {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodicPoisson").field("dims", &self.fft.dims()).finish()
    }
}

impl PeriodicPoisson {
    pub fn new(dims: [usize; 3], h: [f64; 3]) -> Self {
        let fft = Fft3::new(dims);
        let vol = h[0] * h[1] * h[2];
        let mut inv_eig = vec![0.0; fft.len()];
        let sym = |a: usize, i: usize| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / dims[a] as f64;
            (2.0 - 2.0 * t.cos()) / (h[a] * h[a])
        };
        let mut q = 0;
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let lam = vol * (sym(0, i) + sym(1, j) + sym(2, k));
                    inv_eig[q] = if q == 0 { 0.0 } else { 1.0 / lam };
                    q += 1;
                }
            }
        }
        Self { fft, inv_eig }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.fft.dims()
    }

    pub fn solve(&self, r: &[f64], z: &mut [f64]) {
        let mut c = self.fft.forward_real(r);
        c.iter_mut().zip(&self.inv_eig).for_each(|(v, s)| *v *= *s);
        self.fft.inverse(&mut c);
        z.iter_mut().zip(&c).for_each(|(z, c)| *z = c.re);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::multigrid::cell_laplacian;
    use crate::mesh::Grid;

    #[test]
    fn roundtrip() {
        let f = Fft3::new([6, 4, 5]);
        let x: Vec<f64> = (0..f.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = f.inverse_real(f.forward_real(&x));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn poisson_inverts_cell_laplacian() {
        let dims = [8, 4, 6];
        let h = 0.125;
        let g = Grid::uniform(dims, h);
        let st = cell_laplacian(&g, &vec![true; g.len()], 0.0);
        let n = g.len();
        let mut b: Vec<f64> = (0..n).map(|i| ((i * 17) % 11) as f64).collect();
        let m = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= m);
        let pp = PeriodicPoisson::new(dims, [h; 3]);
        let mut x = vec![0.0; n];
        pp.solve(&b, &mut x);
        let mut ax = vec![0.0; n];
        st.apply(&x, &mut ax);
        for (a, b) in ax.iter().zip(&b) {
            assert!((a - b).abs() < 1e-10, "{a} {b}");
        }
    }
}
