//! Analytic forcing presets and grid-file forcing.

use crate::error::{Error, Result};
use crate::mesh::Grid;
use crate::ops;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forcing {
    Constant {
        value: [f64; 3],
    },
    /// `amp * sin(2 pi k . x + phase)`.
    SingleMode {
        k: [i32; 3],
        amp: [f64; 3],
        #[serde(default)]
        phase: f64,
    },
    /// Periodized Gaussian `amp * exp(-|x - center|^2 / (2 width^2))` (nearest image).
    SmoothBump {
        center: [f64; 3],
        width: f64,
        amp: [f64; 3],
    },
    /// Cell-centered samples on an `n^3` grid: little-endian f64, component-major.
    Grid {
        path: PathBuf,
        n: usize,
    },
}

impl Default for Forcing {
    fn default() -> Self {
        Forcing::SingleMode { k: [1, 0, 0], amp: [1.0, 1.0, 0.0], phase: 0.0 }
    }
}

/// Forcing ready for evaluation (grid files are loaded once).
#[derive(Debug, Clone)]
pub enum ForcingField {
    Analytic(Forcing),
    Samples { n: usize, data: Vec<f64> },
}

impl Forcing {
    pub fn load(&self) -> Result<ForcingField> {
        match self {
            Forcing::Grid { path, n } => {
                let bytes = std::fs::read(path)?;
                let len = 3 * n * n * n;
                if bytes.len() != 8 * len {
                    return Err(Error::Config(format!(
                        "forcing file {} has {} bytes, expected {}",
                        path.display(),
                        bytes.len(),
                        8 * len
                    )));
                }
                let data = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Ok(ForcingField::Samples { n: *n, data })
            }
            other => Ok(ForcingField::Analytic(other.clone())),
        }
    }

    /// Axis-independence: `Some(a)` if the field varies only along axis `a` (or is constant).
    pub fn varies_only_along(&self) -> Option<usize> {
        match self {
            Forcing::Constant { .. } => Some(0),
            Forcing::SingleMode { k, .. } => {
                let nz: Vec<usize> = (0..3).filter(|a| k[*a] != 0).collect();
                match nz.len() {
                    0 => Some(0),
                    1 => Some(nz[0]),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Forcing::Constant { value } => value.iter().all(|v| *v == 0.0),
            Forcing::SingleMode { amp, .. } | Forcing::SmoothBump { amp, .. } => amp.iter().all(|v| *v == 0.0),
            Forcing::Grid { .. } => false,
        }
    }
}

impl ForcingField {
    pub fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        match self {
            ForcingField::Analytic(f) => match f {
                Forcing::Constant { value } => *value,
                Forcing::SingleMode { k, amp, phase } => {
                    let t = 2.0 * PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]) + phase;
                    amp.map(|a| a * t.sin())
                }
                Forcing::SmoothBump { center, width, amp } => {
                    let mut r2 = 0.0;
                    for a in 0..3 {
                        let d = (x[a] - center[a]).rem_euclid(1.0);
                        let d = d.min(1.0 - d);
                        r2 += d * d;
                    }
                    let g = (-r2 / (2.0 * width * width)).exp();
                    amp.map(|a| a * g)
                }
                Forcing::Grid { .. } => unreachable!("grid forcing is loaded into samples"),
            },
            ForcingField::Samples { n, data } => {
                // nearest cell of the file grid
                let idx = x.map(|t| ((t.rem_euclid(1.0) * *n as f64) as usize).min(n - 1));
                let q = idx[0] + n * (idx[1] + n * idx[2]);
                let len = n * n * n;
                [data[q], data[len + q], data[2 * len + q]]
            }
        }
    }

    /// Face-normal samples `f_a(x_face)`.
    pub fn sample_faces(&self, grid: &Grid) -> Vec<f64> {
        ops::sample_faces(grid, |a, x| self.eval(x)[a])
    }

    /// Cell-centered samples, component-major (`3 * len`).
    pub fn sample_cells(&self, grid: &Grid) -> Vec<f64> {
        let n = grid.len();
        let mut out = vec![0.0; 3 * n];
        for a in 0..3 {
            let s = ops::sample_cells(grid, |x| self.eval(x)[a]);
            out[a * n..(a + 1) * n].copy_from_slice(&s);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_evaluate() {
        let f = Forcing::default().load().unwrap();
        let v = f.eval([0.25, 0.3, 0.9]);
        assert!((v[0] - 1.0).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15 && v[2] == 0.0);
        let b = Forcing::SmoothBump { center: [0.0; 3], width: 0.1, amp: [1.0, 0.0, 0.0] }.load().unwrap();
        assert!((b.eval([0.99, 0.0, 0.0])[0] - b.eval([0.01, 0.0, 0.0])[0]).abs() < 1e-15);
        assert_eq!(Forcing::default().varies_only_along(), Some(0));
        assert_eq!(Forcing::SingleMode { k: [1, 1, 0], amp: [1.0; 3], phase: 0.0 }.varies_only_along(), None);
    }

    #[test]
    fn grid_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let n = 4;
        let data: Vec<f64> = (0..3 * n * n * n).map(|i| i as f64).collect();
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(&path, bytes).unwrap();
        let f = Forcing::Grid { path: path.clone(), n }.load().unwrap();
        let v = f.eval([0.3, 0.6, 0.1]);
        let q = 1 + n * (2 + n * 0);
        assert_eq!(v, [q as f64, (64 + q) as f64, (128 + q) as f64]);
        assert!(Forcing::Grid { path, n: 5 }.load().is_err());
    }
}
