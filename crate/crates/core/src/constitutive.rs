//! Shear-dependent viscosity laws `eta(s) = eta0 + g(s)` and their sampled property checks.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Tensor = [[f64; 3]; 3];

/// Lower bound applied to every evaluated viscosity.
pub const ETA_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViscosityLaw {
    Newtonian {
        eta0: f64,
    },
    CarreauYasuda {
        eta0: f64,
        eta_inf: f64,
        kappa0: f64,
        r: f64,
        a: f64,
    },
}

impl ViscosityLaw {
    pub fn newtonian(eta0: f64) -> Self {
        ViscosityLaw::Newtonian { eta0 }
    }

    pub fn carreau_yasuda(eta0: f64, eta_inf: f64, kappa0: f64, r: f64, a: f64) -> Result<Self> {
        let law = ViscosityLaw::CarreauYasuda {
            eta0,
            eta_inf,
            kappa0,
            r,
            a,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ViscosityLaw::Newtonian { eta0 } => {
                if !(eta0 > 0.0) {
                    return Err(Error::InvalidSpec(format!("eta0 = {eta0} must be positive")));
                }
            }
            ViscosityLaw::CarreauYasuda {
                eta0,
                eta_inf,
                kappa0,
                r,
                a,
            } => {
                if !(eta0 > eta_inf && eta_inf > 0.0) {
                    return Err(Error::InvalidSpec(format!(
                        "need eta0 > eta_inf > 0, got {eta0}, {eta_inf}"
                    )));
                }
                if !(kappa0 > 0.0) || !(r > 1.0) || !(a >= 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "need kappa0 > 0, r > 1, a >= 1; got {kappa0}, {r}, {a}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eta0(&self) -> f64 {
        match *self {
            ViscosityLaw::Newtonian { eta0 } | ViscosityLaw::CarreauYasuda { eta0, .. } => eta0,
        }
    }

    /// Structure exponent; 2 for the Newtonian law.
    pub fn r(&self) -> f64 {
        match *self {
            ViscosityLaw::Newtonian { .. } => 2.0,
            ViscosityLaw::CarreauYasuda { r, .. } => r,
        }
    }

    /// True when `g` vanishes identically.
    pub fn is_newtonian(&self) -> bool {
        match *self {
            ViscosityLaw::Newtonian { .. } => true,
            ViscosityLaw::CarreauYasuda { r, .. } => r == 2.0,
        }
    }

    /// Non-Newtonian part `g(s)`.
    pub fn g(&self, s: f64) -> f64 {
        match *self {
            ViscosityLaw::Newtonian { .. } => 0.0,
            ViscosityLaw::CarreauYasuda {
                eta0,
                eta_inf,
                kappa0,
                r,
                a,
            } => {
                if r == 2.0 {
                    return 0.0;
                }
                (eta0 - eta_inf) * ((1.0 + kappa0 * s.powf(a)).powf((r - 2.0) / a) - 1.0)
            }
        }
    }

    /// `max(eta0 + g(s), floor)` for `s >= 0`; no domain check.
    #[inline]
    pub fn eta_unchecked(&self, s: f64) -> f64 {
        (self.eta0() + self.g(s)).max(ETA_FLOOR)
    }

    pub fn eta(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("shear magnitude must be >= 0, got {s}")));
        }
        Ok(self.eta_unchecked(s))
    }

    /// `eta(beta |D|) D` for symmetric `D`.
    pub fn stress(&self, d: &Tensor, beta: f64) -> Result<Tensor> {
        let scale = frob(d).max(1.0);
        for i in 0..3 {
            for j in 0..i {
                if (d[i][j] - d[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::Contract(format!("D is not symmetric at ({i},{j})")));
                }
            }
        }
        if !(beta >= 0.0) {
            return Err(Error::Domain(format!("beta must be >= 0, got {beta}")));
        }
        let eta = self.eta_unchecked(beta * frob(d));
        Ok(d.map(|row| row.map(|v| eta * v)))
    }
}

pub fn frob(a: &Tensor) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn contract(a: &Tensor, b: &Tensor) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| x * y).sum()
}

fn sub(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] -= b[i][j];
        }
    }
    out
}

/// Random symmetric tensor with log-uniform magnitude in `[1e-3, 1e3]`.
fn random_symmetric(rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let v: f64 = rng.gen_range(-1.0..1.0);
            t[i][j] = v;
            t[j][i] = v;
        }
    }
    let mag = 10f64.powf(rng.gen_range(-3.0..3.0));
    let f = frob(&t).max(1e-300);
    t.map(|row| row.map(|v| v * mag / f))
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub min_ratio: f64,
    pub samples: usize,
    pub beta: f64,
}

/// Minimum sampled coercivity ratio
/// `[eta(b|A|)A - eta(b|B|)B]:(A-B) / (|A-B|^2 + b^{r-2}|A-B|^r 1_{r>2})`.
pub fn check_monotonicity(law: &ViscosityLaw, beta: f64, n_samples: usize, seed: u64) -> MonotonicityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = law.r();
    let mut min_ratio = f64::INFINITY;
    let mut taken = 0;
    while taken < n_samples.max(1) {
        let a = random_symmetric(&mut rng);
        // half of the pairs are close to each other to probe the local modulus
        let b = if rng.gen_bool(0.5) {
            random_symmetric(&mut rng)
        } else {
            let p = random_symmetric(&mut rng);
            let s = rng.gen_range(1e-4..1.0) * frob(&a) / frob(&p).max(1e-300);
            let mut b = a;
            for i in 0..3 {
                for j in 0..3 {
                    b[i][j] += s * p[i][j];
                }
            }
            b
        };
        let diff = sub(&a, &b);
        let nd = frob(&diff);
        if nd < 1e-8 {
            continue;
        }
        let sa = law.stress(&a, beta).expect("symmetric sample");
        let sb = law.stress(&b, beta).expect("symmetric sample");
        let num = contract(&sub(&sa, &sb), &diff);
        let mut den = nd * nd;
        if r > 2.0 {
            den += beta.powf(r - 2.0) * nd.powf(r);
        }
        min_ratio = min_ratio.min(num / den);
        taken += 1;
    }
    MonotonicityReport {
        min_ratio,
        samples: taken,
        beta,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    /// Smallest `C` consistent with the samples.
    pub c: f64,
    pub samples: usize,
}

/// `sup |g(s)| / (s 1_{s<=1} + s^{max(r-2,0)} 1_{s>=1})` over a log grid on `[1e-6, 1e6]`.
pub fn check_growth(law: &ViscosityLaw, n_samples: usize) -> GrowthReport {
    let n = n_samples.max(2);
    let r = law.r();
    let mut c: f64 = 0.0;
    for i in 0..n {
        let s = 10f64.powf(-6.0 + 12.0 * i as f64 / (n - 1) as f64);
        let w = if s <= 1.0 { s } else { s.powf((r - 2.0).max(0.0)) };
        c = c.max(law.g(s).abs() / w);
    }
    GrowthReport { c, samples: n }
}
