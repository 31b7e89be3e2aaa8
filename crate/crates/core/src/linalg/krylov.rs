//! Preconditioned Krylov solvers (CG and MINRES) over plain slices.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Relative residual in the preconditioner norm at exit.
    pub residual: f64,
    pub history: Vec<f64>,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients for SPD `apply`, preconditioner `prec` (SPD).
/// `x` holds the initial guess on entry.
pub fn pcg(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    prec: &mut dyn FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovStats> {
    let n = b.len();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    let mut z = vec![0.0; n];
    prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let bnorm = {
        let mut zb = vec![0.0; n];
        prec(b, &mut zb);
        dot(b, &zb).max(0.0).sqrt()
    };
    let mut stats = KrylovStats::default();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(stats);
    }
    let mut ap = vec![0.0; n];
    let mut rel = rz.max(0.0).sqrt() / bnorm;
    stats.history.push(rel);
    while rel > tol {
        if stats.iterations >= max_iter {
            stats.residual = rel;
            return Err(Error::Solver {
                iterations: stats.iterations,
                residual: rel,
                history: stats.history,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NumericalQuality(format!(
                "cg: operator not positive definite (pAp = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        prec(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        stats.iterations += 1;
        rel = rz.max(0.0).sqrt() / bnorm;
        stats.history.push(rel);
    }
    stats.residual = rel;
    Ok(stats)
}

/// Preconditioned MINRES for symmetric (possibly indefinite) `apply` with SPD `prec`.
///
/// Converges on the preconditioned residual norm relative to the right-hand side.
pub fn minres(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    prec: &mut dyn FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovStats> {
    let n = b.len();
    let mut stats = KrylovStats::default();

    let mut r1 = vec![0.0; n];
    apply(x, &mut r1);
    r1.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    let mut y = vec![0.0; n];
    prec(&r1, &mut y);
    let beta1 = dot(&r1, &y);
    if beta1 < 0.0 {
        return Err(Error::NumericalQuality("minres: preconditioner is indefinite".into()));
    }
    let bnorm = {
        let mut zb = vec![0.0; n];
        prec(b, &mut zb);
        dot(b, &zb).max(0.0).sqrt()
    };
    let mut beta = beta1.sqrt();
    if beta == 0.0 || bnorm == 0.0 {
        return Ok(stats);
    }

    let mut r2 = r1.clone();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut oldb = 0.0;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta;
    let mut cs = -1.0;
    let mut sn = 0.0;

    let mut rel = phibar / bnorm;
    stats.history.push(rel);
    while rel > tol {
        if stats.iterations >= max_iter {
            stats.residual = rel;
            return Err(Error::Solver {
                iterations: stats.iterations,
                residual: rel,
                history: stats.history,
            });
        }
        let s = 1.0 / beta;
        v.iter_mut().zip(&y).for_each(|(v, y)| *v = s * y);
        apply(&v, &mut y);
        if stats.iterations > 0 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        prec(&r2, &mut y);
        oldb = beta;
        let b2 = dot(&r2, &y);
        if b2 < 0.0 {
            return Err(Error::NumericalQuality("minres: preconditioner is indefinite".into()));
        }
        beta = b2.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;

        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        stats.iterations += 1;
        rel = phibar / bnorm;
        stats.history.push(rel);
        if beta == 0.0 {
            break;
        }
    }
    stats.residual = rel;
    Ok(stats)
}
