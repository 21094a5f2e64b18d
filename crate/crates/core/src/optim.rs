//! Smooth unconstrained minimization (BFGS with Armijo backtracking).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct BfgsConfig {
    pub max_iter: usize,
    /// Stop when `||grad||_inf <= gtol`.
    pub gtol: f64,
    /// Or when the step changes every coordinate by at most `xtol`.
    pub xtol: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig { max_iter: 500, gtol: 1e-9, xtol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iters: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, which returns the value and gradient at a point.
pub fn bfgs<F>(mut f: F, x0: &[f64], cfg: &BfgsConfig) -> Result<BfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let k = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite objective at the starting point"));
    }
    // Inverse Hessian approximation, row-major.
    let mut hinv = identity(k);
    let mut scaled = false;
    for iter in 0..cfg.max_iter {
        if inf_norm(&g) <= cfg.gtol {
            return Ok(BfgsResult { x, value: fx, iters: iter, converged: true });
        }
        let mut dir: Vec<f64> = (0..k).map(|r| -dot(&hinv[r * k..(r + 1) * k], &g)).collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            hinv = identity(k);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        let mut t = 1.0;
        let (xn, fxn, gn) = loop {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let (fv, gv) = f(&xn)?;
            if fv.is_finite() && fv <= fx + 1e-4 * t * slope && gv.iter().all(|v| v.is_finite()) {
                break (xn, fv, gv);
            }
            t *= 0.5;
            if t < 1e-20 {
                return Ok(BfgsResult { x, value: fx, iters: iter, converged: inf_norm(&g) <= cfg.gtol.sqrt() });
            }
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        let small_step = inf_norm(&s) <= cfg.xtol;
        x = xn;
        fx = fxn;
        g = gn;
        if small_step {
            return Ok(BfgsResult { x, value: fx, iters: iter + 1, converged: true });
        }
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if !scaled {
                let gamma = sy / dot(&yv, &yv);
                for (i, v) in hinv.iter_mut().enumerate() {
                    *v = if i % (k + 1) == 0 { gamma } else { 0.0 };
                }
                scaled = true;
            }
            bfgs_update(&mut hinv, &s, &yv, sy, k);
        }
    }
    Ok(BfgsResult { converged: inf_norm(&g) <= cfg.gtol, x, value: fx, iters: cfg.max_iter })
}

fn identity(k: usize) -> Vec<f64> {
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        m[i * k + i] = 1.0;
    }
    m
}

/// `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, k: usize) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..k).map(|r| dot(&h[r * k..(r + 1) * k], y)).collect();
    let yhy = dot(y, &hy);
    for r in 0..k {
        for c in 0..k {
            h[r * k + c] += -rho * (s[r] * hy[c] + hy[r] * s[c]) + (rho * rho * yhy + rho) * s[r] * s[c];
        }
    }
}
