//! Approximate path following: proximal gradient with backtracking over a
//! geometric sequence of regularization parameters, warm-started.
//!
//! The penalized problem `loss(b) + sum_j rho(|b_j|)` is rewritten as
//! `F~(b) + lambda ||b||_1` with `F~ = loss + Q`, `Q` the concave remainder of
//! the penalty, so every proximal step is plain soft-thresholding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty::PenaltySpec;

/// A smooth function with gradient.
pub trait Smooth {
    fn dim(&self) -> usize;
    /// Value; writes the gradient into `grad`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
    fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.value_grad(x, &mut g)
    }
}

impl<S: Smooth + ?Sized> Smooth for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).value_grad(x, grad)
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
}

/// `loss + Q_lambda` on the masked coordinates.
pub struct WithConcavePart<'a, S> {
    pub loss: S,
    pub penalty: PenaltySpec,
    pub mask: &'a [bool],
}

impl<S: Smooth> Smooth for WithConcavePart<'_, S> {
    fn dim(&self) -> usize {
        self.loss.dim()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut v = self.loss.value_grad(x, grad);
        for (j, &m) in self.mask.iter().enumerate() {
            if m && x[j] != 0.0 {
                v += self.penalty.concave_value(x[j]);
                grad[j] += self.penalty.concave_derivative(x[j]);
            }
        }
        v
    }
}

/// Units in which the lambda grid is built.
///
/// `Score`: `lambda_0` is the sup-norm of the summed log-likelihood score at
/// zero and the target is `c sqrt(log p / n)` in the same units; each grid
/// value is divided by `n` before it enters the per-observation penalty
/// `-l/n + sum_j rho_lambda(|b_j|)`. `Mean`: the grid is built directly from
/// the per-observation score, so the same target is a per-observation
/// threshold and the path stops `n` times earlier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    #[default]
    Score,
    Mean,
}

impl std::fmt::Display for GridScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridScale::Score => "score",
            GridScale::Mean => "mean",
        })
    }
}

impl std::str::FromStr for GridScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "score" | "sum" => Ok(GridScale::Score),
            "mean" => Ok(GridScale::Mean),
            other => Err(Error::invalid(format!("unknown grid scale '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub varsigma: f64,
    pub c: f64,
    pub inner_tol: f64,
    pub max_inner_iter: usize,
    pub l_init: f64,
    pub l_growth: f64,
    #[serde(default)]
    pub grid_scale: GridScale,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            varsigma: 0.95,
            c: 0.5,
            inner_tol: 1e-7,
            max_inner_iter: 5000,
            l_init: 1.0,
            l_growth: 2.0,
            grid_scale: GridScale::Score,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.9..1.0).contains(&self.varsigma) {
            return Err(Error::invalid(format!("path ratio must lie in [0.9, 1), got {}", self.varsigma)));
        }
        if !(self.c > 0.0) || !(self.inner_tol > 0.0) || self.max_inner_iter == 0 {
            return Err(Error::invalid("path constant, tolerance and iteration cap must be positive"));
        }
        if !(self.l_init > 0.0) || !(self.l_growth > 1.0) {
            return Err(Error::invalid("initial curvature must be > 0 and growth factor > 1"));
        }
        Ok(())
    }

    /// `c sqrt(log p / n)`; `p` is floored at 2 so the target stays positive.
    pub fn target(&self, n: usize, p: usize) -> f64 {
        self.c * ((p.max(2) as f64).ln() / n as f64).sqrt()
    }
}

/// `lambda_t = varsigma^t lambda_0`, `t = 1..N`, where `lambda_0` is the sup-norm
/// of the smooth gradient at zero over the penalized coordinates.
pub fn lambda_grid(smooth_grad_at_zero: &[f64], n: usize, p: usize, cfg: &PathConfig) -> Vec<f64> {
    let lam0 = smooth_grad_at_zero.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let target = cfg.target(n, p);
    if !(lam0 > target) {
        return vec![target];
    }
    let steps = ((target / lam0).ln() / cfg.varsigma.ln()).ceil() as i32;
    (1..=steps.max(1)).map(|t| lam0 * cfg.varsigma.powi(t)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub beta: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    /// `F~(beta) + lambda ||beta_masked||_1`.
    pub objective: f64,
    /// Curvature estimate at exit.
    pub l_final: f64,
}

/// Floor for the secant curvature estimate.
const MIN_CURVATURE: f64 = 1e-8;
/// Largest factor by which one accepted step may lower the trial curvature;
/// on badly scaled problems the secant estimate along one direction can sit
/// far below what the next direction needs, and every halving costs a
/// backtracking evaluation to undo.
const MAX_CURVATURE_DROP: f64 = 8.0;

#[inline]
fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn l1_masked(x: &[f64], mask: &[bool]) -> f64 {
    x.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| v.abs()).sum()
}

/// Proximal gradient on `F~ + lambda ||.||_1` from `beta_init`, curvature
/// starting at `l_start`.
pub fn proximal_gradient_solve<S: Smooth>(
    smooth: &S,
    lam: f64,
    beta_init: &[f64],
    penalize_mask: &[bool],
    cfg: &PathConfig,
    l_start: f64,
) -> Result<SolveResult> {
    let k = smooth.dim();
    if beta_init.len() != k || penalize_mask.len() != k {
        return Err(Error::Dimension { expected: k, got: beta_init.len().min(penalize_mask.len()) });
    }
    let mut beta = beta_init.to_vec();
    let mut grad = vec![0.0; k];
    let mut f = smooth.value_grad(&beta, &mut grad);
    if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical("non-finite smooth value or gradient at the start"));
    }
    let mut phi = f + lam * l1_masked(&beta, penalize_mask);
    let mut l = l_start.max(f64::MIN_POSITIVE);
    let mut cand = vec![0.0; k];
    let mut cand_grad = vec![0.0; k];
    for iter in 1..=cfg.max_inner_iter {
        let fc = loop {
            for j in 0..k {
                let z = beta[j] - grad[j] / l;
                cand[j] = if penalize_mask[j] { soft(z, lam / l) } else { z };
            }
            let fc = smooth.value_grad(&cand, &mut cand_grad);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for j in 0..k {
                let d = cand[j] - beta[j];
                lin += grad[j] * d;
                sq += d * d;
            }
            if fc.is_finite() && fc <= f + lin + 0.5 * l * sq + 1e-12 * f.abs().max(1.0) {
                break fc;
            }
            l *= cfg.l_growth;
            if l > 1e30 {
                return Err(Error::numerical("line search failed to find a majorizing step"));
            }
        };
        if cand_grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical(format!("non-finite gradient at inner iteration {iter}")));
        }
        let phi_new = fc + lam * l1_masked(&cand, penalize_mask);
        if phi_new > phi + 1e-8 {
            return Err(Error::numerical(format!("objective increased by {:e} at inner iteration {iter}", phi_new - phi)));
        }
        let delta = beta.iter().zip(&cand).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        // Next trial curvature: the secant estimate along the accepted step,
        // never above the current one; backtracking restores majorization.
        let (mut sy, mut ss) = (0.0, 0.0);
        for j in 0..k {
            let d = cand[j] - beta[j];
            sy += d * (cand_grad[j] - grad[j]);
            ss += d * d;
        }
        if ss > 0.0 && sy > 0.0 {
            l = (sy / ss).clamp((l / MAX_CURVATURE_DROP).max(MIN_CURVATURE), l);
        }
        std::mem::swap(&mut beta, &mut cand);
        std::mem::swap(&mut grad, &mut cand_grad);
        f = fc;
        phi = phi_new;
        if delta <= cfg.inner_tol {
            return Ok(SolveResult { beta, iters: iter, converged: true, objective: phi, l_final: l });
        }
    }
    Ok(SolveResult { beta, iters: cfg.max_inner_iter, converged: false, objective: phi, l_final: l })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub iters: usize,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub entries: Vec<PathEntry>,
}

/// Solves along a decreasing grid with warm starts. `smooth_family(lambda)`
/// builds `F~_lambda`.
pub fn apf_path<S, F>(smooth_family: F, grid: &[f64], beta_init: &[f64], mask: &[bool], cfg: &PathConfig) -> Result<PathResult>
where
    S: Smooth,
    F: Fn(f64) -> S,
{
    if grid.is_empty() {
        return Err(Error::invalid("empty lambda grid"));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("lambda grid must be strictly decreasing"));
    }
    let mut beta = beta_init.to_vec();
    let mut l = cfg.l_init;
    let mut entries = Vec::with_capacity(grid.len());
    for (t, &lam) in grid.iter().enumerate() {
        let smooth = smooth_family(lam);
        let r = proximal_gradient_solve(&smooth, lam, &beta, mask, cfg, l).map_err(|e| match e {
            Error::Numerical(m) => Error::numerical(format!("lambda index {t} ({lam:.6e}): {m}")),
            other => other,
        })?;
        l = (r.l_final / cfg.l_growth).max(cfg.l_init);
        beta = r.beta.clone();
        entries.push(PathEntry { lambda: lam, beta: r.beta, iters: r.iters, objective: r.objective, converged: r.converged });
    }
    Ok(PathResult { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Quad {
        b: Vec<f64>,
    }

    impl Smooth for Quad {
        fn dim(&self) -> usize {
            self.b.len()
        }
        fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let mut v = 0.0;
            for j in 0..x.len() {
                g[j] = x[j] - self.b[j];
                v += 0.5 * g[j] * g[j];
            }
            v
        }
    }

    #[test]
    fn grid_length_example() {
        let cfg = PathConfig::default();
        let g = lambda_grid(&[1.0, -0.3], 1000, 20, &cfg);
        let target = 0.5 * (20f64.ln() / 1000.0).sqrt();
        assert_relative_eq!(target, 0.027366, epsilon = 1e-6);
        assert_eq!(g.len(), 71);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!(*g.last().unwrap() >= target * 0.95);
        assert!(*g.last().unwrap() <= target);
        let shorter = lambda_grid(&[1.0], 1000, 20, &PathConfig { varsigma: 0.9, ..cfg });
        assert!(shorter.len() < g.len());
        assert_eq!(lambda_grid(&[0.0, 0.0], 1000, 20, &cfg), vec![target]);
    }

    #[test]
    fn identity_quadratic_gives_soft_threshold() {
        let q = Quad { b: vec![2.0, -0.3] };
        let r = proximal_gradient_solve(&q, 0.5, &[0.0, 0.0], &[true, true], &PathConfig::default(), 1.0).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.beta[0], 1.5, epsilon = 1e-9);
        assert_eq!(r.beta[1], 0.0);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let q = Quad { b: vec![0.2, -0.1, 0.05] };
        let r = proximal_gradient_solve(&q, 0.3, &[1.0, 1.0, 1.0], &[true; 3], &PathConfig::default(), 1.0).unwrap();
        assert!(r.beta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unmasked_coordinate_is_not_thresholded() {
        let q = Quad { b: vec![0.1, 0.1] };
        let r = proximal_gradient_solve(&q, 1.0, &[0.0, 0.0], &[false, true], &PathConfig::default(), 1.0).unwrap();
        assert_relative_eq!(r.beta[0], 0.1, epsilon = 1e-9);
        assert_eq!(r.beta[1], 0.0);
    }

    #[test]
    fn path_warm_start_matches_cold_start_on_convex_problem() {
        let q = Quad { b: vec![1.0, -0.6, 0.3, 0.0] };
        let grid = lambda_grid(&q.b, 100, 4, &PathConfig::default());
        let mask = [true; 4];
        let path = apf_path(|_| &q, &grid, &[0.0; 4], &mask, &PathConfig::default()).unwrap();
        for e in &path.entries {
            let cold = proximal_gradient_solve(&q, e.lambda, &[0.0; 4], &mask, &PathConfig::default(), 1.0).unwrap();
            assert!((cold.objective - e.objective).abs() < 1e-6);
        }
        let first = &path.entries[0];
        assert!(first.beta.iter().filter(|&&v| v != 0.0).count() <= 1);
    }
}
