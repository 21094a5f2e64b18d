//! Effective degrees of freedom, deviance and GCV/BIC model selection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Criterion;
use crate::error::Result;
use crate::linalg::{add_outer, pinv_sym};
use crate::link::LinkKind;
use crate::misclass::{surrogate_mean, RowGammas};
use crate::objective::{restricted_index, Design};
use crate::penalty::PenaltySpec;
use crate::PROB_EPS;

/// Indices `j` (0-based over `beta`) with `beta_j != 0`.
pub fn support_of(beta: &[f64]) -> Vec<usize> {
    beta.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect()
}

/// Curvature-weighted information `(1/n) sum_i q_i (d mu / d beta_bar_I)^{x2}`.
pub fn weighted_information(design: &Design, link: LinkKind, beta_bar: &[f64], gam: &RowGammas, support: &[usize]) -> DMatrix<f64> {
    let idx = restricted_index(support);
    let mut m = DMatrix::zeros(idx.len(), idx.len());
    let mut v = vec![0.0; idx.len()];
    for i in 0..design.n() {
        let eta = design.eta(beta_bar, i);
        let mu = link.inverse(eta).clamp(PROB_EPS, 1.0 - PROB_EPS);
        let d1 = link.inverse_deriv(eta);
        let q = match design.y(i) {
            Some(_) => 1.0 / (mu * (1.0 - mu)),
            None => {
                let (g01, g10) = (gam.g01[i], gam.g10[i]);
                let ms = surrogate_mean(g01, g10, mu).clamp(PROB_EPS, 1.0 - PROB_EPS);
                (1.0 - g01 - g10).powi(2) / (ms * (1.0 - ms))
            }
        };
        let x = design.row(i);
        for (k, &j) in idx.iter().enumerate() {
            v[k] = d1 * x[j];
        }
        add_outer(&mut m, &v, q);
    }
    m / design.n() as f64
}

/// `diag(0, rho''(|beta_j|), ...)` over the support.
pub fn penalty_curvature(spec: &PenaltySpec, beta: &[f64], support: &[usize]) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(support.len() + 1, support.len() + 1);
    for (k, &j) in support.iter().enumerate() {
        d[(k + 1, k + 1)] = spec.rho2(beta[j]);
    }
    d
}

/// `trace{I (I + Sigma)^-1}`; the flag reports a pseudo-inverse fallback.
pub fn df_from_matrices(info: &DMatrix<f64>, sigma: &DMatrix<f64>) -> (f64, bool) {
    let (inv, singular) = pinv_sym(&(info + sigma));
    ((info * inv).trace(), singular)
}

/// Effective number of parameters of a fitted model.
pub fn effective_df(design: &Design, link: LinkKind, beta_bar: &[f64], gam: &RowGammas, spec: &PenaltySpec) -> (f64, bool) {
    let support = support_of(&beta_bar[1..]);
    let info = weighted_information(design, link, beta_bar, gam, &support);
    let sigma = penalty_curvature(spec, &beta_bar[1..], &support);
    df_from_matrices(&info, &sigma)
}

#[inline]
fn binary_dev(y: u8, p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y == 1 {
        -2.0 * p.ln()
    } else {
        -2.0 * (1.0 - p).ln()
    }
}

/// Deviance: `y` against `mu` on validation rows, `y*` against `mu*` elsewhere.
pub fn deviance(design: &Design, link: LinkKind, beta_bar: &[f64], gam: &RowGammas) -> f64 {
    (0..design.n())
        .map(|i| {
            let mu = link.inverse(design.eta(beta_bar, i));
            match design.y(i) {
                Some(y) => binary_dev(y, mu),
                None => binary_dev(design.y_star(i), surrogate_mean(gam.g01[i], gam.g10[i], mu)),
            }
        })
        .sum()
}

pub fn gcv(dev: f64, df: f64, n: usize) -> f64 {
    let n = n as f64;
    dev / (n * (1.0 - df / n).powi(2))
}

pub fn bic(dev: f64, df: f64, n: usize) -> f64 {
    dev + 2.0 * (n as f64).ln() * df
}

/// One evaluated tuning point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningEntry {
    pub lambda: f64,
    pub h: Option<f64>,
    pub omega: Option<f64>,
    pub df: f64,
    pub deviance: f64,
    pub gcv: f64,
    pub bic: f64,
    pub support_size: usize,
}

impl TuningEntry {
    pub fn score(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Gcv => self.gcv,
            Criterion::Bic => self.bic,
        }
    }
}

/// Relative gap below which two criterion values count as tied. Along a flat
/// stretch of a nonconvex path the fitted model does not change with lambda
/// and the criterion differs only by round-off.
pub const SELECTION_TIE_TOL: f64 = 1e-10;

/// Index of the minimizing candidate. Candidates with `df >= n` are skipped;
/// values within [`SELECTION_TIE_TOL`] of the minimum are ties, which go to the
/// larger lambda, then to the earlier candidate.
pub fn select_model(candidates: &[TuningEntry], n: usize, criterion: Criterion) -> Option<usize> {
    let ok = |c: &TuningEntry| c.df < n as f64 && c.score(criterion).is_finite();
    let min = candidates.iter().filter(|c| ok(c)).map(|c| c.score(criterion)).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let cut = min + SELECTION_TIE_TOL * min.abs().max(1.0);
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if ok(c) && c.score(criterion) <= cut && best.is_none_or(|b| c.lambda > candidates[b].lambda) {
            best = Some(i);
        }
    }
    best
}

/// Number of candidates with `df >= n`.
pub fn excluded_count(candidates: &[TuningEntry], n: usize) -> usize {
    candidates.iter().filter(|c| !(c.df < n as f64)).count()
}

pub(crate) fn entry(lambda: f64, h: Option<f64>, omega: Option<f64>, df: f64, dev: f64, n: usize, support_size: usize) -> TuningEntry {
    TuningEntry { lambda, h, omega, df, deviance: dev, gcv: gcv(dev, df, n), bic: bic(dev, df, n), support_size }
}

pub(crate) fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(crate::error::Error::numerical(format!("non-finite {what}")))
    }
}
