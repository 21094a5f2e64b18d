//! Sandwich covariance estimates for the selected coefficients and Wald
//! intervals.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::tuning::support_of;
use crate::linalg::{add_outer, inverse_or_pinv, symmetrize};
use crate::link::{std_normal_quantile, LinkKind};
use crate::misclass::{NuVector, RowGammas};
use crate::objective::{info_from_design, row_scores, score_jacobian, sigma_sp_from_design, Design};
use crate::penalty::PenaltySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMethod {
    /// `(1/n)(I + S)^-1 I (I + S)^-T` on the information of `(beta_bar_I[, nu])`.
    Information,
    /// `(H - nS)^-1 [cov(score) + plug-in term] (H - nS)^-T`.
    KernelSandwich,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    /// Coordinates: intercept, selected coefficients, then `nu` if present.
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub method: CovarianceMethod,
    /// A pseudo-inverse replaced a singular inverse.
    pub singular: bool,
    /// Relative asymmetry before symmetrization.
    pub asymmetry: f64,
}

impl CovarianceEstimate {
    fn from_matrix(m: DMatrix<f64>, labels: Vec<String>, method: CovarianceMethod, singular: bool) -> Self {
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asymmetry = (&m - m.transpose()).amax() / scale;
        let s = symmetrize(&m);
        let se = (0..s.nrows()).map(|i| s[(i, i)].max(0.0).sqrt()).collect();
        let matrix = (0..s.nrows()).map(|i| s.row(i).iter().copied().collect()).collect();
        CovarianceEstimate { labels, matrix, se, method, singular, asymmetry }
    }

    pub fn dim(&self) -> usize {
        self.se.len()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |i, j| self.matrix[i][j])
    }
}

fn labels(names: &[String], support: &[usize], nu_dim: usize) -> Vec<String> {
    let mut l = vec!["(intercept)".to_string()];
    l.extend(support.iter().map(|&j| names.get(j).cloned().unwrap_or_else(|| format!("z{}", j + 1))));
    if nu_dim > 0 {
        let d = nu_dim / 2;
        for block in ["nu01", "nu10"] {
            l.push(format!("{block}:(intercept)"));
            for j in 1..d {
                l.push(format!("{block}:{}", names.get(j - 1).cloned().unwrap_or_else(|| format!("z{j}"))));
            }
        }
    }
    l
}

fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("z{j}")).collect()
}

/// Information-based covariance. With `nu` the information covers
/// `(beta_bar_I, nu)` and the `beta_bar_I` block equals the profiled form
/// `(1/n)(I* + S)^-1 I* (I* + S)^-T`, `I* = I11 - I12 I22^-1 I21`.
pub fn cov_parametric(
    design: &Design,
    link: LinkKind,
    beta_bar: &[f64],
    nu: Option<&NuVector>,
    gam: &RowGammas,
    spec: &PenaltySpec,
) -> Result<CovarianceEstimate> {
    let support = support_of(&beta_bar[1..]);
    let gam_nu;
    let gam = match nu {
        Some(v) => {
            if v.len() != 2 * design.dim() {
                return Err(Error::Dimension { expected: 2 * design.dim(), got: v.len() });
            }
            gam_nu = gammas_on_design(design, v);
            &gam_nu
        }
        None => gam,
    };
    let info = info_from_design(design, link, beta_bar, gam, &support, nu.is_some())?.i_delta;
    let k = info.nrows();
    let mut a = info.clone();
    for (r, &j) in support.iter().enumerate() {
        a[(r + 1, r + 1)] += spec.rho2(beta_bar[j + 1].abs());
    }
    let (ainv, singular) = inverse_or_pinv(&a);
    let cov = &ainv * &info * ainv.transpose() / design.n() as f64;
    debug_assert_eq!(cov.nrows(), k);
    let names = default_names(design.dim() - 1);
    Ok(CovarianceEstimate::from_matrix(cov, labels(&names, &support, nu.map_or(0, |v| v.len())), CovarianceMethod::Information, singular))
}

fn gammas_on_design(design: &Design, nu: &NuVector) -> RowGammas {
    let d = design.dim();
    let s = nu.as_slice();
    let mut g = RowGammas::zeros(design.n());
    for i in 0..design.n() {
        let x = design.row(i);
        g.g01[i] = crate::link::expit(x.iter().zip(&s[..d]).map(|(a, b)| a * b).sum());
        g.g10[i] = crate::link::expit(x.iter().zip(&s[d..]).map(|(a, b)| a * b).sum());
    }
    g
}

/// Kernel-sandwich covariance with gammas held at their kernel estimates.
pub fn cov_semiparametric(
    design: &Design,
    link: LinkKind,
    beta_bar: &[f64],
    gam: &RowGammas,
    spec: &PenaltySpec,
) -> Result<CovarianceEstimate> {
    let n = design.n() as f64;
    let nv = design.n_validation();
    if nv == 0 {
        return Err(Error::SparseValidation("kernel covariance needs validated rows".into()));
    }
    let delta = nv as f64 / n;
    let support = support_of(&beta_bar[1..]);
    let mut j = score_jacobian(design, link, beta_bar, gam, &support)?;
    for (r, &s) in support.iter().enumerate() {
        j[(r + 1, r + 1)] -= n * spec.rho2(beta_bar[s + 1].abs());
    }
    let bracket = kernel_bracket(design, link, beta_bar, gam, &support, delta)?;
    let (jinv, singular) = inverse_or_pinv(&j);
    let cov = &jinv * bracket * jinv.transpose();
    let names = default_names(design.dim() - 1);
    Ok(CovarianceEstimate::from_matrix(cov, labels(&names, &support, 0), CovarianceMethod::KernelSandwich, singular))
}

/// `sum_i (s_i - s_bar)(s_i - s_bar)' + n (1-delta)^2 / delta^2 Sigma_sp`.
pub fn kernel_bracket(
    design: &Design,
    link: LinkKind,
    beta_bar: &[f64],
    gam: &RowGammas,
    support: &[usize],
    delta: f64,
) -> Result<DMatrix<f64>> {
    let scores = row_scores(design, link, beta_bar, gam, support, false)?;
    let k = support.len() + 1;
    let n = design.n() as f64;
    let mut mean = vec![0.0; k];
    for s in &scores {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n;
        }
    }
    let mut c = DMatrix::zeros(k, k);
    let mut centered = vec![0.0; k];
    for s in &scores {
        for ((c, v), m) in centered.iter_mut().zip(s).zip(&mean) {
            *c = v - m;
        }
        add_outer(&mut c, &centered, 1.0);
    }
    let sp = sigma_sp_from_design(design, link, beta_bar, gam, support)?;
    Ok(c + sp * (n * (1.0 - delta).powi(2) / (delta * delta)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

/// `estimate +- z_{(1+level)/2} se` for the intercept and every selected
/// coefficient; exact zeros get no interval.
pub fn confidence_intervals(
    cov: &CovarianceEstimate,
    beta_bar: &[f64],
    support: &[usize],
    names: &[String],
    level: f64,
) -> Result<Vec<Interval>> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::invalid(format!("confidence level must lie in [0, 1), got {level}")));
    }
    if cov.dim() < support.len() + 1 {
        return Err(Error::Dimension { expected: support.len() + 1, got: cov.dim() });
    }
    let z = if level == 0.0 { 0.0 } else { std_normal_quantile(0.5 + level / 2.0) };
    let mut out = Vec::with_capacity(support.len() + 1);
    let name_of = |k: usize| {
        if k == 0 {
            "(intercept)".to_string()
        } else {
            names.get(support[k - 1]).cloned().unwrap_or_else(|| format!("z{}", support[k - 1] + 1))
        }
    };
    for k in 0..=support.len() {
        let est = if k == 0 { beta_bar[0] } else { beta_bar[support[k - 1] + 1] };
        let se = cov.se[k];
        out.push(Interval { name: name_of(k), estimate: est, se, lo: est - z * se, hi: est + z * se });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub covariance: CovarianceEstimate,
    pub intervals: Vec<Interval>,
    pub level: f64,
    /// Some selected coefficient has a nonzero penalty derivative, so the
    /// first-order bias term does not vanish.
    pub bias_flag: bool,
}

impl Inference {
    pub fn new(
        mut covariance: CovarianceEstimate,
        beta_bar: &[f64],
        support: &[usize],
        names: &[String],
        spec: &PenaltySpec,
        level: f64,
    ) -> Self {
        for (k, &j) in support.iter().enumerate() {
            if let Some(n) = names.get(j) {
                covariance.labels[k + 1] = n.clone();
            }
        }
        let d = beta_bar.len();
        if covariance.dim() > support.len() + 1 {
            let rest = labels(names, &[], 2 * d);
            covariance.labels.truncate(support.len() + 1);
            covariance.labels.extend(rest.into_iter().skip(1));
        }
        let intervals = confidence_intervals(&covariance, beta_bar, support, names, level).unwrap_or_default();
        let bias_flag = support.iter().any(|&j| spec.rho1(beta_bar[j + 1].abs()) > 0.0);
        Inference { covariance, intervals, level, bias_flag }
    }

    /// Standard error of coefficient `j` (0-based over `beta`), if selected.
    pub fn se_of(&self, support: &[usize], j: usize) -> Option<f64> {
        support.iter().position(|&s| s == j).map(|k| self.covariance.se[k + 1])
    }
}
