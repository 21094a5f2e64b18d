//! Observed-data log-likelihoods, scores and information matrices.
//!
//! Validation rows contribute `log f(y, y* | z)`; the remaining rows contribute
//! `log f(y* | z)` with `f(y* | z) = a1 mu + a0 (1 - mu)`. The same row kernel
//! serves the parametric model (gammas from `nu`) and the semiparametric model
//! (gammas from a kernel table), and the naive model (every row treated as
//! validated with `y = y*` and no misclassification).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::add_outer;
use crate::link::LinkKind;
use crate::misclass::{a_from_gammas, surrogate_mean, NuVector, RowGammas};
use crate::PROB_EPS;

/// `theta = (beta0*, beta, nu)`; the penalized block is exactly `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub beta0_star: f64,
    pub beta: Vec<f64>,
    pub nu: Option<NuVector>,
}

impl ParamVector {
    pub fn new(beta0_star: f64, beta: Vec<f64>, nu: Option<NuVector>) -> Self {
        ParamVector { beta0_star, beta, nu }
    }

    pub fn from_beta_bar(beta_bar: &[f64], nu: Option<NuVector>) -> Self {
        ParamVector { beta0_star: beta_bar[0], beta: beta_bar[1..].to_vec(), nu }
    }

    pub fn beta_bar(&self) -> Vec<f64> {
        std::iter::once(self.beta0_star).chain(self.beta.iter().copied()).collect()
    }

    /// Flattened `[beta0*, beta, nu]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta_bar();
        if let Some(nu) = &self.nu {
            v.extend_from_slice(nu.as_slice());
        }
        v
    }

    pub fn len(&self) -> usize {
        1 + self.beta.len() + self.nu.as_ref().map_or(0, |n| n.len())
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Dense row-major design `[1, z']` with responses, built once per dataset.
#[derive(Debug, Clone)]
pub struct Design {
    n: usize,
    d: usize,
    x: Vec<f64>,
    y_star: Vec<u8>,
    y: Vec<Option<u8>>,
}

impl Design {
    pub fn new(ds: &Dataset) -> Self {
        let d = ds.p() + 1;
        let mut x = Vec::with_capacity(ds.n() * d);
        for r in ds.rows() {
            x.push(1.0);
            x.extend_from_slice(&r.z);
        }
        Design { n: ds.n(), d, x, y_star: ds.rows().iter().map(|r| r.y_star).collect(), y: ds.rows().iter().map(|r| r.y).collect() }
    }

    /// Every row treated as validated with `y = y*`.
    pub fn naive(ds: &Dataset) -> Self {
        let mut d = Self::new(ds);
        d.y = d.y_star.iter().map(|&v| Some(v)).collect();
        d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `1 + p`.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_validation(&self) -> usize {
        self.y.iter().filter(|v| v.is_some()).count()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn y_star(&self, i: usize) -> u8 {
        self.y_star[i]
    }

    #[inline]
    pub fn y(&self, i: usize) -> Option<u8> {
        self.y[i]
    }

    #[inline]
    pub fn eta(&self, beta_bar: &[f64], i: usize) -> f64 {
        self.row(i).iter().zip(beta_bar).map(|(a, b)| a * b).sum()
    }

    fn check(&self, beta_bar: &[f64], gam: &RowGammas) -> Result<()> {
        if beta_bar.len() != self.d {
            return Err(Error::Dimension { expected: self.d, got: beta_bar.len() });
        }
        if gam.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: gam.len() });
        }
        Ok(())
    }
}

/// One row's log-likelihood and its derivatives in `eta`, `gamma01`, `gamma10`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowTerm {
    pub ll: f64,
    pub d_eta: f64,
    pub d2_eta: f64,
    pub d_g01: f64,
    pub d_g10: f64,
    pub clamped: bool,
}

#[inline]
fn clampp(v: f64) -> (f64, bool) {
    let c = v.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (c, c != v)
}

/// Lower clamp only: `ln(1) = 0` needs no protection, and leaving the top open
/// keeps the no-misclassification case an exact Bernoulli likelihood.
#[inline]
fn floorp(v: f64) -> (f64, bool) {
    if v < PROB_EPS {
        (PROB_EPS, true)
    } else {
        (v, false)
    }
}

#[inline]
pub fn row_term(link: LinkKind, eta: f64, y_star: u8, y: Option<u8>, g01: f64, g10: f64) -> RowTerm {
    let (mu, c_mu) = clampp(link.inverse(eta));
    // Past the clamp mu is constant in eta, so its derivatives vanish.
    let (d1, d2) = if c_mu { (0.0, 0.0) } else { (link.inverse_deriv(eta), link.inverse_deriv2(eta)) };
    let (a0, a1) = a_from_gammas(g01, g10, y_star);
    // Signs of d a0 / d gamma01 and d a1 / d gamma10.
    let s0 = if y_star == 1 { 1.0 } else { -1.0 };
    let s1 = -s0;
    match y {
        Some(y) => {
            let yf = y as f64;
            let (ll_a, d_g01, d_g10, c_a) = if y == 1 {
                let (a, c) = floorp(a1);
                (a.ln(), 0.0, s1 / a, c)
            } else {
                let (a, c) = floorp(a0);
                (a.ln(), s0 / a, 0.0, c)
            };
            let var = mu * (1.0 - mu);
            let r = yf - mu;
            RowTerm {
                ll: yf * mu.ln() + (1.0 - yf) * (1.0 - mu).ln() + ll_a,
                d_eta: r * d1 / var,
                d2_eta: -d1 * d1 / var - r * d1 * d1 * (1.0 - 2.0 * mu) / (var * var) + r * d2 / var,
                d_g01,
                d_g10,
                clamped: c_mu || c_a,
            }
        }
        None => {
            let (f, c) = floorp(a0 + (a1 - a0) * mu);
            let k = (a1 - a0) / f;
            RowTerm {
                ll: f.ln(),
                d_eta: k * d1,
                d2_eta: k * d2 - k * k * d1 * d1,
                d_g01: (1.0 - mu) * s0 / f,
                d_g10: mu * s1 / f,
                clamped: c || c_mu,
            }
        }
    }
}

/// Log-likelihood in `beta_bar` with fixed per-row gammas.
pub fn loglik(design: &Design, link: LinkKind, beta_bar: &[f64], gam: &RowGammas) -> Result<f64> {
    design.check(beta_bar, gam)?;
    Ok((0..design.n).map(|i| row_term(link, design.eta(beta_bar, i), design.y_star[i], design.y[i], gam.g01[i], gam.g10[i]).ll).sum())
}

/// Log-likelihood and its gradient in `beta_bar`.
pub fn loglik_and_score(design: &Design, link: LinkKind, beta_bar: &[f64], gam: &RowGammas) -> Result<(f64, Vec<f64>)> {
    design.check(beta_bar, gam)?;
    let mut ll = 0.0;
    let mut g = vec![0.0; design.d];
    for i in 0..design.n {
        let t = row_term(link, design.eta(beta_bar, i), design.y_star[i], design.y[i], gam.g01[i], gam.g10[i]);
        ll += t.ll;
        for (gj, xj) in g.iter_mut().zip(design.row(i)) {
            *gj += t.d_eta * xj;
        }
    }
    Ok((ll, g))
}

/// Number of rows whose likelihood terms hit the probability clamp.
pub fn clamp_count(design: &Design, link: LinkKind, beta_bar: &[f64], gam: &RowGammas) -> usize {
    (0..design.n)
        .filter(|&i| row_term(link, design.eta(beta_bar, i), design.y_star[i], design.y[i], gam.g01[i], gam.g10[i]).clamped)
        .count()
}

fn theta_gammas(theta: &ParamVector, ds: &Dataset) -> Result<RowGammas> {
    let nu = theta.nu.as_ref().ok_or_else(|| Error::invalid("parametric likelihood needs nu"))?;
    if nu.p() != ds.p() {
        return Err(Error::Dimension { expected: 2 * (ds.p() + 1), got: nu.len() });
    }
    Ok(RowGammas::from_param(nu, ds))
}

/// Parametric observed-data log-likelihood.
pub fn loglik_param(theta: &ParamVector, ds: &Dataset, link: LinkKind) -> Result<f64> {
    let gam = theta_gammas(theta, ds)?;
    loglik(&Design::new(ds), link, &theta.beta_bar(), &gam)
}

/// Score of the parametric log-likelihood, ordered `[beta0*, beta, nu]`.
pub fn score_param(theta: &ParamVector, ds: &Dataset, link: LinkKind) -> Result<Vec<f64>> {
    let design = Design::new(ds);
    Ok(param_value_and_score(&design, link, theta)?.1)
}

/// Parametric log-likelihood and full score on a prebuilt design.
pub fn param_value_and_score(design: &Design, link: LinkKind, theta: &ParamVector) -> Result<(f64, Vec<f64>)> {
    let nu = theta.nu.as_ref().ok_or_else(|| Error::invalid("parametric likelihood needs nu"))?;
    let bb = theta.beta_bar();
    let d = design.d;
    let p = d - 1;
    if nu.p() != p || bb.len() != d {
        return Err(Error::Dimension { expected: d + 2 * d, got: theta.len() });
    }
    let nus = nu.as_slice();
    let mut ll = 0.0;
    let mut g = vec![0.0; d + nus.len()];
    for i in 0..design.n {
        let x = design.row(i);
        let eta01: f64 = x.iter().zip(&nus[..d]).map(|(a, b)| a * b).sum();
        let eta10: f64 = x.iter().zip(&nus[d..]).map(|(a, b)| a * b).sum();
        let g01 = crate::link::expit(eta01);
        let g10 = crate::link::expit(eta10);
        let t = row_term(link, design.eta(&bb, i), design.y_star[i], design.y[i], g01, g10);
        ll += t.ll;
        let w01 = t.d_g01 * g01 * (1.0 - g01);
        let w10 = t.d_g10 * g10 * (1.0 - g10);
        for (j, &xj) in x.iter().enumerate() {
            g[j] += t.d_eta * xj;
            g[d + j] += w01 * xj;
            g[2 * d + j] += w10 * xj;
        }
    }
    Ok((ll, g))
}

/// Semiparametric log-likelihood with kernel-estimated gammas at every row.
pub fn loglik_semi(beta_bar: &[f64], ds: &Dataset, link: LinkKind, gam: &RowGammas) -> Result<f64> {
    loglik(&Design::new(ds), link, beta_bar, gam)
}

pub fn score_semi(beta_bar: &[f64], ds: &Dataset, link: LinkKind, gam: &RowGammas) -> Result<Vec<f64>> {
    Ok(loglik_and_score(&Design::new(ds), link, beta_bar, gam)?.1)
}

/// `[0] ∪ {1 + j : j in support}`: positions of `(beta0*, beta_support)` in `beta_bar`.
pub fn restricted_index(support: &[usize]) -> Vec<usize> {
    std::iter::once(0).chain(support.iter().map(|j| j + 1)).collect()
}

/// Per-row score vectors on `(beta_bar_I[, nu])`.
pub fn row_scores(
    design: &Design,
    link: LinkKind,
    beta_bar: &[f64],
    gam: &RowGammas,
    support: &[usize],
    with_nu: bool,
) -> Result<Vec<Vec<f64>>> {
    design.check(beta_bar, gam)?;
    let idx = restricted_index(support);
    let d = design.d;
    Ok((0..design.n)
        .map(|i| {
            let x = design.row(i);
            let t = row_term(link, design.eta(beta_bar, i), design.y_star[i], design.y[i], gam.g01[i], gam.g10[i]);
            let mut s: Vec<f64> = idx.iter().map(|&j| t.d_eta * x[j]).collect();
            if with_nu {
                let (g01, g10) = (gam.g01[i], gam.g10[i]);
                let w01 = t.d_g01 * g01 * (1.0 - g01);
                let w10 = t.d_g10 * g10 * (1.0 - g10);
                s.extend(x.iter().map(|v| w01 * v));
                s.extend(x.iter().map(|v| w10 * v));
                debug_assert_eq!(s.len(), idx.len() + 2 * d);
            }
            s
        })
        .collect())
}

/// Empirical information matrices built from per-row score outer products.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrices {
    pub i1: DMatrix<f64>,
    pub i2: DMatrix<f64>,
    pub i_delta: DMatrix<f64>,
    pub delta: f64,
}

/// Information on `(beta0*, beta_support[, nu])`; pass `nu` for the parametric model.
pub fn info_matrices(
    beta_bar: &[f64],
    nu: Option<&NuVector>,
    ds: &Dataset,
    link: LinkKind,
    gam: &RowGammas,
    support: &[usize],
) -> Result<InfoMatrices> {
    let design = Design::new(ds);
    let gam_use;
    let gam = match nu {
        Some(nu) => {
            gam_use = RowGammas::from_param(nu, ds);
            &gam_use
        }
        None => gam,
    };
    info_from_design(&design, link, beta_bar, gam, support, nu.is_some())
}

pub fn info_from_design(
    design: &Design,
    link: LinkKind,
    beta_bar: &[f64],
    gam: &RowGammas,
    support: &[usize],
    with_nu: bool,
) -> Result<InfoMatrices> {
    let scores = row_scores(design, link, beta_bar, gam, support, with_nu)?;
    let k = scores.first().map_or(0, |s| s.len());
    let mut i1 = DMatrix::zeros(k, k);
    let mut i2 = DMatrix::zeros(k, k);
    let (mut nv, mut nm) = (0usize, 0usize);
    for (i, s) in scores.iter().enumerate() {
        if design.y[i].is_some() {
            add_outer(&mut i1, s, 1.0);
            nv += 1;
        } else {
            add_outer(&mut i2, s, 1.0);
            nm += 1;
        }
    }
    if nv > 0 {
        i1 /= nv as f64;
    }
    if nm > 0 {
        i2 /= nm as f64;
    }
    let delta = nv as f64 / design.n as f64;
    let i_delta = if nm == 0 { i1.clone() } else { &i1 * delta + &i2 * (1.0 - delta) };
    Ok(InfoMatrices { i1, i2, i_delta, delta })
}

/// Per-validation-row vector whose mean outer product estimates the plug-in
/// variance term of the kernel estimator.
fn sigma_sp_row(link: LinkKind, eta: f64, x_i: &[f64], y: u8, y_star: u8, g01: f64, g10: f64) -> Vec<f64> {
    let mu = link.inverse(eta);
    let ms = surrogate_mean(g01, g10, mu).clamp(PROB_EPS, 1.0 - PROB_EPS);
    let (yf, ysf) = (y as f64, y_star as f64);
    let bracket = yf * (1.0 - ysf - g10) - (1.0 - yf) * (ysf - g01);
    let c = (1.0 - g10 - g01) / (ms * (1.0 - ms)) * bracket * link.inverse_deriv(eta);
    x_i.iter().map(|v| c * v).collect()
}

/// Sample version of the kernel plug-in variance term on `(beta0*, beta_support)`.
pub fn sigma_sp_hat(beta_bar: &[f64], ds: &Dataset, link: LinkKind, gam: &RowGammas, support: &[usize]) -> Result<DMatrix<f64>> {
    sigma_sp_from_design(&Design::new(ds), link, beta_bar, gam, support)
}

pub fn sigma_sp_from_design(design: &Design, link: LinkKind, beta_bar: &[f64], gam: &RowGammas, support: &[usize]) -> Result<DMatrix<f64>> {
    design.check(beta_bar, gam)?;
    let idx = restricted_index(support);
    let mut m = DMatrix::zeros(idx.len(), idx.len());
    let mut nv = 0usize;
    for i in 0..design.n {
        let Some(y) = design.y[i] else { continue };
        let x = design.row(i);
        let xi: Vec<f64> = idx.iter().map(|&j| x[j]).collect();
        let c = sigma_sp_row(link, design.eta(beta_bar, i), &xi, y, design.y_star[i], gam.g01[i], gam.g10[i]);
        add_outer(&mut m, &c, 1.0);
        nv += 1;
    }
    if nv > 0 {
        m /= nv as f64;
    }
    Ok(m)
}

/// Jacobian of the summed score in `(beta0*, beta_support)` with gammas held fixed.
pub fn score_jacobian(design: &Design, link: LinkKind, beta_bar: &[f64], gam: &RowGammas, support: &[usize]) -> Result<DMatrix<f64>> {
    design.check(beta_bar, gam)?;
    let idx = restricted_index(support);
    let mut h = DMatrix::zeros(idx.len(), idx.len());
    for i in 0..design.n {
        let x = design.row(i);
        let t = row_term(link, design.eta(beta_bar, i), design.y_star[i], design.y[i], gam.g01[i], gam.g10[i]);
        let xi: Vec<f64> = idx.iter().map(|&j| x[j]).collect();
        add_outer(&mut h, &xi, t.d2_eta);
    }
    Ok(h)
}
