//! Kernel estimates of the misclassification probabilities from validation rows.
//!
//! Continuous covariates enter through a Gaussian product kernel with one
//! shared bandwidth `h`; discrete covariates through `omega^d` with `d` the
//! number of mismatched coordinates. Optionally the continuous block is first
//! rotated onto its leading principal components.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::RowGammas;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Denominator mass (relative to the largest weight) below which the global
/// validation frequency is used instead.
pub const DEGENERATE_MASS: f64 = 1e-12;
/// Target for `gamma01 + gamma10` when the raw pair reaches 1.
pub const SUM_CAP: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub h: f64,
    pub omega: f64,
    pub use_pca: bool,
    pub pca_variance_threshold: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { h: 1.0, omega: 0.5, use_pca: false, pca_variance_threshold: 0.9 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be > 0, got {}", self.h)));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::invalid(format!("omega must lie in [0, 1], got {}", self.omega)));
        }
        if !(self.pca_variance_threshold > 0.0 && self.pca_variance_threshold <= 1.0) {
            return Err(Error::invalid("PCA variance threshold must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Product kernel weight between `z_i` and `z` (continuous block first).
pub fn kernel_weight(cfg: &KernelConfig, z_i: &[f64], z: &[f64], p1: usize, p2: usize) -> f64 {
    let mut w = 1.0;
    if p1 > 0 {
        let sq: f64 = z_i[..p1].iter().zip(&z[..p1]).map(|(a, b)| (a - b) * (a - b)).sum();
        w *= cfg.h.powi(-(p1 as i32)) * (2.0 * PI).powf(-(p1 as f64) / 2.0) * (-sq / (2.0 * cfg.h * cfg.h)).exp();
    }
    if p2 > 0 {
        let d = mismatches(&z_i[p1..p1 + p2], &z[p1..p1 + p2]);
        w *= if d == 0 { 1.0 } else { cfg.omega.powi(d as i32) };
    }
    w
}

fn mismatches(a: &[f64], b: &[f64]) -> u32 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u32
}

/// Bandwidth grid (10 values) and discrete smoothing grid (5 values, capped at 1).
pub fn smoothing_grids(n_v: usize, p1_eff: usize) -> (Vec<f64>, Vec<f64>) {
    let nv = n_v.max(2) as f64;
    let hb = nv.powf(-1.0 / (4.0 + p1_eff as f64));
    let wb = nv.powf(-2.0 / (4.0 + p1_eff as f64));
    let lin = |k: usize, base: f64| -> Vec<f64> { (0..k).map(|i| base * (0.5 + 1.5 * i as f64 / (k - 1) as f64)).collect() };
    let h = lin(10, hb);
    let w = lin(5, wb).into_iter().map(|v| v.min(1.0)).collect();
    (h, w)
}

/// Principal-axis rotation of the continuous covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    /// Column `k` is the `k`-th retained component (length `p1`).
    pub components: Vec<Vec<f64>>,
    pub explained_fraction: f64,
}

impl PcaTransform {
    /// Fits on the given continuous rows and keeps the fewest leading
    /// components whose variance share reaches `threshold`.
    pub fn fit(rows: &[&[f64]], threshold: f64) -> Result<Self> {
        let m = rows.len();
        let p1 = rows.first().map_or(0, |r| r.len());
        if m < 2 || p1 == 0 {
            return Err(Error::invalid("PCA needs at least two rows and one continuous covariate"));
        }
        let mean: Vec<f64> = (0..p1).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m as f64).collect();
        let mut cov = DMatrix::<f64>::zeros(p1, p1);
        for r in rows {
            for a in 0..p1 {
                let da = r[a] - mean[a];
                for b in 0..=a {
                    cov[(a, b)] += da * (r[b] - mean[b]);
                }
            }
        }
        for a in 0..p1 {
            for b in 0..a {
                cov[(b, a)] = cov[(a, b)];
            }
        }
        cov /= (m - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..p1).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let mut k = p1;
        if total > 0.0 {
            let mut acc = 0.0;
            for (i, &idx) in order.iter().enumerate() {
                acc += eig.eigenvalues[idx].max(0.0);
                if acc / total >= threshold - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
        }
        let kept: f64 = order[..k].iter().map(|&i| eig.eigenvalues[i].max(0.0)).sum();
        let components = order[..k].iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
        Ok(PcaTransform { mean, components, explained_fraction: if total > 0.0 { kept / total } else { 1.0 } })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, zc: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.iter().zip(zc).zip(&self.mean).map(|((v, x), m)| v * (x - m)).sum()).collect()
    }
}

/// Counters from evaluating a kernel estimate over many points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelDiagnostics {
    /// Evaluations (per probability) that fell back to the global frequency.
    pub fallbacks: usize,
    /// Points where the pair was rescaled to sum below one.
    pub sum_clamps: usize,
    /// Points where both probabilities fell back.
    pub full_fallbacks: usize,
    pub points: usize,
}

impl KernelDiagnostics {
    fn record(&mut self, e: &GammaEval) {
        self.points += 1;
        self.fallbacks += e.fallback01 as usize + e.fallback10 as usize;
        self.full_fallbacks += (e.fallback01 && e.fallback10) as usize;
        self.sum_clamps += e.clamped as usize;
    }

    pub fn all_fallback(&self) -> bool {
        self.points > 0 && self.full_fallbacks == self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaEval {
    pub g01: f64,
    pub g10: f64,
    pub fallback01: bool,
    pub fallback10: bool,
    pub clamped: bool,
}

/// Validation labels and global frequencies shared by every evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Labels {
    y: Vec<u8>,
    y_star: Vec<u8>,
    global01: f64,
    global10: f64,
}

impl Labels {
    fn from_dataset(ds: &Dataset) -> Result<Self> {
        let idx = ds.validation_index();
        let y: Vec<u8> = idx.iter().map(|&i| ds.row(i).y.unwrap()).collect();
        let y_star: Vec<u8> = idx.iter().map(|&i| ds.row(i).y_star).collect();
        let n1 = y.iter().filter(|&&v| v == 1).count();
        let n0 = y.len() - n1;
        if n1 == 0 || n0 == 0 {
            return Err(Error::SparseValidation(format!("validation sample has no rows with y={}", if n1 == 0 { 1 } else { 0 })));
        }
        let flip10 = y.iter().zip(&y_star).filter(|(a, b)| **a == 1 && **b == 0).count();
        let flip01 = y.iter().zip(&y_star).filter(|(a, b)| **a == 0 && **b == 1).count();
        Ok(Labels { global01: flip01 as f64 / n0 as f64, global10: flip10 as f64 / n1 as f64, y, y_star })
    }

    /// Combines log-weights (any additive constant) into the two ratios.
    fn combine(&self, logw: &[f64]) -> GammaEval {
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut num01, mut den01, mut num10, mut den10) = (0.0, 0.0, 0.0, 0.0);
        if max > f64::NEG_INFINITY {
            for (j, &lw) in logw.iter().enumerate() {
                let w = (lw - max).exp();
                if self.y[j] == 1 {
                    den10 += w;
                    if self.y_star[j] == 0 {
                        num10 += w;
                    }
                } else {
                    den01 += w;
                    if self.y_star[j] == 1 {
                        num01 += w;
                    }
                }
            }
        }
        let fallback01 = !(den01 >= DEGENERATE_MASS);
        let fallback10 = !(den10 >= DEGENERATE_MASS);
        let mut g01 = if fallback01 { self.global01 } else { num01 / den01 };
        let mut g10 = if fallback10 { self.global10 } else { num10 / den10 };
        let mut clamped = false;
        if g01 + g10 >= 1.0 {
            let s = SUM_CAP / (g01 + g10);
            g01 *= s;
            g10 *= s;
            clamped = true;
        }
        GammaEval { g01, g10, fallback01, fallback10, clamped }
    }
}

#[inline]
fn log_weight(sq: f64, d: u32, inv_2h2: f64, ln_omega: f64, use_cont: bool, use_disc: bool) -> f64 {
    let mut lw = 0.0;
    if use_cont {
        lw -= sq * inv_2h2;
    }
    if use_disc && d > 0 {
        lw += d as f64 * ln_omega;
    }
    lw
}

/// A fitted kernel estimate that can be evaluated at any covariate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTable {
    pub config: KernelConfig,
    p1: usize,
    p2: usize,
    pca: Option<PcaTransform>,
    /// Validation continuous covariates in kernel space.
    cont: Vec<Vec<f64>>,
    disc: Vec<Vec<f64>>,
    labels: Labels,
}

impl GammaTable {
    pub fn p1_effective(&self) -> usize {
        self.pca.as_ref().map_or(self.p1, |t| t.dim())
    }

    pub fn pca(&self) -> Option<&PcaTransform> {
        self.pca.as_ref()
    }

    fn to_kernel_space(&self, z: &[f64]) -> Vec<f64> {
        match &self.pca {
            Some(t) => t.project(&z[..self.p1]),
            None => z[..self.p1].to_vec(),
        }
    }

    pub fn eval(&self, z: &[f64]) -> Result<GammaEval> {
        if z.len() != self.p1 + self.p2 {
            return Err(Error::Dimension { expected: self.p1 + self.p2, got: z.len() });
        }
        let zc = self.to_kernel_space(z);
        let zd = &z[self.p1..];
        let use_cont = !zc.is_empty();
        let use_disc = self.p2 > 0;
        let inv_2h2 = 1.0 / (2.0 * self.config.h * self.config.h);
        let ln_omega = self.config.omega.ln();
        let logw: Vec<f64> = self
            .cont
            .iter()
            .zip(&self.disc)
            .map(|(c, d)| {
                let sq: f64 = c.iter().zip(&zc).map(|(a, b)| (a - b) * (a - b)).sum();
                log_weight(sq, mismatches(d, zd), inv_2h2, ln_omega, use_cont, use_disc)
            })
            .collect();
        Ok(self.labels.combine(&logw))
    }

    /// Evaluates at every row of `ds`.
    pub fn eval_rows(&self, ds: &Dataset) -> Result<(RowGammas, KernelDiagnostics)> {
        let mut out = RowGammas::zeros(ds.n());
        let mut diag = KernelDiagnostics::default();
        for (i, r) in ds.rows().iter().enumerate() {
            let e = self.eval(&r.z)?;
            diag.record(&e);
            out.g01[i] = e.g01;
            out.g10[i] = e.g10;
        }
        Ok((out, diag))
    }
}

fn fit_pca(ds: &Dataset, threshold: f64) -> Result<Option<PcaTransform>> {
    if ds.p1() == 0 {
        return Ok(None);
    }
    let rows: Vec<&[f64]> = ds.validation_index().iter().map(|&i| &ds.row(i).z[..ds.p1()]).collect();
    PcaTransform::fit(&rows, threshold).map(Some)
}

/// Fits the kernel estimate on the validation rows of `ds`.
pub fn estimate_gammas(ds: &Dataset, cfg: &KernelConfig) -> Result<GammaTable> {
    cfg.validate()?;
    let labels = Labels::from_dataset(ds)?;
    let pca = if cfg.use_pca { fit_pca(ds, cfg.pca_variance_threshold)? } else { None };
    let p1 = ds.p1();
    let cont = ds
        .validation_index()
        .iter()
        .map(|&i| {
            let zc = &ds.row(i).z[..p1];
            pca.as_ref().map_or_else(|| zc.to_vec(), |t| t.project(zc))
        })
        .collect();
    let disc = ds.validation_index().iter().map(|&i| ds.row(i).z[p1..].to_vec()).collect();
    Ok(GammaTable { config: *cfg, p1, p2: ds.p2(), pca, cont, disc, labels })
}

/// Distances between every row and every validation row, computed once and
/// reused across the `(h, omega)` grid.
#[derive(Debug, Clone)]
pub struct KernelPrecomp {
    n: usize,
    n_v: usize,
    p1_eff: usize,
    p2: usize,
    sqdist: Vec<f64>,
    mism: Vec<u32>,
    labels: Labels,
    pca: Option<PcaTransform>,
}

impl KernelPrecomp {
    pub fn new(ds: &Dataset, use_pca: bool, pca_threshold: f64) -> Result<Self> {
        let labels = Labels::from_dataset(ds)?;
        let pca = if use_pca { fit_pca(ds, pca_threshold)? } else { None };
        let p1 = ds.p1();
        let proj = |z: &[f64]| pca.as_ref().map_or_else(|| z[..p1].to_vec(), |t| t.project(&z[..p1]));
        let cont: Vec<Vec<f64>> = ds.rows().iter().map(|r| proj(&r.z)).collect();
        let vidx = ds.validation_index();
        let n = ds.n();
        let n_v = vidx.len();
        let mut sqdist = vec![0.0; n * n_v];
        let mut mism = vec![0u32; n * n_v];
        for i in 0..n {
            let zi = &ds.row(i).z;
            for (jj, &j) in vidx.iter().enumerate() {
                sqdist[i * n_v + jj] = cont[i].iter().zip(&cont[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                mism[i * n_v + jj] = mismatches(&zi[p1..], &ds.row(j).z[p1..]);
            }
        }
        let p1_eff = pca.as_ref().map_or(p1, |t| t.dim());
        Ok(KernelPrecomp { n, n_v, p1_eff, p2: ds.p2(), sqdist, mism, labels, pca })
    }

    pub fn p1_effective(&self) -> usize {
        self.p1_eff
    }

    pub fn p2(&self) -> usize {
        self.p2
    }

    pub fn n_validation(&self) -> usize {
        self.n_v
    }

    pub fn pca(&self) -> Option<&PcaTransform> {
        self.pca.as_ref()
    }

    /// Row-wise estimates for one `(h, omega)`; identical to
    /// `estimate_gammas(..).eval_rows(..)` with the same configuration.
    pub fn row_gammas(&self, h: f64, omega: f64) -> (RowGammas, KernelDiagnostics) {
        let inv_2h2 = 1.0 / (2.0 * h * h);
        let ln_omega = omega.ln();
        let use_cont = self.p1_eff > 0;
        let use_disc = self.p2 > 0;
        let mut out = RowGammas::zeros(self.n);
        let mut diag = KernelDiagnostics::default();
        let mut logw = vec![0.0; self.n_v];
        for i in 0..self.n {
            let span = i * self.n_v..(i + 1) * self.n_v;
            for ((w, &d2), &mm) in logw.iter_mut().zip(&self.sqdist[span.clone()]).zip(&self.mism[span]) {
                *w = log_weight(d2, mm, inv_2h2, ln_omega, use_cont, use_disc);
            }
            let e = self.labels.combine(&logw);
            diag.record(&e);
            out.g01[i] = e.g01;
            out.g10[i] = e.g10;
        }
        (out, diag)
    }
}
