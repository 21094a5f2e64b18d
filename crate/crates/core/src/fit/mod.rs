//! End-to-end estimators: naive, parametric and semiparametric, each a
//! penalized path plus GCV/BIC selection.

mod parametric;
mod semiparametric;
pub mod tuning;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::{self, Inference};
use crate::link::LinkKind;
use crate::misclass::{a_from_gammas, estimate_gammas, KernelConfig, NuVector, RowGammas};
use crate::objective::{clamp_count, loglik_and_score, Design};
use crate::optim::{bfgs, BfgsConfig};
use crate::path::{apf_path, lambda_grid, GridScale, PathConfig, Smooth, WithConcavePart};
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::PROB_EPS;

pub use tuning::{deviance, effective_df, select_model, TuningEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Parametric,
    Semiparametric,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Naive => "naive",
            Method::Parametric => "parametric",
            Method::Semiparametric => "semiparametric",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Method::Naive),
            "parametric" => Ok(Method::Parametric),
            "semiparametric" | "kernel" => Ok(Method::Semiparametric),
            _ => Err(Error::invalid(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gcv,
    Bic,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Gcv => "gcv",
            Criterion::Bic => "bic",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcv" => Ok(Criterion::Gcv),
            "bic" => Ok(Criterion::Bic),
            _ => Err(Error::invalid(format!("unknown criterion '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: Method,
    pub link: LinkKind,
    pub penalty: PenaltyKind,
    /// Shape `a`; `None` uses the penalty's default (3.7 SCAD, 3 MCP).
    pub penalty_shape: Option<f64>,
    pub criterion: Criterion,
    pub path: PathConfig,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub use_pca: bool,
    pub pca_threshold: f64,
    /// Overrides for the bandwidth grids of the kernel estimator.
    pub h_grid: Option<Vec<f64>>,
    pub omega_grid: Option<Vec<f64>>,
    /// Force every misclassification probability to zero.
    pub zero_gamma: bool,
    pub inference: bool,
    pub level: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            method: Method::Parametric,
            link: LinkKind::Logit,
            penalty: PenaltyKind::Scad,
            penalty_shape: None,
            criterion: Criterion::Gcv,
            path: PathConfig::default(),
            outer_tol: 1e-6,
            max_outer: 50,
            use_pca: false,
            pca_threshold: 0.9,
            h_grid: None,
            omega_grid: None,
            zero_gamma: false,
            inference: true,
            level: 0.95,
        }
    }
}

impl FitConfig {
    pub fn new(method: Method, penalty: PenaltyKind, criterion: Criterion) -> Self {
        FitConfig { method, penalty, criterion, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.path.validate()?;
        self.spec(1.0)?;
        if !(self.outer_tol > 0.0) || self.max_outer == 0 {
            return Err(Error::invalid("outer tolerance and iteration cap must be positive"));
        }
        if !(0.0..1.0).contains(&self.level) {
            return Err(Error::invalid(format!("confidence level must lie in [0, 1), got {}", self.level)));
        }
        for g in [&self.h_grid, &self.omega_grid].into_iter().flatten() {
            if g.is_empty() || g.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("bandwidth grids must be nonempty and nonnegative"));
            }
        }
        Ok(())
    }

    pub(crate) fn spec(&self, lambda: f64) -> Result<PenaltySpec> {
        PenaltySpec::new(self.penalty, lambda, self.penalty_shape.unwrap_or(self.penalty.default_shape()))
    }
}

/// How the misclassification probabilities of a fit are reconstructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GammaSource {
    /// Identically zero (naive fit or forced).
    Zero,
    Parametric,
    Kernel {
        h: f64,
        omega: f64,
        use_pca: bool,
        pca_threshold: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub outer_iterations: usize,
    pub converged: bool,
    /// Rows whose fitted mean hit the probability clamp.
    pub clamp_count: usize,
    pub kernel_fallbacks: usize,
    pub kernel_sum_clamps: usize,
    /// Grid points skipped because every kernel evaluation was degenerate.
    pub skipped_grid_points: usize,
    /// Rows with `gamma01 + gamma10 >= 1` at the reported fit.
    pub gamma_sum_at_least_one: usize,
    /// Path points whose inner solver hit its iteration cap.
    pub inner_nonconverged: usize,
    /// Candidates excluded from selection for `df >= n`.
    pub excluded_candidates: usize,
    /// Proximal-gradient iterations spent on the reported path(s).
    pub inner_iterations: usize,
    pub df_pseudo_inverse: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    pub link: LinkKind,
    pub penalty: PenaltySpec,
    pub criterion: Criterion,
    pub lambda: f64,
    pub h: Option<f64>,
    pub omega: Option<f64>,
    pub names: Vec<String>,
    pub beta0_star: f64,
    pub beta: Vec<f64>,
    pub nu: Option<Vec<f64>>,
    pub support: Vec<usize>,
    pub df: f64,
    pub deviance: f64,
    pub criterion_value: f64,
    pub gamma_source: GammaSource,
    pub inference: Option<Inference>,
    pub trace: Vec<TuningEntry>,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn beta_bar(&self) -> Vec<f64> {
        std::iter::once(self.beta0_star).chain(self.beta.iter().copied()).collect()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Per-row misclassification probabilities the fit was computed with.
    pub fn row_gammas(&self, ds: &Dataset) -> Result<RowGammas> {
        match &self.gamma_source {
            GammaSource::Zero => Ok(RowGammas::zeros(ds.n())),
            GammaSource::Parametric => {
                let nu = NuVector::from_vec(self.nu.clone().ok_or_else(|| Error::invalid("parametric fit without nu"))?)?;
                Ok(RowGammas::from_param(&nu, ds))
            }
            GammaSource::Kernel { h, omega, use_pca, pca_threshold } => {
                let cfg = KernelConfig { h: *h, omega: *omega, use_pca: *use_pca, pca_variance_threshold: *pca_threshold };
                Ok(estimate_gammas(ds, &cfg)?.eval_rows(ds)?.0)
            }
        }
    }

    pub fn design(&self, ds: &Dataset) -> Design {
        match self.method {
            Method::Naive => Design::naive(ds),
            _ => Design::new(ds),
        }
    }

    /// Largest penalized-score fixed-point residual, mean scale: intercept
    /// `|s_0/n|`, support `|s_j/n - rho'(|b_j|) sgn b_j|`.
    pub fn kkt_residual(&self, ds: &Dataset) -> Result<f64> {
        if ds.p() != self.p() {
            return Err(Error::Dimension { expected: self.p(), got: ds.p() });
        }
        let design = self.design(ds);
        let gam = self.row_gammas(ds)?;
        let (_, score) = loglik_and_score(&design, self.link, &self.beta_bar(), &gam)?;
        let n = ds.n() as f64;
        let mut r = (score[0] / n).abs();
        for &j in &self.support {
            let b = self.beta[j];
            r = r.max((score[j + 1] / n - self.penalty.rho1(b.abs()) * b.signum()).abs());
        }
        Ok(r)
    }

    /// Largest `|s_j/n|` over zero coordinates minus `rho'(0+) = lambda`; `<= 0`
    /// when zeros satisfy the subgradient condition.
    pub fn zero_coordinate_excess(&self, ds: &Dataset) -> Result<f64> {
        let design = self.design(ds);
        let gam = self.row_gammas(ds)?;
        let (_, score) = loglik_and_score(&design, self.link, &self.beta_bar(), &gam)?;
        let n = ds.n() as f64;
        Ok((0..self.p())
            .filter(|j| self.beta[*j] == 0.0)
            .map(|j| (score[j + 1] / n).abs() - self.penalty.lambda)
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

/// `-loglik / n` on a fixed design and fixed gammas. The `a` coefficients
/// and the gamma-only part of the validation-row likelihood are precomputed.
pub(crate) struct MeanLoss<'a> {
    design: &'a Design,
    link: LinkKind,
    a: Vec<(f64, f64)>,
    constant: f64,
}

impl<'a> MeanLoss<'a> {
    pub fn new(design: &'a Design, link: LinkKind, gam: &RowGammas) -> Self {
        let mut constant = 0.0;
        let a = (0..design.n())
            .map(|i| {
                let (a0, a1) = a_from_gammas(gam.g01[i], gam.g10[i], design.y_star(i));
                if let Some(y) = design.y(i) {
                    constant += (if y == 1 { a1 } else { a0 }).max(PROB_EPS).ln();
                }
                (a0, a1)
            })
            .collect();
        MeanLoss { design, link, a, constant }
    }
}

impl Smooth for MeanLoss<'_> {
    fn dim(&self) -> usize {
        self.design.dim()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut ll = self.constant;
        for i in 0..self.design.n() {
            let row = self.design.row(i);
            let eta: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            let (raw, d1) = self.link.inverse_and_deriv(eta);
            let mu = raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
            let d1 = if mu == raw { d1 } else { 0.0 };
            let d_eta = match self.design.y(i) {
                Some(y) => {
                    let var = mu * (1.0 - mu);
                    if y == 1 {
                        ll += mu.ln();
                        (1.0 - mu) * d1 / var
                    } else {
                        ll += (1.0 - mu).ln();
                        -mu * d1 / var
                    }
                }
                None => {
                    let (a0, a1) = self.a[i];
                    let f = (a0 + (a1 - a0) * mu).max(PROB_EPS);
                    ll += f.ln();
                    (a1 - a0) * d1 / f
                }
            };
            for (g, v) in grad.iter_mut().zip(row) {
                *g += d_eta * v;
            }
        }
        let n = self.design.n() as f64;
        grad.iter_mut().for_each(|g| *g /= -n);
        -ll / n
    }
}

/// `g(mean y*)`, clamped away from 0 and 1.
pub(crate) fn intercept_start(design: &Design, link: LinkKind) -> f64 {
    let n = design.n();
    let m = (0..n).map(|i| design.y_star(i) as f64).sum::<f64>() / n as f64;
    link.link(m.clamp(1e-4, 1.0 - 1e-4))
}

/// One solved path with its tuning trace.
pub(crate) struct PathOutcome {
    pub betas: Vec<Vec<f64>>,
    pub trace: Vec<TuningEntry>,
    pub inner_nonconverged: usize,
    pub inner_iterations: usize,
    pub df_pseudo_inverse: bool,
}

/// Intercept-only fit, lambda grid, warm-started path and per-point df/deviance.
pub(crate) fn run_path(
    design: &Design,
    link: LinkKind,
    gam: &RowGammas,
    cfg: &FitConfig,
    b0_start: f64,
    bandwidths: (Option<f64>, Option<f64>),
) -> Result<PathOutcome> {
    let d = design.dim();
    let n = design.n();
    let loss = MeanLoss::new(design, link, gam);
    let mut buf = vec![0.0; d];
    let mut x = vec![0.0; d];
    let r = bfgs(
        |b: &[f64]| {
            let mut x = vec![0.0; d];
            x[0] = b[0];
            let mut g = vec![0.0; d];
            let v = loss.value_grad(&x, &mut g);
            Ok((v, vec![g[0]]))
        },
        &[b0_start],
        &BfgsConfig::default(),
    )?;
    x[0] = r.x[0];
    loss.value_grad(&x, &mut buf);
    let grid = match cfg.path.grid_scale {
        GridScale::Score => {
            let score: Vec<f64> = buf[1..].iter().map(|g| g * n as f64).collect();
            lambda_grid(&score, n, d - 1, &cfg.path).into_iter().map(|l| l / n as f64).collect()
        }
        GridScale::Mean => lambda_grid(&buf[1..], n, d - 1, &cfg.path),
    };
    let mask: Vec<bool> = (0..d).map(|j| j > 0).collect();
    let base = cfg.spec(grid[0])?;
    let path = apf_path(|lam| WithConcavePart { loss: &loss, penalty: base.with_lambda(lam), mask: &mask }, &grid, &x, &mask, &cfg.path)?;
    let mut trace = Vec::with_capacity(path.entries.len());
    let mut betas = Vec::with_capacity(path.entries.len());
    let mut inner_nonconverged = 0;
    let mut inner_iterations = 0;
    let mut df_pseudo_inverse = false;
    for e in path.entries {
        inner_iterations += e.iters;
        let spec = base.with_lambda(e.lambda);
        let (df, singular) = effective_df(design, link, &e.beta, gam, &spec);
        df_pseudo_inverse |= singular;
        let dev = tuning::check_finite(deviance(design, link, &e.beta, gam), "deviance")?;
        let s = e.beta[1..].iter().filter(|v| **v != 0.0).count();
        trace.push(tuning::entry(e.lambda, bandwidths.0, bandwidths.1, df, dev, n, s));
        inner_nonconverged += usize::from(!e.converged);
        betas.push(e.beta);
    }
    Ok(PathOutcome { betas, trace, inner_nonconverged, inner_iterations, df_pseudo_inverse })
}

fn select_or_err(trace: &[TuningEntry], n: usize, criterion: Criterion) -> Result<usize> {
    select_model(trace, n, criterion).ok_or_else(|| Error::numerical("no admissible tuning candidate (all have df >= n)"))
}

/// Assembles the reported result from a selected `beta_bar`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn finish(
    ds: &Dataset,
    cfg: &FitConfig,
    design: &Design,
    gam: &RowGammas,
    beta_bar: Vec<f64>,
    nu: Option<Vec<f64>>,
    chosen: &TuningEntry,
    gamma_source: GammaSource,
    trace: Vec<TuningEntry>,
    mut diag: Diagnostics,
) -> Result<FitResult> {
    let spec = cfg.spec(chosen.lambda)?;
    let beta = beta_bar[1..].to_vec();
    let support = tuning::support_of(&beta);
    diag.clamp_count = clamp_count(design, cfg.link, &beta_bar, gam);
    diag.gamma_sum_at_least_one = gam.count_sum_at_least_one();
    diag.excluded_candidates = tuning::excluded_count(&trace, ds.n());
    if diag.excluded_candidates > 0 {
        diag.warnings.push(format!("{} tuning candidates excluded for df >= n", diag.excluded_candidates));
    }
    if diag.gamma_sum_at_least_one * 100 > ds.n() {
        diag.warnings.push(format!(
            "misclassification probabilities sum to at least one on {} rows; estimates may be unidentified",
            diag.gamma_sum_at_least_one
        ));
    }
    if diag.df_pseudo_inverse {
        diag.warnings.push("pseudo-inverse used for effective degrees of freedom".into());
    }
    if diag.clamp_count > 0 {
        diag.warnings.push(format!("fitted mean clamped on {} rows", diag.clamp_count));
    }
    let inference = if cfg.inference {
        let est = match cfg.method {
            Method::Semiparametric if !cfg.zero_gamma => inference::cov_semiparametric(design, cfg.link, &beta_bar, gam, &spec)?,
            _ => {
                let nu_vec = match &nu {
                    Some(v) => Some(NuVector::from_vec(v.clone())?),
                    None => None,
                };
                inference::cov_parametric(design, cfg.link, &beta_bar, nu_vec.as_ref(), gam, &spec)?
            }
        };
        Some(inference::Inference::new(est, &beta_bar, &support, ds.names(), &spec, cfg.level))
    } else {
        None
    };
    if let Some(inf) = &inference {
        if inf.covariance.singular {
            diag.warnings.push("pseudo-inverse used in the covariance estimate".into());
        }
        if inf.bias_flag {
            diag.warnings.push("a selected coefficient lies outside the flat penalty region; intervals may be biased".into());
        }
    }
    Ok(FitResult {
        method: cfg.method,
        link: cfg.link,
        penalty: spec,
        criterion: cfg.criterion,
        lambda: chosen.lambda,
        h: chosen.h,
        omega: chosen.omega,
        names: ds.names().to_vec(),
        beta0_star: beta_bar[0],
        beta,
        nu,
        support,
        df: chosen.df,
        deviance: chosen.deviance,
        criterion_value: chosen.score(cfg.criterion),
        gamma_source,
        inference,
        trace,
        diagnostics: diag,
    })
}

/// Fits with gammas fixed at zero: the naive method, or any method with `zero_gamma`.
fn fit_zero_gamma(ds: &Dataset, cfg: &FitConfig, design: Design) -> Result<FitResult> {
    let gam = RowGammas::zeros(ds.n());
    let b0 = intercept_start(&design, cfg.link);
    let out = run_path(&design, cfg.link, &gam, cfg, b0, (None, None))?;
    let k = select_or_err(&out.trace, ds.n(), cfg.criterion)?;
    let diag = Diagnostics {
        outer_iterations: 1,
        converged: out.inner_nonconverged == 0,
        inner_nonconverged: out.inner_nonconverged,
        inner_iterations: out.inner_iterations,
        df_pseudo_inverse: out.df_pseudo_inverse,
        ..Default::default()
    };
    let chosen = out.trace[k].clone();
    finish(ds, cfg, &design, &gam, out.betas[k].clone(), None, &chosen, GammaSource::Zero, out.trace, diag)
}

/// Penalized binary regression of `y*` on `z`, ignoring misclassification.
pub fn fit_naive(ds: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    let cfg = FitConfig { method: Method::Naive, ..cfg.clone() };
    cfg.validate()?;
    fit_zero_gamma(ds, &cfg, Design::naive(ds))
}

pub fn fit_parametric(ds: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    let cfg = FitConfig { method: Method::Parametric, ..cfg.clone() };
    cfg.validate()?;
    if cfg.zero_gamma {
        return fit_zero_gamma(ds, &cfg, Design::new(ds));
    }
    parametric::fit(ds, &cfg)
}

pub fn fit_semiparametric(ds: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    let cfg = FitConfig { method: Method::Semiparametric, ..cfg.clone() };
    cfg.validate()?;
    if cfg.zero_gamma {
        return fit_zero_gamma(ds, &cfg, Design::new(ds));
    }
    semiparametric::fit(ds, &cfg)
}

/// Dispatches on `cfg.method`.
pub fn fit(ds: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    match cfg.method {
        Method::Naive => fit_naive(ds, cfg),
        Method::Parametric => fit_parametric(ds, cfg),
        Method::Semiparametric => fit_semiparametric(ds, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Row;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_loss_matches_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for link in LinkKind::ALL {
            let rows: Vec<Row> = (0..60)
                .map(|i| Row {
                    y_star: rng.random_range(0..2u8),
                    y: if i % 3 == 0 { Some(rng.random_range(0..2u8)) } else { None },
                    z: vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                })
                .collect();
            let ds = Dataset::from_rows(rows, 2, 0).unwrap();
            let design = Design::new(&ds);
            let gam = RowGammas {
                g01: (0..60).map(|_| rng.random_range(0.0..0.4)).collect(),
                g10: (0..60).map(|_| rng.random_range(0.0..0.4)).collect(),
            };
            let bb = [0.3, -0.8, 1.1];
            let (ll, score) = loglik_and_score(&design, link, &bb, &gam).unwrap();
            let mut g = vec![0.0; 3];
            let v = MeanLoss::new(&design, link, &gam).value_grad(&bb, &mut g);
            assert!((v + ll / 60.0).abs() < 1e-12);
            for j in 0..3 {
                assert!((g[j] + score[j] / 60.0).abs() < 1e-12);
            }
        }
    }
}
