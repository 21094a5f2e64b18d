//! Simulation design: correlated Gaussian plus binary covariates, a logistic
//! response and covariate-dependent symmetric misclassification, with a
//! Monte Carlo harness.

mod metrics;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Row};
use crate::error::{Error, Result};
use crate::fit::{fit, FitConfig};
use crate::link::{expit, std_normal_cdf, LinkKind};

pub use metrics::{compute_metrics, model_error, selection_errors, CoefficientSummary, MetricsReport, ReplicationEstimate};

/// Name of the generator used for every stream.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.9), seed_from_u64(base_seed + j)";

pub const P: usize = 20;
pub const P_CONTINUOUS: usize = 18;
const AR_RHO: f64 = 0.5;
const ALPHA1_HEAD: [f64; 5] = [1.0, 1.0, -1.5, 1.1, -1.3];
const BETA_HEAD: [f64; 10] = [2.0, 1.3, 0.0, 0.0, 2.0, -1.5, 0.0, 0.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SettingName {
    I,
    II,
    III,
    IV,
    V,
}

impl fmt::Display for SettingName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SettingName::I => "I",
            SettingName::II => "II",
            SettingName::III => "III",
            SettingName::IV => "IV",
            SettingName::V => "V",
        })
    }
}

impl FromStr for SettingName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(SettingName::I),
            "II" | "2" => Ok(SettingName::II),
            "III" | "3" => Ok(SettingName::III),
            "IV" | "4" => Ok(SettingName::IV),
            "V" | "5" => Ok(SettingName::V),
            _ => Err(Error::invalid(format!("unknown setting '{s}' (expected I..V)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub name: Option<SettingName>,
    /// Weight of the normal-CDF component in the flip probability.
    pub eta: f64,
    pub alpha0: f64,
    pub alpha1: Vec<f64>,
    /// Mean of the normal whose CDF is applied to `z2^2`.
    pub varrho: f64,
    pub n: usize,
    pub beta_true: Vec<f64>,
    pub beta0_star_true: f64,
    pub link: LinkKind,
}

impl SimSetting {
    pub fn named(name: SettingName, n: usize) -> Self {
        let (eta, alpha0, varrho) = match name {
            SettingName::I => (0.0, -2.15, 0.0),
            SettingName::II => (0.5, -2.15, 1.98),
            SettingName::III => (1.0, -2.15, 1.98),
            SettingName::IV => (0.0, -1.01, 0.0),
            SettingName::V => (0.5, -1.01, 1.33),
        };
        let mut alpha1 = vec![0.0; P];
        alpha1[..5].copy_from_slice(&ALPHA1_HEAD);
        let mut beta_true = vec![0.0; P];
        beta_true[..10].copy_from_slice(&BETA_HEAD);
        SimSetting { name: Some(name), eta, alpha0, alpha1, varrho, n, beta_true, beta0_star_true: 1.0, link: LinkKind::Logit }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if self.alpha1.len() != P || self.beta_true.len() != P {
            return Err(Error::Dimension { expected: P, got: self.alpha1.len().min(self.beta_true.len()) });
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        P
    }

    /// 0-based indices of the nonzero true coefficients.
    pub fn signal(&self) -> Vec<usize> {
        self.beta_true.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect()
    }

    pub fn true_beta_bar(&self) -> Vec<f64> {
        std::iter::once(self.beta0_star_true).chain(self.beta_true.iter().copied()).collect()
    }

    /// Symmetric flip probability `gamma01 = gamma10` at `z`.
    pub fn flip_probability(&self, z: &[f64]) -> f64 {
        let logistic = expit(self.alpha0 + self.alpha1.iter().zip(z).map(|(a, b)| a * b).sum::<f64>());
        if self.eta == 0.0 {
            return logistic;
        }
        let cdf = std_normal_cdf(z[1] * z[1] - self.varrho);
        self.eta * cdf + (1.0 - self.eta) * logistic
    }

    pub fn true_mean(&self, z: &[f64]) -> f64 {
        let eta = self.beta0_star_true + self.beta_true.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        self.link.inverse(eta)
    }
}

/// One covariate vector: AR(1) Gaussian block (unit variance, lag correlation
/// 0.5) followed by two Bernoulli(0.5) columns.
pub fn draw_covariates<R: Rng>(rng: &mut R) -> Vec<f64> {
    let mut z = Vec::with_capacity(P);
    let innov = (1.0 - AR_RHO * AR_RHO).sqrt();
    let mut prev: f64 = rng.sample(StandardNormal);
    z.push(prev);
    for _ in 1..P_CONTINUOUS {
        let e: f64 = rng.sample(StandardNormal);
        prev = AR_RHO * prev + innov * e;
        z.push(prev);
    }
    for _ in P_CONTINUOUS..P {
        z.push(if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 });
    }
    z
}

pub fn covariate_names() -> Vec<String> {
    (1..=P).map(|j| format!("z{j}")).collect()
}

/// Simulated dataset with the true response kept on every row.
pub fn generate_dataset(setting: &SimSetting, seed: u64) -> Result<Dataset> {
    setting.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..setting.n)
        .map(|_| {
            let z = draw_covariates(&mut rng);
            let y = (rng.random::<f64>() < setting.true_mean(&z)) as u8;
            let g = setting.flip_probability(&z);
            let flip = rng.random::<f64>() < g;
            Row { y_star: if flip { 1 - y } else { y }, y: Some(y), z }
        })
        .collect();
    Dataset::new(rows, covariate_names(), P_CONTINUOUS, P - P_CONTINUOUS)
}

/// Covariate draws for the model-error holdout set.
pub fn holdout_covariates(size: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size).map(|_| draw_covariates(&mut rng)).collect()
}

/// Size of the holdout covariate set used for model error.
pub const HOLDOUT_SIZE: usize = 10_000;

/// Seeds derived from the replication seed for the validation split and the
/// holdout set, so each stream is independent of the data stream.
pub fn split_seed(seed: u64) -> u64 {
    seed ^ 0x5bd1_e995_0000_0000
}

pub fn holdout_seed(base_seed: u64) -> u64 {
    base_seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Per-replication outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub misclassification_rate: f64,
    pub estimate: Option<ReplicationEstimate>,
    pub error: Option<String>,
    pub lambda: Option<f64>,
    pub h: Option<f64>,
    pub omega: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub converged: Option<bool>,
}

/// Runs replication `j` with seed `base_seed + j`.
pub fn run_one(setting: &SimSetting, cfg: &FitConfig, delta: f64, seed: u64, replication: usize) -> Result<ReplicationRecord> {
    let full = generate_dataset(setting, seed)?;
    let mr = full.misclassification_rate().unwrap_or(f64::NAN);
    let ds = full.make_validation_split(delta, split_seed(seed))?;
    let mut rec = ReplicationRecord {
        replication,
        seed,
        misclassification_rate: mr,
        estimate: None,
        error: None,
        lambda: None,
        h: None,
        omega: None,
        outer_iterations: None,
        converged: None,
    };
    match fit(&ds, cfg) {
        Ok(f) => {
            let se = (0..f.p()).map(|j| f.inference.as_ref().and_then(|inf| inf.se_of(&f.support, j))).collect();
            rec.estimate = Some(ReplicationEstimate { beta0_star: f.beta0_star, beta: f.beta.clone(), se });
            rec.lambda = Some(f.lambda);
            rec.h = f.h;
            rec.omega = f.omega;
            rec.outer_iterations = Some(f.diagnostics.outer_iterations);
            rec.converged = Some(f.diagnostics.converged);
        }
        Err(e @ (Error::Numerical(_) | Error::SparseValidation(_))) => rec.error = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(rec)
}

/// Monte Carlo run. Output does not depend on `threads`.
pub fn run_replications(
    setting: &SimSetting,
    cfg: &FitConfig,
    m: usize,
    delta: f64,
    base_seed: u64,
    threads: Option<usize>,
) -> Result<(MetricsReport, Vec<ReplicationRecord>)> {
    if m == 0 {
        return Err(Error::invalid("number of replications must be at least 1"));
    }
    setting.validate()?;
    cfg.validate()?;
    let work = || -> Result<Vec<ReplicationRecord>> {
        (0..m).into_par_iter().map(|j| run_one(setting, cfg, delta, base_seed.wrapping_add(j as u64), j)).collect()
    };
    let records = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let holdout = holdout_covariates(HOLDOUT_SIZE, holdout_seed(base_seed));
    let estimates: Vec<ReplicationEstimate> = records.iter().filter_map(|r| r.estimate.clone()).collect();
    let mut report = compute_metrics(&estimates, setting, &holdout);
    report.m = m;
    report.failures = m - estimates.len();
    report.amr = records.iter().map(|r| r.misclassification_rate).sum::<f64>() / m as f64;
    report.delta = delta;
    report.method = Some(cfg.method);
    report.penalty = Some(cfg.penalty);
    report.criterion = Some(cfg.criterion);
    report.setting = setting.name;
    report.n = setting.n;
    report.base_seed = base_seed;
    report.rng = RNG_NAME.to_string();
    Ok((report, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn setting_constants() {
        let s = SimSetting::named(SettingName::I, 10);
        assert_eq!(s.signal(), vec![0, 1, 4, 5, 9]);
        assert_eq!(s.alpha1[..6], [1.0, 1.0, -1.5, 1.1, -1.3, 0.0]);
        assert_relative_eq!(s.flip_probability(&[0.0; 20]), 0.104331, epsilon = 1e-6);
        let v = SimSetting::named(SettingName::V, 10);
        assert_eq!((v.eta, v.alpha0, v.varrho), (0.5, -1.01, 1.33));
        assert!("vi".parse::<SettingName>().is_err());
        assert_eq!("iii".parse::<SettingName>().unwrap(), SettingName::III);
    }

    #[test]
    fn varrho_is_inert_without_cdf_component() {
        let a = SimSetting::named(SettingName::I, 200);
        let b = SimSetting { varrho: 5.0, ..a.clone() };
        assert_eq!(generate_dataset(&a, 3).unwrap(), generate_dataset(&b, 3).unwrap());
    }

    #[test]
    fn generator_marginals() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let zs: Vec<Vec<f64>> = (0..n).map(|_| draw_covariates(&mut rng)).collect();
        let nf = n as f64;
        for j in 0..P_CONTINUOUS {
            let m = zs.iter().map(|z| z[j]).sum::<f64>() / nf;
            let v = zs.iter().map(|z| (z[j] - m).powi(2)).sum::<f64>() / (nf - 1.0);
            assert!(m.abs() < 4.0 / nf.sqrt(), "mean of z{} = {m}", j + 1);
            assert!((v - 1.0).abs() < 0.15, "var of z{} = {v}", j + 1);
            if j > 0 {
                let c = zs.iter().map(|z| z[j] * z[j - 1]).sum::<f64>() / nf;
                assert!((c - 0.5).abs() < 0.02, "lag correlation {c}");
            }
        }
        for j in P_CONTINUOUS..P {
            let m = zs.iter().map(|z| z[j]).sum::<f64>() / nf;
            assert!((m - 0.5).abs() < 0.01);
            assert!(zs.iter().all(|z| z[j] == 0.0 || z[j] == 1.0));
        }
    }

    #[test]
    fn misclassification_rate_rises_with_alpha0() {
        let rates: Vec<f64> = [-3.0, -2.15, -1.0]
            .iter()
            .map(|&a0| {
                let s = SimSetting { alpha0: a0, ..SimSetting::named(SettingName::I, 20_000) };
                generate_dataset(&s, 1).unwrap().misclassification_rate().unwrap()
            })
            .collect();
        assert!(rates[0] < rates[1] && rates[1] < rates[2], "{rates:?}");
    }

    #[test]
    fn generation_is_reproducible() {
        let s = SimSetting::named(SettingName::II, 300);
        assert_eq!(generate_dataset(&s, 9).unwrap(), generate_dataset(&s, 9).unwrap());
        assert_ne!(generate_dataset(&s, 9).unwrap(), generate_dataset(&s, 10).unwrap());
    }
}
