use serde::{Deserialize, Serialize};

use super::{SettingName, SimSetting};
use crate::fit::{Criterion, Method};
use crate::penalty::PenaltyKind;

/// What one replication contributes to the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationEstimate {
    pub beta0_star: f64,
    pub beta: Vec<f64>,
    /// Standard error per coefficient; `None` when not selected or unavailable.
    pub se: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    /// 1-based coefficient index.
    pub index: usize,
    pub truth: f64,
    pub bias: f64,
    pub esd: f64,
    pub mse: f64,
    /// Share of replications whose `estimate +- 1.96 se` covers the truth;
    /// unselected coefficients count as misses.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub setting: Option<SettingName>,
    pub method: Option<Method>,
    pub penalty: Option<PenaltyKind>,
    pub criterion: Option<Criterion>,
    pub n: usize,
    pub delta: f64,
    pub base_seed: u64,
    pub rng: String,
    /// Replications requested.
    pub m: usize,
    /// Replications whose fit failed (excluded from every metric but the AMR).
    pub failures: usize,
    /// Mean model error over successful replications.
    pub ame: f64,
    /// Monte Carlo standard error of `ame`.
    pub ame_se: f64,
    /// Mean count of truly zero coefficients estimated nonzero.
    pub false_nonzero: f64,
    /// Mean count of truly nonzero coefficients estimated zero.
    pub false_zero: f64,
    pub coefficients: Vec<CoefficientSummary>,
    pub amr: f64,
    /// Per successful replication, in seed order.
    pub model_errors: Vec<f64>,
}

/// Mean squared difference between true and fitted means over the holdout set.
pub fn model_error(setting: &SimSetting, est: &ReplicationEstimate, holdout: &[Vec<f64>]) -> f64 {
    let mut fitted = setting.clone();
    fitted.beta0_star_true = est.beta0_star;
    fitted.beta_true = est.beta.clone();
    holdout.iter().map(|z| (setting.true_mean(z) - fitted.true_mean(z)).powi(2)).sum::<f64>() / holdout.len() as f64
}

/// `(false_nonzero, false_zero)` for one estimate.
pub fn selection_errors(setting: &SimSetting, beta: &[f64]) -> (usize, usize) {
    let mut fnz = 0;
    let mut fz = 0;
    for (b, t) in beta.iter().zip(&setting.beta_true) {
        match (*t != 0.0, *b != 0.0) {
            (false, true) => fnz += 1,
            (true, false) => fz += 1,
            _ => {}
        }
    }
    (fnz, fz)
}

pub fn compute_metrics(estimates: &[ReplicationEstimate], setting: &SimSetting, holdout: &[Vec<f64>]) -> MetricsReport {
    let m = estimates.len();
    let mf = m as f64;
    let model_errors: Vec<f64> = estimates.iter().map(|e| model_error(setting, e, holdout)).collect();
    let ame = if m > 0 { model_errors.iter().sum::<f64>() / mf } else { f64::NAN };
    let ame_se = if m > 1 { (model_errors.iter().map(|v| (v - ame).powi(2)).sum::<f64>() / (mf - 1.0) / mf).sqrt() } else { f64::NAN };
    let (mut fnz, mut fz) = (0usize, 0usize);
    for e in estimates {
        let (a, b) = selection_errors(setting, &e.beta);
        fnz += a;
        fz += b;
    }
    let coefficients = setting
        .signal()
        .into_iter()
        .map(|k| {
            let truth = setting.beta_true[k];
            let vals: Vec<f64> = estimates.iter().map(|e| e.beta[k]).collect();
            let mean = vals.iter().sum::<f64>() / mf;
            let esd = if m > 1 { (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (mf - 1.0)).sqrt() } else { f64::NAN };
            let covered = estimates
                .iter()
                .filter(|e| e.beta[k] != 0.0)
                .filter(|e| e.se[k].is_some_and(|se| (e.beta[k] - truth).abs() <= 1.96 * se))
                .count();
            CoefficientSummary {
                index: k + 1,
                truth,
                bias: mean - truth,
                esd,
                mse: vals.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / mf,
                coverage: covered as f64 / mf,
            }
        })
        .collect();
    MetricsReport {
        setting: setting.name,
        method: None,
        penalty: None,
        criterion: None,
        n: setting.n,
        delta: f64::NAN,
        base_seed: 0,
        rng: super::RNG_NAME.to_string(),
        m,
        failures: 0,
        ame,
        ame_se,
        false_nonzero: fnz as f64 / mf,
        false_zero: fz as f64 / mf,
        coefficients,
        amr: f64::NAN,
        model_errors,
    }
}
