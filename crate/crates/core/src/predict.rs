//! Predicted probabilities and classes for new covariates; ACC, Brier, AUC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mu: Vec<f64>,
    /// `1{mu > 0.5}`; a tie at 0.5 is class 0.
    pub class: Vec<u8>,
}

pub fn predict(fit: &FitResult, z: &[Vec<f64>]) -> Result<Prediction> {
    let p = fit.p();
    let bb = fit.beta_bar();
    let mut mu = Vec::with_capacity(z.len());
    for row in z {
        if row.len() != p {
            return Err(Error::Dimension { expected: p, got: row.len() });
        }
        let eta = bb[0] + bb[1..].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        mu.push(fit.link.inverse(eta).clamp(0.0, 1.0));
    }
    let class = mu.iter().map(|&m| u8::from(m > 0.5)).collect();
    Ok(Prediction { mu, class })
}

/// Covariates (and any response columns) read for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringTable {
    pub z: Vec<Vec<f64>>,
    pub y_star: Option<Vec<u8>>,
    /// Present only when every row carries it.
    pub y: Option<Vec<u8>>,
}

impl ScoringTable {
    /// Reads a CSV whose non-response columns are exactly the covariates in
    /// `names` (any order). A different covariate count is a dimension error.
    pub fn read_csv<R: std::io::Read>(reader: R, names: &[String]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let ys_col = header.iter().position(|h| h == "y_star");
        let y_col = header.iter().position(|h| h == "y");
        let cov: Vec<usize> = (0..header.len()).filter(|i| Some(*i) != ys_col && Some(*i) != y_col).collect();
        if cov.len() != names.len() {
            return Err(Error::Dimension { expected: names.len(), got: cov.len() });
        }
        let order: Vec<usize> = names
            .iter()
            .map(|n| header.iter().position(|h| h == n).ok_or_else(|| Error::data(format!("missing covariate column '{n}'"))))
            .collect::<Result<_>>()?;
        let mut z = Vec::new();
        let mut ys = Vec::new();
        let mut y = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = order
                .iter()
                .zip(names)
                .map(|(&c, n)| {
                    rec.get(c)
                        .unwrap_or("")
                        .parse::<f64>()
                        .map_err(|_| Error::data(format!("non-numeric covariate '{n}' at row {}", k + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            z.push(row);
            let bin = |c: Option<usize>| -> Result<Option<u8>> {
                match c.map(|c| rec.get(c).unwrap_or("")) {
                    None | Some("") => Ok(None),
                    Some(v) if v.eq_ignore_ascii_case("na") => Ok(None),
                    Some(v) => match v.parse::<f64>() {
                        Ok(0.0) => Ok(Some(0)),
                        Ok(1.0) => Ok(Some(1)),
                        _ => Err(Error::data(format!("non-binary response at row {}", k + 1))),
                    },
                }
            };
            ys.push(bin(ys_col)?);
            y.push(bin(y_col)?);
        }
        let all = |v: Vec<Option<u8>>| -> Option<Vec<u8>> { v.into_iter().collect() };
        Ok(ScoringTable { z, y_star: all(ys), y: all(y) })
    }

    /// `y` when complete, otherwise `y*`.
    pub fn truth(&self) -> Option<&[u8]> {
        self.y.as_deref().or(self.y_star.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub acc: f64,
    pub brier: f64,
    /// Absent when the truth has a single class.
    pub auc: Option<f64>,
}

/// Share of (positive, negative) pairs with strictly larger positive score;
/// ties count zero.
pub fn auc_strict(mu: &[f64], truth: &[u8]) -> Option<f64> {
    let mut neg: Vec<f64> = mu.iter().zip(truth).filter(|(_, y)| **y == 0).map(|(m, _)| *m).collect();
    let pos: Vec<f64> = mu.iter().zip(truth).filter(|(_, y)| **y == 1).map(|(m, _)| *m).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    neg.sort_by(f64::total_cmp);
    // For each positive, count negatives strictly below it.
    let wins: usize = pos.iter().map(|&m| neg.partition_point(|&v| v < m)).sum();
    Some(wins as f64 / (pos.len() as f64 * neg.len() as f64))
}

pub fn metrics(pred: &Prediction, truth: &[u8]) -> Result<Metrics> {
    if pred.mu.len() != truth.len() {
        return Err(Error::Dimension { expected: pred.mu.len(), got: truth.len() });
    }
    if truth.is_empty() {
        return Err(Error::invalid("no rows to evaluate"));
    }
    if let Some(v) = truth.iter().find(|v| **v > 1) {
        return Err(Error::data(format!("non-binary response {v}")));
    }
    let n = truth.len() as f64;
    let acc = pred.class.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / n;
    let brier = pred.mu.iter().zip(truth).map(|(m, &y)| (y as f64 - m).powi(2)).sum::<f64>() / n;
    Ok(Metrics { n: truth.len(), acc, brier, auc: auc_strict(&pred.mu, truth) })
}
