//! Link functions for the binary mean model `g(mu) = beta0 + z'beta`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::PROB_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    #[default]
    Logit,
    Probit,
    Cloglog,
}

impl LinkKind {
    pub const ALL: [LinkKind; 3] = [LinkKind::Logit, LinkKind::Probit, LinkKind::Cloglog];

    /// Inverse link `g^{-1}(eta)`, unclamped.
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            LinkKind::Logit => expit(eta),
            LinkKind::Probit => std_normal_cdf(eta),
            LinkKind::Cloglog => -(-eta.exp()).exp_m1(),
        }
    }

    /// First derivative of the inverse link.
    pub fn inverse_deriv(self, eta: f64) -> f64 {
        match self {
            LinkKind::Logit => {
                let m = expit(eta);
                m * (1.0 - m)
            }
            LinkKind::Probit => std_normal_pdf(eta),
            LinkKind::Cloglog => (eta - eta.exp()).exp(),
        }
    }

    /// Second derivative of the inverse link.
    pub fn inverse_deriv2(self, eta: f64) -> f64 {
        match self {
            LinkKind::Logit => {
                let m = expit(eta);
                m * (1.0 - m) * (1.0 - 2.0 * m)
            }
            LinkKind::Probit => -eta * std_normal_pdf(eta),
            LinkKind::Cloglog => (eta - eta.exp()).exp() * (1.0 - eta.exp()),
        }
    }

    /// `(g^{-1}(eta), d g^{-1} / d eta)` sharing one evaluation.
    #[inline]
    pub fn inverse_and_deriv(self, eta: f64) -> (f64, f64) {
        match self {
            LinkKind::Logit => {
                let m = expit(eta);
                (m, m * (1.0 - m))
            }
            _ => (self.inverse(eta), self.inverse_deriv(eta)),
        }
    }

    /// The link itself, `g(mu)`; used for intercept initialization.
    pub fn link(self, mu: f64) -> f64 {
        let mu = mu.clamp(PROB_EPS, 1.0 - PROB_EPS);
        match self {
            LinkKind::Logit => (mu / (1.0 - mu)).ln(),
            LinkKind::Probit => std_normal_quantile(mu),
            LinkKind::Cloglog => (-(1.0 - mu).ln()).ln(),
        }
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LinkKind::Logit => "logit",
            LinkKind::Probit => "probit",
            LinkKind::Cloglog => "cloglog",
        };
        f.write_str(s)
    }
}

impl FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(LinkKind::Logit),
            "probit" => Ok(LinkKind::Probit),
            "cloglog" => Ok(LinkKind::Cloglog),
            other => Err(Error::invalid(format!("unknown link '{other}'"))),
        }
    }
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF through the complementary error function, which keeps
/// full relative accuracy in the lower tail.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Normal quantile: statrs' approximation polished by two Newton steps on the CDF.
pub fn std_normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let mut x = Normal::standard().inverse_cdf(p);
    if x.is_finite() {
        for _ in 0..2 {
            let d = std_normal_pdf(x);
            if d > 0.0 {
                x -= (std_normal_cdf(x) - p) / d;
            }
        }
    }
    x
}

fn linear_predictor(beta_bar: &[f64], z: &[f64]) -> Result<f64> {
    if beta_bar.len() != z.len() + 1 {
        return Err(Error::Dimension { expected: z.len() + 1, got: beta_bar.len() });
    }
    Ok(beta_bar[0] + beta_bar[1..].iter().zip(z).map(|(b, x)| b * x).sum::<f64>())
}

/// `mu = g^{-1}(beta0 + z'beta)`, clamped into `[1e-10, 1 - 1e-10]`.
pub fn mean_value(link: LinkKind, beta_bar: &[f64], z: &[f64]) -> Result<f64> {
    let eta = linear_predictor(beta_bar, z)?;
    Ok(link.inverse(eta).clamp(PROB_EPS, 1.0 - PROB_EPS))
}

/// `d mu / d beta_bar = (g^{-1})'(eta) * (1, z')'`. Not clamped.
pub fn mean_gradient(link: LinkKind, beta_bar: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let eta = linear_predictor(beta_bar, z)?;
    let d = link.inverse_deriv(eta);
    Ok(std::iter::once(d).chain(z.iter().map(|x| d * x)).collect())
}
