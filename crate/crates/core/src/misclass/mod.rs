//! Misclassification probabilities `gamma01(z) = P(y*=1 | y=0, z)` and
//! `gamma10(z) = P(y*=0 | y=1, z)`, either parametric or kernel-smoothed.

pub mod kernel;
pub mod param;

pub use kernel::{estimate_gammas, kernel_weight, smoothing_grids, GammaTable, KernelConfig, KernelPrecomp};
pub use param::{a_coefficients, gamma_param, ACoefficients, GammaParam, NuVector};

use crate::data::Dataset;

/// Misclassification probabilities evaluated at every row of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGammas {
    pub g01: Vec<f64>,
    pub g10: Vec<f64>,
}

impl RowGammas {
    /// No misclassification.
    pub fn zeros(n: usize) -> Self {
        RowGammas { g01: vec![0.0; n], g10: vec![0.0; n] }
    }

    pub fn constant(n: usize, g01: f64, g10: f64) -> Self {
        RowGammas { g01: vec![g01; n], g10: vec![g10; n] }
    }

    pub fn from_param(nu: &NuVector, ds: &Dataset) -> Self {
        let (g01, g10) = ds.rows().iter().map(|r| nu.gammas(&r.z)).unzip();
        RowGammas { g01, g10 }
    }

    pub fn len(&self) -> usize {
        self.g01.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g01.is_empty()
    }

    /// Rows where `gamma01 + gamma10 >= 1`.
    pub fn count_sum_at_least_one(&self) -> usize {
        self.g01.iter().zip(&self.g10).filter(|(a, b)| *a + *b >= 1.0).count()
    }
}

/// `(a0, a1)` for a surrogate value: `a0 = P(y* | y=0)`, `a1 = P(y* | y=1)`.
#[inline]
pub fn a_from_gammas(g01: f64, g10: f64, y_star: u8) -> (f64, f64) {
    if y_star == 1 {
        (g01, 1.0 - g10)
    } else {
        (1.0 - g01, g10)
    }
}

/// `mu* = P(y*=1 | z) = gamma01 + (1 - gamma01 - gamma10) mu`.
#[inline]
pub fn surrogate_mean(g01: f64, g10: f64, mu: f64) -> f64 {
    g01 + (1.0 - g01 - g10) * mu
}
