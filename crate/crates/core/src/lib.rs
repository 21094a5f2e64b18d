//! Penalized-likelihood variable selection for binary regression with a
//! misclassified response.
//!
//! The main study observes a surrogate `y*` for every row; an internal
//! validation subsample additionally observes the true `y`. Three estimators
//! are provided:
//!
//! * **naive**: penalized binary regression of `y*` on `z`, ignoring misclassification;
//! * **parametric**: misclassification probabilities follow linear-logistic
//!   models in `z`, estimated jointly with the regression coefficients;
//! * **semiparametric**: misclassification probabilities are estimated by
//!   mixed continuous/discrete product kernels on the validation rows.
//!
//! All three minimize a (possibly nonconvex) negative log-likelihood plus a
//! SCAD, MCP or L1 penalty with an approximate path-following proximal
//! gradient solver, and pick the tuning parameters by GCV or BIC.
//!
//! The [`sim`] module reproduces the Monte Carlo simulation design and its
//! metrics (model error, selection counts, bias, coverage).

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod fit;
pub mod inference;
pub mod linalg;
pub mod link;
pub mod misclass;
pub mod objective;
pub mod optim;
pub mod path;
pub mod penalty;
pub mod predict;
pub mod sim;

pub use data::{Dataset, Row, Schema};
pub use error::{Error, Result};
pub use fit::{fit, Criterion, FitConfig, FitResult, Method};
pub use link::LinkKind;
pub use penalty::{PenaltyKind, PenaltySpec};

/// Lower/upper clamp applied to probabilities inside logarithms.
pub const PROB_EPS: f64 = 1e-10;
