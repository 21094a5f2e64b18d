//! Folded-concave penalty families (SCAD, MCP) and the lasso.
//!
//! Every penalty here splits as `rho(|x|) = lambda * |x| + q(x)` where `q` is
//! concave and continuously differentiable with `q'(0) = 0`. The path solver
//! keeps `q` in the smooth part of the objective and soft-thresholds only the
//! `lambda * |x|` part.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Scad,
    Mcp,
    L1,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 3] = [PenaltyKind::Scad, PenaltyKind::Mcp, PenaltyKind::L1];

    /// Conventional shape parameter: 3.7 for SCAD, 3 for MCP.
    pub fn default_shape(self) -> f64 {
        match self {
            PenaltyKind::Scad => 3.7,
            PenaltyKind::Mcp => 3.0,
            PenaltyKind::L1 => 0.0,
        }
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyKind::Scad => "scad",
            PenaltyKind::Mcp => "mcp",
            PenaltyKind::L1 => "l1",
        })
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scad" => Ok(PenaltyKind::Scad),
            "mcp" => Ok(PenaltyKind::Mcp),
            "l1" | "lasso" => Ok(PenaltyKind::L1),
            other => Err(Error::invalid(format!("unknown penalty '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
    /// Shape parameter; ignored for L1.
    pub a: f64,
}

/// Value and first two derivatives of `rho_lambda` at a nonnegative argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyValue {
    pub rho: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, lambda: f64, a: f64) -> Result<Self> {
        let spec = PenaltySpec { kind, lambda, a };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_default_shape(kind: PenaltyKind, lambda: f64) -> Result<Self> {
        Self::new(kind, lambda, kind.default_shape())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        PenaltySpec { lambda, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        match self.kind {
            PenaltyKind::Scad if !(self.a > 2.0) => Err(Error::invalid(format!("SCAD requires a > 2, got {}", self.a))),
            PenaltyKind::Mcp if !(self.a > 0.0) => Err(Error::invalid(format!("MCP requires a > 0, got {}", self.a))),
            _ => Ok(()),
        }
    }

    /// `rho`, `rho'` and `rho''` at `xi >= 0`.
    ///
    /// Knot convention: `rho'' = 0` on `[0, lambda]` for SCAD and on the flat
    /// region `xi >= a * lambda` for both concave penalties.
    pub fn eval(&self, xi: f64) -> Result<PenaltyValue> {
        if xi < 0.0 || xi.is_nan() {
            return Err(Error::invalid(format!("penalty argument must be >= 0, got {xi}")));
        }
        Ok(self.eval_unchecked(xi))
    }

    pub(crate) fn eval_unchecked(&self, xi: f64) -> PenaltyValue {
        let lam = self.lambda;
        let a = self.a;
        match self.kind {
            PenaltyKind::L1 => PenaltyValue { rho: lam * xi, rho1: lam, rho2: 0.0 },
            PenaltyKind::Scad => {
                if xi <= lam {
                    PenaltyValue { rho: lam * xi, rho1: lam, rho2: 0.0 }
                } else if xi < a * lam {
                    PenaltyValue {
                        rho: (2.0 * a * lam * xi - xi * xi - lam * lam) / (2.0 * (a - 1.0)),
                        rho1: (a * lam - xi) / (a - 1.0),
                        rho2: -1.0 / (a - 1.0),
                    }
                } else {
                    PenaltyValue { rho: lam * lam * (a + 1.0) / 2.0, rho1: 0.0, rho2: 0.0 }
                }
            }
            PenaltyKind::Mcp => {
                if xi < a * lam {
                    PenaltyValue { rho: lam * xi - xi * xi / (2.0 * a), rho1: lam - xi / a, rho2: -1.0 / a }
                } else {
                    PenaltyValue { rho: a * lam * lam / 2.0, rho1: 0.0, rho2: 0.0 }
                }
            }
        }
    }

    pub fn rho(&self, xi: f64) -> f64 {
        self.eval_unchecked(xi.abs()).rho
    }

    pub fn rho1(&self, xi: f64) -> f64 {
        self.eval_unchecked(xi.abs()).rho1
    }

    pub fn rho2(&self, xi: f64) -> f64 {
        self.eval_unchecked(xi.abs()).rho2
    }

    /// Concave remainder `q(x) = rho(|x|) - lambda |x|`.
    pub fn concave_value(&self, x: f64) -> f64 {
        if self.kind == PenaltyKind::L1 {
            return 0.0;
        }
        let ax = x.abs();
        self.eval_unchecked(ax).rho - self.lambda * ax
    }

    /// Derivative of the concave remainder; zero at the origin.
    pub fn concave_derivative(&self, x: f64) -> f64 {
        if self.kind == PenaltyKind::L1 || x == 0.0 {
            return 0.0;
        }
        (self.eval_unchecked(x.abs()).rho1 - self.lambda) * x.signum()
    }

    /// Proximal map `argmin_u (u - x)^2 / (2 step) + rho(|u|)`.
    ///
    /// The scalar problem is piecewise quadratic; every piece's clipped
    /// stationary point and every knot is a candidate, and the global minimum is
    /// kept. Ties go to the smaller magnitude.
    pub fn prox(&self, x: f64, step: f64) -> f64 {
        debug_assert!(step > 0.0);
        let ax = x.abs();
        let lam = self.lambda;
        let a = self.a;
        if self.kind == PenaltyKind::L1 || lam == 0.0 {
            return x.signum() * (ax - step * lam).max(0.0);
        }
        let mut candidates: Vec<f64> = Vec::with_capacity(8);
        candidates.push(0.0);
        match self.kind {
            PenaltyKind::Scad => {
                candidates.push((ax - step * lam).clamp(0.0, lam));
                candidates.push(lam);
                // Middle piece: (u - x)^2/(2t) + (2 a lam u - u^2 - lam^2) / (2(a-1)).
                let curv = 1.0 / step - 1.0 / (a - 1.0);
                if curv > 0.0 {
                    let u = (ax / step - a * lam / (a - 1.0)) / curv;
                    candidates.push(u.clamp(lam, a * lam));
                }
                candidates.push(a * lam);
            }
            PenaltyKind::Mcp => {
                let curv = 1.0 / step - 1.0 / a;
                if curv > 0.0 {
                    let u = (ax / step - lam) / curv;
                    candidates.push(u.clamp(0.0, a * lam));
                }
                candidates.push(a * lam);
            }
            PenaltyKind::L1 => unreachable!(),
        }
        // Flat piece beyond a*lam: no shrinkage.
        candidates.push(ax.max(a * lam));

        let objective = |u: f64| (u - ax) * (u - ax) / (2.0 * step) + self.eval_unchecked(u).rho;
        let mut best = 0.0;
        let mut best_val = objective(0.0);
        for &u in &candidates[1..] {
            let v = objective(u);
            if v < best_val || (v == best_val && u < best) {
                best = u;
                best_val = v;
            }
        }
        x.signum() * best
    }
}

/// Gradient of `Q(beta) = sum_j [rho(|beta_j|) - lambda |beta_j|]`.
pub fn concave_part_gradient(spec: &PenaltySpec, beta: &[f64]) -> Vec<f64> {
    beta.iter().map(|&b| spec.concave_derivative(b)).collect()
}
