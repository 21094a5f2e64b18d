//! Alternating fit: quasi-Newton on `(beta0*, nu)` with `beta` fixed, then a
//! penalized path in `beta_bar` with `nu` fixed.

use super::{finish, intercept_start, run_path, select_or_err, Diagnostics, FitConfig, GammaSource};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::misclass::{NuVector, RowGammas};
use crate::objective::{param_value_and_score, Design, ParamVector};
use crate::optim::{bfgs, BfgsConfig};

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Maximizes the parametric likelihood over `(beta0*, nu)` with `beta` held.
fn smooth_step(design: &Design, ds: &Dataset, cfg: &FitConfig, b0: f64, beta: &[f64], nu: &[f64], outer: usize) -> Result<(f64, Vec<f64>)> {
    let n = ds.n() as f64;
    let d = design.dim();
    let mut x0 = Vec::with_capacity(1 + nu.len());
    x0.push(b0);
    x0.extend_from_slice(nu);
    let r = bfgs(
        |x: &[f64]| {
            let theta = ParamVector::new(x[0], beta.to_vec(), Some(NuVector::from_vec(x[1..].to_vec())?));
            let (ll, g) = param_value_and_score(design, cfg.link, &theta)?;
            let mut grad = Vec::with_capacity(x.len());
            grad.push(-g[0] / n);
            grad.extend(g[d..].iter().map(|v| -v / n));
            Ok((-ll / n, grad))
        },
        &x0,
        &BfgsConfig::default(),
    )
    .map_err(|e| match e {
        Error::Numerical(m) => Error::numerical(format!("outer iteration {outer}: {m}")),
        other => other,
    })?;
    Ok((r.x[0], r.x[1..].to_vec()))
}

pub(super) fn fit(ds: &Dataset, cfg: &FitConfig) -> Result<crate::fit::FitResult> {
    if ds.n_validation() == 0 {
        return Err(Error::SparseValidation("the parametric fit needs at least one validated row".into()));
    }
    let design = Design::new(ds);
    let p = ds.p();
    let mut b0 = intercept_start(&design, cfg.link);
    let mut beta = vec![0.0; p];
    let mut nu = vec![0.0; 2 * (p + 1)];
    let mut diag = Diagnostics::default();
    let mut last = None;
    for outer in 1..=cfg.max_outer {
        let (b0_s, nu_new) = smooth_step(&design, ds, cfg, b0, &beta, &nu, outer)?;
        let gam = RowGammas::from_param(&NuVector::from_vec(nu_new.clone())?, ds);
        let out = run_path(&design, cfg.link, &gam, cfg, b0_s, (None, None)).map_err(|e| match e {
            Error::Numerical(m) => Error::numerical(format!("outer iteration {outer}: {m}")),
            other => other,
        })?;
        let k = select_or_err(&out.trace, ds.n(), cfg.criterion)?;
        let bb = &out.betas[k];
        let change = max_abs_diff(&nu_new, &nu).max((bb[0] - b0).abs()).max(max_abs_diff(&bb[1..], &beta));
        b0 = bb[0];
        beta = bb[1..].to_vec();
        nu = nu_new;
        diag.outer_iterations = outer;
        diag.inner_nonconverged = out.inner_nonconverged;
        diag.inner_iterations += out.inner_iterations;
        diag.df_pseudo_inverse = out.df_pseudo_inverse;
        last = Some((gam, out, k));
        if change <= cfg.outer_tol {
            diag.converged = true;
            break;
        }
    }
    let (gam, out, k) = last.expect("at least one outer iteration");
    if !diag.converged {
        diag.warnings.push(format!("alternating fit did not converge in {} outer iterations", cfg.max_outer));
    }
    let chosen = out.trace[k].clone();
    finish(ds, cfg, &design, &gam, out.betas[k].clone(), Some(nu), &chosen, GammaSource::Parametric, out.trace, diag)
}
