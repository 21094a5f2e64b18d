//! Kernel-corrected fit: one penalized path per `(h, omega)` grid point,
//! selection over the union of all paths.

use rayon::prelude::*;

use super::{finish, intercept_start, run_path, select_or_err, Diagnostics, FitConfig, FitResult, GammaSource, PathOutcome};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::misclass::{smoothing_grids, KernelPrecomp, RowGammas};
use crate::objective::Design;

/// Grid actually searched. A grid dimension the kernel cannot see (no
/// continuous or no discrete covariates) collapses to one value.
pub(crate) fn search_grid(cfg: &FitConfig, pre: &KernelPrecomp) -> (Vec<f64>, Vec<f64>) {
    let (mut h, mut w) = smoothing_grids(pre.n_validation(), pre.p1_effective());
    if let Some(g) = &cfg.h_grid {
        h = g.clone();
    } else if pre.p1_effective() == 0 {
        h.truncate(1);
    }
    if let Some(g) = &cfg.omega_grid {
        w = g.clone();
    } else if pre.p2() == 0 {
        w.truncate(1);
    }
    (h, w)
}

struct PointFit {
    h: f64,
    omega: f64,
    gam: RowGammas,
    out: PathOutcome,
    fallbacks: usize,
    sum_clamps: usize,
}

pub(super) fn fit(ds: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    let pre = KernelPrecomp::new(ds, cfg.use_pca, cfg.pca_threshold)?;
    let design = Design::new(ds);
    let b0 = intercept_start(&design, cfg.link);
    let (hs, ws) = search_grid(cfg, &pre);
    let points: Vec<(f64, f64)> = hs.iter().flat_map(|&h| ws.iter().map(move |&w| (h, w))).collect();
    let results: Vec<Result<Option<PointFit>>> = points
        .par_iter()
        .map(|&(h, omega)| {
            if !(h > 0.0) || !(0.0..=1.0).contains(&omega) {
                return Err(Error::invalid(format!("invalid smoothing point (h={h}, omega={omega})")));
            }
            let (gam, kd) = pre.row_gammas(h, omega);
            if kd.all_fallback() {
                return Ok(None);
            }
            let out = run_path(&design, cfg.link, &gam, cfg, b0, (Some(h), Some(omega))).map_err(|e| match e {
                Error::Numerical(m) => Error::numerical(format!("smoothing point (h={h:.4}, omega={omega:.4}): {m}")),
                other => other,
            })?;
            Ok(Some(PointFit { h, omega, gam, out, fallbacks: kd.fallbacks, sum_clamps: kd.sum_clamps }))
        })
        .collect();
    let mut fits = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(f) => fits.push(f),
            None => skipped += 1,
        }
    }
    if fits.is_empty() {
        return Err(Error::SparseValidation("validation sample too sparse: every kernel evaluation is degenerate".into()));
    }
    // Selection over the concatenated trace; remember the owner of each entry.
    let mut trace = Vec::new();
    let mut owner = Vec::new();
    for (g, f) in fits.iter().enumerate() {
        for (k, e) in f.out.trace.iter().enumerate() {
            trace.push(e.clone());
            owner.push((g, k));
        }
    }
    let sel = select_or_err(&trace, ds.n(), cfg.criterion)?;
    let (g, k) = owner[sel];
    let best = &fits[g];
    let diag = Diagnostics {
        outer_iterations: 1,
        converged: best.out.inner_nonconverged == 0,
        kernel_fallbacks: best.fallbacks,
        kernel_sum_clamps: best.sum_clamps,
        skipped_grid_points: skipped,
        inner_nonconverged: best.out.inner_nonconverged,
        inner_iterations: best.out.inner_iterations,
        df_pseudo_inverse: best.out.df_pseudo_inverse,
        ..Default::default()
    };
    let source = GammaSource::Kernel { h: best.h, omega: best.omega, use_pca: cfg.use_pca, pca_threshold: cfg.pca_threshold };
    let chosen = trace[sel].clone();
    let beta_bar = best.out.betas[k].clone();
    let gam = best.gam.clone();
    finish(ds, cfg, &design, &gam, beta_bar, None, &chosen, source, trace, diag)
}
