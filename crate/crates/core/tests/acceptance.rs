//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The process exits 0 once every criterion has been evaluated, whatever the
//! verdicts, so the report always appears in `cargo test` output; set
//! `ACCEPTANCE_STRICT=1` to exit 1 on any FAIL. `ACCEPTANCE_M` overrides the
//! Monte Carlo replication count (50) for quick local runs; the report says so.

use std::time::Instant;

use miscls_core::fit::{fit, Criterion, FitConfig, FitResult, Method};
use miscls_core::misclass::{estimate_gammas, KernelConfig, NuVector, RowGammas};
use miscls_core::objective::{loglik_param, loglik_semi, score_param, score_semi, ParamVector};
use miscls_core::sim::{
    generate_dataset, holdout_covariates, holdout_seed, model_error, run_replications, MetricsReport, ReplicationRecord, SettingName,
    SimSetting, HOLDOUT_SIZE,
};
use miscls_core::{Dataset, LinkKind, PenaltyKind, PenaltySpec, Row, Schema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASE_SEED: u64 = 20_240_601;

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

fn run<F: FnOnce() -> (bool, String)>(id: usize, name: &'static str, f: F) -> Verdict {
    let t = Instant::now();
    let (pass, detail) = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        }
    };
    let v = Verdict { id, name, pass, detail, secs: t.elapsed().as_secs_f64() };
    println!("[{}] {:>2}. {} ({:.1}s): {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.name, v.secs, v.detail);
    v
}

// ---------------------------------------------------------------------------
// 1. Reduction oracle

fn logistic_fixture(n: usize, seed: u64) -> Vec<(Vec<f64>, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = [1.2, -0.8, 0.0, 0.0, 0.6, 0.0];
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..beta.len()).map(|_| rng.random_range(-1.0..1.0) * 1.5).collect();
            let eta = -0.3 + z.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
            let y = u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()));
            (z, y)
        })
        .collect()
}

/// Closed-form minimizer of `v/2 (b - u)^2 + rho(|b|)` for one coordinate
/// (SCAD/MCP/L1 thresholding rules with curvature `v`).
fn threshold(kind: PenaltyKind, u: f64, v: f64, lam: f64, a: f64) -> f64 {
    let s = u.signum();
    let au = u.abs();
    let soft = |x: f64, t: f64| (x - t).max(0.0);
    match kind {
        PenaltyKind::L1 => s * soft(au, lam / v),
        PenaltyKind::Mcp => {
            if au <= a * lam {
                s * soft(au * v, lam) / (v - 1.0 / a)
            } else {
                u
            }
        }
        PenaltyKind::Scad => {
            if au <= lam + lam / v {
                s * soft(au, lam / v)
            } else if au <= a * lam {
                s * (au * v - a * lam / (a - 1.0)) / (v - 1.0 / (a - 1.0))
            } else {
                u
            }
        }
    }
}

/// Cyclic coordinate descent (majorized per coordinate) for
/// `-(1/n) sum loglik + sum_j rho(|b_j|)`, intercept unpenalized, warm-started
/// along `grid`.
fn cd_logistic_path(data: &[(Vec<f64>, u8)], kind: PenaltyKind, a: f64, grid: &[f64]) -> Vec<Vec<f64>> {
    let n = data.len() as f64;
    let p = data[0].0.len();
    let ybar = data.iter().map(|d| d.1 as f64).sum::<f64>() / n;
    let mut b = vec![0.0; p + 1];
    b[0] = (ybar / (1.0 - ybar)).ln();
    let mut eta: Vec<f64> = vec![b[0]; data.len()];
    // Per-coordinate majorizing curvature: logistic weights are <= 1/4.
    let v: Vec<f64> =
        (0..=p).map(|j| data.iter().map(|(z, _)| if j == 0 { 1.0 } else { z[j - 1] * z[j - 1] }).sum::<f64>() / n / 4.0).collect();
    let mut out = Vec::new();
    for &lam in grid {
        for _sweep in 0..200_000 {
            let mut change = 0.0f64;
            for j in 0..=p {
                let g: f64 = data
                    .iter()
                    .zip(&eta)
                    .map(|((z, y), e)| {
                        let x = if j == 0 { 1.0 } else { z[j - 1] };
                        x * (*y as f64 - 1.0 / (1.0 + (-e).exp()))
                    })
                    .sum::<f64>()
                    / n;
                let u = b[j] + g / v[j];
                let new = if j == 0 { u } else { threshold(kind, u, v[j], lam, a) };
                let d = new - b[j];
                if d != 0.0 {
                    for ((z, _), e) in data.iter().zip(eta.iter_mut()) {
                        *e += d * if j == 0 { 1.0 } else { z[j - 1] };
                    }
                    b[j] = new;
                }
                change = change.max(d.abs());
            }
            if change < 1e-11 {
                break;
            }
        }
        out.push(b.clone());
    }
    out
}

fn reduction_oracle() -> (bool, String) {
    let data = logistic_fixture(500, 11);
    let p = data[0].0.len();
    let names: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    let rows: Vec<Row> =
        data.iter().enumerate().map(|(i, (z, y))| Row { y_star: *y, y: if i % 2 == 0 { Some(*y) } else { None }, z: z.clone() }).collect();
    let ds = Dataset::new(rows, names, p, 0).unwrap();
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    let mut ok = true;
    for kind in [PenaltyKind::Scad, PenaltyKind::Mcp, PenaltyKind::L1] {
        let mut fits = Vec::new();
        for method in [Method::Naive, Method::Parametric, Method::Semiparametric] {
            let mut cfg = FitConfig::new(method, kind, Criterion::Gcv);
            cfg.zero_gamma = true;
            cfg.inference = false;
            cfg.path.inner_tol = 1e-10;
            fits.push(fit(&ds, &cfg).unwrap());
        }
        // Independent grid: intercept-only MLE is logit(ybar) for the logit link.
        let n = data.len() as f64;
        let ybar = data.iter().map(|d| d.1 as f64).sum::<f64>() / n;
        let lam0 = (0..p).map(|j| data.iter().map(|(z, y)| z[j] * (*y as f64 - ybar)).sum::<f64>().abs()).fold(0.0, f64::max);
        let target = 0.5 * ((p as f64).ln() / n).sqrt();
        let steps = ((target / lam0).ln() / 0.95f64.ln()).ceil() as i32;
        let grid: Vec<f64> = (1..=steps).map(|t| lam0 * 0.95f64.powi(t) / n).collect();
        let grid_err = fits[0].trace.iter().zip(&grid).map(|(e, g)| (e.lambda - g).abs() / g).fold(0.0, f64::max);
        if fits[0].trace.len() != grid.len() || grid_err > 1e-9 {
            ok = false;
            notes.push(format!("{kind}: grid mismatch ({} vs {} points)", fits[0].trace.len(), grid.len()));
        }
        let a = kind.default_shape();
        let path = cd_logistic_path(&data, kind, a, &grid);
        for f in &fits {
            let k = grid.iter().position(|g| (g - f.lambda).abs() <= 1e-12 * g).expect("selected lambda on grid");
            let dev = f.beta_bar().iter().zip(&path[k]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            worst = worst.max(dev);
            if dev > 1e-4 {
                ok = false;
                notes.push(format!("{kind} {}: max |diff| {dev:.2e}", f.method));
            }
        }
        let same = fits.windows(2).all(|w| w[0].lambda == w[1].lambda);
        if !same {
            ok = false;
            notes.push(format!("{kind}: methods selected different lambdas"));
        }
    }
    (ok, format!("max |beta - oracle| = {worst:.2e} over 3 methods x 3 penalties (tol 1e-4){}", fmt_notes(&notes)))
}

fn fmt_notes(n: &[String]) -> String {
    if n.is_empty() {
        String::new()
    } else {
        format!("; {}", n.join("; "))
    }
}

// ---------------------------------------------------------------------------
// 2. Gradient suite

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Dataset {
    let rows = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = u8::from(rng.random::<f64>() < 0.5);
            let ys = if rng.random::<f64>() < 0.2 { 1 - y } else { y };
            Row { y_star: ys, y: if rng.random::<f64>() < 0.4 { Some(y) } else { None }, z }
        })
        .collect();
    Dataset::from_rows(rows, p, 0).unwrap()
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / fd.abs().max(1.0)
}

fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], j: usize) -> f64 {
    let h = 1e-5 * x[j].abs().max(1.0);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[j] += h;
    xm[j] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

fn gradient_suite() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED ^ 2);
    let links = [LinkKind::Logit, LinkKind::Probit, LinkKind::Cloglog];
    let mut worst_p = 0.0f64;
    let mut worst_s = 0.0f64;
    for k in 0..200 {
        let p = 1 + k % 4;
        let ds = random_dataset(&mut rng, 30, p);
        let link = links[k % 3];
        let mut bb: Vec<f64> = (0..=p).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Keep every linear predictor inside |eta| <= 2.5, well away from the
        // probability clamp where the likelihood has a kink.
        let emax = ds.rows().iter().map(|r| (bb[0] + r.z.iter().zip(&bb[1..]).map(|(a, b)| a * b).sum::<f64>()).abs()).fold(0.0, f64::max);
        if emax > 2.5 {
            bb.iter_mut().for_each(|b| *b *= 2.5 / emax);
        }
        let nu: Vec<f64> = (0..2 * (p + 1)).map(|_| rng.random_range(-2.0..0.5)).collect();
        let theta: Vec<f64> = bb.iter().chain(&nu).copied().collect();
        let split = |t: &[f64]| ParamVector::from_beta_bar(&t[..=p], Some(NuVector::from_vec(t[p + 1..].to_vec()).unwrap()));
        let g = score_param(&split(&theta), &ds, link).unwrap();
        for (j, gj) in g.iter().enumerate() {
            let fd = central_diff(|t| loglik_param(&split(t), &ds, link).unwrap(), &theta, j);
            worst_p = worst_p.max(rel_err(*gj, fd));
        }
        let mut gam = RowGammas::zeros(ds.n());
        for i in 0..ds.n() {
            gam.g01[i] = rng.random_range(0.0..0.4);
            gam.g10[i] = rng.random_range(0.0..0.4);
        }
        let gs = score_semi(&bb, &ds, link, &gam).unwrap();
        for (j, gj) in gs.iter().enumerate() {
            let fd = central_diff(|b| loglik_semi(b, &ds, link, &gam).unwrap(), &bb, j);
            worst_s = worst_s.max(rel_err(*gj, fd));
        }
    }
    let ok = worst_p <= 1e-5 && worst_s <= 1e-5;
    (ok, format!("200 configurations, 3 links: max rel err parametric {worst_p:.2e}, semiparametric {worst_s:.2e} (tol 1e-5)"))
}

// ---------------------------------------------------------------------------
// 3. Prox / penalty suite

fn rho_ref(kind: PenaltyKind, t: f64, lam: f64, a: f64) -> f64 {
    match kind {
        PenaltyKind::L1 => lam * t,
        PenaltyKind::Scad => {
            if t <= lam {
                lam * t
            } else if t <= a * lam {
                (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
            } else {
                lam * lam * (a + 1.0) / 2.0
            }
        }
        PenaltyKind::Mcp => {
            if t <= a * lam {
                lam * t - t * t / (2.0 * a)
            } else {
                a * lam * lam / 2.0
            }
        }
    }
}

/// Grid search on `[0, |x|]` (the minimizer never leaves it) refined by
/// golden section around the best cell.
fn brute_prox(kind: PenaltyKind, x: f64, step: f64, lam: f64, a: f64) -> (f64, f64) {
    let ax = x.abs();
    let obj = |u: f64| (u - ax) * (u - ax) / (2.0 * step) + rho_ref(kind, u, lam, a);
    let m = 20_000;
    let mut best = (0.0, obj(0.0));
    for i in 1..=m {
        let u = ax * i as f64 / m as f64;
        let v = obj(u);
        if v < best.1 {
            best = (u, v);
        }
    }
    let h = ax / m as f64;
    let (mut lo, mut hi) = ((best.0 - h).max(0.0), (best.0 + h).min(ax));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = hi - r * (hi - lo);
        let d = lo + r * (hi - lo);
        if obj(c) < obj(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    let u = 0.5 * (lo + hi);
    if obj(u) < best.1 {
        best = (u, obj(u));
    }
    (x.signum() * best.0, best.1)
}

fn prox_suite() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED ^ 3);
    let kinds = [PenaltyKind::Scad, PenaltyKind::Mcp, PenaltyKind::L1];
    let mut worst = 0.0f64;
    let mut ties = 0;
    let mut bad = 0;
    for k in 0..1000 {
        let kind = kinds[k % 3];
        let lam = rng.random_range(0.01..2.0);
        let a = match kind {
            PenaltyKind::Scad => rng.random_range(2.1..6.0),
            _ => rng.random_range(1.1..6.0),
        };
        let step = rng.random_range(0.05..3.0);
        let x = rng.random_range(-10.0..10.0);
        let spec = PenaltySpec::new(kind, lam, a).unwrap();
        let u = spec.prox(x, step);
        let (ub, vb) = brute_prox(kind, x, step, lam, a);
        let d = (u - ub).abs();
        let vu = (u.abs() - x.abs()).powi(2) / (2.0 * step) + rho_ref(kind, u.abs(), lam, a);
        if d > 1e-4 {
            // Two global minimizers: accept when the objective values agree.
            if (vu - vb).abs() <= 1e-9 * vb.abs().max(1.0) {
                ties += 1;
            } else {
                bad += 1;
            }
        } else {
            worst = worst.max(d);
        }
    }
    // Flat-region identities, exact.
    let mut flat_ok = true;
    for (kind, a) in [(PenaltyKind::Scad, 3.7), (PenaltyKind::Mcp, 3.0)] {
        for &lam in &[0.01, 0.3, 1.7] {
            let spec = PenaltySpec::new(kind, lam, a).unwrap();
            let c = spec.eval(a * lam).unwrap().rho;
            for m in [1.0, 1.0001, 2.0, 50.0] {
                let v = spec.eval(m * a * lam).unwrap();
                flat_ok &= v.rho1 == 0.0 && v.rho2 == 0.0 && v.rho == c;
            }
        }
    }
    let ok = bad == 0 && flat_ok;
    (
        ok,
        format!(
            "1000 cases: max |prox - brute| {worst:.2e}, {ties} tied minimizers, {bad} mismatches; flat-region identities {}",
            if flat_ok { "exact" } else { "violated" }
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Kernel oracle

fn kernel_oracle() -> (bool, String) {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED ^ 4);
    for fixture in 0..5 {
        let p2 = 1 + fixture % 3;
        let strata = 1usize << p2;
        let mut rows = Vec::new();
        for s in 0..strata {
            let z: Vec<f64> = (0..p2).map(|b| ((s >> b) & 1) as f64).collect();
            // Every stratum gets both true classes and at least one non-flip per class.
            for _ in 0..(6 + rng.random_range(0..6)) {
                let y = u8::from(rows.len() % 2 == 0);
                let flip = rng.random::<f64>() < 0.25;
                rows.push(Row { y_star: if flip { 1 - y } else { y }, y: Some(y), z: z.clone() });
            }
            for _ in 0..4 {
                rows.push(Row { y_star: rng.random_range(0..2), y: None, z: z.clone() });
            }
        }
        let ds = Dataset::from_rows(rows, 0, p2).unwrap();
        let table = estimate_gammas(&ds, &KernelConfig { h: 1.0, omega: 0.0, use_pca: false, pca_variance_threshold: 0.9 }).unwrap();
        for s in 0..strata {
            let z: Vec<f64> = (0..p2).map(|b| ((s >> b) & 1) as f64).collect();
            let val: Vec<&Row> = ds.rows().iter().filter(|r| r.y.is_some() && r.z == z).collect();
            let freq = |cls: u8| {
                let inc: Vec<&&Row> = val.iter().filter(|r| r.y == Some(cls)).collect();
                inc.iter().filter(|r| r.y_star != cls).count() as f64 / inc.len() as f64
            };
            let (f01, f10) = (freq(0), freq(1));
            if f01 + f10 >= 1.0 {
                continue;
            }
            let e = table.eval(&z).unwrap();
            worst = worst.max((e.g01 - f01).abs()).max((e.g10 - f10).abs());
            checked += 1;
        }
    }
    (
        worst <= 1e-12 && checked > 0,
        format!("{checked} strata across 5 fixtures: max |gamma - stratified frequency| = {worst:.1e} (tol 1e-12)"),
    )
}

// ---------------------------------------------------------------------------
// Monte Carlo criteria

struct McRun {
    report: MetricsReport,
    records: Vec<ReplicationRecord>,
    secs: f64,
}

fn mc(setting: SettingName, delta: f64, method: Method, penalty: PenaltyKind, criterion: Criterion, m: usize) -> McRun {
    let t = Instant::now();
    let cfg = FitConfig::new(method, penalty, criterion);
    let (report, records) = run_replications(&SimSetting::named(setting, 1000), &cfg, m, delta, BASE_SEED, None).unwrap();
    let r = McRun { report, records, secs: t.elapsed().as_secs_f64() };
    eprintln!(
        "  mc {setting} delta={delta} {method} {penalty} {criterion}: AME*100 {:.3} (se {:.3}) FNZ {:.2} FZ {:.2} failures {} [{:.0}s]",
        r.report.ame * 100.0,
        r.report.ame_se * 100.0,
        r.report.false_nonzero,
        r.report.false_zero,
        r.report.failures,
        r.secs
    );
    r
}

/// Paired per-seed model-error differences `a - b` over seeds where both succeeded.
fn paired_me_diff(setting: SettingName, a: &McRun, b: &McRun) -> (f64, f64, usize) {
    let s = SimSetting::named(setting, 1000);
    let holdout = holdout_covariates(HOLDOUT_SIZE, holdout_seed(BASE_SEED));
    let d: Vec<f64> = a
        .records
        .iter()
        .zip(&b.records)
        .filter_map(|(ra, rb)| match (&ra.estimate, &rb.estimate) {
            (Some(ea), Some(eb)) => Some(model_error(&s, ea, &holdout) - model_error(&s, eb, &holdout)),
            _ => None,
        })
        .collect();
    let k = d.len() as f64;
    let mean = d.iter().sum::<f64>() / k;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    (mean, sd / k.sqrt(), d.len())
}

// ---------------------------------------------------------------------------
// 11. KKT / sparsity

fn kkt_suite(extra: &[(Dataset, FitResult)]) -> (bool, String) {
    let mut fits: Vec<(Dataset, FitResult)> = extra.to_vec();
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/nhanes_like.csv");
    let schema = Schema::from_json_file(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/nhanes_like.schema.json")).unwrap();
    let nh = Dataset::load_csv(fixture, &schema).unwrap();
    let sim = generate_dataset(&SimSetting::named(SettingName::I, 400), BASE_SEED).unwrap().make_validation_split(0.5, 7).unwrap();
    for ds in [&nh, &sim] {
        for method in [Method::Naive, Method::Parametric, Method::Semiparametric] {
            for kind in [PenaltyKind::Scad, PenaltyKind::Mcp, PenaltyKind::L1] {
                let mut cfg = FitConfig::new(method, kind, Criterion::Gcv);
                cfg.inference = false;
                fits.push((ds.clone(), fit(ds, &cfg).unwrap()));
            }
        }
    }
    let mut worst_kkt = 0.0f64;
    let mut worst_zero = f64::NEG_INFINITY;
    let mut tiny = 0;
    let mut support_ok = true;
    for (ds, f) in &fits {
        worst_kkt = worst_kkt.max(f.kkt_residual(ds).unwrap());
        worst_zero = worst_zero.max(f.zero_coordinate_excess(ds).unwrap());
        tiny += f.beta.iter().filter(|b| **b != 0.0 && b.abs() < 1e-12).count();
        support_ok &=
            f.support.iter().all(|&j| f.beta[j] != 0.0) && (0..f.p()).filter(|j| !f.support.contains(j)).all(|j| f.beta[j] == 0.0);
    }
    let ok = worst_kkt <= 1e-4 && worst_zero <= 1e-6 && tiny == 0 && support_ok;
    (
        ok,
        format!(
            "{} fits: max fixed-point residual {worst_kkt:.1e} (tol 1e-4), max zero-coordinate excess {worst_zero:.1e} (tol 1e-6), {tiny} near-zero nonzeros, support {}",
            fits.len(),
            if support_ok { "consistent" } else { "inconsistent" }
        ),
    )
}

fn main() {
    let m: usize = std::env::var("ACCEPTANCE_M").ok().and_then(|v| v.parse().ok()).unwrap_or(50);
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    println!("acceptance suite: M = {m}{}", if m == 50 { "" } else { " (override; criteria are stated for M = 50)" });
    let mut v = vec![
        run(1, "reduction oracle", reduction_oracle),
        run(2, "gradient suite", gradient_suite),
        run(3, "prox/penalty suite", prox_suite),
        run(4, "kernel oracle", kernel_oracle),
    ];

    let t = Instant::now();
    let naive = mc(SettingName::I, 0.5, Method::Naive, PenaltyKind::Scad, Criterion::Gcv, m);
    let par = mc(SettingName::I, 0.5, Method::Parametric, PenaltyKind::Scad, Criterion::Gcv, m);
    let semi = mc(SettingName::I, 0.5, Method::Semiparametric, PenaltyKind::Scad, Criterion::Gcv, m);
    let mc_secs = t.elapsed().as_secs_f64();
    v.push(run(5, "Setting I model error trend", || {
        let (a, b, c) = (naive.report.ame * 100.0, par.report.ame * 100.0, semi.report.ame * 100.0);
        let ratio = a / b;
        let ok = ratio >= 5.0 && (0.2..=0.6).contains(&b) && (0.2..=0.7).contains(&c);
        (
            ok,
            format!(
                "AME*100 naive {a:.3}, parametric {b:.3} (band [0.2, 0.6]), semiparametric {c:.3} (band [0.2, 0.7]); ratio {ratio:.1} (>= 5); {:.0}s",
                mc_secs
            ),
        )
    }));
    v.push(run(6, "naive bias of beta_1", || {
        let b1 = naive.report.coefficients.iter().find(|c| c.index == 1).unwrap();
        ((-1.75..=-1.50).contains(&b1.bias), format!("bias {:.3} (ESD {:.3}), band [-1.75, -1.50]", b1.bias, b1.esd))
    }));

    let bic = mc(SettingName::I, 0.5, Method::Parametric, PenaltyKind::Scad, Criterion::Bic, m);
    let l1 = mc(SettingName::I, 0.5, Method::Parametric, PenaltyKind::L1, Criterion::Gcv, m);
    v.push(run(7, "selection counts", || {
        let (fnz, fz, l1fnz) = (bic.report.false_nonzero, bic.report.false_zero, l1.report.false_nonzero);
        let ok = fnz <= 0.5 && fz <= 0.3 && l1fnz >= 5.0;
        (
            ok,
            format!(
                "parametric SCAD/BIC FalseNonZero {fnz:.2} (<= 0.5), FalseZero {fz:.2} (<= 0.3); L1/GCV FalseNonZero {l1fnz:.2} (>= 5)"
            ),
        )
    }));
    v.push(run(8, "coverage", || {
        let cr: Vec<String> = par.report.coefficients.iter().map(|c| format!("b{} {:.2}", c.index, c.coverage)).collect();
        let ok = par.report.coefficients.iter().all(|c| (0.85..=1.0).contains(&c.coverage));
        (ok, format!("{} (band [0.85, 1])", cr.join(", ")))
    }));

    let par2 = mc(SettingName::II, 0.3, Method::Parametric, PenaltyKind::Scad, Criterion::Gcv, m);
    let semi2 = mc(SettingName::II, 0.3, Method::Semiparametric, PenaltyKind::Scad, Criterion::Gcv, m);
    v.push(run(9, "misspecification robustness", || {
        let (d, se, k) = paired_me_diff(SettingName::II, &semi2, &par2);
        let ok = d <= se;
        (
            ok,
            format!(
                "AME*100 semiparametric {:.3} vs parametric {:.3}; paired difference {:.3} with MC SE {:.3} over {k} seeds (pass if difference <= SE)",
                semi2.report.ame * 100.0,
                par2.report.ame * 100.0,
                d * 100.0,
                se * 100.0
            ),
        )
    }));
    v.push(run(10, "AMR calibration", || {
        let amr = |name| {
            let s = SimSetting::named(name, 1000);
            (0..m as u64).map(|j| generate_dataset(&s, BASE_SEED + j).unwrap().misclassification_rate().unwrap()).sum::<f64>() / m as f64
        };
        let (a1, a4) = (amr(SettingName::I), amr(SettingName::IV));
        (
            (0.20..=0.24).contains(&a1) && (0.34..=0.38).contains(&a4),
            format!("AMR I {a1:.4} (band [0.20, 0.24]), IV {a4:.4} (band [0.34, 0.38])"),
        )
    }));
    v.push(run(11, "KKT / sparsity invariants", || kkt_suite(&[])));

    let passed = v.iter().filter(|x| x.pass).count();
    println!("acceptance: {passed}/{} criteria passed", v.len());
    if strict && passed < v.len() {
        std::process::exit(1);
    }
}
