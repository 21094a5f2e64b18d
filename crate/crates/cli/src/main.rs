//! `miscls`: fit, tune, simulate, predict and evaluate from the command line.
//!
//! Every subcommand writes its artifacts into `--out` (created if needed)
//! together with a `run.json` holding the resolved configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use miscls_core::fit::{fit, Criterion, FitConfig, FitResult, Method};
use miscls_core::path::GridScale;
use miscls_core::predict::{metrics, predict, ScoringTable};
use miscls_core::sim::{run_replications, ReplicationRecord, SettingName, SimSetting};
use miscls_core::{Dataset, Error, LinkKind, PenaltyKind, Schema};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "miscls", version, about = "Variable selection for binary regression with a misclassified response")]
struct Cli {
    /// Worker threads for replication and grid parallelism (falls back to MISCLS_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model; writes fit.json and coefficients.csv.
    Fit(FitArgs),
    /// Dump the tuning grid (lambda, h, omega, df, deviance, GCV, BIC); writes tuning.csv.
    Tune(FitArgs),
    /// Monte Carlo study; writes metrics.json and replications.csv.
    Simulate(SimArgs),
    /// Predicted probabilities and classes; writes predictions.csv.
    Predict(ScoreArgs),
    /// Accuracy, Brier score and AUC against y (or y* when y is incomplete); writes metrics.json.
    Evaluate(ScoreArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// naive, parametric or semiparametric.
    #[arg(long, default_value = "parametric")]
    method: Method,
    /// scad, mcp or l1.
    #[arg(long, default_value = "scad")]
    penalty: PenaltyKind,
    /// gcv or bic.
    #[arg(long, default_value = "gcv")]
    criterion: Criterion,
    /// logit, probit or cloglog.
    #[arg(long, default_value = "logit")]
    link: LinkKind,
    /// Project continuous covariates onto principal components in the kernel estimator.
    #[arg(long)]
    pca: bool,
    /// Share of variance the retained components must explain (default 0.9).
    #[arg(long)]
    pca_threshold: Option<f64>,
    /// Penalty shape `a` (default 3.7 for SCAD, 3 for MCP).
    #[arg(long)]
    penalty_shape: Option<f64>,
    /// Ratio between consecutive lambda values (default 0.95).
    #[arg(long)]
    path_ratio: Option<f64>,
    /// Constant c in the smallest lambda, c sqrt(log p / n) (default 0.5).
    #[arg(long)]
    path_c: Option<f64>,
    /// Convergence tolerance of each proximal gradient solve (default 1e-7).
    #[arg(long)]
    inner_tol: Option<f64>,
    /// Iteration cap of each proximal gradient solve (default 5000).
    #[arg(long)]
    max_inner_iter: Option<usize>,
    /// Units of the lambda grid: `score` (summed log-likelihood score) or `mean`.
    #[arg(long)]
    grid_scale: Option<GridScale>,
    /// Convergence tolerance of the parametric outer loop (default 1e-6).
    #[arg(long)]
    outer_tol: Option<f64>,
    /// Iteration cap of the parametric outer loop (default 50).
    #[arg(long)]
    max_outer: Option<usize>,
    /// Comma-separated bandwidth grid overriding the default.
    #[arg(long, value_delimiter = ',')]
    h_grid: Option<Vec<f64>>,
    /// Comma-separated discrete-smoothing grid in [0, 1] overriding the default.
    #[arg(long, value_delimiter = ',')]
    omega_grid: Option<Vec<f64>>,
    /// Skip covariance estimation.
    #[arg(long)]
    no_inference: bool,
    /// Confidence level of the intervals (default 0.95).
    #[arg(long)]
    level: Option<f64>,
}

impl ModelArgs {
    fn config(&self) -> FitConfig {
        let mut c = FitConfig::new(self.method, self.penalty, self.criterion);
        c.link = self.link;
        c.use_pca = self.pca;
        c.penalty_shape = self.penalty_shape;
        if let Some(v) = self.pca_threshold {
            c.pca_threshold = v;
        }
        if let Some(v) = self.path_ratio {
            c.path.varsigma = v;
        }
        if let Some(v) = self.path_c {
            c.path.c = v;
        }
        if let Some(v) = self.inner_tol {
            c.path.inner_tol = v;
        }
        if let Some(v) = self.max_inner_iter {
            c.path.max_inner_iter = v;
        }
        if let Some(v) = self.grid_scale {
            c.path.grid_scale = v;
        }
        if let Some(v) = self.outer_tol {
            c.outer_tol = v;
        }
        if let Some(v) = self.max_outer {
            c.max_outer = v;
        }
        c.h_grid = self.h_grid.clone();
        c.omega_grid = self.omega_grid.clone();
        c.inference = !self.no_inference;
        if let Some(v) = self.level {
            c.level = v;
        }
        c
    }
}

#[derive(Args)]
struct FitArgs {
    /// CSV with columns y_star, optional y (blank off the validation sample), and covariates.
    #[arg(long)]
    data: PathBuf,
    /// JSON schema naming the discrete covariate columns: {"discrete": [...]}.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value = "I")]
    setting: SettingName,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Number of replications.
    #[arg(long = "M", alias = "m", default_value_t = 50)]
    m: usize,
    /// Replication j uses seed + j.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// fit.json written by `miscls fit`.
    #[arg(long)]
    fit: PathBuf,
    /// CSV whose covariate columns match the fit by name; y_star and y are optional.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Serialize)]
struct RunRecord<'a, T: Serialize> {
    version: &'a str,
    subcommand: &'a str,
    threads: Option<usize>,
    #[serde(flatten)]
    inputs: T,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, Error> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("MISCLS_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse().map(Some).map_err(|_| Error::invalid(format!("MISCLS_THREADS must be a count, got '{v}'")))
        }
        _ => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let threads = threads(cli.threads)?;
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => cmd_fit(&a, threads, false),
        Command::Tune(a) => cmd_fit(&a, threads, true),
        Command::Simulate(a) => cmd_simulate(&a, threads),
        Command::Predict(a) => cmd_score(&a, threads, false),
        Command::Evaluate(a) => cmd_score(&a, threads, true),
    }
}

/// Writes through a sibling temp file and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::invalid(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

/// Shortest round-trip representation; NaN and infinities spelled out.
fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn load_data(path: &Path, schema: Option<&Path>) -> Result<Dataset, Error> {
    let schema = match schema {
        Some(p) => Schema::from_json_file(p).map_err(|e| with_path(e, p))?,
        None => Schema::default(),
    };
    Dataset::load_csv(path, &schema).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, p: &Path) -> Error {
    match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", p.display()))),
        other => other,
    }
}

#[derive(Serialize)]
struct FitInputs<'a> {
    data: &'a Path,
    schema: Option<&'a Path>,
    out: &'a Path,
    config: &'a FitConfig,
}

fn cmd_fit(a: &FitArgs, threads: Option<usize>, tune_only: bool) -> Result<(), Error> {
    let cfg = a.model.config();
    cfg.validate()?;
    let ds = load_data(&a.data, a.schema.as_deref())?;
    fs::create_dir_all(&a.out)?;
    let sub = if tune_only { "tune" } else { "fit" };
    let inputs = FitInputs { data: &a.data, schema: a.schema.as_deref(), out: &a.out, config: &cfg };
    write_json(&a.out.join("run.json"), &RunRecord { version: VERSION, subcommand: sub, threads, inputs })?;
    let f = fit(&ds, &cfg)?;
    write_csv(&a.out.join("tuning.csv"), &TUNING_HEADER, tuning_rows(&f))?;
    if !tune_only {
        write_json(&a.out.join("fit.json"), &f)?;
        write_csv(&a.out.join("coefficients.csv"), &COEF_HEADER, coefficient_rows(&f))?;
    }
    for w in &f.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} fit: lambda={} support={} {}={} -> {}",
        f.method,
        fmt_f(f.lambda),
        f.support.len(),
        f.criterion,
        fmt_f(f.criterion_value),
        a.out.display()
    );
    Ok(())
}

const TUNING_HEADER: [&str; 9] = ["lambda", "h", "omega", "df", "deviance", "gcv", "bic", "support_size", "selected"];

fn tuning_rows(f: &FitResult) -> Vec<Vec<String>> {
    f.trace
        .iter()
        .map(|e| {
            let selected = e.lambda == f.lambda && e.h == f.h && e.omega == f.omega;
            vec![
                fmt_f(e.lambda),
                opt(e.h),
                opt(e.omega),
                fmt_f(e.df),
                fmt_f(e.deviance),
                fmt_f(e.gcv),
                fmt_f(e.bic),
                e.support_size.to_string(),
                u8::from(selected).to_string(),
            ]
        })
        .collect()
}

const COEF_HEADER: [&str; 6] = ["term", "estimate", "se", "lower", "upper", "selected"];

fn coefficient_rows(f: &FitResult) -> Vec<Vec<String>> {
    let interval = |name: &str| f.inference.as_ref().and_then(|inf| inf.intervals.iter().find(|i| i.name == name));
    let row = |name: &str, est: f64, selected: bool| {
        let iv = if selected { interval(name) } else { None };
        vec![
            name.to_string(),
            fmt_f(est),
            opt(iv.map(|i| i.se)),
            opt(iv.map(|i| i.lo)),
            opt(iv.map(|i| i.hi)),
            u8::from(selected).to_string(),
        ]
    };
    let mut rows = vec![row("(intercept)", f.beta0_star, true)];
    for (j, (name, &b)) in f.names.iter().zip(&f.beta).enumerate() {
        rows.push(row(name, b, f.support.contains(&j)));
    }
    rows
}

#[derive(Serialize)]
struct SimInputs<'a> {
    setting: SettingName,
    n: usize,
    delta: f64,
    m: usize,
    seed: u64,
    out: &'a Path,
    config: &'a FitConfig,
}

fn cmd_simulate(a: &SimArgs, threads: Option<usize>) -> Result<(), Error> {
    let cfg = a.model.config();
    cfg.validate()?;
    if !(a.delta > 0.0 && a.delta <= 1.0) {
        return Err(Error::invalid(format!("--delta must lie in (0, 1], got {}", a.delta)));
    }
    let setting = SimSetting::named(a.setting, a.n);
    setting.validate()?;
    fs::create_dir_all(&a.out)?;
    let inputs = SimInputs { setting: a.setting, n: a.n, delta: a.delta, m: a.m, seed: a.seed, out: &a.out, config: &cfg };
    write_json(&a.out.join("run.json"), &RunRecord { version: VERSION, subcommand: "simulate", threads, inputs })?;
    let (report, records) = run_replications(&setting, &cfg, a.m, a.delta, a.seed, None)?;
    write_json(&a.out.join("metrics.json"), &report)?;
    write_csv(&a.out.join("replications.csv"), &REP_HEADER, replication_rows(&setting, &records))?;
    println!(
        "setting {} {} {} {}: AME*100={} FalseNonZero={} FalseZero={} AMR={} failures={} -> {}",
        a.setting,
        cfg.method,
        cfg.penalty,
        cfg.criterion,
        fmt_f(report.ame * 100.0),
        fmt_f(report.false_nonzero),
        fmt_f(report.false_zero),
        fmt_f(report.amr),
        report.failures,
        a.out.display()
    );
    Ok(())
}

const REP_HEADER: [&str; 12] =
    ["replication", "seed", "misclassification_rate", "lambda", "h", "omega", "converged", "error", "term", "truth", "estimate", "se"];

/// Long format: one row per replication and coefficient (intercept first).
fn replication_rows(setting: &SimSetting, records: &[ReplicationRecord]) -> Vec<Vec<String>> {
    let truth = setting.true_beta_bar();
    let mut terms = vec!["(intercept)".to_string()];
    terms.extend((1..=setting.p()).map(|j| format!("z{j}")));
    let mut rows = Vec::with_capacity(records.len() * terms.len());
    for r in records {
        for (k, term) in terms.iter().enumerate() {
            let (est, se) = match &r.estimate {
                Some(e) if k == 0 => (Some(e.beta0_star), None),
                Some(e) => (Some(e.beta[k - 1]), e.se[k - 1]),
                None => (None, None),
            };
            rows.push(vec![
                r.replication.to_string(),
                r.seed.to_string(),
                fmt_f(r.misclassification_rate),
                opt(r.lambda),
                opt(r.h),
                opt(r.omega),
                r.converged.map(|c| u8::from(c).to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
                term.clone(),
                fmt_f(truth[k]),
                opt(est),
                opt(se),
            ]);
        }
    }
    rows
}

#[derive(Serialize)]
struct ScoreInputs<'a> {
    fit: &'a Path,
    data: &'a Path,
    out: &'a Path,
}

#[derive(Serialize)]
struct EvalReport {
    /// Column the predictions were scored against.
    truth: &'static str,
    #[serde(flatten)]
    metrics: miscls_core::predict::Metrics,
}

fn cmd_score(a: &ScoreArgs, threads: Option<usize>, evaluate: bool) -> Result<(), Error> {
    let text = fs::read_to_string(&a.fit).map_err(|e| with_path(e.into(), &a.fit))?;
    let f: FitResult = serde_json::from_str(&text)?;
    let file = fs::File::open(&a.data).map_err(|e| with_path(e.into(), &a.data))?;
    let table = ScoringTable::read_csv(file, &f.names)?;
    let pred = predict(&f, &table.z)?;
    fs::create_dir_all(&a.out)?;
    let sub = if evaluate { "evaluate" } else { "predict" };
    let inputs = ScoreInputs { fit: &a.fit, data: &a.data, out: &a.out };
    write_json(&a.out.join("run.json"), &RunRecord { version: VERSION, subcommand: sub, threads, inputs })?;
    if evaluate {
        let (name, truth) = match (&table.y, &table.y_star) {
            (Some(y), _) => ("y", y),
            (None, Some(ys)) => ("y_star", ys),
            (None, None) => return Err(Error::data("evaluation needs a complete y or y_star column")),
        };
        let m = metrics(&pred, truth)?;
        println!("n={} ACC={} Brier={} AUC={} (against {name})", m.n, fmt_f(m.acc), fmt_f(m.brier), opt(m.auc));
        write_json(&a.out.join("metrics.json"), &EvalReport { truth: name, metrics: m })?;
    } else {
        let rows =
            pred.mu.iter().zip(&pred.class).enumerate().map(|(i, (mu, c))| vec![(i + 1).to_string(), fmt_f(*mu), c.to_string()]).collect();
        write_csv(&a.out.join("predictions.csv"), &["row", "mu", "class"], rows)?;
        println!("{} predictions -> {}", pred.mu.len(), a.out.display());
    }
    Ok(())
}
