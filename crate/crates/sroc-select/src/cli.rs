//! Command-line surface: dataset analysis (`fit`, `select`, `sroc`) and
//! experiment reproduction (`simulate`).
//!
//! All commands write plot-ready delimited text with a `#`-prefixed
//! metadata header by default, or structured records via
//! `--format json-lines`. Every run with identical flags and inputs is
//! byte-reproducible; `simulate` requires an explicit `--seed` so no
//! entropy sneaks in silently.
//!
//! Exit statuses partition outcomes: 0 success, 2 input/usage error,
//! 3 fit non-convergence, 4 no selectable model, 5 degenerate geometry.

use crate::criteria::{self, CriterionKind, CriterionScore};
use crate::error::{Error, Result};
use crate::model_fit::{
    default_grid, fit_model, grid_from_alphas, Family, FitResult, Method, ModelSpec,
};
use crate::simulation::{
    run_experiment_with_progress, ExperimentConfig, ExperimentReport, Scenario, Selector,
};
use crate::sroc::{region, summary_curve, summary_point, RegionKind, SrocCurve};
use crate::study_data::{read_dataset, CorrectionPolicy, Dataset};
use crate::transforms::Alpha;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

/// Output encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    /// Comma-separated values with `#` metadata lines and labeled
    /// sections.
    Csv,
    /// One JSON object per line, manifest first.
    JsonLines,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputFormat::Csv => write!(f, "csv"),
            OutputFormat::JsonLines => write!(f, "json-lines"),
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<OutputFormat> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json-lines" => Ok(OutputFormat::JsonLines),
            other => Err(Error::Config(format!(
                "unknown format {other:?} (expected csv or json-lines)"
            ))),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sroc-select",
    version,
    about = "Bivariate meta-analysis of diagnostic accuracy: transformed-scale model fitting, \
             likelihood and empirical-likelihood model selection, summary ROC curves, and a \
             seeded criterion-comparison experiment."
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for parallel sections (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one candidate model to a dataset of 2x2 study tables.
    Fit(FitArgs),
    /// Fit and rank the whole candidate grid under a selection criterion.
    Select(SelectArgs),
    /// Summary ROC curve, AUC, summary point and confidence/prediction
    /// regions for one model (explicit or criterion-selected).
    Sroc(SrocArgs),
    /// Run the seeded criterion-comparison experiment.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct IoArgs {
    /// Input dataset: delimited text with columns label, tp, fn, fp, tn.
    #[arg(long)]
    input: PathBuf,

    /// Output file (defaults to stdout).
    #[arg(long)]
    output: Option<PathBuf>,

    /// Output encoding.
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    io: IoArgs,

    /// Model family: 1 (no within-study term) or 2 (within-study
    /// variances added).
    #[arg(long)]
    family: Family,

    /// Transform shape for sensitivity, in [0, 2].
    #[arg(long)]
    alpha_p: Alpha,

    /// Transform shape for the false-positive rate, in [0, 2].
    #[arg(long)]
    alpha_q: Alpha,

    /// Estimation method.
    #[arg(long, default_value = "reml")]
    method: Method,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    io: IoArgs,

    /// Selection criterion.
    #[arg(long)]
    criterion: CriterionKind,

    /// Estimation method.
    #[arg(long, default_value = "reml")]
    method: Method,

    /// Override the grid's transform shapes (comma-separated values in
    /// [0, 2]); the default grid crosses both families with the shapes
    /// 0, 0.6, 1, 1.4, 2.
    #[arg(long, value_delimiter = ',')]
    grid_alphas: Option<Vec<Alpha>>,
}

#[derive(Debug, Args)]
struct SrocArgs {
    #[command(flatten)]
    io: IoArgs,

    /// Model family of an explicit model (with --alpha-p/--alpha-q);
    /// mutually exclusive with --criterion.
    #[arg(long, requires = "alpha_p", requires = "alpha_q", conflicts_with = "criterion")]
    family: Option<Family>,

    /// Transform shape for sensitivity of an explicit model.
    #[arg(long)]
    alpha_p: Option<Alpha>,

    /// Transform shape for the false-positive rate of an explicit model.
    #[arg(long)]
    alpha_q: Option<Alpha>,

    /// Select the model with this criterion instead of giving one
    /// explicitly.
    #[arg(long)]
    criterion: Option<CriterionKind>,

    /// Estimation method.
    #[arg(long, default_value = "reml")]
    method: Method,

    /// Confidence level for the regions.
    #[arg(long, default_value_t = 0.95)]
    level: f64,

    /// Number of interior FPR grid points for the curve.
    #[arg(long, default_value_t = 1001)]
    grid_size: usize,

    /// Override the candidate grid's transform shapes when selecting.
    #[arg(long, value_delimiter = ',')]
    grid_alphas: Option<Vec<Alpha>>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Output file (defaults to stdout).
    #[arg(long)]
    output: Option<PathBuf>,

    /// Output encoding.
    #[arg(long, default_value = "csv")]
    format: OutputFormat,

    /// Data-generating scenario.
    #[arg(long)]
    scenario: Scenario,

    /// Number of primary studies per meta-analysis.
    #[arg(long, default_value_t = 10)]
    n_studies: usize,

    /// Number of replications.
    #[arg(long, default_value_t = 200)]
    reps: usize,

    /// Root RNG seed (required: runs must be reproducible).
    #[arg(long)]
    seed: u64,

    /// Selectors to report, comma-separated (criteria plus the `random`
    /// benchmark; the `best` oracle row is always included).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "aic-noj,aic,caic-vb,caic-gk,el-fix,el-blup"
    )]
    criteria: Vec<Selector>,

    /// Estimation method.
    #[arg(long, default_value = "reml")]
    method: Method,
}

/// Parses arguments from the process environment and runs the requested
/// command, returning the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if workers > 0 {
            // build_global errors only if a pool already exists, which
            // cannot happen this early in a CLI run
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global();
        }
    }
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Select(args) => cmd_select(&args),
        Command::Sroc(args) => cmd_sroc(&args),
        Command::Simulate(args) => cmd_simulate(&args),
    };
    match outcome {
        Ok(()) => 0,
        // downstream consumer closed the pipe; ending quietly is success
        Err(Error::BrokenPipe) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_dataset(path: &std::path::Path) -> Result<Dataset> {
    let tables = read_dataset(path)?;
    Dataset::from_tables(&tables, CorrectionPolicy::Half)
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout())),
    })
}

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn write_csv_meta(out: &mut dyn Write, command: &str, pairs: &[(&str, String)]) -> Result<()> {
    writeln!(out, "# sroc-select {VERSION} {command}")?;
    for (key, value) in pairs {
        writeln!(out, "# {key}: {value}")?;
    }
    Ok(())
}

fn write_json_manifest(
    out: &mut dyn Write,
    command: &str,
    pairs: &[(&str, String)],
) -> Result<()> {
    let mut object = serde_json::Map::new();
    object.insert("record".into(), json!("manifest"));
    object.insert("tool".into(), json!("sroc-select"));
    object.insert("version".into(), json!(VERSION));
    object.insert("command".into(), json!(command));
    for (key, value) in pairs {
        object.insert((*key).into(), json!(value));
    }
    writeln!(out, "{}", serde_json::Value::Object(object))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let data = load_dataset(&args.io.input)?;
    let spec = ModelSpec::new(args.family, args.alpha_p, args.alpha_q);
    let fit = fit_model(&data, spec, args.method)?;
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "fit of {spec} stopped at the iteration budget without meeting the tolerance"
        )));
    }
    let mut out = open_output(&args.io.output)?;
    let meta = [
        ("input", args.io.input.display().to_string()),
        ("studies", data.n().to_string()),
        ("model", spec.to_string()),
        ("method", args.method.to_string()),
        ("converged", fit.converged.to_string()),
        ("iterations", fit.iterations.to_string()),
    ];
    match args.io.format {
        OutputFormat::Csv => {
            write_csv_meta(&mut *out, "fit", &meta)?;
            writeln!(out, "[estimates]")?;
            writeln!(out, "parameter,value")?;
            writeln!(out, "mu_p,{}", fit.theta.mu_p)?;
            writeln!(out, "mu_q,{}", fit.theta.mu_q)?;
            writeln!(out, "sigma2_p,{}", fit.theta.sigma2_p)?;
            writeln!(out, "sigma2_q,{}", fit.theta.sigma2_q)?;
            writeln!(out, "sigma,{}", fit.theta.sigma)?;
            writeln!(out, "loglik_transformed,{}", fit.loglik_transformed)?;
            writeln!(out, "loglik_y,{}", fit.loglik_y)?;
            writeln!(out, "restricted_loglik,{}", fit.restricted_loglik)?;
            writeln!(out, "[blups]")?;
            writeln!(out, "label,z_p,z_q,sens,fpr")?;
            for (label, z) in data.labels().iter().zip(&fit.blups) {
                let sens = spec.alphas.p.inverse_saturating(z.x);
                let fpr = spec.alphas.q.inverse_saturating(z.y);
                writeln!(out, "{label},{},{},{sens},{fpr}", z.x, z.y)?;
            }
        }
        OutputFormat::JsonLines => {
            write_json_manifest(&mut *out, "fit", &meta)?;
            writeln!(out, "{}", serde_json::to_string(&fit_record(&fit, &data))?)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn fit_record(fit: &FitResult, data: &Dataset) -> serde_json::Value {
    let blups: Vec<serde_json::Value> = data
        .labels()
        .iter()
        .zip(&fit.blups)
        .map(|(label, z)| {
            json!({
                "label": label,
                "z_p": z.x,
                "z_q": z.y,
                "sens": fit.spec.alphas.p.inverse_saturating(z.x),
                "fpr": fit.spec.alphas.q.inverse_saturating(z.y),
            })
        })
        .collect();
    json!({
        "record": "fit",
        "model": fit.spec.to_string(),
        "theta": fit.theta,
        "loglik_transformed": fit.loglik_transformed,
        "loglik_y": fit.loglik_y,
        "restricted_loglik": fit.restricted_loglik,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "blups": blups,
    })
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

fn candidate_grid(grid_alphas: &Option<Vec<Alpha>>) -> Result<Vec<ModelSpec>> {
    match grid_alphas {
        None => Ok(default_grid()),
        Some(alphas) if alphas.is_empty() => Err(Error::Config(
            "--grid-alphas needs at least one shape value".into(),
        )),
        Some(alphas) => Ok(grid_from_alphas(alphas)),
    }
}

fn cmd_select(args: &SelectArgs) -> Result<()> {
    let data = load_dataset(&args.io.input)?;
    let grid = candidate_grid(&args.grid_alphas)?;
    let ranking = criteria::select(&data, &grid, args.criterion, args.method)?;
    let mut out = open_output(&args.io.output)?;
    let meta = [
        ("input", args.io.input.display().to_string()),
        ("studies", data.n().to_string()),
        ("criterion", args.criterion.to_string()),
        ("method", args.method.to_string()),
        ("models", ranking.len().to_string()),
    ];
    match args.io.format {
        OutputFormat::Csv => {
            write_csv_meta(&mut *out, "select", &meta)?;
            writeln!(out, "rank,family,alpha_p,alpha_q,value,feasible")?;
            for (rank, score) in ranking.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    rank + 1,
                    score.spec.family,
                    score.spec.alphas.p,
                    score.spec.alphas.q,
                    display_value(score),
                    score.feasible
                )?;
            }
        }
        OutputFormat::JsonLines => {
            write_json_manifest(&mut *out, "select", &meta)?;
            for (rank, score) in ranking.iter().enumerate() {
                let value = score.feasible.then_some(score.value);
                writeln!(
                    out,
                    "{}",
                    json!({
                        "record": "score",
                        "rank": rank + 1,
                        "family": score.spec.family.as_number(),
                        "alpha_p": score.spec.alphas.p.value(),
                        "alpha_q": score.spec.alphas.q.value(),
                        "value": value,
                        "feasible": score.feasible,
                    })
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Criterion values print as numbers; infeasible candidates show the
/// sentinel `inf` rather than a fake number.
fn display_value(score: &CriterionScore) -> String {
    if score.feasible {
        score.value.to_string()
    } else {
        "inf".to_string()
    }
}

// ---------------------------------------------------------------------------
// sroc
// ---------------------------------------------------------------------------

fn cmd_sroc(args: &SrocArgs) -> Result<()> {
    let data = load_dataset(&args.io.input)?;
    let (fit, selection_note) = match (&args.family, &args.criterion) {
        (Some(family), None) => {
            let (Some(alpha_p), Some(alpha_q)) = (args.alpha_p, args.alpha_q) else {
                return Err(Error::Config(
                    "an explicit model needs --family, --alpha-p and --alpha-q".into(),
                ));
            };
            let spec = ModelSpec::new(*family, alpha_p, alpha_q);
            (fit_model(&data, spec, args.method)?, "explicit".to_string())
        }
        (None, Some(criterion)) => {
            let grid = candidate_grid(&args.grid_alphas)?;
            let ranking = criteria::select(&data, &grid, *criterion, args.method)?;
            let spec = ranking[0].spec;
            (
                fit_model(&data, spec, args.method)?,
                format!("selected by {criterion}"),
            )
        }
        _ => {
            return Err(Error::Config(
                "give either an explicit model (--family/--alpha-p/--alpha-q) or --criterion"
                    .into(),
            ));
        }
    };
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "fit of {} stopped at the iteration budget without meeting the tolerance",
            fit.spec
        )));
    }

    let point = summary_point(&fit)?;
    let curve = summary_curve(&fit, args.grid_size);

    let mut out = open_output(&args.io.output)?;
    let meta = [
        ("input", args.io.input.display().to_string()),
        ("studies", data.n().to_string()),
        ("model", fit.spec.to_string()),
        ("provenance", selection_note),
        ("method", args.method.to_string()),
        ("level", args.level.to_string()),
        ("grid-size", args.grid_size.to_string()),
    ];

    match args.io.format {
        OutputFormat::Csv => {
            write_csv_meta(&mut *out, "sroc", &meta)?;
            writeln!(out, "[summary]")?;
            writeln!(out, "fpr,sens,auc")?;
            match &curve {
                Ok(c) => writeln!(out, "{},{},{}", point.0, point.1, c.auc)?,
                Err(_) => writeln!(out, "{},{},NA", point.0, point.1)?,
            }
            let curve = finish_or_flush(curve, &mut *out)?;
            writeln!(out, "[curve]")?;
            writeln!(out, "fpr,sens")?;
            for (u, s) in curve.fpr_grid.iter().zip(&curve.sens_values) {
                writeln!(out, "{u},{s}")?;
            }
            for kind in [RegionKind::Confidence, RegionKind::Prediction] {
                let reg = region(&fit, &data, kind, args.level, 360)?;
                writeln!(out, "[{kind}-region]")?;
                writeln!(out, "fpr,sens")?;
                for (fpr, sens) in &reg.boundary {
                    writeln!(out, "{fpr},{sens}")?;
                }
            }
        }
        OutputFormat::JsonLines => {
            write_json_manifest(&mut *out, "sroc", &meta)?;
            let auc = curve.as_ref().ok().map(|c| c.auc);
            writeln!(
                out,
                "{}",
                json!({"record": "summary", "fpr": point.0, "sens": point.1, "auc": auc})
            )?;
            let curve = finish_or_flush(curve, &mut *out)?;
            for (u, s) in curve.fpr_grid.iter().zip(&curve.sens_values) {
                writeln!(out, "{}", json!({"record": "curve-point", "fpr": u, "sens": s}))?;
            }
            for kind in [RegionKind::Confidence, RegionKind::Prediction] {
                let reg = region(&fit, &data, kind, args.level, 360)?;
                for (fpr, sens) in &reg.boundary {
                    writeln!(
                        out,
                        "{}",
                        json!({
                            "record": "region-point",
                            "kind": kind.to_string(),
                            "fpr": fpr,
                            "sens": sens,
                        })
                    )?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// A degenerate curve still leaves the summary point on record: flush what
/// was already written before surfacing the error (and its exit status 5).
fn finish_or_flush(curve: Result<SrocCurve>, out: &mut dyn Write) -> Result<SrocCurve> {
    match curve {
        Ok(c) => Ok(c),
        Err(e) => {
            out.flush()?;
            Err(e)
        }
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    if args.n_studies != 5 && args.n_studies != 10 {
        eprintln!(
            "warning: --n-studies {} is outside the benchmarked sizes {{5, 10}}",
            args.n_studies
        );
    }
    let config = ExperimentConfig {
        scenario: args.scenario,
        n_studies: args.n_studies,
        reps: args.reps,
        selectors: args.criteria.clone(),
        method: args.method,
        seed: args.seed,
    };
    let report = run_experiment_with_progress(&config, &|done, total| {
        // report once whenever a 10% boundary is crossed
        let decile = done * 10 / total;
        if decile > (done - 1) * 10 / total {
            eprintln!("progress: {}% ({done}/{total} replications)", decile * 10);
        }
    })?;

    let mut out = open_output(&args.output)?;
    write_report(&mut *out, &report, args.format)?;
    out.flush()?;
    Ok(())
}

/// Serializes an experiment report: manifest plus one row per selector.
pub fn write_report(
    out: &mut dyn Write,
    report: &ExperimentReport,
    format: OutputFormat,
) -> Result<()> {
    let meta = [
        ("scenario", report.scenario.to_string()),
        ("n-studies", report.n_studies.to_string()),
        ("reps", report.reps.to_string()),
        ("seed", report.seed.to_string()),
        ("method", report.method.to_string()),
        ("grid-size", report.grid_size.to_string()),
        ("true-auc", report.true_auc.to_string()),
    ];
    match format {
        OutputFormat::Csv => {
            write_csv_meta(out, "simulate", &meta)?;
            writeln!(
                out,
                "criterion,rmse,rmse_se,rank1,rank1_se,miae,miae_se,rank2,rank2_se,reps_used,failures"
            )?;
            for row in &report.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    row.selector,
                    row.rmse,
                    opt(row.rmse_se),
                    row.rank1,
                    opt(row.rank1_se),
                    row.miae,
                    opt(row.miae_se),
                    row.rank2,
                    opt(row.rank2_se),
                    row.reps_used,
                    row.failures
                )?;
            }
        }
        OutputFormat::JsonLines => {
            write_json_manifest(out, "simulate", &meta)?;
            for row in &report.rows {
                let mut value = serde_json::to_value(row)?;
                if let serde_json::Value::Object(map) = &mut value {
                    map.insert("record".into(), json!("row"));
                }
                writeln!(out, "{value}")?;
            }
        }
    }
    Ok(())
}

/// Standard errors are undefined at one replication; print them as NA.
fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "NA".to_string(),
    }
}
