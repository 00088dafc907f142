//! Scenario data generation, the theoretical ROC curve, and the seeded
//! criterion-comparison experiment.
//!
//! A replication of the experiment draws participant-level values for a
//! handful of primary studies, dichotomizes each study at its Youden-index
//! threshold to get a 2x2 table, fits the whole candidate grid, and
//! measures every candidate's summary curve against the scenario's
//! theoretical ROC. Selection criteria are then compared by the quality of
//! the models they pick.
//!
//! Reproducibility contract: each replication draws from its own
//! counter-based RNG stream (`ChaCha12` seeded with the root seed, stream
//! = replication index + 1), so reports are byte-identical across runs and
//! across worker counts, and any single replication can be reproduced in
//! isolation.

use crate::criteria::{score, score_order, CriterionKind, CriterionScore};
use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::model_fit::{default_grid, FitResult, Method, ModelSpec};
use crate::sroc::{shelf_trapezoid, summary_curve};
use crate::study_data::{CorrectionPolicy, Dataset, StudyTable};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Mean study size for the non-diseased group.
pub const MEAN_NONDISEASED: f64 = 160.0;
/// Mean study size for the diseased group.
pub const MEAN_DISEASED: f64 = 40.0;

/// Shared interior FPR grid used for every curve comparison inside the
/// experiment. One grid for all models keeps per-model comparisons exact.
pub const EXPERIMENT_GRID_SIZE: usize = 1001;

/// Default grid for the standalone theoretical ROC.
pub const DEFAULT_TRUE_ROC_GRID: usize = 2001;

/// The four data-generating scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Logistic(0, 1) vs logistic(1.8, 1.2).
    Ld,
    /// Normal(0, 1) vs normal(1.5, 1.2).
    Nd,
    /// Skew-normal(0, 1, 1) vs skew-normal(0.25, 2, 5).
    Snd,
    /// Normal(0, 1) vs normal(1, 1.25), each truncated one standard
    /// deviation either side of its mean.
    Tnd,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Ld, Scenario::Nd, Scenario::Snd, Scenario::Tnd];

    /// Outcome distribution of the non-diseased group.
    pub fn f0(self) -> DistributionSpec {
        match self {
            Scenario::Ld => DistributionSpec::Logistic {
                location: 0.0,
                scale: 1.0,
            },
            Scenario::Nd => DistributionSpec::Normal { mean: 0.0, sd: 1.0 },
            Scenario::Snd => DistributionSpec::SkewNormal {
                location: 0.0,
                scale: 1.0,
                shape: 1.0,
            },
            Scenario::Tnd => DistributionSpec::TruncNormal { mean: 0.0, sd: 1.0 },
        }
    }

    /// Outcome distribution of the diseased group; stochastically larger
    /// than `f0` in every scenario, so larger values mean test-positive.
    pub fn f1(self) -> DistributionSpec {
        match self {
            Scenario::Ld => DistributionSpec::Logistic {
                location: 1.8,
                scale: 1.2,
            },
            Scenario::Nd => DistributionSpec::Normal { mean: 1.5, sd: 1.2 },
            Scenario::Snd => DistributionSpec::SkewNormal {
                location: 0.25,
                scale: 2.0,
                shape: 5.0,
            },
            Scenario::Tnd => DistributionSpec::TruncNormal { mean: 1.0, sd: 1.25 },
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Scenario::Ld => "ld",
            Scenario::Nd => "nd",
            Scenario::Snd => "snd",
            Scenario::Tnd => "tnd",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Scenario> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ld" => Ok(Scenario::Ld),
            "nd" => Ok(Scenario::Nd),
            "snd" => Ok(Scenario::Snd),
            "tnd" => Ok(Scenario::Tnd),
            other => Err(Error::Config(format!(
                "unknown scenario {other:?} (expected ld, nd, snd or tnd)"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// study generation
// ---------------------------------------------------------------------------

/// The threshold maximizing Youden's index `J = sens + spec - 1`, where a
/// value strictly greater than the threshold counts as test-positive.
///
/// Candidate cuts are the midpoints between consecutive distinct values of
/// the pooled sample, plus sentinels below and above everything
/// (classify-all-positive / classify-all-negative). Ties in `J` are broken
/// toward the smallest threshold; the comparison is done on the exact
/// integer count score `#(x1 > c) * n0 + #(x0 <= c) * n1` so float
/// round-off cannot scramble ties.
pub fn youden_threshold(x0: &[f64], x1: &[f64]) -> f64 {
    assert!(
        !x0.is_empty() && !x1.is_empty(),
        "youden_threshold needs nonempty groups"
    );
    let mut sorted0 = x0.to_vec();
    let mut sorted1 = x1.to_vec();
    sorted0.sort_by(f64::total_cmp);
    sorted1.sort_by(f64::total_cmp);

    let mut pooled: Vec<f64> = sorted0.iter().chain(sorted1.iter()).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();

    let mut candidates = Vec::with_capacity(pooled.len() + 1);
    candidates.push(f64::NEG_INFINITY);
    for w in pooled.windows(2) {
        candidates.push(w[0] + 0.5 * (w[1] - w[0]));
    }
    candidates.push(f64::INFINITY);

    let n0 = sorted0.len() as u64;
    let n1 = sorted1.len() as u64;
    let mut best_cut = f64::NEG_INFINITY;
    let mut best_score = 0;
    for &c in &candidates {
        let k0 = sorted0.partition_point(|v| *v <= c) as u64;
        let k1 = n1 - sorted1.partition_point(|v| *v <= c) as u64;
        let score = k1 * n0 + k0 * n1;
        if score > best_score {
            best_score = score;
            best_cut = c;
        }
    }
    best_cut
}

/// Draws a Poisson count, redrawn until it is at least 2 (a study needs
/// two subjects per group for a meaningful threshold scan; at means 160
/// and 40 the redraw has essentially zero probability).
fn poisson_at_least_2<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    let pois = Poisson::new(mean).expect("positive Poisson mean");
    loop {
        let draw: f64 = rng.sample(pois);
        if draw >= 2.0 {
            return draw as usize;
        }
    }
}

/// One simulated primary study from explicit group distributions.
///
/// Draw order is fixed for reproducibility: non-diseased count, diseased
/// count, non-diseased values, diseased values.
pub fn generate_study_from<R: Rng + ?Sized>(
    f0: DistributionSpec,
    f1: DistributionSpec,
    rng: &mut R,
) -> StudyTable {
    let m0 = poisson_at_least_2(rng, MEAN_NONDISEASED);
    let m1 = poisson_at_least_2(rng, MEAN_DISEASED);
    let x0 = f0.sample_many(m0, rng);
    let x1 = f1.sample_many(m1, rng);
    let cut = youden_threshold(&x0, &x1);
    let tp = x1.iter().filter(|v| **v > cut).count() as u64;
    let fp = x0.iter().filter(|v| **v > cut).count() as u64;
    StudyTable::new("study", tp, m1 as u64 - tp, fp, m0 as u64 - fp)
}

/// One simulated primary study under a named scenario.
pub fn generate_study<R: Rng + ?Sized>(scenario: Scenario, rng: &mut R) -> StudyTable {
    generate_study_from(scenario.f0(), scenario.f1(), rng)
}

// ---------------------------------------------------------------------------
// theoretical ROC
// ---------------------------------------------------------------------------

/// The theoretical ROC curve `C(u) = 1 - F1(F0^{-1}(1-u))` of a scenario,
/// tabulated on an interior grid with exact support-limit endpoints.
#[derive(Debug, Clone, Serialize)]
pub struct TrueRoc {
    /// `[0, interior grid, 1]`.
    pub fpr_grid: Vec<f64>,
    /// `C` at each grid value; the endpoints carry the exact one-sided
    /// limits, which jump away from {0, 1} when the supports differ (the
    /// truncated-normal scenario starts at `C(0+) = 0.5`).
    pub sens_values: Vec<f64>,
    /// Trapezoid area over the stored grid.
    pub auc: f64,
}

/// Tabulates the theoretical ROC for explicit group distributions on
/// `grid_size` interior points plus the exact endpoints.
pub fn true_roc_from(f0: DistributionSpec, f1: DistributionSpec, grid_size: usize) -> TrueRoc {
    assert!(grid_size >= 2, "true_roc needs at least 2 grid points");
    let c_at = |u: f64| 1.0 - f1.cdf(f0.quantile(1.0 - u));
    let denom = (grid_size + 1) as f64;
    let mut fpr_grid = Vec::with_capacity(grid_size + 2);
    let mut sens_values = Vec::with_capacity(grid_size + 2);
    let (support_lo, support_hi) = f0.support();
    fpr_grid.push(0.0);
    sens_values.push(1.0 - f1.cdf(support_hi));
    for j in 1..=grid_size {
        let u = j as f64 / denom;
        fpr_grid.push(u);
        sens_values.push(c_at(u).clamp(0.0, 1.0));
    }
    fpr_grid.push(1.0);
    sens_values.push(1.0 - f1.cdf(support_lo));

    let mut auc = 0.0;
    for j in 1..fpr_grid.len() {
        auc += 0.5 * (sens_values[j] + sens_values[j - 1]) * (fpr_grid[j] - fpr_grid[j - 1]);
    }
    TrueRoc {
        fpr_grid,
        sens_values,
        auc,
    }
}

/// Tabulates the theoretical ROC of a named scenario.
pub fn true_roc(scenario: Scenario, grid_size: usize) -> TrueRoc {
    true_roc_from(scenario.f0(), scenario.f1(), grid_size)
}

// ---------------------------------------------------------------------------
// the experiment
// ---------------------------------------------------------------------------

/// How a model is picked from the fitted grid: a selection criterion, a
/// uniform-random benchmark, or the oracle that takes the model whose curve
/// is closest to the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selector {
    Criterion(CriterionKind),
    Random,
    Best,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Criterion(k) => write!(f, "{k}"),
            Selector::Random => write!(f, "random"),
            Selector::Best => write!(f, "best"),
        }
    }
}

impl std::str::FromStr for Selector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Selector> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(Selector::Random),
            "best" => Ok(Selector::Best),
            other => other.parse::<CriterionKind>().map(Selector::Criterion),
        }
    }
}

impl Serialize for Selector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

/// Full configuration of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n_studies: usize,
    pub reps: usize,
    /// Selectors to report on, in order. `Best` is always appended if
    /// absent; duplicates are dropped.
    pub selectors: Vec<Selector>,
    pub method: Method,
    pub seed: u64,
}

impl ExperimentConfig {
    /// A configuration with the standard rows: every criterion plus the
    /// oracle.
    pub fn new(scenario: Scenario, n_studies: usize, reps: usize, seed: u64) -> Self {
        ExperimentConfig {
            scenario,
            n_studies,
            reps,
            selectors: CriterionKind::ALL.map(Selector::Criterion).to_vec(),
            method: Method::Reml,
            seed,
        }
    }

    fn effective_selectors(&self) -> Vec<Selector> {
        let mut out: Vec<Selector> = Vec::new();
        for s in &self.selectors {
            if !out.contains(s) {
                out.push(*s);
            }
        }
        if !out.contains(&Selector::Best) {
            out.push(Selector::Best);
        }
        out
    }
}

/// Everything measured in one replication.
#[derive(Debug, Clone)]
pub struct ReplicationResult {
    /// Replication index (0-based) and the RNG stream it drew from.
    pub rep: usize,
    pub rng_stream: u64,
    /// Absolute AUC error per candidate, in canonical grid order;
    /// `+inf` for failed fits.
    pub auc_errors: Vec<f64>,
    /// Integrated absolute curve error per candidate; `+inf` for failed
    /// fits.
    pub curve_errors: Vec<f64>,
    /// Competition rank of each candidate on AUC error (failed fits get
    /// the bottom rank).
    pub rank1: Vec<f64>,
    /// Competition rank of each candidate on curve error.
    pub rank2: Vec<f64>,
    /// Selected candidate index per selector, aligned with the effective
    /// selector list; `None` records a selection failure.
    pub selections: Vec<Option<usize>>,
}

/// One row of the final report.
#[derive(Debug, Clone, Serialize)]
pub struct SelectorRow {
    pub selector: Selector,
    /// Replications where this selector produced a model.
    pub reps_used: usize,
    /// Replications where it failed (all candidates infeasible).
    pub failures: usize,
    /// Root mean squared AUC error of the selected models.
    pub rmse: f64,
    pub rmse_se: Option<f64>,
    /// Mean competition rank on AUC error.
    pub rank1: f64,
    pub rank1_se: Option<f64>,
    /// Mean integrated absolute curve error of the selected models.
    pub miae: f64,
    pub miae_se: Option<f64>,
    /// Mean competition rank on curve error.
    pub rank2: f64,
    pub rank2_se: Option<f64>,
}

/// Aggregated experiment results plus the manifest needed to rerun them.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub n_studies: usize,
    pub reps: usize,
    pub seed: u64,
    pub method: Method,
    /// Interior FPR grid size used for every curve comparison.
    pub grid_size: usize,
    /// Theoretical AUC under the shared-grid convention.
    pub true_auc: f64,
    pub rows: Vec<SelectorRow>,
}

/// Competition ("minimum") ranks: `1 + #{j : m_j < m_i}` for finite
/// measures; every non-finite measure gets the bottom rank `n`.
fn competition_ranks(measures: &[f64]) -> Vec<f64> {
    let n = measures.len() as f64;
    measures
        .iter()
        .map(|&m| {
            if !m.is_finite() {
                n
            } else {
                1.0 + measures
                    .iter()
                    .filter(|&&o| o.is_finite() && o < m)
                    .count() as f64
            }
        })
        .collect()
}

/// The truth tabulated on the experiment's shared interior grid.
struct SharedTruth {
    fpr: Vec<f64>,
    sens: Vec<f64>,
    auc: f64,
}

fn shared_truth(scenario: Scenario) -> SharedTruth {
    let full = true_roc(scenario, EXPERIMENT_GRID_SIZE);
    // strip the exact endpoints: models are compared on the interior grid
    // with the same shelf-extended trapezoid as their own AUC
    let fpr: Vec<f64> = full.fpr_grid[1..full.fpr_grid.len() - 1].to_vec();
    let sens: Vec<f64> = full.sens_values[1..full.sens_values.len() - 1].to_vec();
    let auc = shelf_trapezoid(&fpr, &sens);
    SharedTruth { fpr, sens, auc }
}

/// Measures one fitted candidate against the truth: absolute AUC error and
/// integrated absolute curve error on the shared grid.
///
/// A converged fit whose curve is degenerate (vanishing FPR-axis variance)
/// is measured through its limiting horizontal curve at the summary
/// sensitivity rather than discarded: it is still a model the criterion
/// could select, and a replication must never abort.
fn measure_candidate(
    fit: &Result<FitResult>,
    truth: &SharedTruth,
) -> (f64, f64) {
    let fit = match fit {
        Ok(f) if f.converged => f,
        _ => return (f64::INFINITY, f64::INFINITY),
    };
    let sens: Vec<f64> = match summary_curve(fit, EXPERIMENT_GRID_SIZE) {
        Ok(curve) => curve.sens_values,
        Err(Error::DegenerateGeometry(_)) => {
            let level = fit.spec.alphas.p.inverse_saturating(fit.theta.mu_p);
            vec![level; EXPERIMENT_GRID_SIZE]
        }
        Err(_) => return (f64::INFINITY, f64::INFINITY),
    };
    let auc = shelf_trapezoid(&truth.fpr, &sens);
    let abs_diff: Vec<f64> = sens
        .iter()
        .zip(&truth.sens)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let miae = shelf_trapezoid(&truth.fpr, &abs_diff);
    ((auc - truth.auc).abs(), miae)
}

/// Selects the best feasible candidate under a criterion; `None` when the
/// whole grid is infeasible.
fn argmin_criterion(
    fits: &[Result<FitResult>],
    data: &Dataset,
    kind: CriterionKind,
) -> Option<usize> {
    let mut best: Option<(CriterionScore, usize)> = None;
    for (i, fit) in fits.iter().enumerate() {
        let s = match fit {
            Ok(f) => score(f, data, kind),
            Err(_) => continue,
        };
        if !s.feasible {
            continue;
        }
        let better = match &best {
            None => true,
            Some((b, _)) => score_order(&s, b) == std::cmp::Ordering::Less,
        };
        if better {
            best = Some((s, i));
        }
    }
    best.map(|(_, i)| i)
}

fn replicate(
    config: &ExperimentConfig,
    selectors: &[Selector],
    grid: &[ModelSpec],
    truth: &SharedTruth,
    rep: usize,
) -> ReplicationResult {
    let stream = rep as u64 + 1; // stream 0 is reserved
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);

    let tables: Vec<StudyTable> = (0..config.n_studies)
        .map(|i| {
            let mut t = generate_study(config.scenario, &mut rng);
            t.label = format!("study{}", i + 1);
            t
        })
        .collect();
    // group sizes are >= 2 by construction and n_studies was validated,
    // so dataset construction cannot fail
    let data = Dataset::from_tables(&tables, CorrectionPolicy::Half)
        .expect("simulated tables form a valid dataset");

    let fits: Vec<Result<FitResult>> = grid
        .iter()
        .map(|spec| crate::model_fit::fit_model(&data, *spec, config.method))
        .collect();

    let mut auc_errors = Vec::with_capacity(grid.len());
    let mut curve_errors = Vec::with_capacity(grid.len());
    for fit in &fits {
        let (a, c) = measure_candidate(fit, truth);
        auc_errors.push(a);
        curve_errors.push(c);
    }
    let rank1 = competition_ranks(&auc_errors);
    let rank2 = competition_ranks(&curve_errors);

    let selections: Vec<Option<usize>> = selectors
        .iter()
        .map(|sel| match sel {
            Selector::Criterion(kind) => argmin_criterion(&fits, &data, *kind),
            Selector::Random => Some(rng.gen_range(0..grid.len())),
            Selector::Best => curve_errors
                .iter()
                .enumerate()
                .filter(|(_, e)| e.is_finite())
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i),
        })
        .collect();

    ReplicationResult {
        rep,
        rng_stream: stream,
        auc_errors,
        curve_errors,
        rank1,
        rank2,
        selections,
    }
}

/// Reproduces a single replication in isolation (same data, fits and
/// selections as the corresponding entry of a full run with this config).
pub fn run_replication(config: &ExperimentConfig, rep: usize) -> Result<ReplicationResult> {
    validate(config)?;
    let selectors = config.effective_selectors();
    let grid = default_grid();
    let truth = shared_truth(config.scenario);
    Ok(replicate(config, &selectors, &grid, &truth, rep))
}

fn validate(config: &ExperimentConfig) -> Result<()> {
    if config.reps < 1 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    if config.n_studies < 3 {
        return Err(Error::Config(format!(
            "a meta-analysis needs at least 3 studies, got {}",
            config.n_studies
        )));
    }
    config.scenario.f0().validate()?;
    config.scenario.f1().validate()?;
    Ok(())
}

fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, Some((var / n as f64).sqrt()))
}

fn aggregate_row(
    selector: Selector,
    results: &[ReplicationResult],
    selector_idx: usize,
) -> SelectorRow {
    let mut abs_errs = Vec::new();
    let mut miaes = Vec::new();
    let mut rank1s = Vec::new();
    let mut rank2s = Vec::new();
    let mut failures = 0;
    for r in results {
        match r.selections[selector_idx] {
            Some(i) => {
                abs_errs.push(r.auc_errors[i]);
                miaes.push(r.curve_errors[i]);
                rank1s.push(r.rank1[i]);
                rank2s.push(r.rank2[i]);
            }
            None => failures += 1,
        }
    }
    let reps_used = abs_errs.len();
    let rmse = if reps_used == 0 {
        f64::NAN
    } else {
        (abs_errs.iter().map(|e| e * e).sum::<f64>() / reps_used as f64).sqrt()
    };
    // the dispersion reported with the RMSE is the standard error of the
    // mean absolute error, the same spread statistic as the other columns
    let (_, rmse_se) = mean_and_se(&abs_errs);
    let (rank1, rank1_se) = mean_and_se(&rank1s);
    let (miae, miae_se) = mean_and_se(&miaes);
    let (rank2, rank2_se) = mean_and_se(&rank2s);
    SelectorRow {
        selector,
        reps_used,
        failures,
        rmse,
        rmse_se,
        rank1,
        rank1_se,
        miae,
        miae_se,
        rank2,
        rank2_se,
    }
}

/// Runs the full experiment, reporting completed-replication counts to
/// `progress` as work finishes.
pub fn run_experiment_with_progress(
    config: &ExperimentConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ExperimentReport> {
    validate(config)?;
    let selectors = config.effective_selectors();
    let grid = default_grid();
    let truth = shared_truth(config.scenario);

    let done = AtomicUsize::new(0);
    let results: Vec<ReplicationResult> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let result = replicate(config, &selectors, &grid, &truth, rep);
            let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
            progress(finished, config.reps);
            result
        })
        .collect();

    // aggregation is sequential and index-ordered: identical reports
    // whatever the worker count
    let rows: Vec<SelectorRow> = selectors
        .iter()
        .enumerate()
        .map(|(idx, sel)| aggregate_row(*sel, &results, idx))
        .collect();

    Ok(ExperimentReport {
        scenario: config.scenario,
        n_studies: config.n_studies,
        reps: config.reps,
        seed: config.seed,
        method: config.method,
        grid_size: EXPERIMENT_GRID_SIZE,
        true_auc: truth.auc,
        rows,
    })
}

/// Runs the full experiment silently.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with_progress(config, &|_, _| {})
}
