//! The leak/target experiment protocol.
//!
//! A run slices the dataset into a leak window (training: both public and
//! private data) and a later target window (evaluation: public data, with
//! private messages used only to compute ground-truth labels). The delay
//! model, labeler threshold, vocabulary, public graph and classifier are
//! all built strictly from the leak window; featurization operates on views
//! with private messages stripped, and the run records an audit flag
//! proving it.
//!
//! Grids run the Cartesian product of leak length, gap, threshold and
//! feature set with per-cell seeds derived from the cell parameters, so
//! results are independent of execution order and worker count.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ForumDataset, PostRecord, TimeWindow};
use crate::delay::{
    compute_delays, select_tau_max, BinMethod, DelayError, DelayModel, TauMaxSelection,
};
use crate::features::{
    build_vocabulary, featurize, to_matrix, FeatureError, FeatureSet, FeatureVector, VocabConfig,
    Vocabulary,
};
use crate::forest::{train, ForestError, ForestParams, TrainedForest};
use crate::graph::{build_public_graph, CentralityScores, PublicStrategy};
use crate::label::{
    aggregated_likelihood, filter_isolated_posts, filter_leak_tail, theta_from_quantile,
    DEFAULT_ISOLATION_GAP_SECS, DEFAULT_TAIL_MARGIN_SECS,
};
use crate::matrix::FeatureMatrix;
use crate::metrics::{accuracy, info_gain, roc, MetricsError, RocCurve, INFO_GAIN_BINS};
use crate::seed;
use crate::SECS_PER_WEEK;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Data(String),
    #[error("windows exceed the dataset span: {0}")]
    WindowOutOfRange(String),
    #[error(transparent)]
    Load(#[from] crate::data::LoadError),
    #[error(transparent)]
    Fit(#[from] DelayError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Labeling threshold: either an absolute value on the aggregated-likelihood
/// scale, or a positive-rate quantile resolved against the training weights
/// (`Quantile(0.3)` labels the top 30% of weights positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSpec {
    Absolute(f64),
    Quantile(f64),
}

impl fmt::Display for ThetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaSpec::Absolute(v) => write!(f, "abs:{v}"),
            ThetaSpec::Quantile(q) => write!(f, "q:{q}"),
        }
    }
}

/// Where the leak window sits in the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakAnchor {
    /// Leak ends at the dataset midpoint.
    #[default]
    Midpoint,
    /// Leak starts at a fixed timestamp.
    FixedStart(i64),
}

fn default_d_t_weeks() -> f64 {
    6.0
}

fn default_tau_candidates() -> Vec<f64> {
    vec![5.0, 10.0, 15.0, 20.0, 40.0, 80.0]
}

fn default_bin_method() -> BinMethod {
    BinMethod::Balanced { avg_per_bin: 5.0 }
}

fn default_min_delay_samples() -> usize {
    60
}

fn default_min_positive_fraction() -> f64 {
    0.10
}

fn default_reply_horizon() -> i64 {
    86_400
}

fn default_isolation_gap() -> i64 {
    DEFAULT_ISOLATION_GAP_SECS
}

fn default_tail_margin() -> i64 {
    DEFAULT_TAIL_MARGIN_SECS
}

fn default_strategy() -> PublicStrategy {
    PublicStrategy::SameThread
}

fn default_top_features() -> usize {
    25
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d_l_weeks: f64,
    #[serde(default = "default_d_t_weeks")]
    pub d_t_weeks: f64,
    pub delta_weeks: f64,
    pub theta: ThetaSpec,
    pub feature_set: FeatureSet,
    #[serde(default)]
    pub anchor: LeakAnchor,
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub vocab: VocabConfig,
    #[serde(default = "default_strategy")]
    pub strategy: PublicStrategy,
    #[serde(default = "default_bin_method")]
    pub bin_method: BinMethod,
    #[serde(default = "default_tau_candidates")]
    pub tau_max_candidates_hours: Vec<f64>,
    #[serde(default = "default_min_delay_samples")]
    pub min_delay_samples: usize,
    #[serde(default = "default_min_positive_fraction")]
    pub min_positive_fraction: f64,
    #[serde(default = "default_reply_horizon")]
    pub reply_horizon_secs: i64,
    #[serde(default = "default_isolation_gap")]
    pub isolation_gap_secs: i64,
    #[serde(default = "default_tail_margin")]
    pub tail_margin_secs: i64,
    #[serde(default = "default_top_features")]
    pub top_features: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d_l_weeks: 7.0,
            d_t_weeks: default_d_t_weeks(),
            delta_weeks: 0.0,
            theta: ThetaSpec::Quantile(0.5),
            feature_set: FeatureSet::All,
            anchor: LeakAnchor::Midpoint,
            forest: ForestParams::default(),
            vocab: VocabConfig::default(),
            strategy: default_strategy(),
            bin_method: default_bin_method(),
            tau_max_candidates_hours: default_tau_candidates(),
            min_delay_samples: default_min_delay_samples(),
            min_positive_fraction: default_min_positive_fraction(),
            reply_horizon_secs: default_reply_horizon(),
            isolation_gap_secs: default_isolation_gap(),
            tail_margin_secs: default_tail_margin(),
            top_features: default_top_features(),
            seed: 0,
        }
    }
}

fn weeks_to_secs(w: f64) -> i64 {
    (w * SECS_PER_WEEK as f64).round() as i64
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool_version: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

fn provenance(cfg: &ExperimentConfig) -> Provenance {
    let encoded = serde_json::to_string(cfg).expect("config serializes");
    Provenance {
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_hash: format!("{:016x}", seed::fnv1a(encoded.as_bytes())),
    }
}

/// Everything the leak window yields: delay model, threshold, vocabulary
/// and classifier — the portable part of a run, reusable on another forum.
pub struct TrainedArtifacts {
    pub delay_model: DelayModel,
    pub tau_max_stable: bool,
    pub theta: f64,
    pub vocabulary: Vocabulary,
    pub centrality: CentralityScores,
    pub forest: TrainedForest,
    pub train_posts: usize,
    pub train_positive_fraction: f64,
    pub train_matrix: FeatureMatrix,
    pub train_labels: Vec<bool>,
    pub audit_no_private_in_features: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub leak_window: TimeWindow,
    pub target_window: TimeWindow,
    pub delay_model: DelayModel,
    pub tau_max_stable: bool,
    pub theta_resolved: f64,
    pub train_posts: usize,
    pub train_positive_fraction: f64,
    pub test_posts: usize,
    pub test_positive_fraction: f64,
    pub oob_accuracy: Option<f64>,
    pub accuracy: f64,
    pub auc: f64,
    pub roc: RocCurve,
    /// Top features by information gain on the training set.
    pub top_features: Vec<(String, f64)>,
    /// True when featurization provably saw no private messages.
    pub causal_audit_passed: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunOutcome {
    Completed(Box<RunMetrics>),
    /// Guard violations: not an error, the configuration just cannot be
    /// evaluated meaningfully (mirrors dropping short-leak cells whose
    /// positive rate is too low).
    Skipped { reason: String },
}

impl RunOutcome {
    pub fn metrics(&self) -> Option<&RunMetrics> {
        match self {
            RunOutcome::Completed(m) => Some(m),
            RunOutcome::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub d_l_weeks: f64,
    pub delta_weeks: f64,
    pub theta: ThetaSpec,
    pub feature_set: FeatureSet,
    pub provenance: Provenance,
    pub outcome: RunOutcome,
}

struct Windows {
    leak: TimeWindow,
    target: TimeWindow,
}

fn resolve_windows(ds: &ForumDataset, cfg: &ExperimentConfig) -> Result<Windows, ExperimentError> {
    let (lo, hi) = ds.span.ok_or_else(|| ExperimentError::Data("dataset is empty".into()))?;
    let d_l = weeks_to_secs(cfg.d_l_weeks);
    let d_t = weeks_to_secs(cfg.d_t_weeks);
    let delta = weeks_to_secs(cfg.delta_weeks);
    if d_l <= 0 || d_t <= 0 || delta < 0 {
        return Err(ExperimentError::Config(
            "window durations must be positive and delta non-negative".into(),
        ));
    }
    let leak_end = match cfg.anchor {
        LeakAnchor::Midpoint => lo + (hi - lo) / 2,
        LeakAnchor::FixedStart(start) => start + d_l,
    };
    let leak = TimeWindow::new(leak_end - d_l, d_l);
    let target = TimeWindow::new(leak_end + delta, d_t);
    if leak.start < lo || target.end() > hi + 1 {
        return Err(ExperimentError::WindowOutOfRange(format!(
            "span [{lo}, {hi}], leak [{}, {}), target [{}, {})",
            leak.start,
            leak.end(),
            target.start,
            target.end()
        )));
    }
    Ok(Windows { leak, target })
}

/// Build every leak-window artifact, or return the guard reason that makes
/// the configuration unevaluable.
fn train_on_leak(
    ds: &ForumDataset,
    leak: &TimeWindow,
    cfg: &ExperimentConfig,
) -> Result<Result<TrainedArtifacts, String>, ExperimentError> {
    let leak_slice = ds.slice(leak);

    let delays = compute_delays(&leak_slice, leak);
    if delays.len() < cfg.min_delay_samples {
        return Ok(Err(format!(
            "insufficient delay samples in leak window: {} < {}",
            delays.len(),
            cfg.min_delay_samples
        )));
    }
    let selection: TauMaxSelection =
        select_tau_max(&delays, cfg.bin_method, &cfg.tau_max_candidates_hours)?;
    let delay_model = selection.model.clone();

    // training post set: isolated thread starts, clear of the leak tail
    let starts: Vec<&PostRecord> = leak_slice.thread_start_posts().collect();
    let isolated = filter_isolated_posts(&starts, cfg.isolation_gap_secs);
    let kept: Vec<&PostRecord> = isolated.iter().map(|&i| starts[i]).collect();
    let tail_kept = filter_leak_tail(&kept, leak, cfg.tail_margin_secs);
    let train_posts: Vec<&PostRecord> = tail_kept.iter().map(|&i| kept[i]).collect();
    if train_posts.is_empty() {
        return Ok(Err("no training posts survive the 12h/24h filters".into()));
    }

    // weights, threshold, labels
    let weights: Vec<f64> = train_posts
        .iter()
        .map(|p| {
            aggregated_likelihood(p.ts, leak_slice.messages_to(&p.author_id).map(|m| m.ts), &delay_model)
        })
        .collect();
    let theta = match cfg.theta {
        ThetaSpec::Absolute(t) => {
            if t < 0.0 {
                return Err(ExperimentError::Config("theta must be non-negative".into()));
            }
            t
        }
        ThetaSpec::Quantile(q) => {
            if !(0.0..=1.0).contains(&q) {
                return Err(ExperimentError::Config("theta quantile must be in [0,1]".into()));
            }
            theta_from_quantile(&weights, q)
        }
    };
    let train_labels: Vec<bool> = weights.iter().map(|&w| w > theta).collect();
    let positives = train_labels.iter().filter(|&&l| l).count();
    let positive_fraction = positives as f64 / train_labels.len() as f64;
    if positive_fraction < cfg.min_positive_fraction {
        return Ok(Err(format!(
            "positive label fraction {positive_fraction:.4} below guard {}",
            cfg.min_positive_fraction
        )));
    }
    if positives == train_labels.len() {
        return Ok(Err("training labels are single-class (all positive)".into()));
    }

    // vocabulary, public graph and features come from a view with private
    // messages stripped
    let leak_public = leak_slice.public_view();
    let audit = leak_public.messages.is_empty();
    let vocabulary = build_vocabulary(&train_posts, &leak_public, cfg.vocab)?;
    let graph = build_public_graph(&leak_public, cfg.strategy);
    let centrality = CentralityScores::compute(&graph, seed::derive(cfg.seed, "betweenness", 0));

    let vectors: Vec<FeatureVector> = train_posts
        .par_iter()
        .map(|p| featurize(p, &leak_public, &vocabulary, &centrality, leak.end()))
        .collect::<Result<_, _>>()?;
    let train_matrix = to_matrix(&vectors, &vocabulary, cfg.feature_set);

    let forest_params = ForestParams { seed: seed::derive(cfg.seed, "forest", 0), ..cfg.forest };
    let forest = train(&train_matrix, &train_labels, forest_params)?;

    Ok(Ok(TrainedArtifacts {
        delay_model,
        tau_max_stable: selection.stable,
        theta,
        vocabulary,
        centrality,
        forest,
        train_posts: train_posts.len(),
        train_positive_fraction: positive_fraction,
        train_matrix,
        train_labels,
        audit_no_private_in_features: audit,
    }))
}

/// Evaluate trained artifacts on a target window of `ds`. `centrality`
/// chooses which public graph supplies the context features (the training
/// forum's leak graph intra-forum; the test forum's own pre-target graph
/// cross-forum).
fn evaluate_on_target(
    ds: &ForumDataset,
    windows: &Windows,
    artifacts: &TrainedArtifacts,
    centrality: &CentralityScores,
    cfg: &ExperimentConfig,
) -> Result<Result<RunMetrics, String>, ExperimentError> {
    let target_slice = ds.slice(&windows.target);
    let starts: Vec<&PostRecord> = target_slice.thread_start_posts().collect();
    let isolated = filter_isolated_posts(&starts, cfg.isolation_gap_secs);
    let test_posts: Vec<&PostRecord> = isolated.iter().map(|&i| starts[i]).collect();
    if test_posts.is_empty() {
        return Ok(Err("no test posts in the target window".into()));
    }

    // ground truth from target-window private messages, same model and theta
    let test_labels: Vec<bool> = test_posts
        .iter()
        .map(|p| {
            aggregated_likelihood(
                p.ts,
                target_slice.messages_to(&p.author_id).map(|m| m.ts),
                &artifacts.delay_model,
            ) > artifacts.theta
        })
        .collect();
    let test_positives = test_labels.iter().filter(|&&l| l).count();
    if test_positives == 0 || test_positives == test_labels.len() {
        return Ok(Err("target-window ground truth is single-class".into()));
    }

    let target_public = target_slice.public_view();
    let audit = artifacts.audit_no_private_in_features && target_public.messages.is_empty();
    let vectors: Vec<FeatureVector> = test_posts
        .par_iter()
        .map(|p| {
            featurize(
                p,
                &target_public,
                &artifacts.vocabulary,
                centrality,
                p.ts + cfg.reply_horizon_secs,
            )
        })
        .collect::<Result<_, _>>()?;
    let test_matrix = to_matrix(&vectors, &artifacts.vocabulary, cfg.feature_set);

    let scores = artifacts.forest.predict_scores(&test_matrix)?;
    let curve = roc(&scores, &test_labels)?;
    let acc = accuracy(&scores, &test_labels, 0.5);

    let gains = info_gain(&artifacts.train_matrix, &artifacts.train_labels, INFO_GAIN_BINS);
    let top_features: Vec<(String, f64)> = gains
        .into_iter()
        .take(cfg.top_features)
        .map(|(f, g)| (cfg.feature_set.column_name(&artifacts.vocabulary, f as u32), g))
        .collect();

    Ok(Ok(RunMetrics {
        leak_window: windows.leak,
        target_window: windows.target,
        delay_model: artifacts.delay_model.clone(),
        tau_max_stable: artifacts.tau_max_stable,
        theta_resolved: artifacts.theta,
        train_posts: artifacts.train_posts,
        train_positive_fraction: artifacts.train_positive_fraction,
        test_posts: test_posts.len(),
        test_positive_fraction: test_positives as f64 / test_labels.len() as f64,
        oob_accuracy: artifacts.forest.oob_accuracy,
        accuracy: acc,
        auc: curve.auc,
        roc: curve,
        top_features,
        causal_audit_passed: audit,
    }))
}

/// Run one full experiment: train on the leak window, predict on the target
/// window of the same forum. Guard violations yield a skipped outcome, not
/// an error.
pub fn run_experiment(
    ds: &ForumDataset,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, ExperimentError> {
    let windows = resolve_windows(ds, cfg)?;
    let outcome = match train_on_leak(ds, &windows.leak, cfg)? {
        Err(reason) => RunOutcome::Skipped { reason },
        Ok(artifacts) => {
            match evaluate_on_target(ds, &windows, &artifacts, &artifacts.centrality, cfg)? {
                Err(reason) => RunOutcome::Skipped { reason },
                Ok(metrics) => RunOutcome::Completed(Box::new(metrics)),
            }
        }
    };
    Ok(ExperimentReport {
        d_l_weeks: cfg.d_l_weeks,
        delta_weeks: cfg.delta_weeks,
        theta: cfg.theta,
        feature_set: cfg.feature_set,
        provenance: provenance(cfg),
        outcome,
    })
}

/// Train on `train_ds`, evaluate on `test_ds`'s target window. The
/// vocabulary, delay model, threshold and classifier come from the training
/// forum only; the context-feature graph is the test forum's own pre-target
/// public window (the analyst has that data).
pub fn run_cross_forum(
    train_ds: &ForumDataset,
    test_ds: &ForumDataset,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, ExperimentError> {
    let train_windows = resolve_windows(train_ds, cfg)?;
    let test_windows = resolve_windows(test_ds, cfg)?;
    let outcome = match train_on_leak(train_ds, &train_windows.leak, cfg)? {
        Err(reason) => RunOutcome::Skipped { reason },
        Ok(artifacts) => {
            let graph_window = test_windows.leak;
            let test_public = test_ds.slice(&graph_window).public_view();
            let graph = build_public_graph(&test_public, cfg.strategy);
            let centrality =
                CentralityScores::compute(&graph, seed::derive(cfg.seed, "betweenness", 1));
            match evaluate_on_target(test_ds, &test_windows, &artifacts, &centrality, cfg)? {
                Err(reason) => RunOutcome::Skipped { reason },
                Ok(metrics) => RunOutcome::Completed(Box::new(metrics)),
            }
        }
    };
    Ok(ExperimentReport {
        d_l_weeks: cfg.d_l_weeks,
        delta_weeks: cfg.delta_weeks,
        theta: cfg.theta,
        feature_set: cfg.feature_set,
        provenance: provenance(cfg),
        outcome,
    })
}

// ---------------------------------------------------------------------------
// grids

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(flatten)]
    pub base: ExperimentConfig,
    pub d_l_weeks_grid: Vec<f64>,
    pub delta_weeks_grid: Vec<f64>,
    pub theta_grid: Vec<ThetaSpec>,
    pub feature_set_grid: Vec<FeatureSet>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            base: ExperimentConfig::default(),
            d_l_weeks_grid: vec![1.0, 3.0, 5.0, 7.0],
            delta_weeks_grid: vec![0.0, 3.0, 5.0],
            theta_grid: vec![ThetaSpec::Absolute(0.0), ThetaSpec::Quantile(0.3)],
            feature_set_grid: vec![FeatureSet::All],
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CellParams {
    pub d_l_weeks: f64,
    pub delta_weeks: f64,
    pub theta: ThetaSpec,
    pub feature_set: FeatureSet,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok(Box<RunMetrics>),
    Skipped { reason: String },
    Failed { error: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub index: usize,
    pub params: CellParams,
    pub seed: u64,
    pub result: CellStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridResult {
    pub cells: Vec<CellResult>,
    pub provenance: Provenance,
}

impl GridResult {
    pub fn completed(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c.result, CellStatus::Ok(_))).count()
    }

    /// `summary.csv`: one row per grid cell in enumeration order.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "d_l_weeks,delta_weeks,theta,feature_set,status,accuracy,auc,positive_fraction,reason\n",
        );
        for cell in &self.cells {
            let p = &cell.params;
            let (status, acc, auc, posf, reason) = match &cell.result {
                CellStatus::Ok(m) => (
                    "ok",
                    format!("{:.6}", m.accuracy),
                    format!("{:.6}", m.auc),
                    format!("{:.6}", m.train_positive_fraction),
                    String::new(),
                ),
                CellStatus::Skipped { reason } => {
                    ("skipped", String::new(), String::new(), String::new(), reason.clone())
                }
                CellStatus::Failed { error } => {
                    ("error", String::new(), String::new(), String::new(), error.clone())
                }
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                p.d_l_weeks,
                p.delta_weeks,
                p.theta,
                p.feature_set.id(),
                status,
                acc,
                auc,
                posf,
                crate::graph::csv_field(&reason),
            ));
        }
        out
    }
}

/// Seed for one grid cell, derived from the cell parameters (not the cell
/// position): re-ordering the grid axes cannot change any cell's result.
fn cell_seed(master: u64, p: &CellParams) -> u64 {
    let mut bytes = Vec::with_capacity(40);
    bytes.extend_from_slice(&p.d_l_weeks.to_bits().to_le_bytes());
    bytes.extend_from_slice(&p.delta_weeks.to_bits().to_le_bytes());
    match p.theta {
        ThetaSpec::Absolute(v) => {
            bytes.push(0);
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        ThetaSpec::Quantile(v) => {
            bytes.push(1);
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    bytes.extend_from_slice(p.feature_set.id().as_bytes());
    seed::derive(master, "cell", seed::fnv1a(&bytes))
}

/// Run the Cartesian product of the grids. Cells run in parallel; failures
/// and guard skips are recorded per cell and never abort the grid.
pub fn run_grid(ds: &ForumDataset, grid: &GridConfig) -> GridResult {
    let mut cells: Vec<CellParams> = Vec::new();
    for &d_l in &grid.d_l_weeks_grid {
        for &delta in &grid.delta_weeks_grid {
            for &theta in &grid.theta_grid {
                for &feature_set in &grid.feature_set_grid {
                    cells.push(CellParams { d_l_weeks: d_l, delta_weeks: delta, theta, feature_set });
                }
            }
        }
    }

    let results: Vec<CellResult> = cells
        .into_par_iter()
        .enumerate()
        .map(|(index, params)| {
            let seed = cell_seed(grid.base.seed, &params);
            let cfg = ExperimentConfig {
                d_l_weeks: params.d_l_weeks,
                delta_weeks: params.delta_weeks,
                theta: params.theta,
                feature_set: params.feature_set,
                seed,
                ..grid.base.clone()
            };
            let result = match run_experiment(ds, &cfg) {
                Ok(report) => match report.outcome {
                    RunOutcome::Completed(m) => CellStatus::Ok(m),
                    RunOutcome::Skipped { reason } => CellStatus::Skipped { reason },
                },
                Err(e) => CellStatus::Failed { error: e.to_string() },
            };
            CellResult { index, params, seed, result }
        })
        .collect();

    GridResult { cells: results, provenance: provenance(&grid.base) }
}
