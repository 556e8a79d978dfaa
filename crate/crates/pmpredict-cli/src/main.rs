//! `pmpredict` — forum-leak analysis from the command line.
//!
//! Subcommands wrap the library pipeline stage by stage (ingest, stats,
//! fit-delay, label, featurize, train, evaluate) and end to end
//! (experiment, synth, report). Every command reads/writes the documented
//! machine formats and prints a short human summary; failures emit a
//! structured JSON error on stderr.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 when a
//! run or grid produced nothing but guard skips.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pmpredict::data::{load_dataset, DatasetPaths, ForumDataset, TimeWindow};
use pmpredict::delay::{compute_delays, fit, histogram, select_tau_max, BinMethod, DelayModel};
use pmpredict::experiment::{
    run_cross_forum, run_experiment, run_grid, ExperimentConfig, ExperimentError, GridConfig,
    RunOutcome,
};
use pmpredict::features::{
    build_vocabulary, featurize, read_sparse_matrix, write_sparse_matrix, FeatureSet,
    FeatureVector, VocabConfig, Vocabulary,
};
use pmpredict::forest::{train as train_forest, ForestParams, TrainedForest};
use pmpredict::graph::{
    build_private_graph, build_public_graph, overlap_stats, CentralityScores, PublicStrategy,
};
use pmpredict::label::{filter_isolated_posts, filter_leak_tail, label_posts, theta_from_quantile};
use pmpredict::matrix::FeatureMatrix;
use pmpredict::metrics::{accuracy, roc};
use pmpredict::synth::{generate, SynthConfig};
use pmpredict::SECS_PER_WEEK;

#[derive(Parser)]
#[command(name = "pmpredict", version, about = "Predict private interactions in forum leaks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a leak dump, reporting drops and counts
    Ingest(IngestArgs),
    /// Dataset summary plus public/private graph overlap statistics
    Stats(StatsArgs),
    /// Fit the post-to-message delay mixture on a leak window
    FitDelay(FitDelayArgs),
    /// Label posts by aggregated likelihood under a threshold
    Label(LabelArgs),
    /// Build a vocabulary and export feature vectors for a window
    Featurize(FeaturizeArgs),
    /// Train the random-forest classifier from exported features and labels
    Train(TrainArgs),
    /// Score features with a trained forest and report accuracy/ROC/AUC
    Evaluate(EvaluateArgs),
    /// Run the leak/target protocol end to end (single run, grid or cross-forum)
    Experiment(ExperimentArgs),
    /// Generate a synthetic forum with planted ground truth
    Synth(SynthArgs),
    /// Pretty-print a report produced by `experiment`
    Report(ReportArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding users.jsonl, threads.jsonl, posts.jsonl, pms.jsonl
    #[arg(long)]
    data_dir: PathBuf,
    /// Abort on the first invalid record instead of dropping it
    #[arg(long)]
    strict: bool,
}

impl DataArgs {
    fn load(&self) -> Result<ForumDataset, CliError> {
        let (ds, report) = load_dataset(&DatasetPaths::from_dir(&self.data_dir), self.strict)
            .map_err(CliError::data)?;
        if report.dropped_total > 0 {
            eprintln!("note: dropped {} invalid records", report.dropped_total);
        }
        Ok(ds)
    }
}

#[derive(Args)]
struct WindowArgs {
    /// Window start (Unix seconds). Default anchors the window end at the
    /// dataset midpoint.
    #[arg(long)]
    window_start: Option<i64>,
    /// Window length in weeks
    #[arg(long, default_value_t = 7.0)]
    window_weeks: f64,
}

impl WindowArgs {
    fn resolve(&self, ds: &ForumDataset) -> Result<TimeWindow, CliError> {
        let dur = (self.window_weeks * SECS_PER_WEEK as f64).round() as i64;
        if dur <= 0 {
            return Err(CliError::config("window length must be positive"));
        }
        let start = match self.window_start {
            Some(s) => s,
            None => {
                let (lo, hi) = ds.span.ok_or_else(|| CliError::data_msg("dataset is empty"))?;
                lo + (hi - lo) / 2 - dur
            }
        };
        Ok(TimeWindow::new(start, dur))
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Write the load report as JSON
    #[arg(long)]
    report: Option<PathBuf>,
    /// Re-export the validated dataset into this directory
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Public graph connection strategy: same-thread | thread-owner | direct-reply
    #[arg(long, default_value = "same-thread")]
    strategy: PublicStrategy,
    /// Write summary + overlap report as JSON
    #[arg(long)]
    out: Option<PathBuf>,
    /// Export the public graph as an edge-list CSV
    #[arg(long)]
    public_csv: Option<PathBuf>,
    /// Export the private graph as an edge-list CSV
    #[arg(long)]
    private_csv: Option<PathBuf>,
}

#[derive(Args)]
struct FitDelayArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// Binning method: balanced | naive
    #[arg(long, default_value = "balanced")]
    method: String,
    /// Average samples per bin (balanced method)
    #[arg(long, default_value_t = 5.0)]
    avg_per_bin: f64,
    /// Bin width in seconds (naive method)
    #[arg(long, default_value_t = 900.0)]
    bin_width: f64,
    /// Fit at this fixed tau_max (hours) instead of searching
    #[arg(long)]
    tau_max: Option<f64>,
    /// Candidate tau_max values (hours) for the stability search
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,40,80")]
    tau_candidates: Vec<f64>,
    /// Write the fitted model JSON here
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Also export the histogram the fit used
    #[arg(long)]
    hist_csv: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// Fitted delay model JSON (from fit-delay)
    #[arg(long)]
    model: PathBuf,
    /// Absolute threshold on the aggregated likelihood
    #[arg(long, conflicts_with = "theta_quantile")]
    theta: Option<f64>,
    /// Quantile threshold: label the top fraction of weights positive
    #[arg(long)]
    theta_quantile: Option<f64>,
    /// Skip the 12h isolation filter
    #[arg(long)]
    no_isolation_filter: bool,
    /// Apply the 24h leak-tail filter (training windows)
    #[arg(long)]
    tail_filter: bool,
    #[arg(long, default_value = "labels.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// Reuse a vocabulary built on a training window
    #[arg(long)]
    vocab_in: Option<PathBuf>,
    /// Where to store a freshly built vocabulary
    #[arg(long, default_value = "vocab.json")]
    vocab_out: PathBuf,
    /// Feature block: nlp | context | all
    #[arg(long, default_value = "all")]
    features: FeatureSet,
    /// Treat the window as a training window (replies visible to the
    /// window end, leak-tail filter applied)
    #[arg(long)]
    training: bool,
    /// Reply/body visibility horizon after each post in seconds (prediction mode)
    #[arg(long, default_value_t = 86_400)]
    reply_horizon: i64,
    /// Minimum term frequency for vocabulary terms
    #[arg(long, default_value_t = 3)]
    min_tf: u32,
    #[arg(long, default_value = "features.txt")]
    out: PathBuf,
    /// Seed for sampled betweenness on very large graphs
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Sparse feature matrix from `featurize`
    #[arg(long)]
    matrix: PathBuf,
    /// Labels CSV from `label`
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 25)]
    max_depth: usize,
    #[arg(long, default_value_t = 5)]
    min_leaf: u32,
    /// Features considered per split (default: ceil(sqrt(F)))
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "forest.json")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Trained forest JSON
    #[arg(long)]
    forest: PathBuf,
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Vote-fraction decision threshold for accuracy
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Write ROC points CSV
    #[arg(long)]
    roc_csv: Option<PathBuf>,
    /// Write metrics JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Experiment (or grid, with --grid) configuration JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run the full parameter grid from the config
    #[arg(long)]
    grid: bool,
    /// Evaluate on this second forum instead of the training forum
    #[arg(long)]
    test_data_dir: Option<PathBuf>,
    /// Output directory for report.json / summary.csv / roc.csv / model.json
    #[arg(long, default_value = "experiment-out")]
    outdir: PathBuf,
    /// Override the master seed from the config
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator configuration JSON; defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    weeks: Option<f64>,
    /// Forum name (prefixes the background vocabulary)
    #[arg(long)]
    name: Option<String>,
    /// Output directory for the JSONL dump plus groundtruth.jsonl
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// report.json or grid.json produced by `experiment`
    #[arg(long)]
    report: PathBuf,
}

// ---------------------------------------------------------------------------

enum ErrorKind {
    Config,
    Data,
    GuardOnly,
}

struct CliError {
    kind: ErrorKind,
    message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Config, message: msg.into() }
    }

    fn data(err: impl std::fmt::Display) -> Self {
        CliError { kind: ErrorKind::Data, message: err.to_string() }
    }

    fn data_msg(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Data, message: msg.into() }
    }

    fn io(context: &str, err: std::io::Error) -> Self {
        CliError { kind: ErrorKind::Data, message: format!("{context}: {err}") }
    }
}

impl From<ExperimentError> for CliError {
    fn from(err: ExperimentError) -> Self {
        let kind = match err {
            ExperimentError::Config(_) | ExperimentError::WindowOutOfRange(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        };
        CliError { kind, message: err.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = match e.kind {
                ErrorKind::Config => ("config", 2),
                ErrorKind::Data => ("data", 3),
                ErrorKind::GuardOnly => ("guard", 4),
            };
            eprintln!("{}", serde_json::json!({ "error": e.message, "kind": kind }));
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Stats(args) => cmd_stats(args),
        Command::FitDelay(args) => cmd_fit_delay(args),
        Command::Label(args) => cmd_label(args),
        Command::Featurize(args) => cmd_featurize(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::data_msg(format!("writing {}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(|e| CliError::io(&path.display().to_string(), e))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::config(format!("invalid {what} in {}: {e}", path.display())))
}

fn cmd_ingest(args: IngestArgs) -> Result<(), CliError> {
    let (ds, report) = load_dataset(&DatasetPaths::from_dir(&args.data.data_dir), args.data.strict)
        .map_err(CliError::data)?;
    let summary = ds.summary();
    println!("users:          {}", summary.users);
    println!("users with PMs: {}", summary.users_with_pms);
    println!("threads:        {}", summary.threads);
    println!("posts:          {}", summary.posts);
    println!("messages:       {}", summary.messages);
    match summary.span {
        Some((lo, hi)) => println!("span:           [{lo}, {hi}]"),
        None => println!("span:           (empty)"),
    }
    if report.dropped_total > 0 {
        println!("dropped:        {} records", report.dropped_total);
        for (reason, n) in &report.dropped_by_reason {
            println!("  {reason}: {n}");
        }
    }
    if let Some(path) = args.report {
        write_json(&path, &report)?;
    }
    if let Some(dir) = args.export {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io("export dir", e))?;
        ds.export(&dir).map_err(CliError::data)?;
        println!("exported normalized dump to {}", dir.display());
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let ds = args.data.load()?;
    let public = build_public_graph(&ds, args.strategy);
    let private = build_private_graph(&ds);
    let overlap = overlap_stats(&public, &private, &ds);
    let summary = ds.summary();

    println!("users: {} ({} with PMs)", summary.users, summary.users_with_pms);
    println!(
        "public graph ({:?}): {} nodes, {} edges",
        args.strategy,
        public.node_count(),
        public.edge_count()
    );
    println!(
        "private graph: {} nodes, {} edges, {} messages",
        private.node_count(),
        private.edge_count(),
        private.total_weight()
    );
    println!(
        "public pairs never messaging privately: {:.1}% ({}/{})",
        overlap.public_only_fraction * 100.0,
        overlap.public_only_edges,
        overlap.public_edges
    );
    println!(
        "private pairs never sharing a thread:   {:.1}% ({}/{})",
        overlap.private_only_fraction * 100.0,
        overlap.private_only_edges,
        overlap.private_edges
    );
    println!(
        "avg PMs with/without a public link: {:.3} / {:.3}",
        overlap.avg_pms_with_public_link, overlap.avg_pms_without_public_link
    );
    println!(
        "tagged threads: {:.2}% ({}/{}), tagged public edges: {:.2}% ({}/{})",
        overlap.tagged_thread_fraction * 100.0,
        overlap.tagged_threads,
        overlap.total_threads,
        overlap.tagged_edge_fraction * 100.0,
        overlap.tagged_edges,
        overlap.public_edges
    );

    if let Some(path) = args.out {
        write_json(&path, &serde_json::json!({ "summary": summary, "overlap": overlap }))?;
    }
    if let Some(path) = args.public_csv {
        let mut w = BufWriter::new(File::create(&path).map_err(|e| CliError::io("public csv", e))?);
        public.write_edge_csv(&mut w).map_err(|e| CliError::io("public csv", e))?;
    }
    if let Some(path) = args.private_csv {
        let mut w =
            BufWriter::new(File::create(&path).map_err(|e| CliError::io("private csv", e))?);
        private.write_edge_csv(&mut w).map_err(|e| CliError::io("private csv", e))?;
    }
    Ok(())
}

fn parse_bin_method(args: &FitDelayArgs) -> Result<BinMethod, CliError> {
    match args.method.as_str() {
        "balanced" => Ok(BinMethod::Balanced { avg_per_bin: args.avg_per_bin }),
        "naive" => Ok(BinMethod::Naive { bin_width_secs: args.bin_width }),
        other => Err(CliError::config(format!("unknown binning method `{other}`"))),
    }
}

fn cmd_fit_delay(args: FitDelayArgs) -> Result<(), CliError> {
    let ds = args.data.load()?;
    let window = args.window.resolve(&ds)?;
    let slice = ds.slice(&window);
    let delays = compute_delays(&slice, &window);
    if delays.is_empty() {
        return Err(CliError::data_msg("no post-to-message delays in the window"));
    }
    let method = parse_bin_method(&args)?;

    let (model, stable) = match args.tau_max {
        Some(hours) => {
            let hist = histogram(&delays, method, hours * 3_600.0).map_err(CliError::data)?;
            (fit(&hist).map_err(CliError::data)?, None)
        }
        None => {
            let sel =
                select_tau_max(&delays, method, &args.tau_candidates).map_err(CliError::data)?;
            (sel.model, Some(sel.stable))
        }
    };
    println!("delay samples: {}", delays.len());
    println!(
        "f(x) = {:.4}*exp(-{:.4}x) + {:.4}*exp(-{:.4}x) + {:.4}   (x in hours, msgs/hour)",
        model.a1, model.b1, model.a2, model.b2, model.c
    );
    println!(
        "tau_max: {}h{}",
        model.tau_max_hours,
        match stable {
            Some(true) => " (stability-verified)",
            Some(false) => " (largest candidate, unverified)",
            None => " (fixed)",
        }
    );
    println!("R^2 = {:.6}, converged = {}", model.r_squared, model.fit.converged);

    if let Some(path) = &args.hist_csv {
        let hist =
            histogram(&delays, method, model.tau_max_hours * 3_600.0).map_err(CliError::data)?;
        let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::io("hist csv", e))?);
        hist.write_csv(&mut w).map_err(|e| CliError::io("hist csv", e))?;
    }
    write_json(&args.out, &model)?;
    println!("model written to {}", args.out.display());
    Ok(())
}

fn cmd_label(args: LabelArgs) -> Result<(), CliError> {
    let ds = args.data.load()?;
    let window = args.window.resolve(&ds)?;
    let slice = ds.slice(&window);
    let model: DelayModel = read_json(&args.model, "delay model")?;

    let starts: Vec<_> = slice.thread_start_posts().collect();
    let mut posts: Vec<_> = if args.no_isolation_filter {
        starts.clone()
    } else {
        filter_isolated_posts(&starts, pmpredict::label::DEFAULT_ISOLATION_GAP_SECS)
            .into_iter()
            .map(|i| starts[i])
            .collect()
    };
    if args.tail_filter {
        posts = filter_leak_tail(&posts, &window, pmpredict::label::DEFAULT_TAIL_MARGIN_SECS)
            .into_iter()
            .map(|i| posts[i])
            .collect();
    }
    if posts.is_empty() {
        return Err(CliError::data_msg("no posts to label after filtering"));
    }

    let theta = match (args.theta, args.theta_quantile) {
        (Some(t), None) => t,
        (None, Some(q)) => {
            if !(0.0..=1.0).contains(&q) {
                return Err(CliError::config("theta quantile must be in [0,1]"));
            }
            let weights: Vec<f64> = label_posts(&posts, &slice, &model, 0.0)
                .posts
                .iter()
                .map(|p| p.likelihood)
                .collect();
            theta_from_quantile(&weights, q)
        }
        (None, None) => 0.0,
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let result = label_posts(&posts, &slice, &model, theta);
    let mut w = BufWriter::new(File::create(&args.out).map_err(|e| CliError::io("labels", e))?);
    result.write_csv(&mut w).map_err(|e| CliError::io("labels", e))?;
    println!(
        "labeled {} posts at theta={theta:e}: {:.2}% positive -> {}",
        result.posts.len(),
        result.positive_fraction * 100.0,
        args.out.display()
    );
    Ok(())
}

fn cmd_featurize(args: FeaturizeArgs) -> Result<(), CliError> {
    let ds = args.data.load()?;
    let window = args.window.resolve(&ds)?;
    let slice = ds.slice(&window);
    let starts: Vec<_> = slice.thread_start_posts().collect();
    let mut posts: Vec<_> =
        filter_isolated_posts(&starts, pmpredict::label::DEFAULT_ISOLATION_GAP_SECS)
            .into_iter()
            .map(|i| starts[i])
            .collect();
    if args.training {
        posts = filter_leak_tail(&posts, &window, pmpredict::label::DEFAULT_TAIL_MARGIN_SECS)
            .into_iter()
            .map(|i| posts[i])
            .collect();
    }
    if posts.is_empty() {
        return Err(CliError::data_msg("no posts to featurize"));
    }

    // features never see private messages
    let public = slice.public_view();
    let vocab: Vocabulary = match &args.vocab_in {
        Some(path) => read_json(path, "vocabulary")?,
        None => {
            let config = VocabConfig { min_tf: args.min_tf, ..VocabConfig::default() };
            let vocab = build_vocabulary(&posts, &public, config).map_err(CliError::data)?;
            write_json(&args.vocab_out, &vocab)?;
            println!(
                "vocabulary built: {} title + {} body + {} subforum terms -> {}",
                vocab.title_len(),
                vocab.body_len(),
                vocab.subforum_len(),
                args.vocab_out.display()
            );
            vocab
        }
    };

    let graph = build_public_graph(&public, PublicStrategy::SameThread);
    let centrality = CentralityScores::compute(&graph, args.seed);
    let vectors: Vec<FeatureVector> = posts
        .iter()
        .map(|p| {
            let cutoff = if args.training { window.end() } else { p.ts + args.reply_horizon };
            featurize(p, &public, &vocab, &centrality, cutoff)
        })
        .collect::<Result<_, _>>()
        .map_err(CliError::data)?;

    let projected: Vec<FeatureVector> = vectors
        .iter()
        .map(|v| FeatureVector {
            post_id: v.post_id.clone(),
            features: args.features.project(&vocab, &v.features),
        })
        .collect();
    let n_features = args.features.columns(&vocab);
    let mut w = BufWriter::new(File::create(&args.out).map_err(|e| CliError::io("matrix", e))?);
    write_sparse_matrix(&projected, n_features, &mut w).map_err(|e| CliError::io("matrix", e))?;
    println!(
        "wrote {} rows x {} features ({}) to {}",
        projected.len(),
        n_features,
        args.features.id(),
        args.out.display()
    );
    Ok(())
}

/// Labels CSV rows keyed by post id (the `label` command's output format).
fn read_labels(path: &Path) -> Result<std::collections::HashMap<String, bool>, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    let mut out = std::collections::HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with("post_id,") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 5 {
            return Err(CliError::data_msg(format!(
                "{}:{}: malformed labels row",
                path.display(),
                i + 1
            )));
        }
        let label = match fields[4] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(CliError::data_msg(format!(
                    "{}:{}: unknown label `{other}`",
                    path.display(),
                    i + 1
                )))
            }
        };
        out.insert(fields[0].to_string(), label);
    }
    Ok(out)
}

fn load_matrix_with_labels(
    matrix_path: &Path,
    labels_path: &Path,
) -> Result<(FeatureMatrix, Vec<bool>), CliError> {
    let file = File::open(matrix_path)
        .map_err(|e| CliError::io(&matrix_path.display().to_string(), e))?;
    let (rows, n_features) = read_sparse_matrix(BufReader::new(file)).map_err(CliError::data)?;
    let labels_by_id = read_labels(labels_path)?;
    let mut labels = Vec::with_capacity(rows.len());
    let mut vecs = Vec::with_capacity(rows.len());
    for (post_id, features) in rows {
        let label = labels_by_id
            .get(post_id.as_str())
            .ok_or_else(|| CliError::data_msg(format!("post {post_id} has features but no label")))?;
        labels.push(*label);
        vecs.push(features);
    }
    Ok((FeatureMatrix::new(n_features, vecs), labels))
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let (matrix, labels) = load_matrix_with_labels(&args.matrix, &args.labels)?;
    let params = ForestParams {
        n_trees: args.trees,
        max_depth: args.max_depth,
        min_leaf: args.min_leaf,
        features_per_split: args.mtry,
        seed: args.seed,
    };
    let forest = train_forest(&matrix, &labels, params).map_err(CliError::data)?;
    println!(
        "trained {} trees on {} rows x {} features; positive fraction {:.3}, oob accuracy {}",
        forest.trees.len(),
        matrix.n_rows(),
        matrix.n_features,
        forest.positive_fraction,
        forest.oob_accuracy.map_or("n/a".into(), |a| format!("{a:.3}")),
    );
    write_json(&args.out, &forest)?;
    println!("forest written to {}", args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let forest: TrainedForest = read_json(&args.forest, "forest model")?;
    let (matrix, labels) = load_matrix_with_labels(&args.matrix, &args.labels)?;
    let scores = forest.predict_scores(&matrix).map_err(CliError::data)?;
    let curve = roc(&scores, &labels).map_err(CliError::data)?;
    let acc = accuracy(&scores, &labels, args.threshold);
    println!("rows: {}", labels.len());
    println!("accuracy @ {:.2}: {:.4}", args.threshold, acc);
    println!("AUC: {:.4}", curve.auc);
    if let Some(path) = &args.roc_csv {
        let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::io("roc csv", e))?);
        curve.write_csv(&mut w).map_err(|e| CliError::io("roc csv", e))?;
    }
    if let Some(path) = &args.out {
        write_json(
            path,
            &serde_json::json!({
                "rows": labels.len(),
                "threshold": args.threshold,
                "accuracy": acc,
                "auc": curve.auc,
            }),
        )?;
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let ds = args.data.load()?;
    std::fs::create_dir_all(&args.outdir).map_err(|e| CliError::io("outdir", e))?;

    if args.grid {
        let mut grid: GridConfig = match &args.config {
            Some(path) => read_json(path, "grid config")?,
            None => GridConfig::default(),
        };
        if let Some(seed) = args.seed {
            grid.base.seed = seed;
        }
        let result = run_grid(&ds, &grid);
        let csv = result.summary_csv();
        std::fs::write(args.outdir.join("summary.csv"), &csv)
            .map_err(|e| CliError::io("summary.csv", e))?;
        write_json(&args.outdir.join("grid.json"), &result)?;
        for cell in &result.cells {
            write_json(&args.outdir.join(format!("cell_{:03}.json", cell.index)), cell)?;
        }
        print!("{csv}");
        println!("grid written to {}", args.outdir.display());
        if result.completed() == 0 && !result.cells.is_empty() {
            return Err(CliError {
                kind: ErrorKind::GuardOnly,
                message: "every grid cell was skipped or failed".into(),
            });
        }
        return Ok(());
    }

    let mut cfg: ExperimentConfig = match &args.config {
        Some(path) => read_json(path, "experiment config")?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = match &args.test_data_dir {
        Some(dir) => {
            let (test_ds, _) =
                load_dataset(&DatasetPaths::from_dir(dir), false).map_err(CliError::data)?;
            run_cross_forum(&ds, &test_ds, &cfg)?
        }
        None => run_experiment(&ds, &cfg)?,
    };
    write_json(&args.outdir.join("report.json"), &report)?;
    match &report.outcome {
        RunOutcome::Completed(m) => {
            write_json(&args.outdir.join("model.json"), &m.delay_model)?;
            let mut w = BufWriter::new(
                File::create(args.outdir.join("roc.csv")).map_err(|e| CliError::io("roc", e))?,
            );
            m.roc.write_csv(&mut w).map_err(|e| CliError::io("roc", e))?;
            println!(
                "d_l={}w delta={}w theta={} features={}: accuracy {:.4}, AUC {:.4} ({} train / {} test posts)",
                report.d_l_weeks,
                report.delta_weeks,
                report.theta,
                report.feature_set.id(),
                m.accuracy,
                m.auc,
                m.train_posts,
                m.test_posts
            );
            println!("report in {}", args.outdir.display());
            Ok(())
        }
        RunOutcome::Skipped { reason } => {
            println!("configuration skipped: {reason}");
            Err(CliError { kind: ErrorKind::GuardOnly, message: reason.clone() })
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut cfg: SynthConfig = match &args.config {
        Some(path) => read_json(path, "synth config")?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(users) = args.users {
        cfg.n_users = users;
    }
    if let Some(weeks) = args.weeks {
        cfg.span_weeks = weeks;
    }
    if let Some(name) = &args.name {
        cfg.forum_name = name.clone();
    }
    let (ds, truth) = generate(&cfg).map_err(CliError::data)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io("out dir", e))?;
    ds.export(&args.out).map_err(CliError::data)?;
    truth.export(&args.out).map_err(|e| CliError::io("groundtruth", e))?;
    let summary = ds.summary();
    println!(
        "generated {} users, {} threads, {} posts, {} messages ({} triggered) -> {}",
        summary.users,
        summary.threads,
        summary.posts,
        summary.messages,
        truth.triggered_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let value: serde_json::Value = read_json(&args.report, "report")?;
    if let Some(cells) = value.get("cells").and_then(|c| c.as_array()) {
        println!("grid of {} cells:", cells.len());
        for cell in cells {
            let p = &cell["params"];
            let status = cell["result"]["status"].as_str().unwrap_or("?");
            let line = match status {
                "ok" => format!(
                    "accuracy {:.4}, AUC {:.4}",
                    cell["result"]["accuracy"].as_f64().unwrap_or(f64::NAN),
                    cell["result"]["auc"].as_f64().unwrap_or(f64::NAN)
                ),
                _ => cell["result"]["reason"]
                    .as_str()
                    .or(cell["result"]["error"].as_str())
                    .unwrap_or("")
                    .to_string(),
            };
            println!(
                "  d_l={} delta={} theta={} features={}: {} {}",
                p["d_l_weeks"],
                p["delta_weeks"],
                serde_json::to_string(&p["theta"]).unwrap_or_default(),
                p["feature_set"].as_str().unwrap_or("?"),
                status,
                line
            );
        }
        return Ok(());
    }
    let outcome = &value["outcome"];
    match outcome["status"].as_str() {
        Some("completed") => {
            println!(
                "completed: accuracy {:.4}, AUC {:.4}",
                outcome["accuracy"].as_f64().unwrap_or(f64::NAN),
                outcome["auc"].as_f64().unwrap_or(f64::NAN)
            );
            println!(
                "train posts {} ({:.1}% positive), test posts {} ({:.1}% positive)",
                outcome["train_posts"],
                outcome["train_positive_fraction"].as_f64().unwrap_or(0.0) * 100.0,
                outcome["test_posts"],
                outcome["test_positive_fraction"].as_f64().unwrap_or(0.0) * 100.0,
            );
            let dm = &outcome["delay_model"];
            println!(
                "delay model: f(x) = {:.3}e^(-{:.3}x) + {:.3}e^(-{:.3}x) + {:.3}, R^2 {:.4}, tau_max {}h",
                dm["a1"].as_f64().unwrap_or(f64::NAN),
                dm["b1"].as_f64().unwrap_or(f64::NAN),
                dm["a2"].as_f64().unwrap_or(f64::NAN),
                dm["b2"].as_f64().unwrap_or(f64::NAN),
                dm["c"].as_f64().unwrap_or(f64::NAN),
                dm["r_squared"].as_f64().unwrap_or(f64::NAN),
                dm["tau_max_hours"]
            );
            if let Some(features) = outcome["top_features"].as_array() {
                println!("top features by information gain:");
                for f in features.iter().take(10) {
                    println!(
                        "  {:.5}  {}",
                        f[1].as_f64().unwrap_or(f64::NAN),
                        f[0].as_str().unwrap_or("?")
                    );
                }
            }
        }
        Some("skipped") => {
            println!("skipped: {}", outcome["reason"].as_str().unwrap_or(""));
        }
        _ => println!("{}", serde_json::to_string_pretty(&value).unwrap_or_default()),
    }
    Ok(())
}
