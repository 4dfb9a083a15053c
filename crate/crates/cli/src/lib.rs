//! Experiment harness behind the `ordemb` binary.
//!
//! `generate` writes synthetic points and train/test comparison files,
//! `train` runs one optimizer over several seeded trials, and `evaluate`
//! scores an embedding on held-out comparisons and/or labeled retrieval.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use ordemb_core::experiment::{
    aggregate_errors, format_aggregate, init_embedding, time_to_target, trial_seed, AggregateRow, ExperimentSpec,
    DEFAULT_DIM, DEFAULT_INIT_SCALE, TIME_TO_TARGET_ERROR,
};
use ordemb_core::io::{self, write_atomic};
use ordemb_core::metrics::{generalization_error, LabeledEmbedding, RankingReport, DEFAULT_AP_CUTOFF};
use ordemb_core::optimizer::{self, EpochTrace, Method, OptimizerConfig, OutputRule};
use ordemb_core::synth::{self, SynthConfig};
use ordemb_core::{Error, LossKind, LossModel, Result};

pub const DATA_MANIFEST: &str = "manifest.json";
pub const TRAIN_MANIFEST: &str = "train_manifest.json";
pub const POINTS_FILE: &str = "points.csv";
pub const TRAIN_FILE: &str = "train.txt";
pub const TEST_FILE: &str = "test.txt";

#[derive(Debug, Parser)]
#[command(name = "ordemb", version, about = "Ordinal embedding with SVRG and stabilized BB step sizes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic points and train/test triplet files.
    Generate(GenerateArgs),
    /// Learn embeddings over one or more seeded trials.
    Train(TrainArgs),
    /// Score an embedding on test comparisons and/or labeled retrieval.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d_true: usize,
    #[arg(long, default_value_t = 0.05)]
    pub variance: f64,
    #[arg(long, default_value_t = 10_000)]
    pub num_train: usize,
    /// Fraction of training comparisons to reverse.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// JSON document overriding the flags (`{"synth": {...}}`).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "ste")]
    pub model: String,
    #[arg(long, default_value = "svrg-sbb")]
    pub method: String,
    #[arg(long, default_value_t = 0.005)]
    pub epsilon: f64,
    /// Inner-loop length; defaults to the number of training comparisons.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eta0: f64,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long, default_value_t = DEFAULT_INIT_SCALE)]
    pub init_scale: f64,
    #[arg(long, default_value = "last-iterate")]
    pub output_rule: String,
    /// CKL regularizer.
    #[arg(long)]
    pub delta: Option<f64>,
    /// t-STE degrees of freedom; defaults to dim - 1.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// JSON document overriding the flags; a `train_manifest.json` works as-is.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub embedding: PathBuf,
    /// `index,label` CSV for retrieval metrics.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Held-out comparisons for the generalization error.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Compute retrieval metrics (requires --labels).
    #[arg(long)]
    pub map: bool,
    #[arg(long, default_value_t = 1)]
    pub k_min: usize,
    /// Upper end of the P@K/R@K curve and the AP cutoff; clamped to n - 1.
    #[arg(long, default_value_t = DEFAULT_AP_CUTOFF)]
    pub k_max: usize,
    /// Directory for `report.json` and `curve.csv`; stdout only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Partial overrides read from `--config`.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub model: Option<LossModel>,
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub init_scale: Option<f64>,
    /// Informational; ignored on input.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ConfigFile {
    /// Applies the JSON document at `path` on top of `self`, merging nested
    /// objects key by key so partial sections are allowed.
    pub fn overlay(&self, path: &Path) -> Result<Self> {
        let mut over: Value = read_json(path)?;
        if !over.is_object() {
            return Err(Error::Usage(format!("{}: config must be a JSON object", path.display())));
        }
        if let Some(opt) = over.get_mut("optimizer").and_then(Value::as_object_mut) {
            if let Some(epochs) = opt.remove("epochs") {
                opt.insert("S".into(), epochs);
            }
        }
        let mut base = serde_json::to_value(self).expect("serializable");
        merge(&mut base, over);
        serde_json::from_value(base).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, value) in o {
                match b.get_mut(&key) {
                    Some(slot) if !slot.is_null() => merge(slot, value),
                    _ => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), line: e.line(), msg: e.to_string() })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, &text)
}

/// Written by `generate`; `train` reads the object count from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub synth: SynthConfig,
    pub total_triplets: usize,
    pub distance_ties: usize,
    pub num_train: usize,
    pub num_test: usize,
    pub noise_flipped: usize,
    pub points: String,
    pub train: String,
    pub test: String,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<DataManifest> {
    let mut synth = SynthConfig {
        n: args.n,
        d_true: args.d_true,
        variance: args.variance,
        num_train: args.num_train,
        noise_fraction: args.noise,
        seed: args.seed,
    };
    if let Some(path) = &args.config {
        let cfg = ConfigFile { synth: Some(synth), ..Default::default() }.overlay(path)?;
        synth = cfg.synth.expect("kept by overlay");
    }
    generate(&synth, &args.out)
}

/// Writes points, train and test files plus the manifest into `out`.
pub fn generate(synth: &SynthConfig, out: &Path) -> Result<DataManifest> {
    synth.validate()?;
    let points = synth::generate_points(synth)?;
    let all = synth::enumerate_triplets(&points);
    if all.ties > 0 {
        warn!("{} exact distance ties broken by index order", all.ties);
    }
    // independent streams for points, split and noise
    let (train, test) = synth::split(&all.comparisons, synth.num_train, trial_seed(synth.seed, 1))?;
    let (train, flipped) = synth::inject_noise(&train, synth.noise_fraction, trial_seed(synth.seed, 2))?;

    io::write_embedding(&out.join(POINTS_FILE), &points)?;
    io::write_comparisons(&out.join(TRAIN_FILE), &train)?;
    io::write_comparisons(&out.join(TEST_FILE), &test)?;
    let manifest = DataManifest {
        synth: synth.clone(),
        total_triplets: all.comparisons.len(),
        distance_ties: all.ties,
        num_train: train.len(),
        num_test: test.len(),
        noise_flipped: flipped.len(),
        points: POINTS_FILE.into(),
        train: TRAIN_FILE.into(),
        test: TEST_FILE.into(),
    };
    write_json(&out.join(DATA_MANIFEST), &manifest)?;
    info!("wrote {} train / {} test comparisons to {}", train.len(), test.len(), out.display());
    Ok(manifest)
}

/// Resolves flags and `--config` into a full experiment description.
pub fn train_spec(args: &TrainArgs) -> Result<ExperimentSpec> {
    let kind: LossKind = args.model.parse()?;
    let mut model = LossModel::new(kind, args.dim);
    if let Some(delta) = args.delta {
        model.delta = delta;
    }
    if let Some(alpha) = args.alpha {
        model.alpha = alpha;
    }
    let optimizer = OptimizerConfig {
        method: args.method.parse::<Method>()?,
        m: args.m,
        epochs: args.epochs,
        epsilon: args.epsilon,
        eta0: args.eta0,
        seed: args.seed,
        output_rule: args.output_rule.parse::<OutputRule>()?,
    };
    let data: DataManifest = read_json(&args.data.join(DATA_MANIFEST))?;
    let mut spec = ExperimentSpec {
        synth: data.synth,
        model,
        optimizer,
        trials: args.trials,
        dim: args.dim,
        init_scale: args.init_scale,
        output_dir: args.out.clone(),
    };
    if let Some(path) = &args.config {
        let base = ConfigFile {
            model: Some(spec.model),
            optimizer: Some(spec.optimizer.clone()),
            trials: Some(spec.trials),
            dim: Some(spec.dim),
            init_scale: Some(spec.init_scale),
            ..Default::default()
        };
        let raw: Value = read_json(path)?;
        let cfg = base.overlay(path)?;
        spec.model = cfg.model.expect("kept by overlay");
        spec.optimizer = cfg.optimizer.expect("kept by overlay");
        spec.trials = cfg.trials.expect("kept by overlay");
        spec.dim = cfg.dim.expect("kept by overlay");
        spec.init_scale = cfg.init_scale.expect("kept by overlay");
        // a new dimension moves the default t-STE alpha unless alpha was given
        let alpha_given = args.alpha.is_some() || raw.pointer("/model/alpha").is_some();
        if raw.get("dim").is_some() && !alpha_given {
            spec.model.alpha = LossModel::new(spec.model.kind, spec.dim).alpha;
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// Outcome of one trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub init_seed: u64,
    pub optimizer_seed: u64,
    pub final_train_error: Option<f64>,
    pub final_test_error: Option<f64>,
    /// Wall-clock ms until training error first reached the target level.
    pub time_to_target_ms: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub trials: Vec<TrialSummary>,
    pub aggregate: Vec<AggregateRow>,
    pub target_train_error: f64,
}

impl TrainSummary {
    pub fn failed(&self) -> usize {
        self.trials.iter().filter(|t| t.error.is_some()).count()
    }
}

pub fn trial_seeds(base: u64, trial: usize) -> (u64, u64) {
    (trial_seed(base, 2 * trial), trial_seed(base, 2 * trial + 1))
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary> {
    let spec = train_spec(args)?;
    train(&spec, &args.data)
}

/// Runs every trial of `spec` on the data in `data_dir`, writing per-trial
/// embeddings and traces, the cross-trial aggregate and a manifest that
/// reproduces the run via `--config`.
pub fn train(spec: &ExperimentSpec, data_dir: &Path) -> Result<TrainSummary> {
    spec.validate()?;
    let n = spec.synth.n;
    let train_set = io::read_comparisons(&data_dir.join(TRAIN_FILE), n)?;
    let test_set = io::read_comparisons(&data_dir.join(TEST_FILE), n)?;
    let out = &spec.output_dir;

    let manifest = ConfigFile {
        synth: Some(spec.synth.clone()),
        model: Some(spec.model),
        optimizer: Some(spec.optimizer.clone()),
        trials: Some(spec.trials),
        dim: Some(spec.dim),
        init_scale: Some(spec.init_scale),
        output_dir: Some(spec.output_dir.clone()),
    };
    write_json(&out.join(TRAIN_MANIFEST), &manifest)?;

    let run_trial = |trial: usize| -> (TrialSummary, Option<Vec<EpochTrace>>) {
        let (init_seed, optimizer_seed) = trial_seeds(spec.optimizer.seed, trial);
        let mut summary = TrialSummary {
            trial,
            init_seed,
            optimizer_seed,
            final_train_error: None,
            final_test_error: None,
            time_to_target_ms: None,
            error: None,
        };
        let result = init_embedding(n, spec.dim, init_seed, spec.init_scale).and_then(|x0| {
            let cfg = OptimizerConfig { seed: optimizer_seed, ..spec.optimizer.clone() };
            let test = (!test_set.is_empty()).then_some(&test_set);
            let run = optimizer::run(&spec.model, &train_set, test, &x0, &cfg)?;
            io::write_embedding(&out.join(format!("embedding_trial_{trial}.csv")), &run.embedding)?;
            write_atomic(&out.join(format!("trace_trial_{trial}.csv")), &io::format_traces(&run.traces))?;
            write_atomic(&out.join(format!("steps_trial_{trial}.csv")), &io::format_step_diagnostics(&run.traces))?;
            Ok(run.traces)
        });
        match result {
            Ok(traces) => {
                summary.final_train_error = traces.last().map(|t| t.train_error);
                summary.final_test_error = traces.last().and_then(|t| t.test_error);
                summary.time_to_target_ms = time_to_target(&traces, TIME_TO_TARGET_ERROR);
                (summary, Some(traces))
            }
            Err(e) => {
                warn!("trial {trial} failed: {e}");
                summary.error = Some(e.to_string());
                (summary, None)
            }
        }
    };

    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(spec.trials);
    let mut results: Vec<(TrialSummary, Option<Vec<EpochTrace>>)> = Vec::with_capacity(spec.trials);
    std::thread::scope(|scope| {
        let run_trial = &run_trial;
        let handles: Vec<_> = (0..workers)
            .map(|w| scope.spawn(move || (w..spec.trials).step_by(workers).map(run_trial).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            results.extend(h.join().expect("trial worker panicked"));
        }
    });
    results.sort_by_key(|(s, _)| s.trial);

    let runs: Vec<Vec<EpochTrace>> = results.iter().filter_map(|(_, t)| t.clone()).collect();
    let aggregate = aggregate_errors(&runs);
    write_atomic(&out.join("aggregate.csv"), &format_aggregate(&aggregate))?;
    let summary = TrainSummary {
        trials: results.into_iter().map(|(s, _)| s).collect(),
        aggregate,
        target_train_error: TIME_TO_TARGET_ERROR,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub dim: usize,
    #[serde(default)]
    pub generalization_error: Option<f64>,
    #[serde(default)]
    pub test_comparisons: Option<usize>,
    #[serde(default)]
    pub ranking: Option<RankingReport>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluationReport> {
    let x = io::read_embedding(&args.embedding)?;
    if args.map && args.labels.is_none() {
        return Err(Error::Usage("--map requires --labels".into()));
    }
    if args.test.is_none() && args.labels.is_none() {
        return Err(Error::Usage("nothing to evaluate: pass --test and/or --labels".into()));
    }
    let mut report = EvaluationReport { n: x.n(), dim: x.d(), generalization_error: None, test_comparisons: None, ranking: None };

    if let Some(test) = &args.test {
        let set = io::read_comparisons(test, x.n())?;
        report.generalization_error = Some(generalization_error(&x, &set)?);
        report.test_comparisons = Some(set.len());
    }
    if let Some(labels_path) = &args.labels {
        let labels = io::read_labels(labels_path, x.n())?;
        let data = LabeledEmbedding::new(x, &labels)?;
        let k_max = args.k_max.min(data.n() - 1);
        if args.k_min == 0 || args.k_min > k_max {
            return Err(Error::Usage(format!("--k-min {} must lie in [1, {k_max}]", args.k_min)));
        }
        report.ranking = Some(RankingReport::compute(&data, args.k_min..=k_max, k_max)?);
    }

    if let Some(out) = &args.out {
        write_json(&out.join("report.json"), &report)?;
        if let Some(ranking) = &report.ranking {
            let mut csv = String::from("k,precision,recall\n");
            for p in &ranking.curve {
                csv.push_str(&format!("{},{:?},{:?}\n", p.k, p.precision, p.recall));
            }
            write_atomic(&out.join("curve.csv"), &csv)?;
        }
    }
    Ok(report)
}

/// Process exit code for an error: 2 for usage/input problems, 3 for
/// numeric failures, 1 for I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        e if e.is_numeric() => 3,
        Error::Io { .. } => 1,
        _ => 2,
    }
}

pub fn report_json(report: &EvaluationReport) -> String {
    serde_json::to_string_pretty(report).expect("serializable")
}
