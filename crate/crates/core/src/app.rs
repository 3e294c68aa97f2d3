//! Command-line application: config resolution, the on-disk workspace
//! layout, and the prepare / train / predict / evaluate / synth commands.
//!
//! Workspace layout under the working directory:
//! `dataset/` encoded splits, `checkpoints/` model snapshots,
//! `predictions/` ranked suffixes, `reports/` loss history and evaluation,
//! plus `manifest.json` with a SHA-256 per produced file.

use crate::decode::predict_suffixes;
use crate::encoding::{
    decode_labels, make_pairs_for_log, read_dataset, write_dataset, Dataset, DatasetHeader,
    EncodedPair, TimeNormalizer, Vocabulary,
};
use crate::eventlog::{parse_csv, split_log, write_csv, ColumnMap, DEFAULT_TIMESTAMP_FORMAT};
use crate::gumbel::TemperatureSchedule;
use crate::metrics::{evaluate_with, DlVariant, EvaluationInput, EvaluationReport};
use crate::seq2seq::{Checkpoint, DiscriminatorModel, GeneratorModel, ModelConfig, CHECKPOINT_VERSION};
use crate::synth::{generate_synthetic_log, SyntheticProcessModel};
use crate::training::{convergence_report, train, write_loss_history, TrainConfig};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

/// Errors split by exit code: configuration problems exit with 2, runtime
/// failures with 3.
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "configuration error: {m}"),
            AppError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for AppError {}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Runtime(_) => 3,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Runtime(e.to_string())
}

/// Flat run configuration; every field has a default so a config file only
/// needs the keys it changes. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // input schema
    pub case_column: String,
    pub activity_column: String,
    pub timestamp_column: String,
    pub timestamp_format: String,
    // split
    pub train_ratio: f64,
    pub test_ratio: f64,
    pub val_ratio: f64,
    // model
    pub hidden: usize,
    pub depth: usize,
    pub init_std: f64,
    // training
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub tau_start: f64,
    pub tau_min: f64,
    pub supervised_time_weight: f64,
    pub adversarial_weight: f64,
    pub seed: u64,
    // decoding
    pub k: usize,
    /// 0 means max training trace length plus 5
    pub max_suffix_len: usize,
    // synth
    pub synth_traces: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case_column: "CaseID".into(),
            activity_column: "ActivityID".into(),
            timestamp_column: "CompleteTimestamp".into(),
            timestamp_format: DEFAULT_TIMESTAMP_FORMAT.into(),
            train_ratio: 0.7,
            test_ratio: 0.2,
            val_ratio: 0.1,
            hidden: 200,
            depth: 5,
            init_std: 0.05,
            learning_rate: 5e-5,
            clip_norm: 1.0,
            epochs: 500,
            batch_size: 128,
            tau_start: 0.9,
            tau_min: 0.05,
            supervised_time_weight: 1.0,
            adversarial_weight: 1.0,
            seed: 0,
            k: 3,
            max_suffix_len: 0,
            synth_traces: 200,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, AppError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |m: String| Err(AppError::Config(m));
        let ratio_sum = self.train_ratio + self.test_ratio + self.val_ratio;
        if (ratio_sum - 1.0).abs() > 1e-9 {
            return bad(format!("split ratios sum to {ratio_sum}, expected 1"));
        }
        if self.hidden == 0 || self.depth == 0 {
            return bad("hidden and depth must be positive".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.tau_min > 0.0 && self.tau_start >= self.tau_min) {
            return bad("temperatures must satisfy tau_start >= tau_min > 0".into());
        }
        if self.learning_rate <= 0.0 || self.clip_norm <= 0.0 {
            return bad("learning_rate and clip_norm must be positive".into());
        }
        Ok(())
    }

    fn column_map(&self) -> ColumnMap {
        ColumnMap {
            case: self.case_column.clone(),
            activity: self.activity_column.clone(),
            timestamp: self.timestamp_column.clone(),
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            clip_norm: self.clip_norm,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            schedule: TemperatureSchedule {
                tau_start: self.tau_start,
                tau_min: self.tau_min,
                total_epochs: self.epochs,
            },
            supervised_time_weight: self.supervised_time_weight,
            adversarial_weight: self.adversarial_weight,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "suffixgan", version, about = "Suffix and remaining-time prediction for event logs")]
pub struct Cli {
    /// Working directory for datasets, checkpoints, predictions and reports
    #[arg(long, env = "SUFFIXGAN_WORKDIR", default_value = "workdir", global = true)]
    pub workdir: PathBuf,
    /// JSON run configuration; flags below override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Beam width for prediction
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Worker count cap (the current implementation is single-threaded)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic event log CSV
    Synth {
        /// Number of traces; defaults to the config's synth_traces
        #[arg(long)]
        traces: Option<usize>,
        /// Output CSV path; defaults to <workdir>/dataset/synthetic.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a log, split it and write encoded train/test/val datasets
    Prepare {
        /// Input event log CSV
        #[arg(long)]
        input: PathBuf,
    },
    /// Train the adversarial suffix model on the prepared dataset
    Train,
    /// Beam-search suffix predictions for every test prefix
    Predict,
    /// Score predictions against ground truth
    Evaluate,
}

impl Cli {
    /// Resolved configuration: file first, then flag overrides.
    pub fn resolve_config(&self) -> Result<RunConfig, AppError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(epochs) = self.epochs {
            config.epochs = epochs;
        }
        if let Some(jobs) = self.jobs {
            if jobs == 0 {
                return Err(AppError::Config("jobs must be at least 1".into()));
            }
        }
        config.validate()?;
        Ok(config)
    }
}

/// Workspace paths rooted at the working directory.
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: &Path) -> Result<Workspace, AppError> {
        for sub in ["dataset", "checkpoints", "predictions", "reports"] {
            fs::create_dir_all(root.join(sub)).map_err(runtime)?;
        }
        Ok(Workspace { root: root.to_path_buf() })
    }

    pub fn dataset(&self, split: &str) -> PathBuf {
        self.root.join("dataset").join(format!("{split}.jsonl"))
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.json"))
    }

    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions").join("predictions.jsonl")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    /// Records SHA-256 digests for the given files, merging with any
    /// existing manifest entries.
    pub fn record(&self, paths: &[&Path]) -> Result<(), AppError> {
        let mut entries: BTreeMap<String, String> = if self.manifest().exists() {
            let text = fs::read_to_string(self.manifest()).map_err(runtime)?;
            serde_json::from_str(&text).map_err(runtime)?
        } else {
            BTreeMap::new()
        };
        for path in paths {
            let rel = path
                .strip_prefix(&self.root)
                .unwrap_or(path)
                .to_string_lossy()
                .replace('\\', "/");
            entries.insert(rel, sha256_file(path)?);
        }
        let json = serde_json::to_string_pretty(&entries).map_err(runtime)?;
        fs::write(self.manifest(), json).map_err(runtime)?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String, AppError> {
    let bytes = fs::read(path)
        .map_err(|e| AppError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One prediction line: ranked suffixes for a single test prefix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub case_id: String,
    pub prefix_len: usize,
    pub k: usize,
    pub suffixes: Vec<RankedSuffix>,
    pub true_labels: Vec<String>,
    pub true_remaining_days: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedSuffix {
    pub labels: Vec<String>,
    /// cumulative negative log probability, lower is more likely
    pub score: f64,
    pub remaining_days: f64,
    pub truncated: bool,
}

/// Rank-1 metrics plus the best similarity achievable within the beam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub n: usize,
    pub k: usize,
    pub rank1_mean_similarity: f64,
    pub rank1_mae_days: f64,
    pub best_of_k_mean_similarity: f64,
    pub best_of_k_mae_days: f64,
}

pub fn run(cli: &Cli) -> Result<(), AppError> {
    let config = cli.resolve_config()?;
    let workspace = Workspace::new(&cli.workdir)?;
    match &cli.command {
        Command::Synth { traces, out } => {
            cmd_synth(&workspace, &config, *traces, out.as_deref())
        }
        Command::Prepare { input } => cmd_prepare(&workspace, &config, input),
        Command::Train => cmd_train(&workspace, &config),
        Command::Predict => cmd_predict(&workspace, &config),
        Command::Evaluate => cmd_evaluate(&workspace, &config),
    }
}

fn cmd_synth(
    workspace: &Workspace,
    config: &RunConfig,
    traces: Option<usize>,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let n = traces.unwrap_or(config.synth_traces);
    let model = SyntheticProcessModel::desk_scale();
    let log = generate_synthetic_log(&model, n, config.seed).map_err(runtime)?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| workspace.root.join("dataset").join("synthetic.csv"));
    let file = fs::File::create(&path).map_err(runtime)?;
    write_csv(&log, file, &config.column_map(), &config.timestamp_format).map_err(runtime)?;
    workspace.record(&[&path])?;
    println!(
        "wrote {} traces ({} events) to {}",
        log.traces.len(),
        log.n_events(),
        path.display()
    );
    Ok(())
}

fn cmd_prepare(workspace: &Workspace, config: &RunConfig, input: &Path) -> Result<(), AppError> {
    let log = parse_csv(input, &config.column_map(), &config.timestamp_format).map_err(runtime)?;
    let (train_log, test_log, val_log) = split_log(
        &log,
        (config.train_ratio, config.test_ratio, config.val_ratio),
        config.seed,
    )
    .map_err(runtime)?;
    // vocabulary and time scale come from training data only
    let vocab = Vocabulary::build(&train_log).map_err(runtime)?;
    let norm = TimeNormalizer::fit(&train_log);
    let checksum = sha256_file(input)?;

    let mut written = Vec::new();
    for (split, split_log) in [("train", &train_log), ("test", &test_log), ("val", &val_log)] {
        let pairs = make_pairs_for_log(split_log, &vocab, &norm).map_err(runtime)?;
        let dataset = Dataset {
            header: DatasetHeader {
                vocabulary: vocab.clone(),
                normalizer_scale: norm.scale,
                source_checksum: checksum.clone(),
                n_pairs: pairs.len(),
            },
            pairs,
        };
        let path = workspace.dataset(split);
        let file = fs::File::create(&path).map_err(runtime)?;
        write_dataset(&dataset, file).map_err(runtime)?;
        println!(
            "{split}: {} traces, {} pairs -> {}",
            split_log.traces.len(),
            dataset.header.n_pairs,
            path.display()
        );
        written.push(path);
    }
    let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    workspace.record(&refs)?;
    Ok(())
}

fn load_split(workspace: &Workspace, split: &str) -> Result<Dataset, AppError> {
    let path = workspace.dataset(split);
    let file = fs::File::open(&path).map_err(|e| {
        AppError::Runtime(format!(
            "cannot open {} (run `prepare` first): {e}",
            path.display()
        ))
    })?;
    read_dataset(BufReader::new(file)).map_err(runtime)
}

fn max_seq_len(pairs: &[EncodedPair]) -> usize {
    pairs
        .iter()
        .map(|p| p.prefix.len() + p.suffix.len())
        .max()
        .unwrap_or(0)
}

fn cmd_train(workspace: &Workspace, config: &RunConfig) -> Result<(), AppError> {
    let train_set = load_split(workspace, "train")?;
    let val_set = load_split(workspace, "val")?;
    if train_set.pairs.is_empty() {
        return Err(AppError::Runtime(
            "training dataset has no pairs; every trace needs at least 3 events".into(),
        ));
    }
    let vocab = train_set.header.vocabulary.clone();
    let model_config = ModelConfig {
        vocab_size: vocab.len(),
        hidden: config.hidden,
        depth: config.depth,
        init_std: config.init_std,
    };
    let generator = GeneratorModel::new(model_config.clone(), config.seed);
    let discriminator = DiscriminatorModel::new(model_config, config.seed.wrapping_add(1));
    let train_config = config.train_config();
    let result = train(
        generator,
        discriminator,
        &train_set.pairs,
        &val_set.pairs,
        &train_config,
    )
    .map_err(runtime)?;

    let max_trace_len = max_seq_len(&train_set.pairs);
    let make_checkpoint = |generator, discriminator, epochs_completed| Checkpoint {
        version: CHECKPOINT_VERSION,
        generator,
        discriminator,
        vocabulary: vocab.clone(),
        normalizer_scale: train_set.header.normalizer_scale,
        schedule: train_config.schedule,
        seed: config.seed,
        epochs_completed,
        max_trace_len,
    };
    let best_path = workspace.checkpoint("best");
    make_checkpoint(result.best_generator, result.best_discriminator, result.best_epoch + 1)
        .save(&best_path)
        .map_err(runtime)?;
    let final_path = workspace.checkpoint("final");
    make_checkpoint(result.generator, result.discriminator, config.epochs)
        .save(&final_path)
        .map_err(runtime)?;

    let history_path = workspace.report("loss_history.csv");
    let file = fs::File::create(&history_path).map_err(runtime)?;
    write_loss_history(&result.records, file).map_err(runtime)?;
    let mut recorded: Vec<&Path> = vec![&best_path, &final_path, &history_path];
    let convergence_path = workspace.report("convergence.json");
    if result.records.len() >= 2 {
        let report = convergence_report(&result.records);
        fs::write(
            &convergence_path,
            serde_json::to_string_pretty(&report).map_err(runtime)?,
        )
        .map_err(runtime)?;
        recorded.push(&convergence_path);
    }
    workspace.record(&recorded)?;
    let last = result.records.last().expect("at least one epoch");
    println!(
        "trained {} epochs; best validation loss {:.4} at epoch {}; final supervised loss {:.4}",
        result.records.len(),
        result.best_validation_loss,
        result.best_epoch,
        last.g_supervised_loss
    );
    Ok(())
}

fn cmd_predict(workspace: &Workspace, config: &RunConfig) -> Result<(), AppError> {
    let checkpoint_path = workspace.checkpoint("best");
    let checkpoint = Checkpoint::load(&checkpoint_path).map_err(|e| {
        AppError::Runtime(format!(
            "cannot load {} (run `train` first): {e}",
            checkpoint_path.display()
        ))
    })?;
    let test_set = load_split(workspace, "test")?;
    if test_set.pairs.is_empty() {
        return Err(AppError::Runtime("test dataset has no pairs".into()));
    }
    let vocab = &checkpoint.vocabulary;
    let scale = checkpoint.normalizer_scale;
    let max_len = if config.max_suffix_len > 0 {
        config.max_suffix_len
    } else {
        checkpoint.max_trace_len + 5
    };

    let path = workspace.predictions();
    let mut file = fs::File::create(&path).map_err(runtime)?;
    for pair in &test_set.pairs {
        let ranked = predict_suffixes(&checkpoint.generator, &pair.prefix, config.k, max_len)
            .map_err(runtime)?;
        let suffixes = ranked
            .into_iter()
            .map(|p| RankedSuffix {
                labels: p.labels.iter().map(|&l| vocab.label_of(l).to_string()).collect(),
                score: p.score,
                remaining_days: p.remaining_time * scale,
                truncated: p.truncated,
            })
            .collect();
        let record = PredictionRecord {
            case_id: pair.case_id.clone(),
            prefix_len: pair.prefix_len,
            k: config.k,
            suffixes,
            true_labels: decode_labels(&pair.suffix, vocab),
            true_remaining_days: pair.remaining_time_days,
        };
        let line = serde_json::to_string(&record).map_err(runtime)?;
        writeln!(file, "{line}").map_err(runtime)?;
    }
    workspace.record(&[&path])?;
    println!(
        "wrote {} prediction records (beam width {}) to {}",
        test_set.pairs.len(),
        config.k,
        path.display()
    );
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, AppError> {
    let text = fs::read_to_string(path).map_err(|e| {
        AppError::Runtime(format!(
            "cannot read {} (run `predict` first): {e}",
            path.display()
        ))
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(runtime))
        .collect()
}

/// Index labels against a shared interning table so the edit distance works
/// over label ids even when a prediction contains labels absent from the
/// ground truth.
fn index_labels(interner: &mut BTreeMap<String, usize>, labels: &[String]) -> Vec<usize> {
    labels
        .iter()
        .map(|l| {
            let next = interner.len();
            *interner.entry(l.clone()).or_insert(next)
        })
        .collect()
}

pub fn summarize_predictions(
    records: &[PredictionRecord],
) -> Result<(EvaluationSummary, EvaluationReport), AppError> {
    if records.is_empty() {
        return Err(AppError::Runtime("no prediction records".into()));
    }
    let mut interner = BTreeMap::new();
    let mut rank1_inputs = Vec::with_capacity(records.len());
    let mut best_sim_sum = 0.0;
    let mut best_err_sum = 0.0;
    let k = records.iter().map(|r| r.k).max().unwrap_or(1);
    for record in records {
        if record.suffixes.is_empty() {
            return Err(AppError::Runtime(format!(
                "record for case {} has no suffixes",
                record.case_id
            )));
        }
        let truth = index_labels(&mut interner, &record.true_labels);
        let top = &record.suffixes[0];
        rank1_inputs.push(EvaluationInput {
            case_id: record.case_id.clone(),
            prefix_len: record.prefix_len,
            predicted_labels: index_labels(&mut interner, &top.labels),
            true_labels: truth.clone(),
            predicted_remaining_days: top.remaining_days,
            true_remaining_days: record.true_remaining_days,
        });
        let mut best_sim = f64::NEG_INFINITY;
        let mut best_err = f64::INFINITY;
        for suffix in &record.suffixes {
            let pred = index_labels(&mut interner, &suffix.labels);
            let sim = crate::metrics::similarity(&pred, &truth);
            let err = (suffix.remaining_days - record.true_remaining_days).abs();
            best_sim = best_sim.max(sim);
            best_err = best_err.min(err);
        }
        best_sim_sum += best_sim;
        best_err_sum += best_err;
    }
    let report = evaluate_with(DlVariant::Restricted, &rank1_inputs).map_err(runtime)?;
    let n = records.len();
    let summary = EvaluationSummary {
        n,
        k,
        rank1_mean_similarity: report.mean_similarity,
        rank1_mae_days: report.mae_days,
        best_of_k_mean_similarity: best_sim_sum / n as f64,
        best_of_k_mae_days: best_err_sum / n as f64,
    };
    Ok((summary, report))
}

fn cmd_evaluate(workspace: &Workspace, _config: &RunConfig) -> Result<(), AppError> {
    let records = read_predictions(&workspace.predictions())?;
    let (summary, report) = summarize_predictions(&records)?;
    let summary_path = workspace.report("evaluation.json");
    #[derive(Serialize)]
    struct FullReport<'a> {
        summary: &'a EvaluationSummary,
        rank1: &'a EvaluationReport,
    }
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&FullReport {
            summary: &summary,
            rank1: &report,
        })
        .map_err(runtime)?,
    )
    .map_err(runtime)?;
    workspace.record(&[&summary_path])?;
    println!(
        "n={} rank-1 similarity {:.4}, rank-1 MAE {:.4} days; best-of-{} similarity {:.4}, MAE {:.4} days",
        summary.n,
        summary.rank1_mean_similarity,
        summary.rank1_mae_days,
        summary.k,
        summary.best_of_k_mean_similarity,
        summary.best_of_k_mae_days
    );
    Ok(())
}
