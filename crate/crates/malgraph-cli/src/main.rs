//! Command-line front end for the malgraph toolkit.
//!
//! Four subcommands cover the whole workflow: `train` fits a model and writes
//! run artifacts, `eval` scores a saved checkpoint on a dataset's test split,
//! `embed` exports per-graph embeddings, and `stats` summarizes a corpus.
//!
//! All randomness flows from the single `--seed` flag through named sub-seeds
//! (split, init, dropout, synth), and every successful command writes a
//! `manifest.json` recording the fully resolved configuration, so a run can
//! be reproduced exactly from its output directory.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
//! failure (non-finite loss or gradients).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use malgraph::baselines::{BaselineError, BaselineKind, LinearConfig, MlpConfig};
use malgraph::checkpoint;
use malgraph::dataset::{
    family_stats, load_malnet_dir, stratified_split, synth_families, FamilyStats,
    LabeledGraphSet,
};
use malgraph::gnn::model::{Arch, ModelConfig};
use malgraph::gnn::GnnError;
use malgraph::numerics::{derive_seed, NumericsError};
use malgraph::pipeline::{train_pipeline, ModelSpec, PipelineError, RunSeeds, TrainedPipeline};
use malgraph::training::TrainError;

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    /// Bad flags, unreadable config, invalid hyperparameters, checkpoint
    /// problems, or an unwritable output directory. Exit 1.
    Config(String),
    /// The dataset cannot be loaded or split as requested. Exit 2.
    Data(String),
    /// Training diverged into non-finite territory. Exit 3.
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn numerics_error(e: NumericsError) -> CliError {
    match e {
        NumericsError::NonFiniteGrad(_) => CliError::Numerical(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn gnn_error(e: GnnError) -> CliError {
    match e {
        GnnError::InvalidConfig { .. } => CliError::Config(e.to_string()),
        GnnError::Numerics(n) => numerics_error(n),
        other => CliError::Data(other.to_string()),
    }
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::NanLoss { .. } => CliError::Numerical(e.to_string()),
        TrainError::Numerics(n) => numerics_error(n),
        TrainError::Gnn(g) => gnn_error(g),
        other => CliError::Data(other.to_string()),
    }
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::Data(d) => CliError::Data(d.to_string()),
        PipelineError::Feature(f) => CliError::Data(f.to_string()),
        PipelineError::Gnn(g) => gnn_error(g),
        PipelineError::Train(t) => train_error(t),
        PipelineError::Baseline(b) => match b {
            BaselineError::Train(t) => train_error(t),
            BaselineError::Numerics(n) => numerics_error(n),
            other => CliError::Data(other.to_string()),
        },
    }
}

// ---------------------------------------------------------------------------
// Argument definitions
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "malgraph",
    version,
    about = "Malware call-graph classification: train, evaluate, embed, and summarize"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes checkpoint, metrics, confusion, and history.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint on a dataset's test split.
    Eval(EvalArgs),
    /// Export per-graph embeddings from a saved checkpoint.
    Embed(EmbedArgs),
    /// Print per-family graph statistics for a dataset.
    Stats(StatsArgs),
}

/// Dataset source shared by every subcommand: exactly one of the two.
#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Dataset root laid out as <family>/<graph>.edgelist.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Generate the built-in synthetic corpus with N graphs per family.
    #[arg(long, value_name = "N")]
    synthetic: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Optional TOML config file; command-line flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Model: gcn|sage|gin|sgc|jk-gcn|jk-sage|jk-gin|mlp|wl|feather.
    #[arg(long)]
    arch: Option<String>,
    /// Model depth: message-passing layers (GNN), affine layers (MLP),
    /// refinement iterations (WL), or characteristic-function scales (FEATHER).
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden width for GNN and MLP models.
    #[arg(long)]
    hidden: Option<usize>,
    /// Learning rate.
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    /// Decoupled weight decay.
    #[arg(long, allow_negative_numbers = true)]
    wd: Option<f64>,
    /// Dropout rate in [0, 1).
    #[arg(long, allow_negative_numbers = true)]
    dropout: Option<f64>,
    /// Training epochs (for WL/FEATHER: classifier epoch cap).
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Train,validation,test fractions, e.g. 0.7,0.1,0.2.
    #[arg(long, value_name = "R,R,R")]
    split: Option<String>,
    /// Root seed; all component seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Optional TOML config file; command-line flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Train,validation,test fractions used to carve out the test split.
    #[arg(long, value_name = "R,R,R")]
    split: Option<String>,
    /// Root seed; must match the training run to reproduce its split.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (must exist).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Optional TOML config file; command-line flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Root seed (sets the synthetic-corpus sub-seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (must exist).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Optional TOML config file; command-line flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Root seed (sets the synthetic-corpus sub-seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Optional output directory for stats.csv and the manifest (must exist).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Config file and resolution
// ---------------------------------------------------------------------------

/// TOML mirror of the command-line flags. Keys match flag names; `split` is
/// a three-element array instead of a comma string.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    synthetic: Option<usize>,
    arch: Option<String>,
    layers: Option<usize>,
    hidden: Option<usize>,
    lr: Option<f64>,
    wd: Option<f64>,
    dropout: Option<f64>,
    epochs: Option<usize>,
    batch: Option<usize>,
    split: Option<[f64; 3]>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| {
        let detail = e.to_string().replace('\n', " ");
        config_err(format!("config {}: {}", path.display(), detail.trim()))
    })
}

/// Where the graphs come from; recorded verbatim in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum DatasetSource {
    Directory { path: PathBuf },
    Synthetic { per_class: usize },
}

fn resolve_source(args: &DataArgs, file: &FileConfig) -> Result<DatasetSource, CliError> {
    let (data, synthetic) = if args.data.is_some() || args.synthetic.is_some() {
        (args.data.clone(), args.synthetic)
    } else {
        (file.data.clone(), file.synthetic)
    };
    match (data, synthetic) {
        (Some(_), Some(_)) => Err(config_err(
            "choose exactly one dataset source: --data DIR or --synthetic N",
        )),
        (Some(dir), None) => Ok(DatasetSource::Directory { path: dir }),
        (None, Some(n)) => Ok(DatasetSource::Synthetic { per_class: n }),
        (None, None) => Err(config_err(
            "a dataset is required: pass --data DIR or --synthetic N",
        )),
    }
}

fn load_dataset(source: &DatasetSource, synth_seed: u64) -> Result<LabeledGraphSet, CliError> {
    match source {
        DatasetSource::Directory { path } => {
            load_malnet_dir(path).map_err(|e| CliError::Data(e.to_string()))
        }
        DatasetSource::Synthetic { per_class } => {
            synth_families(*per_class, synth_seed).map_err(|e| CliError::Data(e.to_string()))
        }
    }
}

fn parse_split(text: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(config_err(format!(
            "--split needs three comma-separated fractions, got `{text}`"
        )));
    }
    let mut vals = [0.0f64; 3];
    for (slot, part) in vals.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| config_err(format!("--split fraction `{part}` is not a number")))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

fn resolve_split(
    flag: Option<&str>,
    file: &FileConfig,
) -> Result<(f64, f64, f64), CliError> {
    match (flag, file.split) {
        (Some(text), _) => parse_split(text),
        (None, Some([a, b, c])) => Ok((a, b, c)),
        (None, None) => Ok((0.7, 0.1, 0.2)),
    }
}

/// Component seeds derived from the root `--seed`, recorded in the manifest.
#[derive(Debug, Clone, Copy, Serialize)]
struct SubSeeds {
    split: u64,
    init: u64,
    dropout: u64,
    synth: u64,
}

fn sub_seeds(seed: u64) -> SubSeeds {
    SubSeeds {
        split: derive_seed(seed, "split"),
        init: derive_seed(seed, "init"),
        dropout: derive_seed(seed, "dropout"),
        synth: derive_seed(seed, "synth"),
    }
}

impl SubSeeds {
    fn run_seeds(&self) -> RunSeeds {
        RunSeeds { split: self.split, init: self.init, dropout: self.dropout }
    }
}

/// Hyperparameter overrides after merging flags over the config file.
#[derive(Debug, Default, Clone)]
struct Knobs {
    layers: Option<usize>,
    hidden: Option<usize>,
    lr: Option<f64>,
    wd: Option<f64>,
    dropout: Option<f64>,
    epochs: Option<usize>,
    batch: Option<usize>,
}

impl Knobs {
    fn merge(args: &TrainArgs, file: &FileConfig) -> Knobs {
        Knobs {
            layers: args.layers.or(file.layers),
            hidden: args.hidden.or(file.hidden),
            lr: args.lr.or(file.lr),
            wd: args.wd.or(file.wd),
            dropout: args.dropout.or(file.dropout),
            epochs: args.epochs.or(file.epochs),
            batch: args.batch.or(file.batch),
        }
    }
}

/// Builds the fully resolved model spec for `arch`, starting from that
/// model's defaults and applying any overrides. Also returns the names of
/// provided flags the architecture does not use.
fn build_spec(
    arch: &str,
    knobs: &Knobs,
    seed: u64,
) -> Result<(ModelSpec, Vec<&'static str>), CliError> {
    match arch {
        "mlp" => {
            let mut c = MlpConfig::default();
            if let Some(v) = knobs.layers {
                c.num_layers = v;
            }
            if let Some(v) = knobs.hidden {
                c.hidden_dim = v;
            }
            if let Some(v) = knobs.lr {
                c.learning_rate = v;
            }
            if let Some(v) = knobs.wd {
                c.weight_decay = v;
            }
            if let Some(v) = knobs.dropout {
                c.dropout_rate = v;
            }
            if let Some(v) = knobs.epochs {
                c.epochs = v;
            }
            if let Some(v) = knobs.batch {
                c.batch_size = v;
            }
            c.seed = seed;
            Ok((ModelSpec::Baseline(BaselineKind::Mlp(c)), Vec::new()))
        }
        "wl" | "feather" => {
            let mut linear = LinearConfig::default();
            if let Some(v) = knobs.lr {
                linear.learning_rate = v;
            }
            if let Some(v) = knobs.wd {
                linear.weight_decay = v;
            }
            if let Some(v) = knobs.epochs {
                linear.max_epochs = v;
            }
            let mut ignored = Vec::new();
            if knobs.hidden.is_some() {
                ignored.push("--hidden");
            }
            if knobs.dropout.is_some() {
                ignored.push("--dropout");
            }
            if knobs.batch.is_some() {
                ignored.push("--batch");
            }
            let kind = if arch == "wl" {
                BaselineKind::Wl { iterations: knobs.layers.unwrap_or(6), linear }
            } else {
                BaselineKind::Feather { scales: knobs.layers.unwrap_or(2), linear }
            };
            Ok((ModelSpec::Baseline(kind), ignored))
        }
        gnn => {
            let parsed: Arch = gnn.parse().map_err(|_| {
                config_err(format!(
                    "unknown architecture `{gnn}`: expected gcn|sage|gin|sgc|jk-gcn|\
                     jk-sage|jk-gin|mlp|wl|feather"
                ))
            })?;
            let mut c = ModelConfig::defaults_for(parsed);
            if let Some(v) = knobs.layers {
                c.num_layers = v;
            }
            if let Some(v) = knobs.hidden {
                c.hidden_dim = v;
            }
            if let Some(v) = knobs.lr {
                c.learning_rate = v;
            }
            if let Some(v) = knobs.wd {
                c.weight_decay = v;
            }
            if let Some(v) = knobs.dropout {
                c.dropout_rate = v;
            }
            if let Some(v) = knobs.epochs {
                c.epochs = v;
            }
            if let Some(v) = knobs.batch {
                c.batch_size = v;
            }
            c.seed = seed;
            Ok((ModelSpec::Gnn(c), Vec::new()))
        }
    }
}

fn require(ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(config_err(msg))
    }
}

fn validate_linear(c: &LinearConfig) -> Result<(), CliError> {
    require(c.learning_rate > 0.0 && c.learning_rate.is_finite(), "--lr must be positive")?;
    require(c.weight_decay >= 0.0 && c.weight_decay.is_finite(), "--wd must be nonnegative")?;
    require(c.max_epochs >= 1, "--epochs must be at least 1")
}

fn validate_spec(spec: &ModelSpec) -> Result<(), CliError> {
    match spec {
        ModelSpec::Gnn(c) => c.validate().map_err(|e| config_err(e.to_string())),
        ModelSpec::Baseline(BaselineKind::Mlp(c)) => {
            require(c.num_layers >= 1, "--layers must be at least 1")?;
            require(c.hidden_dim >= 1, "--hidden must be at least 1")?;
            require(c.learning_rate > 0.0 && c.learning_rate.is_finite(), "--lr must be positive")?;
            require(
                c.weight_decay >= 0.0 && c.weight_decay.is_finite(),
                "--wd must be nonnegative",
            )?;
            require(
                (0.0..1.0).contains(&c.dropout_rate),
                "--dropout must lie in [0, 1)",
            )?;
            require(c.batch_size >= 1, "--batch must be at least 1")
        }
        ModelSpec::Baseline(BaselineKind::Wl { linear, .. }) => validate_linear(linear),
        ModelSpec::Baseline(BaselineKind::Feather { scales, linear }) => {
            require(*scales >= 1, "--layers (FEATHER scales) must be at least 1")?;
            validate_linear(linear)
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest and artifact writing
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    dataset: &'a DatasetSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<[f64; 3]>,
    seed: u64,
    sub_seeds: SubSeeds,
    outputs: BTreeMap<&'static str, String>,
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    text
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::write(dir.join(name), contents).map_err(|e| {
        config_err(format!("cannot write {} in {}: {e}", name, dir.display()))
    })
}

fn require_out_dir(out: Option<PathBuf>, file: &FileConfig) -> Result<PathBuf, CliError> {
    let out = out
        .or_else(|| file.out.clone())
        .ok_or_else(|| config_err("an output directory is required: pass --out DIR"))?;
    require(
        out.is_dir(),
        &format!("output directory {} does not exist", out.display()),
    )?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let file = load_file_config(args.config.as_deref())?;
    let source = resolve_source(&args.data, &file)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let ratios = resolve_split(args.split.as_deref(), &file)?;
    let out = args
        .out
        .clone()
        .or_else(|| file.out.clone())
        .ok_or_else(|| config_err("an output directory is required: pass --out DIR"))?;
    let arch = args.arch.clone().or_else(|| file.arch.clone()).unwrap_or_else(|| "gcn".into());
    let knobs = Knobs::merge(&args, &file);
    let (spec, ignored) = build_spec(&arch, &knobs, seed)?;
    validate_spec(&spec)?;
    for flag in ignored {
        eprintln!("note: {flag} has no effect for --arch {arch}");
    }
    fs::create_dir_all(&out).map_err(|e| {
        config_err(format!("cannot create output directory {}: {e}", out.display()))
    })?;

    let seeds = sub_seeds(seed);
    let set = load_dataset(&source, seeds.synth)?;
    let result =
        train_pipeline(&set, &spec, ratios, seeds.run_seeds()).map_err(pipeline_error)?;

    checkpoint::save(&result.pipeline, &out.join("model.ckpt"))
        .map_err(|e| config_err(format!("cannot write checkpoint: {e}")))?;
    write_artifact(&out, "metrics.json", &result.metrics.to_json())?;
    write_artifact(&out, "confusion.csv", &result.metrics.confusion_csv(&set.class_names))?;
    write_artifact(&out, "history.csv", &result.history.to_csv())?;
    let outputs: BTreeMap<&'static str, String> = [
        ("checkpoint", "model.ckpt".to_string()),
        ("metrics", "metrics.json".to_string()),
        ("confusion", "confusion.csv".to_string()),
        ("history", "history.csv".to_string()),
    ]
    .into_iter()
    .collect();
    let manifest = Manifest {
        command: "train",
        dataset: &source,
        model: Some(&spec),
        checkpoint: Some("model.ckpt".into()),
        split: Some([ratios.0, ratios.1, ratios.2]),
        seed,
        sub_seeds: seeds,
        outputs,
    };
    write_artifact(&out, "manifest.json", &to_pretty_json(&manifest))?;

    for warning in &result.metrics.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "trained {} on {} graphs: test accuracy {:.4}, macro-F1 {:.4} ({} epochs, {:.1}s)",
        spec.name(),
        set.len(),
        result.metrics.accuracy,
        result.metrics.macro_f1,
        result.metrics.epochs_run,
        result.metrics.runtime_seconds,
    );
    Ok(())
}

fn load_checkpoint_for(set_source: &str, path: &Path) -> Result<TrainedPipeline, CliError> {
    checkpoint::load(path).map_err(|e| {
        config_err(format!("cannot {set_source} checkpoint {}: {e}", path.display()))
    })
}

fn check_classes(pipeline: &TrainedPipeline, set: &LabeledGraphSet) -> Result<(), CliError> {
    require(
        pipeline.class_names == set.class_names,
        &format!(
            "checkpoint classes [{}] do not match dataset classes [{}]",
            pipeline.class_names.join(", "),
            set.class_names.join(", ")
        ),
    )
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let file = load_file_config(args.config.as_deref())?;
    let source = resolve_source(&args.data, &file)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let ratios = resolve_split(args.split.as_deref(), &file)?;
    let out = require_out_dir(args.out.clone(), &file)?;
    let pipeline = load_checkpoint_for("evaluate", &args.checkpoint)?;

    let seeds = sub_seeds(seed);
    let set = load_dataset(&source, seeds.synth)?;
    check_classes(&pipeline, &set)?;
    let split = stratified_split(&set, ratios, seeds.split)
        .map_err(|e| CliError::Data(e.to_string()))?;
    if split.test.is_empty() {
        return Err(CliError::Data("the test split is empty".into()));
    }
    let graphs: Vec<_> = split.test.iter().map(|&i| set.graphs[i].clone()).collect();
    let labels: Vec<_> = split.test.iter().map(|&i| set.labels[i]).collect();

    let start = Instant::now();
    let mut metrics = pipeline.evaluate(&graphs, &labels).map_err(pipeline_error)?;
    metrics.runtime_seconds = start.elapsed().as_secs_f64();

    write_artifact(&out, "metrics.json", &metrics.to_json())?;
    write_artifact(&out, "confusion.csv", &metrics.confusion_csv(&set.class_names))?;
    let outputs: BTreeMap<&'static str, String> = [
        ("metrics", "metrics.json".to_string()),
        ("confusion", "confusion.csv".to_string()),
    ]
    .into_iter()
    .collect();
    let manifest = Manifest {
        command: "eval",
        dataset: &source,
        model: None,
        checkpoint: Some(args.checkpoint.display().to_string()),
        split: Some([ratios.0, ratios.1, ratios.2]),
        seed,
        sub_seeds: seeds,
        outputs,
    };
    write_artifact(&out, "manifest.json", &to_pretty_json(&manifest))?;

    for warning in &metrics.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "evaluated {} on {} test graphs: accuracy {:.4}, macro-F1 {:.4}",
        pipeline.model_kind(),
        graphs.len(),
        metrics.accuracy,
        metrics.macro_f1,
    );
    Ok(())
}

fn cmd_embed(args: EmbedArgs) -> Result<(), CliError> {
    let file = load_file_config(args.config.as_deref())?;
    let source = resolve_source(&args.data, &file)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let out = require_out_dir(args.out.clone(), &file)?;
    let pipeline = load_checkpoint_for("embed with", &args.checkpoint)?;

    let seeds = sub_seeds(seed);
    let set = load_dataset(&source, seeds.synth)?;
    check_classes(&pipeline, &set)?;
    let embeddings = pipeline.embeddings(&set.graphs).map_err(pipeline_error)?;

    let mut csv = String::from("graph_id,label");
    for j in 0..embeddings.cols() {
        let _ = write!(csv, ",e{j}");
    }
    csv.push('\n');
    for i in 0..embeddings.rows() {
        let _ = write!(csv, "{},{}", set.source_ids[i], set.class_names[set.labels[i]]);
        for j in 0..embeddings.cols() {
            let _ = write!(csv, ",{}", embeddings.get(i, j));
        }
        csv.push('\n');
    }
    write_artifact(&out, "embeddings.csv", &csv)?;
    let outputs: BTreeMap<&'static str, String> =
        [("embeddings", "embeddings.csv".to_string())].into_iter().collect();
    let manifest = Manifest {
        command: "embed",
        dataset: &source,
        model: None,
        checkpoint: Some(args.checkpoint.display().to_string()),
        split: None,
        seed,
        sub_seeds: seeds,
        outputs,
    };
    write_artifact(&out, "manifest.json", &to_pretty_json(&manifest))?;

    println!(
        "wrote {} embeddings of width {} from the {} model",
        embeddings.rows(),
        embeddings.cols(),
        pipeline.model_kind(),
    );
    Ok(())
}

fn stats_table(rows: &[FamilyStats]) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<16} {:>8} {:>8} {:>8} {:>10} {:>8} {:>8} {:>8} {:>10} {:>8}",
        "family", "v_min", "v_max", "v_med", "v_std", "e_min", "e_max", "e_med", "e_std", "deg",
    );
    for r in rows {
        let _ = writeln!(
            text,
            "{:<16} {:>8} {:>8} {:>8} {:>10.1} {:>8} {:>8} {:>8} {:>10.1} {:>8.3}",
            r.family,
            r.vertices.min,
            r.vertices.max,
            r.vertices.median,
            r.vertices.std,
            r.edges.min,
            r.edges.max,
            r.edges.median,
            r.edges.std,
            r.avg_degree,
        );
    }
    text
}

fn stats_csv(rows: &[FamilyStats]) -> String {
    let mut csv = String::from(
        "family,count,vertices_min,vertices_max,vertices_median,vertices_std,\
         edges_min,edges_max,edges_median,edges_std,avg_degree\n",
    );
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.family,
            r.count,
            r.vertices.min,
            r.vertices.max,
            r.vertices.median,
            r.vertices.std,
            r.edges.min,
            r.edges.max,
            r.edges.median,
            r.edges.std,
            r.avg_degree,
        );
    }
    csv
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let file = load_file_config(args.config.as_deref())?;
    let source = resolve_source(&args.data, &file)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);

    let seeds = sub_seeds(seed);
    let set = load_dataset(&source, seeds.synth)?;
    let rows = family_stats(&set).map_err(|e| CliError::Data(e.to_string()))?;
    print!("{}", stats_table(&rows));

    if let Some(out) = args.out.clone().or_else(|| file.out.clone()) {
        require(
            out.is_dir(),
            &format!("output directory {} does not exist", out.display()),
        )?;
        write_artifact(&out, "stats.csv", &stats_csv(&rows))?;
        let outputs: BTreeMap<&'static str, String> =
            [("stats", "stats.csv".to_string())].into_iter().collect();
        let manifest = Manifest {
            command: "stats",
            dataset: &source,
            model: None,
            checkpoint: None,
            split: None,
            seed,
            sub_seeds: seeds,
            outputs,
        };
        write_artifact(&out, "manifest.json", &to_pretty_json(&manifest))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Stats(args) => cmd_stats(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests arrive here too; those exit 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

// ---------------------------------------------------------------------------
