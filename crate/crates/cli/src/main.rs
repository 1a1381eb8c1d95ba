//! `hypersfda`: generate shifted datasets, pretrain on the source domain,
//! adapt to the target domain and evaluate checkpoints.

mod settings;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use hypersfda::datagen::{gen_gaussian_domains, gen_two_moons_domains, load_dataset, save_dataset, ShiftSpec};
use hypersfda::model::{pretrain_source, PretrainConfig};
use hypersfda::trainer::{evaluate, load_model, save_model, AdaptConfig, Trainer};
use hypersfda::{AdaptModel, Error};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use settings::{read_config_file, resolve, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "hypersfda", version, about = "Source-free domain adaptation with hypergraph neighborhood clustering")]
struct Cli {
    /// Seed for generation, initialization and shuffling
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON settings file, or a run manifest to repeat; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Only print results, no progress
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a source/target pair of synthetic embedding datasets
    Gen(GenArgs),
    /// Train the model on a labeled source dataset
    Pretrain(PretrainArgs),
    /// Adapt a source checkpoint to a target dataset
    Adapt(AdaptArgs),
    /// Print accuracy and neighbor metrics of a checkpoint as one JSON line
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Kind {
    Gaussian,
    TwoMoons,
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    /// Generator
    #[arg(long, value_enum, default_value_t = Kind::Gaussian)]
    kind: Kind,
    /// Number of classes (gaussian only, at least 2)
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Embedding dimension
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Source sample count
    #[arg(long, default_value_t = 800)]
    n_source: usize,
    /// Target sample count
    #[arg(long, default_value_t = 800)]
    n_target: usize,
    /// Target rotation in degrees
    #[arg(long, default_value_t = 0.0)]
    rotate_deg: f64,
    /// Target translation, comma separated, one value per dimension [default: none]
    #[arg(long, value_delimiter = ',')]
    translation: Vec<f64>,
    /// Extra target noise standard deviation
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Target class weights, comma separated [default: balanced]
    #[arg(long, value_delimiter = ',')]
    prior_drift: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenSettings {
    kind: Kind,
    classes: usize,
    dim: usize,
    n_source: usize,
    n_target: usize,
    rotate_deg: f64,
    translation: Vec<f64>,
    noise: f64,
    prior_drift: Option<Vec<f64>>,
    seed: u64,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self {
            kind: Kind::Gaussian,
            classes: 4,
            dim: 16,
            n_source: 800,
            n_target: 800,
            rotate_deg: 0.0,
            translation: Vec::new(),
            noise: 0.0,
            prior_drift: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct PretrainArgs {
    /// Labeled source dataset
    #[arg(long)]
    #[serde(skip)]
    source: PathBuf,
    /// Adapter output width [default: input dimension]
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    label_smoothing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PretrainSettings {
    feature_dim: Option<usize>,
    epochs: usize,
    lr: f64,
    momentum: f64,
    batch_size: usize,
    label_smoothing: f64,
    seed: u64,
}

impl Default for PretrainSettings {
    fn default() -> Self {
        let p = PretrainConfig::default();
        Self {
            feature_dim: None,
            epochs: p.epochs,
            lr: p.lr,
            momentum: p.momentum,
            batch_size: p.batch_size,
            label_smoothing: p.label_smoothing,
            seed: p.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum VariantArg {
    Full,
    NoSelfLoop,
    Pairwise,
}

#[derive(Debug, Args, Serialize)]
struct AdaptArgs {
    /// Source checkpoint from `pretrain`
    #[arg(long)]
    #[serde(skip)]
    model: PathBuf,
    /// Target dataset; labels, when present, are only used for metrics
    #[arg(long)]
    #[serde(skip)]
    target: PathBuf,
    /// Hyperedge degree, anchor included
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Iterations between hypergraph refreshes
    #[arg(long, default_value_t = 50)]
    t_in: u64,
    /// Norm penalty of the affinity solve
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    /// Close-set size
    #[arg(long, default_value_t = 3)]
    h: usize,
    /// Distance sharpness of the relation weights
    #[arg(long, default_value_t = 7.0)]
    gamma: f64,
    /// EMA factor of the target predictions
    #[arg(long, default_value_t = 0.8)]
    delta: f64,
    /// KL regularizer weight
    #[arg(long, default_value_t = 2.0)]
    eta: f64,
    /// Decay exponent of the push weight
    #[arg(long, default_value_t = 0.25)]
    beta: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    /// Compressed relation width [default: min(64, n-1)]
    #[arg(long)]
    m_prime: Option<usize>,
    /// Train only on low-entropy target samples
    #[arg(long)]
    open_set: bool,
    /// Clustering path
    #[arg(long, value_enum, default_value_t = VariantArg::Full)]
    variant: VariantArg,
    /// Iteration cap of the affinity solver
    #[arg(long, default_value_t = 2000)]
    nnls_max_iter: usize,
    /// Affinity solver step tolerance
    #[arg(long, default_value_t = 1e-8)]
    nnls_step_tol: f64,
    /// Affinity solver KKT tolerance
    #[arg(long, default_value_t = 1e-7)]
    nnls_kkt_tol: f64,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Model or training checkpoint
    #[arg(long)]
    #[serde(skip)]
    model: PathBuf,
    /// Labeled dataset
    #[arg(long)]
    #[serde(skip)]
    data: PathBuf,
    /// Neighbors per sample for the agreement metric
    #[arg(long, default_value_t = 3)]
    h: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct EvalSettings {
    h: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { h: 3 }
    }
}

/// A message and the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    pub fn usage(msg: String) -> Self {
        Self { code: 2, msg }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::NonFiniteLoss { .. }) { 3 } else { 2 };
        Self { code, msg: e.to_string() }
    }
}

struct Globals {
    seed: u64,
    file: Option<Value>,
    out: PathBuf,
    quiet: bool,
}

impl Globals {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out_dir(&self) -> Result<&Path, Failure> {
        fs::create_dir_all(&self.out).map_err(|e| Failure::usage(format!("{}: {e}", self.out.display())))?;
        Ok(&self.out)
    }
}

/// Serializes the argument struct and adds the global seed.
fn flag_values(args: &impl Serialize, seed: u64) -> Value {
    let mut v = serde_json::to_value(args).expect("arguments serialize");
    v.as_object_mut().expect("arguments are structs").insert("seed".into(), seed.into());
    v
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}

fn cmd_gen(args: &GenArgs, g: &Globals, m: &ArgMatches) -> Result<(), Failure> {
    let s: GenSettings = resolve(g.file.clone(), flag_values(args, g.seed), m)?;
    let dir = g.out_dir()?;
    let manifest_path = dir.join("gen.manifest.json");
    let (source_path, target_path) = (dir.join("source.csv"), dir.join("target.csv"));
    let mut manifest = RunManifest::start("gen", s.seed, &s)?;
    manifest.output("source", &source_path);
    manifest.output("target", &target_path);
    manifest.write(&manifest_path)?;

    let shift = ShiftSpec {
        rotation_angle: s.rotate_deg.to_radians(),
        translation: s.translation.clone(),
        noise_sigma: s.noise,
        class_prior_drift: s.prior_drift.clone(),
        seed: s.seed,
    };
    let (source, target) = match s.kind {
        Kind::Gaussian => gen_gaussian_domains(s.classes, s.dim, s.n_source, s.n_target, &shift, s.seed)?,
        Kind::TwoMoons => gen_two_moons_domains(s.dim, s.n_source, s.n_target, &shift, s.seed)?,
    };
    save_dataset(&source, &source_path)?;
    save_dataset(&target, &target_path)?;
    g.note(format!("wrote {} and {}", source_path.display(), target_path.display()));
    manifest.finish(&manifest_path)
}

fn cmd_pretrain(args: &PretrainArgs, g: &Globals, m: &ArgMatches) -> Result<(), Failure> {
    let s: PretrainSettings = resolve(g.file.clone(), flag_values(args, g.seed), m)?;
    let source = load_dataset(&args.source)?;
    if !source.is_labeled() {
        return Err(Failure::usage(format!("{}: pretraining needs a labeled dataset", args.source.display())));
    }
    let dir = g.out_dir()?;
    let manifest_path = dir.join("pretrain.manifest.json");
    let model_path = dir.join("source.hsfd");
    let mut manifest = RunManifest::start("pretrain", s.seed, &s)?;
    manifest.input("source", &args.source);
    manifest.output("model", &model_path);
    manifest.write(&manifest_path)?;

    let model = AdaptModel::new(source.dim(), s.feature_dim.unwrap_or(source.dim()), source.class_count(), s.seed)?;
    let config = PretrainConfig {
        epochs: s.epochs,
        lr: s.lr,
        momentum: s.momentum,
        batch_size: s.batch_size,
        label_smoothing: s.label_smoothing,
        seed: s.seed,
    };
    let report = pretrain_source(model, &source, &config)?;
    save_model(&report.model, &model_path)?;
    println!("source accuracy: {}", report.accuracy);
    g.note(format!("wrote {}", model_path.display()));
    manifest.finish(&manifest_path)
}

fn cmd_adapt(args: &AdaptArgs, g: &Globals, m: &ArgMatches) -> Result<(), Failure> {
    let config: AdaptConfig = resolve(g.file.clone(), flag_values(args, g.seed), m)?;
    let model = load_model(&args.model)?;
    let target = load_dataset(&args.target)?;
    let trainer = Trainer::new(model, &target, config.clone())?;

    let dir = g.out_dir()?;
    let manifest_path = dir.join("adapt.manifest.json");
    let model_path = dir.join("adapted.hsfd");
    let metrics_path = dir.join("metrics.jsonl");
    let abort_path = dir.join("abort.state");
    let mut manifest = RunManifest::start("adapt", config.seed, &config)?;
    manifest.input("model", &args.model);
    manifest.input("target", &args.target);
    manifest.output("model", &model_path);
    manifest.output("metrics", &metrics_path);
    manifest.write(&manifest_path)?;

    let file = File::create(&metrics_path).map_err(|e| io_failure(&metrics_path, e))?;
    let mut metrics = BufWriter::new(file);
    let outcome = trainer.run(Some(&abort_path), |rec| {
        writeln!(metrics, "{}", rec.to_json_line()?).map_err(|e| Error::Io { path: metrics_path.clone(), source: e })?;
        if let (Some(acc), Some(agree)) = (rec.acc, rec.neighbor_agreement) {
            g.note(format!("iter {:>6}  acc {acc:.4}  neighbor agreement {agree:.4}", rec.iter));
        }
        Ok(())
    });
    metrics.flush().map_err(|e| io_failure(&metrics_path, e))?;
    let outcome = outcome?;
    save_model(&outcome.model, &model_path)?;
    if let Some(acc) = outcome.metrics.last().and_then(|r| r.acc) {
        println!("target accuracy: {acc}");
    }
    g.note(format!("wrote {} and {}", model_path.display(), metrics_path.display()));
    manifest.finish(&manifest_path)
}

fn cmd_eval(args: &EvalArgs, g: &Globals, m: &ArgMatches) -> Result<(), Failure> {
    let s: EvalSettings = resolve(g.file.clone(), flag_values(args, g.seed), m)?;
    let model = load_model(&args.model)?;
    let data = load_dataset(&args.data)?;
    if !data.is_labeled() {
        return Err(Failure::usage(format!("{}: evaluation needs a labeled dataset", args.data.display())));
    }
    let record = evaluate(&model, &data, None, s.h)?;
    println!("{}", record.to_json_line()?);
    Ok(())
}

fn run() -> Result<(), Failure> {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let (_, sub) = matches.subcommand().expect("a subcommand is required");
    let file = cli.config.as_deref().map(read_config_file).transpose()?;
    let g = Globals { seed: cli.seed, file, out: cli.out.clone(), quiet: cli.quiet };
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, &g, sub),
        Command::Pretrain(a) => cmd_pretrain(a, &g, sub),
        Command::Adapt(a) => cmd_adapt(a, &g, sub),
        Command::Eval(a) => cmd_eval(a, &g, sub),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
