//! The `homoenc` command line: gen-data, train, eval, sweep and verify.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 usage, 3 I/O, 4 numeric
//! abort. Every subcommand accepts `--config file.json` holding an
//! [`ExperimentConfig`]; flags given on the command line win over the file,
//! and the `HOMOENC_SEED` environment variable supplies the seed when
//! neither sets one.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dists::Family;
use crate::eval::{self, EvalConfig, EvalError, MetricRecord, Provenance, ScoreRule};
use crate::model::{ModelError, ModelParams};
use crate::objectives::ObjectiveKind;
use crate::synthdata::{
    generate, generate_factorial, generate_hierarchical, DataError, Dataset, Hyper, Structure,
};
use crate::train::{select_best, train_all, TrainConfig, TrainError};
use crate::verify::{self, Suite, VerifyConfig};

pub const SEED_ENV: &str = "HOMOENC_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Verify(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn at(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Io(m) => CliError::Io(format!("{p}: {m}")),
            CliError::Usage(m) => CliError::Usage(format!("{p}: {m}")),
            other => other,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(_) | DataError::Usage(_) => CliError::Usage(e.to_string()),
            DataError::Io(_) | DataError::Parse { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_) | ModelError::Parse(_) => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Usage(m),
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Data(d) => d.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(_) | EvalError::Csv(_) => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------- configuration

/// Synthetic dataset recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub family: Family,
    pub structure: Structure,
    pub classes: usize,
    pub per_class: usize,
    pub groups: usize,
    pub classes_per_group: usize,
    pub contents: usize,
    pub styles: usize,
    pub seed: u64,
    pub hyper: Hyper,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            family: Family::Gaussian,
            structure: Structure::Flat,
            classes: 100,
            per_class: 100,
            groups: 10,
            classes_per_group: 10,
            contents: 4,
            styles: 3,
            seed: 0,
            hyper: Hyper::default(),
        }
    }
}

impl GenSpec {
    pub fn generate(&self) -> std::result::Result<Dataset, DataError> {
        if self.structure != Structure::Flat && self.family != Family::Gaussian {
            return Err(DataError::Usage(format!(
                "{:?} structure is only defined for the gaussian family",
                self.structure
            )));
        }
        match self.structure {
            Structure::Flat => generate(
                self.family,
                self.classes,
                self.per_class,
                self.seed,
                &self.hyper,
            ),
            Structure::Hierarchical => generate_hierarchical(
                self.groups,
                self.classes_per_group,
                self.per_class,
                self.seed,
                &self.hyper,
            ),
            Structure::Factorial => generate_factorial(
                self.contents,
                self.styles,
                self.per_class,
                self.seed,
                &self.hyper,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DataSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub generate: GenSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub objectives: Vec<ObjectiveKind>,
    pub d_sizes: Vec<usize>,
    pub families: Vec<Family>,
    /// Classes in each family's held-out evaluation set.
    pub test_classes: usize,
    /// Worker threads; 0 uses every core. Not recorded, since results do
    /// not depend on it.
    #[serde(skip_serializing)]
    pub jobs: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            objectives: vec![
                ObjectiveKind::Vhe,
                ObjectiveKind::Ns,
                ObjectiveKind::Resample,
                ObjectiveKind::Rescale,
            ],
            d_sizes: vec![1, 2, 5, 10],
            families: vec![Family::Gaussian],
            test_classes: 20,
            jobs: 0,
        }
    }
}

/// Everything one experiment needs; written resolved into every output
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub eval_d_sizes: Vec<usize>,
    pub sweep: SweepSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSpec::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            eval_d_sizes: vec![1, 2, 5, 10],
            sweep: SweepSpec::default(),
            output_dir: None,
        }
    }
}

/// A config file plus a record of which fields it set explicitly.
struct Loaded {
    config: ExperimentConfig,
    raw: Value,
}

impl Loaded {
    fn from(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Loaded {
                config: ExperimentConfig::default(),
                raw: Value::Null,
            });
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::from(e).at(path))?;
        let raw: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let config = serde_json::from_value(raw.clone())
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok(Loaded { config, raw })
    }

    fn sets(&self, pointer: &str) -> bool {
        self.raw.pointer(pointer).is_some()
    }

    /// Seed resolution: flag, then config file, then environment, then 0.
    fn seed(&self, flag: Option<u64>, pointer: &str, current: u64) -> Result<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if self.sets(pointer) {
            return Ok(current);
        }
        env_seed().map(|s| s.unwrap_or(0))
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            v.trim().parse().map(Some).map_err(|_| {
                CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            })
        }
        Err(_) => Ok(None),
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("config serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::from(e).at(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::from(e).at(path))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).map_err(|e| CliError::from(e).at(path))
}

// ---------------------------------------------------------------- arguments

#[derive(Parser, Debug)]
#[command(
    name = "homoenc",
    version,
    about = "Episodic variational objectives on tractable 1D model families"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[allow(clippy::large_enum_variant)]
#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset as JSON lines.
    GenData(GenArgs),
    /// Train restarts of one objective and keep the best.
    Train(TrainArgs),
    /// Compute the metric suite of a trained model.
    Eval(EvalArgs),
    /// Train and evaluate a grid of objectives, support sizes and families.
    Sweep(SweepArgs),
    /// Run the property suites.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    structure: Option<Structure>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    classes_per_group: Option<usize>,
    #[arg(long)]
    contents: Option<usize>,
    #[arg(long)]
    styles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Training hyperparameters shared by train and sweep.
#[derive(Args, Debug, Default)]
struct TrainFlags {
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    anneal_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    episodes_per_class: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Multiplies every KL weight.
    #[arg(long)]
    kl_weight: Option<f64>,
    /// Condition the per-element latent on c (vhe_z only).
    #[arg(long)]
    z_on_c: bool,
    /// Hold parameter slices with this name prefix fixed (repeatable).
    #[arg(long = "freeze")]
    frozen: Vec<String>,
}

impl TrainFlags {
    fn apply(self, t: &mut TrainConfig) {
        set(&mut t.latent_dim, self.latent_dim);
        set(&mut t.epochs, self.epochs);
        set(&mut t.anneal_epochs, self.anneal_epochs);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.adam.lr, self.lr);
        set(&mut t.runs, self.runs);
        set(&mut t.episodes_per_class, self.episodes_per_class);
        set(&mut t.objective.mc_samples, self.mc_samples);
        if self.kl_weight.is_some() {
            t.objective.kl_weight_override = self.kl_weight;
        }
        if self.z_on_c {
            t.z_conditions_on_c = true;
        }
        if !self.frozen.is_empty() {
            t.frozen = self.frozen;
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    objective: Option<ObjectiveKind>,
    #[arg(long)]
    d_size: Option<usize>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Oracle {
    Quadrature,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ScoreRuleArg {
    ExpectedLikelihood,
    MeanLogLikelihood,
}

/// Metric settings shared by eval and sweep.
#[derive(Args, Debug, Default)]
struct EvalFlags {
    /// Importance samples for the joint NLL.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mc_outer: Option<usize>,
    #[arg(long)]
    n_way: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    heldout: Option<usize>,
    #[arg(long)]
    classification_episodes: Option<usize>,
    #[arg(long, value_enum)]
    score_rule: Option<ScoreRuleArg>,
    #[arg(long, value_enum)]
    oracle: Option<Oracle>,
    #[arg(long)]
    nodes: Option<usize>,
}

impl EvalFlags {
    fn apply(self, e: &mut EvalConfig) {
        set(&mut e.k, self.k);
        set(&mut e.mc_outer, self.mc_outer);
        set(&mut e.n_way, self.n_way);
        set(&mut e.episodes_per_class, self.eval_episodes);
        set(&mut e.heldout, self.heldout);
        set(&mut e.classification_episodes, self.classification_episodes);
        set(&mut e.nodes, self.nodes);
        if let Some(r) = self.score_rule {
            e.score_rule = match r {
                ScoreRuleArg::ExpectedLikelihood => ScoreRule::ExpectedLikelihood,
                ScoreRuleArg::MeanLogLikelihood => ScoreRule::MeanLogLikelihood,
            };
        }
        if self.oracle == Some(Oracle::Quadrature) {
            e.quadrature = true;
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    d_sizes: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Objective tag for the records; read from the checkpoint's config.json
    /// when omitted.
    #[arg(long)]
    tag: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Append to an existing CSV instead of replacing it.
    #[arg(long)]
    append: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: EvalFlags,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    objectives: Option<Vec<ObjectiveKind>>,
    #[arg(long, value_delimiter = ',')]
    d_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<Family>>,
    #[arg(long, value_delimiter = ',')]
    eval_d_sizes: Option<Vec<usize>>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    test_classes: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suites to run (repeatable); all when omitted.
    #[arg(long = "suite")]
    suites: Vec<Suite>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grad_points: Option<usize>,
    #[arg(long)]
    bound_episodes: Option<usize>,
}

// ---------------------------------------------------------------- commands

pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parses `args` (program name first) and runs the command, returning the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_gen_data(a: GenArgs) -> Result<()> {
    let loaded = Loaded::from(a.config.as_deref())?;
    let mut g = loaded.config.data.generate.clone();
    set(&mut g.family, a.family);
    set(&mut g.structure, a.structure);
    set(&mut g.classes, a.classes);
    set(&mut g.per_class, a.per_class);
    set(&mut g.groups, a.groups);
    set(&mut g.classes_per_group, a.classes_per_group);
    set(&mut g.contents, a.contents);
    set(&mut g.styles, a.styles);
    g.seed = loaded.seed(a.seed, "/data/generate/seed", g.seed)?;
    let ds = g.generate()?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    ds.save(&a.out).map_err(|e| CliError::from(e).at(&a.out))?;
    println!(
        "wrote {}: {} classes, {} elements, seed {}",
        a.out.display(),
        ds.classes.len(),
        ds.total_elements(),
        ds.meta.seed
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let loaded = Loaded::from(a.config.as_deref())?;
    let mut cfg = loaded.config.clone();
    set(&mut cfg.train.objective.kind, a.objective);
    set(&mut cfg.train.objective.d_size, a.d_size);
    cfg.train.seed = loaded.seed(a.seed, "/train/seed", cfg.train.seed)?;
    a.flags.apply(&mut cfg.train);
    if a.data.is_some() {
        cfg.data.path = a.data;
    }
    if a.out.is_some() {
        cfg.output_dir = a.out;
    }
    let data = cfg
        .data
        .path
        .clone()
        .ok_or_else(|| CliError::Usage("train needs --data".into()))?;
    let out = cfg
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Usage("train needs --out".into()))?;
    cfg.train.validate()?;
    create_dir(&out)?;
    write_json(&out.join("config.json"), &cfg)?;
    let ds = load_dataset(&data)?;
    train_into(&ds, &cfg.train, &out, true)?;
    Ok(())
}

/// Trains every restart, writes the best run's checkpoint and history into
/// `out`, and returns the checkpoint. A numeric abort leaves a FAILED marker.
fn train_into(ds: &Dataset, cfg: &TrainConfig, out: &Path, verbose: bool) -> Result<ModelParams> {
    let histories = match train_all(ds, cfg) {
        Ok(h) => h,
        Err(e) => {
            let err = CliError::from(e);
            if let CliError::Numeric(m) = &err {
                fs::write(out.join("FAILED"), format!("{m}\n"))?;
            }
            return Err(err);
        }
    };
    let best = select_best(&histories).expect("at least one run");
    let h = &histories[best];
    h.params
        .save(out.join("model.json"))
        .map_err(|e| CliError::from(e).at(&out.join("model.json")))?;
    fs::write(out.join("history.csv"), h.to_csv())?;
    if let Some(aux) = &h.aux {
        write_json(&out.join("aux.json"), aux)?;
    }
    if verbose {
        println!(
            "{}: best of {} runs is run {} (final loss {:.6})",
            cfg.objective.kind,
            histories.len(),
            best,
            h.final_loss()
        );
    }
    Ok(h.params.clone())
}

fn write_records(path: &Path, records: &[MetricRecord], append: bool) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let existing = append && fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
    let file = if existing {
        fs::OpenOptions::new().append(true).open(path)
    } else {
        fs::File::create(path)
    }
    .map_err(|e| CliError::from(e).at(path))?;
    eval::write_csv(records, std::io::BufWriter::new(file), !existing)
        .map_err(|e| CliError::from(e).at(path))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let loaded = Loaded::from(a.config.as_deref())?;
    let mut cfg = loaded.config.clone();
    cfg.eval.seed = loaded.seed(a.seed, "/eval/seed", cfg.eval.seed)?;
    a.flags.apply(&mut cfg.eval);
    set(&mut cfg.eval_d_sizes, a.d_sizes);
    if a.data.is_some() {
        cfg.data.path = a.data;
    }
    let data = cfg
        .data
        .path
        .clone()
        .ok_or_else(|| CliError::Usage("eval needs --data".into()))?;
    cfg.eval.validate()?;
    let model = ModelParams::load(&a.model).map_err(|e| CliError::from(e).at(&a.model))?;
    let trained = a
        .model
        .parent()
        .map(|d| d.join("config.json"))
        .filter(|p| p.exists());
    let trained: Option<ExperimentConfig> = match trained {
        Some(p) => Some(Loaded::from(Some(&p))?.config),
        None => None,
    };
    let prov = Provenance {
        objective: a.tag.unwrap_or_else(|| {
            trained
                .as_ref()
                .map_or("unknown".into(), |c| c.train.objective.kind.to_string())
        }),
        seed: trained.as_ref().map_or(cfg.eval.seed, |c| c.train.seed),
    };
    let ds = load_dataset(&data)?;
    let records = eval::run_metric_suite(&model, &ds, &cfg.eval_d_sizes, &cfg.eval, &prov)?;
    write_records(&a.out, &records, a.append)?;
    println!(
        "wrote {} metric records to {}",
        records.len(),
        a.out.display()
    );
    Ok(())
}

/// One (family, objective, support size) cell of a sweep.
#[derive(Debug, Clone)]
struct Cell {
    family: Family,
    objective: ObjectiveKind,
    d_size: usize,
}

impl Cell {
    fn dir_name(&self) -> String {
        format!("{}-{}-d{}", self.family, self.objective, self.d_size)
    }
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let loaded = Loaded::from(a.config.as_deref())?;
    let mut cfg = loaded.config.clone();
    set(&mut cfg.sweep.objectives, a.objectives);
    set(&mut cfg.sweep.d_sizes, a.d_sizes);
    set(&mut cfg.sweep.families, a.families);
    set(&mut cfg.sweep.test_classes, a.test_classes);
    set(&mut cfg.sweep.jobs, a.jobs);
    set(&mut cfg.eval_d_sizes, a.eval_d_sizes);
    set(&mut cfg.data.generate.classes, a.classes);
    set(&mut cfg.data.generate.per_class, a.per_class);
    cfg.data.generate.seed =
        loaded.seed(a.data_seed, "/data/generate/seed", cfg.data.generate.seed)?;
    cfg.train.seed = loaded.seed(a.seed, "/train/seed", cfg.train.seed)?;
    cfg.eval.seed = cfg.train.seed;
    a.train.apply(&mut cfg.train);
    a.eval.apply(&mut cfg.eval);
    if a.out.is_some() {
        cfg.output_dir = a.out;
    }
    let out = cfg
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Usage("sweep needs --out".into()))?;
    cfg.train.validate()?;
    cfg.eval.validate()?;
    let s = &cfg.sweep;
    if s.objectives.is_empty()
        || s.d_sizes.is_empty()
        || s.families.is_empty()
        || cfg.eval_d_sizes.is_empty()
    {
        return Err(CliError::Usage(
            "sweep needs at least one objective, d_size, family and eval d_size".into(),
        ));
    }
    create_dir(&out.join("data"))?;
    create_dir(&out.join("cells"))?;
    write_json(&out.join("config.json"), &cfg)?;

    let mut data = Vec::new();
    for &family in &s.families {
        let mut g = GenSpec {
            family,
            structure: Structure::Flat,
            ..cfg.data.generate.clone()
        };
        let train = g.generate()?;
        g.classes = s.test_classes;
        g.seed = g.seed.wrapping_add(0x7e57);
        let test = g.generate()?;
        for (ds, split) in [(&train, "train"), (&test, "test")] {
            let path = out.join("data").join(format!("{family}-{split}.jsonl"));
            ds.save(&path).map_err(|e| CliError::from(e).at(&path))?;
        }
        data.push((family, train, test));
    }
    let cells: Vec<Cell> = s
        .families
        .iter()
        .flat_map(|&family| {
            s.objectives.iter().flat_map(move |&objective| {
                s.d_sizes.iter().map(move |&d_size| Cell {
                    family,
                    objective,
                    d_size,
                })
            })
        })
        .collect();

    let jobs = if s.jobs == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        s.jobs
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let outcomes: Vec<Result<bool>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let (_, train, test) = data
                    .iter()
                    .find(|(f, _, _)| *f == cell.family)
                    .expect("dataset per family");
                run_cell(
                    cell,
                    &cfg,
                    train,
                    test,
                    &out.join("cells").join(cell.dir_name()),
                )
            })
            .collect()
    });

    let mut merged = Vec::new();
    let mut failures = Vec::new();
    let (mut trained, mut skipped) = (0, 0);
    for (cell, outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok(ran) => {
                if ran {
                    trained += 1;
                } else {
                    skipped += 1;
                }
                let path = out.join("cells").join(cell.dir_name()).join("metrics.csv");
                let file = fs::File::open(&path).map_err(|e| CliError::from(e).at(&path))?;
                merged.extend(eval::read_csv(file).map_err(|e| CliError::from(e).at(&path))?);
            }
            Err(e) => failures.push((cell.dir_name(), e)),
        }
    }
    write_records(&out.join("metrics.csv"), &merged, false)?;
    println!(
        "sweep: {} cells ({trained} trained, {skipped} already complete, {} failed); {} records in {}",
        cells.len(),
        failures.len(),
        merged.len(),
        out.join("metrics.csv").display()
    );
    if let Some(code) = failures.iter().map(|(_, e)| e.exit_code()).max() {
        for (name, e) in &failures {
            eprintln!("cell {name} failed: {e}");
        }
        let msg = format!("{} of {} sweep cells failed", failures.len(), cells.len());
        return Err(match code {
            4 => CliError::Numeric(msg),
            3 => CliError::Io(msg),
            _ => CliError::Usage(msg),
        });
    }
    Ok(())
}

/// Trains and evaluates one cell unless its DONE marker exists. Returns
/// whether any work was done.
fn run_cell(
    cell: &Cell,
    base: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    dir: &Path,
) -> Result<bool> {
    if dir.join("DONE").exists() {
        return Ok(false);
    }
    create_dir(dir)?;
    let _ = fs::remove_file(dir.join("FAILED"));
    let mut cfg = base.clone();
    cfg.train.objective.kind = cell.objective;
    cfg.train.objective.d_size = cell.d_size;
    cfg.data.generate.family = cell.family;
    cfg.output_dir = None;
    write_json(&dir.join("config.json"), &cfg)?;
    let result = (|| {
        let model = train_into(train, &cfg.train, dir, false)?;
        let prov = Provenance {
            objective: cell.objective.to_string(),
            seed: cfg.train.seed,
        };
        let records = eval::run_metric_suite(&model, test, &base.eval_d_sizes, &cfg.eval, &prov)?;
        write_records(&dir.join("metrics.csv"), &records, false)
    })();
    match result {
        Ok(()) => {
            fs::write(dir.join("DONE"), "")?;
            Ok(true)
        }
        Err(e) => {
            fs::write(dir.join("FAILED"), format!("{e}\n"))?;
            Err(e)
        }
    }
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let mut cfg = VerifyConfig {
        seed: match a.seed {
            Some(s) => s,
            None => env_seed()?.unwrap_or(0),
        },
        ..VerifyConfig::default()
    };
    set(&mut cfg.grad_points, a.grad_points);
    set(&mut cfg.bound_episodes, a.bound_episodes);
    let suites = if a.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        a.suites
    };
    let mut failed = Vec::new();
    let mut total = 0;
    for suite in suites {
        for p in verify::run(&[suite], &cfg) {
            println!("{p}");
            total += 1;
            if !p.passed() {
                failed.push(format!("{}/{}", p.suite, p.name));
            }
        }
    }
    println!("{} properties, {} failed", total, failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(format!(
            "failing properties: {}",
            failed.join(", ")
        )))
    }
}
