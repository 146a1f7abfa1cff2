//! The `pixnorm` command-line front end.
//!
//! Every command writes a [`RunManifest`] next to its artifacts. The
//! manifest records the fully resolved command (defaults applied, seed
//! drawn), hashes of the input files and the artifact list, so
//! `pixnorm rerun --manifest <file>` repeats the run exactly.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 data validation, 4 numeric
//! failure.

use std::collections::hash_map::RandomState;
use std::fmt;
use std::fs;
use std::hash::{BuildHasher, Hasher};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{self, Variant};
use crate::dataset::{self, Dataset, LoadOptions};
use crate::evaluation::{self, DEFAULT_FRACTIONS};
use crate::imageio::{self, SurfaceGrid};
use crate::mlp::{MlpModel, TraceSummary, TrainConfig, TrainTrace};
use crate::normcodec::{self, NormMatrix, NormMode, NormParams, PIXEL_MAX, PIXEL_MIN};
use crate::pipeline::{self, ExperimentConfig, InputEncoding, SeedPlan};
use crate::{exit_code, Error, Result};

pub const OUT_DIR_ENV: &str = "PIXNORM_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "pixnorm-out";

#[derive(Debug, Parser)]
#[command(name = "pixnorm", version, about = "Min-max pixel normalization of numeric tables, plus an SCG-trained classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "kebab-case")]
pub enum Command {
    /// Full pipeline: load, normalize, render, split, train, evaluate.
    Reproduce(ReproduceArgs),
    /// Write the grayscale image and its normalization sidecar.
    Normalize(NormalizeArgs),
    /// Reconstruct a CSV from an image and its sidecar.
    Denormalize(DenormalizeArgs),
    /// Write the grayscale image and surface-plot data.
    Render(RenderArgs),
    /// Train the network and save it as JSON.
    Train(TrainArgs),
    /// Evaluate a saved model and write the report bundle.
    Evaluate(EvaluateArgs),
    /// Time serial vs. parallel normalization.
    Bench(BenchArgs),
    /// Re-run the command recorded in a manifest.
    Rerun(RerunArgs),
}

/// `rows,cols,seed,separation` for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub separation: f64,
}

impl FromStr for SynthSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let err = || format!("expected rows,cols,seed,separation, got {s:?}");
        if parts.len() != 4 {
            return Err(err());
        }
        Ok(Self {
            rows: parts[0].parse().map_err(|_| err())?,
            cols: parts[1].parse().map_err(|_| err())?,
            seed: parts[2].parse().map_err(|_| err())?,
            separation: parts[3].parse().map_err(|_| err())?,
        })
    }
}

impl fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.rows, self.cols, self.seed, self.separation)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[group(skip)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long, alias = "data", required_unless_present = "synth", conflicts_with = "synth")]
    pub input: Option<PathBuf>,
    /// Column holding the binary label.
    #[arg(long, default_value = "churn")]
    pub label_column: String,
    /// Columns to ignore (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    pub drop: Vec<String>,
    /// Fill empty cells with the column mean instead of failing.
    #[arg(long)]
    pub impute_mean: bool,
    /// Use synthetic data instead of a CSV: rows,cols,seed,separation.
    #[arg(long)]
    pub synth: Option<SynthSpec>,
}

impl DataArgs {
    pub fn from_csv(path: impl Into<PathBuf>, label_column: &str, drop: &[&str]) -> Self {
        Self {
            input: Some(path.into()),
            label_column: label_column.to_string(),
            drop: drop.iter().map(|s| s.to_string()).collect(),
            impute_mean: false,
            synth: None,
        }
    }

    pub fn synthetic(spec: SynthSpec) -> Self {
        Self {
            input: None,
            label_column: "churn".into(),
            drop: Vec::new(),
            impute_mean: false,
            synth: Some(spec),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match (&self.input, &self.synth) {
            (Some(path), None) => {
                let opts = LoadOptions {
                    label_column: self.label_column.clone(),
                    drop_columns: self.drop.clone(),
                    impute_mean: self.impute_mean,
                };
                Ok(dataset::load_csv(path, &opts)?)
            }
            (None, Some(s)) => Ok(dataset::synth_churn(s.rows, s.cols, s.seed, s.separation)?),
            _ => Err(Error::Usage("exactly one of --input or --synth is required".into())),
        }
    }

    fn input_files(&self) -> Vec<PathBuf> {
        self.input.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    #[default]
    Global,
    PerColumn,
}

impl From<ModeArg> for NormMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Global => NormMode::Global,
            ModeArg::PerColumn => NormMode::PerColumn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Hidden layer sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub hidden: Vec<usize>,
    /// Upper bound on training epochs.
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    /// Consecutive validation-loss increases before stopping.
    #[arg(long, default_value_t = 6)]
    pub max_fail: usize,
    /// Stop once the gradient norm falls below this.
    #[arg(long, default_value_t = 1e-6)]
    pub min_grad: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Global)]
    pub mode: ModeArg,
    /// Feed unrounded normalized values to the network instead of pixels.
    #[arg(long)]
    pub continuous_inputs: bool,
}

impl ModelArgs {
    fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            mode: self.mode.into(),
            hidden: self.hidden.clone(),
            encoding: if self.continuous_inputs {
                InputEncoding::Continuous
            } else {
                InputEncoding::Quantized
            },
            fractions: DEFAULT_FRACTIONS,
            train: TrainConfig {
                max_epochs: self.epochs,
                max_validation_failures: self.max_fail,
                min_gradient_norm: self.min_grad,
                ..TrainConfig::default()
            },
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReproduceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Master seed; drawn at random (and printed) when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for all artifacts.
    #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct NormalizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Global)]
    pub mode: ModeArg,
    /// Output PGM image.
    #[arg(long)]
    pub out: PathBuf,
    /// Sidecar path; defaults to `<out stem>.norm.json`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DenormalizeArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub meta: PathBuf,
    /// Reconstructed CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RenderArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Global)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Surface triples as CSV (x,y,z).
    #[arg(long)]
    pub surface: Option<PathBuf>,
    /// Surface as a gnuplot matrix file.
    #[arg(long)]
    pub gnuplot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model_args: ModelArgs,
    /// Where to write the trained model.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Split seed; defaults to the one recorded in the model file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for all artifacts.
    #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10_000_000)]
    pub elements: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub cols: usize,
    pub positives: usize,
    pub column_names: Vec<String>,
}

impl DatasetSummary {
    fn of(d: &Dataset) -> Self {
        Self {
            rows: d.rows(),
            cols: d.cols(),
            positives: d.positives(),
            column_names: d.column_names().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub command: Command,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub dataset: Option<DatasetSummary>,
    pub artifacts: Vec<PathBuf>,
    pub created_at: u64,
}

impl RunManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// JSON without `created_at`, for reproducibility comparisons.
    pub fn payload_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("created_at");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// Provenance stored with a trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineInfo {
    pub seed: u64,
    pub split_seed: u64,
    pub init_seed: u64,
    pub encoding: InputEncoding,
    pub fractions: (f64, f64, f64),
    pub threshold: f64,
    pub norm_params: NormParams,
}

/// On-disk model: the network plus its training configuration and trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub model: MlpModel,
    pub train_config: TrainConfig,
    pub trace_summary: TraceSummary,
    pub trace: TrainTrace,
    pub pipeline: PipelineInfo,
}

impl ModelFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn entropy_seed() -> u64 {
    let mut h = RandomState::new().build_hasher();
    h.write_u128(
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0),
    );
    h.write_u32(std::process::id());
    h.finish()
}

fn resolve_seed(seed: &mut Option<u64>) -> u64 {
    *seed.get_or_insert_with(|| {
        let s = entropy_seed();
        eprintln!("seed: {s} (pass --seed {s} to repeat this run)");
        s
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

struct Outcome {
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    dataset: Option<DatasetSummary>,
    artifacts: Vec<PathBuf>,
    manifest_path: PathBuf,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit_code::SUCCESS,
                _ => exit_code::USAGE,
            };
        }
    };
    match run(cli.command) {
        Ok(()) => exit_code::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a command and writes its manifest.
pub fn run(command: Command) -> Result<()> {
    let mut command = command;
    let outcome = match &mut command {
        Command::Rerun(args) => {
            let manifest = RunManifest::read(&args.manifest)?;
            if matches!(manifest.command, Command::Rerun(_)) {
                return Err(Error::Usage("a manifest cannot record a rerun".into()));
            }
            return run(manifest.command);
        }
        Command::Reproduce(args) => cmd_reproduce(args)?,
        Command::Normalize(args) => cmd_normalize(args)?,
        Command::Denormalize(args) => cmd_denormalize(args)?,
        Command::Render(args) => cmd_render(args)?,
        Command::Train(args) => cmd_train(args)?,
        Command::Evaluate(args) => cmd_evaluate(args)?,
        Command::Bench(args) => cmd_bench(args)?,
    };
    let inputs = outcome
        .inputs
        .iter()
        .map(|p| {
            Ok(InputDigest {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: outcome.seed,
        command,
        inputs,
        dataset: outcome.dataset,
        artifacts: outcome.artifacts,
        created_at: unix_now(),
    };
    ensure_parent(&outcome.manifest_path)?;
    fs::write(&outcome.manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    eprintln!("manifest: {}", outcome.manifest_path.display());
    Ok(())
}

fn write_image_artifacts(
    norm: &NormMatrix,
    image: &imageio::GrayImage,
    pgm: &Path,
    meta: &Path,
) -> Result<()> {
    ensure_parent(pgm)?;
    ensure_parent(meta)?;
    imageio::write_pgm(image, pgm)?;
    norm.params.write_sidecar(meta)?;
    Ok(())
}

fn model_file(exp: &pipeline::Experiment, cfg: &ExperimentConfig, seed: u64) -> ModelFile {
    ModelFile {
        model: exp.model.clone(),
        train_config: TrainConfig {
            seed,
            ..cfg.train.clone()
        },
        trace_summary: exp.trace.summary(),
        trace: exp.trace.clone(),
        pipeline: PipelineInfo {
            seed,
            split_seed: exp.seeds.split,
            init_seed: exp.seeds.init,
            encoding: cfg.encoding,
            fractions: cfg.fractions,
            threshold: cfg.threshold,
            norm_params: exp.norm.params.clone(),
        },
    }
}

fn cmd_reproduce(args: &mut ReproduceArgs) -> Result<Outcome> {
    let seed = resolve_seed(&mut args.seed);
    let d = args.data.load()?;
    let stats = dataset::compute_stats(&d)?;
    println!(
        "loaded {} rows x {} numeric columns ({} positive); global range [{}, {}]",
        d.rows(),
        d.cols(),
        d.positives(),
        stats.global_min,
        stats.global_max
    );
    println!("columns: {}", d.column_names().join(", "));

    let cfg = args.model.experiment_config();
    let exp = pipeline::run_experiment(&d, &cfg, seed)?;

    let out = &args.out_dir;
    fs::create_dir_all(out)?;
    let pgm = out.join("dataset.pgm");
    let meta = out.join("dataset.norm.json");
    write_image_artifacts(&exp.norm, &exp.image, &pgm, &meta)?;
    let surface = SurfaceGrid::from(&exp.image);
    let surface_csv = out.join("surface.csv");
    let surface_dat = out.join("surface.dat");
    surface.write_csv(&surface_csv)?;
    surface.write_gnuplot_matrix(&surface_dat)?;
    let model_path = out.join("model.json");
    model_file(&exp, &cfg, seed).write(&model_path)?;
    let mut artifacts = vec![pgm, meta, surface_csv, surface_dat, model_path];
    artifacts.extend(evaluation::write_report(&exp.report, out.join("report"))?);

    println!("overall accuracy: {:.2}%", 100.0 * exp.report.overall_accuracy);
    match exp.report.best_validation_epoch {
        Some(e) => println!("best validation epoch: {e}"),
        None => println!("best validation epoch: n/a"),
    }
    println!("stop reason: {:?} after {} epochs", exp.trace.stop_reason, exp.trace.len());

    Ok(Outcome {
        seed: Some(seed),
        inputs: args.data.input_files(),
        dataset: Some(DatasetSummary::of(&d)),
        artifacts,
        manifest_path: out.join("manifest.json"),
    })
}

fn cmd_normalize(args: &mut NormalizeArgs) -> Result<Outcome> {
    let d = args.data.load()?;
    let meta = args
        .meta
        .get_or_insert_with(|| with_suffix(&args.out, ".norm.json"))
        .clone();
    let norm = normcodec::normalize(&d, args.mode.into(), PIXEL_MIN, PIXEL_MAX)?;
    let image = normcodec::quantize(&norm)?;
    write_image_artifacts(&norm, &image, &args.out, &meta)?;
    println!(
        "wrote {}x{} image to {}",
        image.width(),
        image.height(),
        args.out.display()
    );
    Ok(Outcome {
        seed: None,
        inputs: args.data.input_files(),
        dataset: Some(DatasetSummary::of(&d)),
        artifacts: vec![args.out.clone(), meta],
        manifest_path: with_suffix(&args.out, ".manifest.json"),
    })
}

fn cmd_denormalize(args: &mut DenormalizeArgs) -> Result<Outcome> {
    let image = imageio::read_pgm(&args.image)?;
    let params = NormParams::read_sidecar(&args.meta)?;
    let values = normcodec::dequantize(&image, &params)?;
    let names: Vec<String> = params
        .column_names
        .clone()
        .unwrap_or_else(|| (0..params.cols).map(|j| format!("c{j}")).collect());
    ensure_parent(&args.out)?;
    let mut w = csv::Writer::from_path(&args.out).map_err(|e| Error::Io(e.into()))?;
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(&names).map_err(io)?;
    for row in values.chunks(params.cols) {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush()?;
    Ok(Outcome {
        seed: None,
        inputs: vec![args.image.clone(), args.meta.clone()],
        dataset: None,
        artifacts: vec![args.out.clone()],
        manifest_path: with_suffix(&args.out, ".manifest.json"),
    })
}

fn cmd_render(args: &mut RenderArgs) -> Result<Outcome> {
    let d = args.data.load()?;
    let norm = normcodec::normalize(&d, args.mode.into(), PIXEL_MIN, PIXEL_MAX)?;
    let image = normcodec::quantize(&norm)?;
    let meta = with_suffix(&args.out, ".norm.json");
    write_image_artifacts(&norm, &image, &args.out, &meta)?;
    let mut artifacts = vec![args.out.clone(), meta];
    let grid = SurfaceGrid::from(&image);
    if let Some(p) = &args.surface {
        ensure_parent(p)?;
        grid.write_csv(p)?;
        artifacts.push(p.clone());
    }
    if let Some(p) = &args.gnuplot {
        ensure_parent(p)?;
        grid.write_gnuplot_matrix(p)?;
        artifacts.push(p.clone());
    }
    println!("wrote {}x{} image to {}", image.width(), image.height(), args.out.display());
    Ok(Outcome {
        seed: None,
        inputs: args.data.input_files(),
        dataset: Some(DatasetSummary::of(&d)),
        artifacts,
        manifest_path: with_suffix(&args.out, ".manifest.json"),
    })
}

fn cmd_train(args: &mut TrainArgs) -> Result<Outcome> {
    let seed = resolve_seed(&mut args.seed);
    let d = args.data.load()?;
    let cfg = args.model_args.experiment_config();
    let exp = pipeline::run_experiment(&d, &cfg, seed)?;
    ensure_parent(&args.model)?;
    model_file(&exp, &cfg, seed).write(&args.model)?;
    let trace_path = with_suffix(&args.model, ".trace.csv");
    fs::write(&trace_path, evaluation::trace_csv(&exp.trace))?;
    println!(
        "trained {:?} for {} epochs ({:?}); best validation epoch {:?}",
        exp.model.layer_sizes(),
        exp.trace.len(),
        exp.trace.stop_reason,
        exp.trace.best_validation_epoch
    );
    Ok(Outcome {
        seed: Some(seed),
        inputs: args.data.input_files(),
        dataset: Some(DatasetSummary::of(&d)),
        artifacts: vec![args.model.clone(), trace_path],
        manifest_path: with_suffix(&args.model, ".manifest.json"),
    })
}

fn cmd_evaluate(args: &mut EvaluateArgs) -> Result<Outcome> {
    let mf = ModelFile::read(&args.model)?;
    let d = args.data.load()?;
    let params = &mf.pipeline.norm_params;
    if d.cols() != params.cols || d.cols() != mf.model.n_inputs() {
        return Err(Error::Data(dataset::DataError::Shape(format!(
            "data has {} columns, model expects {}",
            d.cols(),
            mf.model.n_inputs()
        ))));
    }
    // Apply the training-time bounds rather than refitting on this data.
    let mut applied = params.clone();
    applied.rows = d.rows();
    let norm = NormMatrix {
        values: applied.apply(d.values()),
        params: applied,
        rows: d.rows(),
        cols: d.cols(),
    };
    let image = normcodec::quantize(&norm)?;
    let features = pipeline::network_inputs(&norm, &image, mf.pipeline.encoding);
    let split_seed = match args.seed {
        Some(s) => SeedPlan::from_master(s).split,
        None => mf.pipeline.split_seed,
    };
    let splits = evaluation::split(d.rows(), mf.pipeline.fractions, split_seed)?;
    let report = evaluation::evaluate(&mf.model, &features, d.labels(), &splits, &mf.trace, mf.pipeline.threshold)?;
    let artifacts = evaluation::write_report(&report, args.out_dir.join("report"))?;
    println!("overall accuracy: {:.2}%", 100.0 * report.overall_accuracy);
    let mut inputs = vec![args.model.clone()];
    inputs.extend(args.data.input_files());
    Ok(Outcome {
        seed: args.seed,
        inputs,
        dataset: Some(DatasetSummary::of(&d)),
        artifacts,
        manifest_path: args.out_dir.join("manifest.json"),
    })
}

fn cmd_bench(args: &mut BenchArgs) -> Result<Outcome> {
    let results = bench::bench_normalize(args.elements, args.reps, args.warmup, &[Variant::Serial, Variant::Parallel])?;
    ensure_parent(&args.out)?;
    fs::write(&args.out, bench::results_csv(&results))?;
    let table = bench::render_table(&results);
    let machine = results[0].machine.to_markdown();
    let md_path = with_suffix(&args.out, ".md");
    fs::write(&md_path, format!("{table}\n{machine}"))?;
    println!("{table}\n{machine}");
    Ok(Outcome {
        seed: Some(bench::BENCH_SEED),
        inputs: Vec::new(),
        dataset: None,
        artifacts: vec![args.out.clone(), md_path],
        manifest_path: with_suffix(&args.out, ".manifest.json"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_spec_parses() {
        let s: SynthSpec = "1000,17,7,6.0".parse().unwrap();
        assert_eq!(
            s,
            SynthSpec {
                rows: 1000,
                cols: 17,
                seed: 7,
                separation: 6.0
            }
        );
        assert!("1,2,3".parse::<SynthSpec>().is_err());
        assert!("a,2,3,4".parse::<SynthSpec>().is_err());
    }

    #[test]
    fn source_is_required_and_exclusive() {
        assert!(Cli::try_parse_from(["pixnorm", "render", "--out", "x.pgm"]).is_err());
        assert!(Cli::try_parse_from([
            "pixnorm", "render", "--out", "x.pgm", "--input", "a.csv", "--synth", "4,2,1,1"
        ])
        .is_err());
        assert!(Cli::try_parse_from(["pixnorm", "render", "--out", "x.pgm", "--synth", "4,2,1,1"]).is_ok());
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run_from_args(["pixnorm", "bench", "--bogus"]), exit_code::USAGE);
        assert_eq!(run_from_args(["pixnorm"]), exit_code::USAGE);
    }

    #[test]
    fn sidecar_default_name() {
        assert_eq!(with_suffix(Path::new("out/img.pgm"), ".norm.json"), PathBuf::from("out/img.norm.json"));
    }

    #[test]
    fn manifest_round_trips_command() {
        let cmd = Command::Bench(BenchArgs {
            elements: 10,
            reps: 3,
            warmup: 1,
            out: "b.csv".into(),
        });
        let m = RunManifest {
            tool: "pixnorm".into(),
            version: "0".into(),
            command: cmd.clone(),
            seed: None,
            inputs: vec![],
            dataset: None,
            artifacts: vec![],
            created_at: 1,
        };
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"command\":\"bench\""));
        let back: RunManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.command, cmd);
    }
}
