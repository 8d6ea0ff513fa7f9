//! The `fiberseg` command line: synthetic phantoms, training, tiled
//! prediction, the classic pipeline, evaluation and run reports.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fiberseg::nn::NnError;
use fiberseg::SegError;

use crate::config::{ConfigError, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

/// Variant name of an error, used as a stable prefix in messages.
pub fn error_kind(e: &SegError) -> &'static str {
    match e {
        SegError::NoSlicesFound { .. } => "NoSlicesFound",
        SegError::InconsistentSliceShape { .. } => "InconsistentSliceShape",
        SegError::NonContiguousSlices(_) => "NonContiguousSlices",
        SegError::IndexOutOfRange { .. } => "IndexOutOfRange",
        SegError::UnsupportedDtype(_) => "UnsupportedDtype",
        SegError::BadHeader { .. } => "BadHeader",
        SegError::GeometryMismatch(_) => "GeometryMismatch",
        SegError::MissingTile(_) => "MissingTile",
        SegError::DuplicateTile(_) => "DuplicateTile",
        SegError::DegenerateHistogram(_) => "DegenerateHistogram",
        SegError::ShapeMismatch(_) => "ShapeMismatch",
        SegError::SingleClassGold => "SingleClassGold",
        SegError::PlacementFailure { .. } => "PlacementFailure",
        SegError::InvalidParams(_) => "InvalidParams",
        SegError::Nn(n) => match n {
            NnError::ShapeMismatch(_) => "ShapeMismatch",
            NnError::NonFiniteValue(_) => "NonFiniteValue",
            NnError::InvalidSpec(_) => "InvalidSpec",
            NnError::ArchMismatch { .. } => "ArchMismatch",
            NnError::CorruptFile(_) => "CorruptFile",
            NnError::EmptyDataset => "EmptyDataset",
            NnError::InvalidConfig(_) => "InvalidConfig",
            NnError::Io(_) => "Io",
        },
        SegError::Image(_) => "Image",
        SegError::Io(_) => "Io",
    }
}

impl From<SegError> for CliError {
    fn from(e: SegError) -> Self {
        CliError::Domain(format!("{}: {e}", error_kind(&e)))
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        SegError::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(format!("Io: {e}"))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(format!("config {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "fiberseg", version, about = "Fiber segmentation for microCT volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Settings file (`key = value` lines, `[section]` headers).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 or `auto` uses every core, 1 is fully deterministic.
    #[arg(long)]
    pub workers: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// error, warn, info, debug or trace.
    #[arg(long)]
    pub log_level: Option<String>,
    /// Override any setting, e.g. `--set train.epochs=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fiber bed with exact gold labels.
    Phantom(PhantomArgs),
    /// Train a segmentation network.
    Train(TrainArgs),
    /// Predict fiber probabilities with trained weights.
    Predict(PredictArgs),
    /// Segment slices with the equalize / TV / multi-Otsu / WUSEM pipeline.
    SegmentClassic(ClassicArgs),
    /// Compare a prediction with a gold standard.
    Evaluate(EvaluateArgs),
    /// Summarise finished runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub n_fibers: Option<usize>,
    #[arg(long)]
    pub radius_min: Option<f64>,
    #[arg(long)]
    pub radius_max: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub noise: Option<f32>,
    /// Comma-separated slice indices.
    #[arg(long)]
    pub defect_slices: Option<String>,
    /// stack (images named by `io.pattern`) or raw.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// unet2d, unet3d, tiramisu2d or tiramisu3d.
    #[arg(long)]
    pub arch: Option<String>,
    /// desk or paper.
    #[arg(long)]
    pub scale: Option<String>,
    /// Image volume; repeat for several.
    #[arg(long)]
    pub input: Vec<String>,
    /// Gold volume matching each `--input`.
    #[arg(long)]
    pub gold: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// adam or rmsprop.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    /// Expected architecture; checked against the weight file.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long)]
    pub threshold: Option<f32>,
    /// Also write the thresholded mask.
    #[arg(long)]
    pub binary: bool,
    /// Also write fiber instance labels and statistics.
    #[arg(long)]
    pub label: bool,
    /// Split touching fibers slice by slice when labelling.
    #[arg(long)]
    pub wusem: bool,
    /// Tile extents, comma-separated.
    #[arg(long)]
    pub tile: Option<String>,
    #[arg(long)]
    pub stride: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClassicArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: Option<String>,
    /// Half-open range such as `0..10`; all slices by default.
    #[arg(long)]
    pub slices: Option<String>,
    #[arg(long)]
    pub otsu_classes: Option<usize>,
    #[arg(long)]
    pub tv_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Probability, mask or label volume.
    #[arg(long)]
    pub pred: Option<String>,
    #[arg(long)]
    pub gold: Option<String>,
    #[arg(long)]
    pub threshold: Option<f32>,
    /// sample or population.
    #[arg(long)]
    pub std: Option<String>,
    /// Keep per-slice ROC curves.
    #[arg(long)]
    pub curves: bool,
    /// Write the TP/FP/TN/FN category volume.
    #[arg(long)]
    pub categories: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Run directories; repeat for several.
    #[arg(long = "run")]
    pub runs: Vec<String>,
}

pub const GLOBAL_DEFAULTS: &[(&str, &str)] =
    &[("seed", "0"), ("workers", "auto"), ("log_level", "info"), ("io.pattern", "slice_*.png")];

/// Resolved settings shared by every command.
pub struct Context {
    pub settings: Settings,
    pub out: PathBuf,
    pub seed: u64,
    pub workers: usize,
}

impl Context {
    /// Defaults, then the config file, then `flags`, then `--set`.
    pub fn resolve(common: &Common, defaults: &[(&str, &str)], flags: &[(&str, Option<String>)]) -> Result<Self, CliError> {
        let mut table: Vec<(&str, &str)> = GLOBAL_DEFAULTS.to_vec();
        table.extend_from_slice(defaults);
        let mut settings = Settings::with_defaults(&table);
        if let Some(path) = &common.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            settings.merge_file(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        }
        if let Some(seed) = common.seed {
            settings.set_flag("seed", seed)?;
        }
        if let Some(w) = &common.workers {
            settings.set_flag("workers", w)?;
        }
        if let Some(l) = &common.log_level {
            settings.set_flag("log_level", l)?;
        }
        for (key, value) in flags {
            if let Some(v) = value {
                settings.set_flag(key, v)?;
            }
        }
        for a in &common.overrides {
            settings.set_assignment(a)?;
        }
        init_logging(settings.str("log_level"));
        let seed = settings.get("seed")?;
        let workers = settings.get_opt("workers")?.unwrap_or(0);
        Ok(Self { settings, out: common.out.clone(), seed, workers })
    }

    pub fn log_settings(&self, command: &str) {
        log::info!("fiberseg {} {command}", env!("CARGO_PKG_VERSION"));
        for (k, v, origin) in self.settings.iter() {
            log::info!("  {k} = {v} ({origin})");
        }
    }

    /// Runs `f` on a pool of the configured size.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
        if self.workers == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| CliError::Domain(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

fn init_logging(level: &str) {
    let filter = level.parse().unwrap_or(log::LevelFilter::Info);
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .format_target(false)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Phantom(a) => commands::phantom(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::SegmentClassic(a) => commands::segment_classic(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Report(a) => commands::report(a),
    }
}
