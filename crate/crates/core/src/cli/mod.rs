//! Command-line front end: data generation, training, inference and evaluation.

mod data;
mod eval;
mod manifest;
mod train;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};

pub use data::{gen_backgrounds, gen_data, validate_dataset, GenDataConfig, ValidationReport};
pub use eval::{eval_command, infer_command, load_remover, Remover};
pub use manifest::{read_run_manifest, RunManifest, RunManifestFile, RUN_MANIFEST_FILE, RUN_MANIFEST_SCHEMA_VERSION};

/// Environment variable that relocates relative dataset and background paths.
pub const DATA_ROOT_ENV: &str = "SSTR_DATA_ROOT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sstr", version, about = "Selective scene text removal")]
pub struct Cli {
    /// Base directory for relative paths.
    #[arg(long, global = true, value_name = "DIR")]
    pub workdir: Option<PathBuf>,
    /// Base directory for relative dataset and background paths (defaults to the workdir).
    #[arg(long, global = true, env = DATA_ROOT_ENV, value_name = "DIR")]
    pub data_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render procedural text-free background images.
    GenBackgrounds(GenBackgroundsArgs),
    /// Generate a synthetic scene or text-only dataset.
    GenData(GenDataArgs),
    /// Check compositing exactness, mask partition and annotations of a dataset.
    ValidateDataset(ValidateArgs),
    /// Pretrain one pipeline stage.
    Pretrain(PretrainArgs),
    /// Fine-tune the four stages end to end.
    Finetune(FinetuneArgs),
    /// Train the single conditioned U-Net baseline.
    TrainBaseline(TrainArgs),
    /// Remove a target word from one image.
    Infer(InferArgs),
    /// Evaluate a checkpoint (or an oracle passthrough) on a dataset split.
    Eval(EvalArgs),
    /// Print evaluation reports side by side.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenBackgroundsArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Approximate side length in pixels; the aspect ratio varies per image.
    #[arg(long, default_value_t = 160)]
    pub size: usize,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// TOML file with generator keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub backgrounds: Option<PathBuf>,
    /// Extra `key=value` config overrides (values in TOML syntax).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub dataset: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct TrainArgs {
    /// TOML file with training keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub val_data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long, conflicts_with = "overwrite")]
    pub resume: bool,
    /// Replace an existing checkpoint of this run.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PretrainStage {
    Background,
    TextExtract,
    Removal,
    Reconstruct,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long, value_enum)]
    pub stage: PretrainStage,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Directory with the pretrained stage checkpoints (defaults to the output directory).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub allow_scratch: bool,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Word to remove; must be one of the checkpoint's candidates.
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the predicted background, text layer and stripped layer.
    #[arg(long)]
    pub dump_intermediates: bool,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Passthrough {
    /// Use the ground-truth removal result as the output.
    Ideal,
    /// Use the unmodified input as the output.
    Overlaid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "passthrough", conflicts_with = "passthrough")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub passthrough: Option<Passthrough>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Comma-separated MSE thresholds as fractions (default: 21 log-spaced points in [1e-4, 0.1]).
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` files (or evaluation directories holding one).
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Also write the table to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Resolves relative paths against the workdir or the data root.
#[derive(Clone, Debug)]
pub struct Paths {
    pub workdir: PathBuf,
    pub data_root: PathBuf,
}

impl Paths {
    pub fn new(workdir: Option<PathBuf>, data_root: Option<PathBuf>) -> Result<Self> {
        let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
        let workdir = match workdir {
            Some(w) => cwd.join(w),
            None => cwd,
        };
        let data_root = match data_root {
            Some(d) => workdir.join(d),
            None => workdir.clone(),
        };
        Ok(Self { workdir, data_root })
    }

    pub fn work(&self, p: &Path) -> PathBuf {
        self.workdir.join(p)
    }

    pub fn data(&self, p: &Path) -> PathBuf {
        self.data_root.join(p)
    }
}

/// Applies `key=value` overrides to a TOML table; values that do not parse as TOML become strings.
pub fn apply_overrides(table: &mut toml::Table, sets: &[String]) -> Result<()> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{s}' is not KEY=VALUE")))?;
        let value = format!("v = {v}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(v.to_string()));
        table.insert(k.trim().to_string(), value);
    }
    Ok(())
}

pub(crate) fn read_table(path: Option<&Path>) -> Result<toml::Table> {
    match path {
        None => Ok(toml::Table::new()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            text.parse().map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// Refuses to reuse a non-empty directory unless `overwrite`, in which case it is emptied.
pub(crate) fn prepare_out_dir(dir: &Path, overwrite: bool) -> Result<()> {
    let occupied = dir.is_dir() && fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
    if occupied {
        if !overwrite {
            return Err(Error::Input(format!("{} is not empty; pass --overwrite to replace it", dir.display())));
        }
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn run(cli: Cli) -> Result<()> {
    let paths = Paths::new(cli.workdir, cli.data_root)?;
    match cli.command {
        Command::GenBackgrounds(a) => data::gen_backgrounds_command(&paths, a),
        Command::GenData(a) => data::gen_data_command(&paths, a),
        Command::ValidateDataset(a) => data::validate_command(&paths, a),
        Command::Pretrain(a) => train::pretrain_command(&paths, a),
        Command::Finetune(a) => train::finetune_command(&paths, a),
        Command::TrainBaseline(a) => train::baseline_command(&paths, a),
        Command::Infer(a) => eval::infer_command(&paths, a),
        Command::Eval(a) => eval::eval_command(&paths, a),
        Command::Report(a) => eval::report_command(&paths, a),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_FAILURE
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
