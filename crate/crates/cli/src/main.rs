//! `fckit`: one binary, six subcommands.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 unreadable or
//! unwritable files, 3 a failed internal check.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fckit::data::Balance;
use fckit::metrics::F1Average;
use fckit::model::{SequenceWiring, Variant, DEFAULT_CLASSES};
use fckit::train::DEFAULT_SEED;
use fckit::{Error, ErrorKind};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "fckit", version, about = "Train and evaluate FaceChannel affect models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter, balance and summarize a manifest.
    Prep(PrepArgs),
    /// Train a frame or sequence model from a config file.
    Train(TrainArgs),
    /// Score a model (or a predictions file) against a labeled manifest.
    Eval(EvalArgs),
    /// Print `arousal,valence,class,confidence` for images or clips.
    Predict(PredictArgs),
    /// Print the layer table and parameter count.
    Inspect(InspectArgs),
    /// Check every primitive's gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct PrepArgs {
    /// Input manifest CSV.
    manifest: PathBuf,
    #[arg(long, short)]
    out_dir: PathBuf,
    /// Drop samples whose categorical and dimensional labels disagree.
    #[arg(long)]
    filter: bool,
    #[arg(long, default_value = "none", value_parser = parse_balance)]
    balance: Balance,
    /// Write class counts and valence/arousal histograms.
    #[arg(long)]
    stats: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CLASSES)]
    classes: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Frame-model weights a sequence model starts from.
    #[arg(long)]
    base_weights: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config key, e.g. `--set epochs=5`. Repeatable; applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Continue from `<out_dir>/last.fcw` when it exists.
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Labeled manifest CSV.
    #[arg(long, short)]
    manifest: PathBuf,
    #[arg(long, short, required_unless_present = "predictions", conflicts_with = "predictions")]
    weights: Option<PathBuf>,
    /// Score a predictions CSV (`arousal,valence,class`, one row per manifest row) instead of a model.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Class count for `--predictions`; models carry their own.
    #[arg(long, default_value_t = DEFAULT_CLASSES)]
    classes: usize,
    #[arg(long, default_value = "macro", value_parser = parse_average)]
    f1: F1Average,
    /// Write `metrics.csv` and `confusion.csv` here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, short)]
    weights: PathBuf,
    /// Images (`.ppm`/`.f32`); a sequence model takes them ten at a time.
    images: Vec<PathBuf>,
    /// Predict every row (frame model) or clip (sequence model) of a manifest.
    #[arg(long, conflicts_with = "images")]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Weights file to describe.
    #[arg(long, short, conflicts_with_all = ["config", "variant"])]
    weights: Option<PathBuf>,
    /// Training config whose model to describe.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, value_parser = parse_wiring)]
    wiring: Option<SequenceWiring>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Seeds per primitive.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Restrict to these primitives (repeatable).
    #[arg(long = "primitive")]
    primitives: Vec<String>,
    #[arg(long, default_value_t = fckit::gradcheck::DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long, default_value_t = fckit::gradcheck::DEFAULT_STEP)]
    step: f64,
}

fn parse_balance(s: &str) -> Result<Balance, String> {
    s.parse()
}

fn parse_average(s: &str) -> Result<F1Average, String> {
    match s {
        "macro" => Ok(F1Average::Macro),
        "weighted" => Ok(F1Average::Weighted),
        _ => Err(format!("expected macro or weighted, got `{s}`")),
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "frame" | "fc" => Ok(Variant::Frame),
        "sequence" | "fcs" => Ok(Variant::Sequence),
        _ => Err(format!("expected frame or sequence, got `{s}`")),
    }
}

fn parse_wiring(s: &str) -> Result<SequenceWiring, String> {
    match s {
        "sequential" => Ok(SequenceWiring::Sequential),
        "concat" => Ok(SequenceWiring::Concat),
        _ => Err(format!("expected sequential or concat, got `{s}`")),
    }
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self { code: 2, message: format!("{}: {err}", path.display()) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Validation => 1,
            ErrorKind::Io => 2,
            ErrorKind::Internal => 3,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<fckit::error::ConfigError> for Failure {
    fn from(e: fckit::error::ConfigError) -> Self {
        Error::from(e).into()
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("FCKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::invalid(format!("FCKIT_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::internal(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = init_threads().and_then(|()| match cli.command {
        Command::Prep(a) => commands::prep(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
