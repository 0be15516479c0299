//! `lingreader`: ingest, annotate, tag, train, predict, evaluate, augment,
//! ensemble and report.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{FileConfig, Settings};

#[derive(Debug, Parser)]
#[command(name = "lingreader", version, about = "Diagnostic toolkit for conversational extractive QA")]
struct Cli {
    /// JSON configuration file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Use the rule and lexicon annotators and the tiny encoder; no model downloads.
    #[arg(long, global = true)]
    offline: bool,

    /// Annotator backend as KIND=NAME (negation, sentiment, srl, question,
    /// pos, masked-lm). Repeatable.
    #[arg(long, global = true, value_name = "KIND=NAME")]
    backend: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a CoQA JSON file into a labelled corpus (JSONL).
    Ingest(IngestArgs),
    /// Annotate every story and question of a corpus.
    Annotate(AnnotateArgs),
    /// Assign the 14 diagnostic classes to every turn.
    TagClasses(TagArgs),
    /// Train a reader checkpoint.
    Train(TrainArgs),
    /// Predict answers with a checkpoint.
    Predict(PredictArgs),
    /// Score predictions overall and per class.
    Evaluate(EvaluateArgs),
    /// Add samples with surprising proper nouns replaced.
    Augment(AugmentArgs),
    /// Combine prediction sets by per-turn confidence.
    Ensemble(EnsembleArgs),
    /// Render per-class tables and heatmaps from evaluation reports.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum SplitArg {
    Train,
    Dev,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    SimpleMax,
    StrictOfficial,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
enum AuxArg {
    None,
    Negation,
    Order,
    Sentiment,
    Srl,
}

#[derive(Debug, Args, Serialize)]
struct IngestArgs {
    /// CoQA-format JSON file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "dev")]
    split: SplitArg,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct AnnotateArgs {
    /// Corpus JSONL, or CoQA JSON (read as the dev split).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TagArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Annotation JSONL from `annotate`; computed on the fly when absent.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Antonym list replacing the bundled one.
    #[arg(long)]
    antonyms: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Checkpoint directory.
    #[arg(long)]
    output: PathBuf,
    /// Annotation JSONL; computed on the fly when the auxiliary task needs it.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, value_enum)]
    aux_task: Option<AuxArg>,
    #[arg(long)]
    aux_weight: Option<f64>,
    /// Answer-type classes: 4 (base) or 9 (adds counts one..five).
    #[arg(long)]
    answer_classes: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum, default_value = "f32")]
    dtype: Dtype,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    /// Checkpoint directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// CoQA prediction file (JSON list of id, turn_id, answer).
    #[arg(long)]
    output: PathBuf,
    /// Per-turn kind and confidence (JSONL); defaults to `<output stem>.details.jsonl`.
    #[arg(long)]
    details: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    /// CoQA prediction file.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Class file from `tag-classes`; without it only overall F1 is reported.
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Report JSON.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Row label in the printed table.
    #[arg(long, default_value = "model")]
    name: String,
}

#[derive(Debug, Args, Serialize)]
struct AugmentArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Augmented corpus JSONL (originals first).
    #[arg(long)]
    output: PathBuf,
    /// Substitution manifest JSONL; defaults to `<output stem>.manifest.jsonl`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct EnsembleArgs {
    /// Prediction details JSONL as ID=PATH or PATH (id = file stem), in
    /// tie-break order. Repeatable.
    #[arg(long = "model", required = true, value_name = "ID=PATH")]
    models: Vec<String>,
    #[arg(long)]
    output: PathBuf,
    /// Per-turn winner log (JSONL); defaults to `<output stem>.winners.jsonl`.
    #[arg(long)]
    winners: Option<PathBuf>,
    /// Per-model temperature as ID=T. Repeatable.
    #[arg(long = "temperature", value_name = "ID=T")]
    temperatures: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    /// Evaluation report as NAME=PATH or PATH. Repeatable.
    #[arg(long = "report", value_name = "NAME=PATH")]
    reports: Vec<String>,
    /// Base and enhanced reports for a per-class delta table.
    #[arg(long, num_args = 2, value_names = ["BASE", "ENHANCED"])]
    compare: Option<Vec<PathBuf>>,
    /// Heatmap of every listed report.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Write the table here as well as to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Module(lingreader::Error),
}

impl From<lingreader::Error> for CliError {
    fn from(e: lingreader::Error) -> Self {
        match e {
            lingreader::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Module(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Module(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Module(e) => write!(f, "{e}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let settings = Settings::new(file, cli.seed, cli.offline, &cli.backend)?;
    match &cli.command {
        Command::Ingest(a) => commands::ingest(&settings, a),
        Command::Annotate(a) => commands::annotate(&settings, a),
        Command::TagClasses(a) => commands::tag_classes(&settings, a),
        Command::Train(a) => commands::train(&settings, a),
        Command::Predict(a) => commands::predict(&settings, a),
        Command::Evaluate(a) => commands::evaluate(&settings, a),
        Command::Augment(a) => commands::augment(&settings, a),
        Command::Ensemble(a) => commands::ensemble(&settings, a),
        Command::Report(a) => commands::report(&settings, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::from(e.exit_code())
        }
    }
}
