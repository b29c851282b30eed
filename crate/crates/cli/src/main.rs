//! `aspect-split`: file-level verbs for each stage plus config-driven runs.
//!
//! Every verb exits 0 on success. On failure a single JSON record
//! `{"code": ..., "message": ...}` goes to stderr and the exit code is 1.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use aspect_splitter::data::Task;
use aspect_splitter::pipeline::{BackendKind, Stage, TeacherKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "aspect-split", version, about = "Aspect-oriented sentence splitting for ABSA")]
pub struct Cli {
    /// Settings file (the pipeline TOML); its teacher, sft, tiny, dpo,
    /// backend and eval sections supply defaults for every verb.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a dataset file and print sentence and polarity counts.
    #[command(alias = "prepare")]
    Stats(StatsArgs),
    /// Print simple/compound ratios for one or more dataset files.
    Categorize(CategorizeArgs),
    /// Ask the teacher for split candidates.
    GenSplits(GenSplitsArgs),
    /// Keep the top-k candidates per example as SFT records.
    Filter(FilterArgs),
    /// Fine-tune the tiny splitter on SFT records.
    TrainSft(TrainSftArgs),
    /// Split sentences with a checkpoint.
    Split(SplitArgs),
    /// Beam-search split candidates with a checkpoint.
    GenBeams(GenBeamsArgs),
    /// Build preference pairs from few-shot and beam candidates.
    BuildPrefs(BuildPrefsArgs),
    /// Align a checkpoint on preference pairs.
    TrainDpo(TrainDpoArgs),
    /// Split and predict tuples with an ABSA backend.
    Infer(InferArgs),
    /// Score predictions against gold tuples.
    Evaluate(EvaluateArgs),
    /// Oracle F1 as the number of candidate splits grows.
    OracleVote(OracleVoteArgs),
    /// Write a synthetic restaurant corpus as dataset files.
    Synth(SynthArgs),
    /// Run one pipeline stage from a config file.
    Run(RunArgs),
    /// Run every pipeline stage and print the side-by-side report.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Zero,
    Few,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// Dataset file, one `sentence####[tuples]` line per example.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Annotation task; defaults to the settings task.
    #[arg(long)]
    pub task: Option<Task>,
    /// Tuple element order such as `at,ac,sp,ot`.
    #[arg(long)]
    pub order: Option<String>,
    /// Newline-separated declared category set.
    #[arg(long)]
    pub categories: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BackendArgs {
    /// ABSA backend: lexicon, llm or command; defaults to the settings backend.
    #[arg(long, value_parser = settings::backend_kind)]
    pub backend: Option<BackendKind>,
    /// JSON lexicon for the lexicon backend (built-in restaurant lexicon otherwise).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Executable for the command backend.
    #[arg(long)]
    pub program: Option<String>,
    /// Argument passed to the command backend; repeatable.
    #[arg(long = "arg")]
    pub args: Vec<String>,
    /// Name shown in reports.
    #[arg(long)]
    pub backend_name: Option<String>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Write the statistics record as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CategorizeArgs {
    /// Dataset files; one ratio row each.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    /// Write per-example labels as JSON lines here.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Write the ratio table as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenSplitsArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, value_enum, default_value = "zero")]
    pub mode: Mode,
    /// Completions requested per sentence.
    #[arg(long)]
    pub n: Option<usize>,
    /// Keep only the best k per sentence; all n are kept when absent.
    #[arg(long)]
    pub k: Option<usize>,
    /// Sampling temperature.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Demonstration records `{example, split}` for few-shot prompts.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    /// Teacher: synthetic, remote or replay (cache only).
    #[arg(long, value_parser = settings::teacher_kind)]
    pub teacher: Option<TeacherKind>,
    /// Replay cache directory.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Concurrent teacher calls.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Candidate records, one JSON object per line.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    /// Candidate records from gen-splits.
    #[arg(long)]
    pub candidates: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// Share of examples held out for validation.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// SFT training records.
    #[arg(long)]
    pub out: PathBuf,
    /// SFT validation records.
    #[arg(long)]
    pub val_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainSftArgs {
    /// SFT records `{source, target}`.
    #[arg(long)]
    pub data: PathBuf,
    /// Validation records for early stopping.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Treat input lines as bare sentences without annotations.
    #[arg(long)]
    pub raw: bool,
    /// Leave sentences classified simple unchanged (needs annotations).
    #[arg(long)]
    pub gate: bool,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    /// Records `{id, source, split}`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenBeamsArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Beam width; defaults to the settings preference beam width.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildPrefsArgs {
    /// Few-shot candidate records.
    #[arg(long)]
    pub fewshot: PathBuf,
    /// Beam candidate records.
    #[arg(long)]
    pub beams: PathBuf,
    /// Gold dataset the candidates were generated for.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub task: Option<Task>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Pair records.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainDpoArgs {
    /// SFT checkpoint; also the frozen reference.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Aligned checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Splitter checkpoint; sentences go to the backend unsplit when absent.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Query the backend once per segment and merge the tuples.
    #[arg(long)]
    pub per_segment: bool,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    /// Prediction records `{id, text, quads}`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Prediction records.
    #[arg(long)]
    pub pred: PathBuf,
    /// Gold dataset file.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub task: Option<Task>,
    /// Also score TASD and ASTE projections of quad predictions.
    #[arg(long)]
    pub project: bool,
    /// Dataset and system names for the report row.
    #[arg(long, default_value = "dataset")]
    pub dataset: String,
    #[arg(long, default_value = "backend")]
    pub backend_name: String,
    #[arg(long, default_value = "splitter")]
    pub splitter: String,
    /// Report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OracleVoteArgs {
    /// Candidate records, in generation order per sentence.
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub task: Option<Task>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub max_m: Option<usize>,
    /// Curve as CSV `m,f1`.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Curve as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 240)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Trailing share written as test.txt.
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    /// Directory for train.txt and test.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Stage name, for example gen-splits or train_sft.
    #[arg(long)]
    pub stage: Stage,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Write the summary JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "code": e.code(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
