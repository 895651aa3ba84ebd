//! `kpitriage` - rank anomalous KPIs, evaluate ranking quality, manage
//! knowledge bases, run hyperparameter searches, and generate labeled
//! synthetic corpora.
//!
//! Exit codes: 0 success, 2 usage/parse errors, 3 pipeline errors. Every
//! stochastic command takes an explicit `--seed`; identical configuration and
//! inputs produce byte-identical outputs.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "kpitriage", version, about = "Anomaly-driven KPI ranking for network troubleshooting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank the KPIs of one case and print the table.
    Rank(RankArgs),
    /// Evaluate configurations over a case suite.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Build knowledge bases from solved cases.
    #[command(subcommand)]
    Ek(EkCommand),
    /// Hyperparameter search over a case suite.
    #[command(subcommand)]
    Tune(TuneCommand),
    /// Generate a labeled synthetic case suite.
    Synth(SynthArgs),
    /// Corpus-property summary of a suite.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdChoice {
    Oracle,
    If,
    Dbscan,
    Ensemble,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FsChoice {
    Fsa,
    Fsr,
    Alphabetical,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoChoice {
    Dbscan,
    If,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComparatorChoice {
    SuiteMean,
    PerCase,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Plus,
    Minus,
    Both,
    All,
}

/// Detector parameters shared by `rank` and `eval run`.
#[derive(Args, Clone)]
pub struct DetectorArgs {
    /// DBSCAN neighborhood radius (standardized units).
    #[arg(long, default_value_t = 13.0)]
    epsilon: f64,
    /// DBSCAN core-point threshold.
    #[arg(long, default_value_t = 80)]
    min_pts: usize,
    /// Isolation-forest contamination fraction (flags the top X of slots).
    #[arg(long, default_value_t = 0.01)]
    contamination: f64,
    /// Static isolation-score threshold instead of contamination.
    #[arg(long, conflicts_with_all = ["contamination", "elbow"])]
    theta_s: Option<f64>,
    /// Dynamic elbow threshold instead of contamination.
    #[arg(long, conflicts_with = "contamination")]
    elbow: bool,
    /// Isolation-forest tree count.
    #[arg(long, default_value_t = 300)]
    n_trees: usize,
    /// Isolation-forest subsample size (clamped to the dataset length).
    #[arg(long, default_value_t = 256)]
    subsample: usize,
}

#[derive(Args)]
struct RankArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Ground-truth CSV.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum, default_value_t = AdChoice::Oracle)]
    ad: AdChoice,
    #[arg(long, value_enum, default_value_t = FsChoice::Fsa)]
    fs: FsChoice,
    /// Knowledge-base JSON whose rates adjust the scores.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    gamma_plus: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma_minus: f64,
    /// Master seed (required when the detector is stochastic).
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// One metrics row per case for a configuration.
    Run(EvalRunArgs),
    /// Mean nDCG as a function of the expert-knowledge gain.
    Sweep(EvalSweepArgs),
    /// Group metrics rows into per-configuration means.
    Impact(EvalImpactArgs),
}

#[derive(Args)]
struct EvalRunArgs {
    /// Suite directory (one subdirectory per case).
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, value_enum, default_value_t = AdChoice::Oracle)]
    ad: AdChoice,
    #[arg(long, value_enum, default_value_t = FsChoice::Fsa)]
    fs: FsChoice,
    /// Single knowledge base applied to every case.
    #[arg(long, conflicts_with = "ek_dir")]
    kb: Option<PathBuf>,
    /// Directory of per-case knowledge bases (<case_id>.kb.json).
    #[arg(long)]
    ek_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    gamma_plus: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma_minus: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics CSV destination.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Args)]
struct EvalSweepArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Which bias follows gamma.
    #[arg(long, value_enum, default_value_t = ModeChoice::All)]
    mode: ModeChoice,
    /// Comma-separated gamma values.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.5,1,2,5,10")]
    gammas: Vec<f64>,
    /// Sweep CSV destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalImpactArgs {
    /// Metrics CSVs produced by `eval run`.
    #[arg(long, required = true, num_args = 1..)]
    metrics: Vec<PathBuf>,
    /// Impact CSV destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EkCommand {
    /// Distill knowledge bases from a solved-case suite.
    Build(EkBuildArgs),
}

#[derive(Args)]
struct EkBuildArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Leave-one-out: one base per case, excluding that case's labels.
    #[arg(long)]
    loo: bool,
    /// Output file (merged base) or directory (with --loo).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TuneCommand {
    /// Exhaustive grid exploration.
    Grid(TuneGridArgs),
    /// Randomized keep-the-better tuning simulation.
    Random(TuneRandomArgs),
}

#[derive(Args)]
struct TuneGridArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, value_enum)]
    algo: AlgoChoice,
    #[arg(long)]
    seed: u64,
    /// `combo,case_id,ndcg` CSV destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneRandomArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, value_enum)]
    algo: AlgoChoice,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ComparatorChoice::SuiteMean)]
    comparator: ComparatorChoice,
    /// Curve CSV destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Destination directory for the generated suite.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 28)]
    cases: usize,
    #[arg(long)]
    seed: u64,
    /// Generate the high-overlap suite with symptom features.
    #[arg(long)]
    ek_mode: bool,
    #[arg(long)]
    t_min: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    f_min: Option<usize>,
    #[arg(long)]
    f_max: Option<usize>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Also write the per-case table and summary as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with the exit code it maps to.
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn pipeline(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<kpitriage::Error> for Failure {
    fn from(e: kpitriage::Error) -> Self {
        Failure {
            code: if e.is_input_error() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::pipeline(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rank(args) => commands::rank(args),
        Command::Eval(EvalCommand::Run(args)) => commands::eval_run(args),
        Command::Eval(EvalCommand::Sweep(args)) => commands::eval_sweep(args),
        Command::Eval(EvalCommand::Impact(args)) => commands::eval_impact(args),
        Command::Ek(EkCommand::Build(args)) => commands::ek_build(args),
        Command::Tune(TuneCommand::Grid(args)) => commands::tune_grid(args),
        Command::Tune(TuneCommand::Random(args)) => commands::tune_random(args),
        Command::Synth(args) => commands::synth(args),
        Command::Stats(args) => commands::stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
