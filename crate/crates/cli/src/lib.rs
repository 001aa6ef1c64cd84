//! `twin`: command-line driver for corpus checks, Turing tests, DKPS vote
//! prediction, flip scores and topic labelling.
//!
//! [`run`] is the whole program; `main` only forwards `argv` and the exit
//! code. Exit codes: 0 success, 1 usage error, 2 data error, 3 provider
//! error. Failures print a one-line JSON record as the last line on stderr.

use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};
use twin_core::dkps::DkpsMode;
use twin_core::prompts::PromptMode;

pub mod commands;
pub mod config;
pub mod report;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Provider(_) => "provider",
        }
    }

    /// The machine-readable error line.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": {"kind": self.kind(), "exit_code": self.exit_code(), "message": self.to_string()}
        })
        .to_string()
    }
}

impl From<twin_core::Error> for CliError {
    fn from(e: twin_core::Error) -> Self {
        match e {
            twin_core::Error::Provider(p) => p.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<twin_core::providers::ProviderError> for CliError {
    fn from(e: twin_core::providers::ProviderError) -> Self {
        match e {
            twin_core::providers::ProviderError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Provider(other.to_string()),
        }
    }
}

impl From<twin_core::corpus::CorpusError> for CliError {
    fn from(e: twin_core::corpus::CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "twin", version, about = "Evaluate persona-conditioned language-model twins of congresspersons")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Use deterministic mock providers: echo, planted, disjoint, noisy[:f], refuse[:p].
    #[arg(long, global = true, value_name = "MODE")]
    pub mock: Option<String>,
    /// Worker cap for provider calls.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Drop retweets before any analysis.
    #[arg(long, global = true)]
    pub exclude_retweets: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CorpusArgs {
    /// Tweets JSONL file.
    #[arg(long, value_name = "FILE")]
    pub tweets: Option<PathBuf>,
    /// Roster JSONL file.
    #[arg(long, value_name = "FILE")]
    pub roster: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and check a corpus plus optional roll calls and question sets.
    Validate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_name = "FILE")]
        rollcall: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        questions: Vec<PathBuf>,
    },
    /// Corpus statistics: monthly volume, topic shares, per-author counts.
    Stats {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Topic labels JSONL ({"tweet_id", "topic"} per line).
        #[arg(long, value_name = "FILE")]
        labels: Option<PathBuf>,
    },
    /// Topic labelling and classification.
    #[command(subcommand)]
    Topics(TopicsCommand),
    /// Statistical Turing tests on generated tweets.
    #[command(subcommand)]
    Turing(TuringCommand),
    /// Perspective spaces and roll-call vote prediction.
    #[command(subcommand)]
    Dkps(DkpsCommand),
    /// Senate flip scores from House cross-party votes.
    #[command(subcommand)]
    Flipscore(FlipCommand),
    /// Paired comparisons across bills.
    #[command(subcommand)]
    Compare(CompareCommand),
    /// Write seeded synthetic fixtures.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Subcommand)]
pub enum TopicsCommand {
    /// Label a seeded sample of tweets with the generation provider.
    Label {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        n_seed: Option<usize>,
    },
    /// Train the linear topic classifier on labelled tweets.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_name = "FILE")]
        labels: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Label every tweet with a trained classifier.
    Classify {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Model report written by `topics train`.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct TuringArgs {
    /// Prompt regime: generic, persona or rag.
    #[arg(long)]
    pub mode: Option<PromptMode>,
    /// Tweets per class.
    #[arg(long)]
    pub m: Option<usize>,
    /// RFC 3339 cutoff separating retrieval pool and test tweets.
    #[arg(long)]
    pub cutoff: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum TuringCommand {
    /// One member under one prompt regime.
    Run {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        handle: String,
        #[command(flatten)]
        turing: TuringArgs,
    },
    /// Real against real for one member.
    Control {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        handle: String,
        #[command(flatten)]
        turing: TuringArgs,
    },
    /// Many members, optionally with their controls.
    Cohort {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Comma-separated handles; default is a seeded sample or everyone.
        #[arg(long, value_delimiter = ',')]
        handles: Vec<String>,
        /// Sample this many handles.
        #[arg(long)]
        n: Option<usize>,
        /// Also run the real-vs-real control per handle.
        #[arg(long)]
        control: bool,
        #[command(flatten)]
        turing: TuringArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct DkpsArgs {
    /// generated or retrieved.
    #[arg(long)]
    pub mode: Option<DkpsMode>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Fixed embedding dimension instead of automatic selection.
    #[arg(long)]
    pub d: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum DkpsCommand {
    /// Build the perspective space for one bill.
    Build {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_name = "FILE")]
        questions: PathBuf,
        /// Roll call supplying the vote time.
        #[arg(long, value_name = "FILE")]
        rollcall: Option<PathBuf>,
        /// RFC 3339 vote time (instead of a roll call).
        #[arg(long)]
        vote_time: Option<String>,
        #[command(flatten)]
        dkps: DkpsArgs,
    },
    /// Cross-validated vote prediction on a built space.
    Predict {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Artifact written by `dkps build`.
        #[arg(long, value_name = "FILE")]
        dkps: PathBuf,
        #[arg(long, value_name = "FILE")]
        rollcall: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        k_grid: Vec<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum FlipCommand {
    /// Score every positioned senator on every linked bill.
    Compute {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Bill links JSONL: house_rollcall, senate_rollcall, and dkps or questions.
        #[arg(long, value_name = "FILE")]
        bills: PathBuf,
        #[command(flatten)]
        dkps: DkpsArgs,
    },
    /// Compare quantized scores with Senate crossings.
    Validate {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Report written by `flipscore compute`.
        #[arg(long, value_name = "FILE")]
        scores: PathBuf,
        #[arg(long, value_name = "FILE")]
        bills: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum CompareCommand {
    /// Wilcoxon signed-rank test on paired best-k accuracies.
    Wilcoxon {
        /// Prediction reports for the first condition.
        #[arg(long, value_name = "FILE")]
        a: Vec<PathBuf>,
        /// Prediction reports for the second condition, paired by bill.
        #[arg(long, value_name = "FILE")]
        b: Vec<PathBuf>,
        /// CSV with columns a,b (and optionally bill_id) instead of reports.
        #[arg(long, value_name = "FILE", conflicts_with_all = ["a", "b"])]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Persona corpus for Turing tests and topic runs.
    Corpus {
        #[arg(long, default_value_t = 100)]
        personas: usize,
        #[arg(long, default_value_t = 40)]
        tweets_before: usize,
        #[arg(long, default_value_t = 220)]
        tweets_after: usize,
    },
    /// Two-party House corpus, bill questions and a party-line roll call.
    Votes {
        #[arg(long, default_value_t = 60)]
        members: usize,
        #[arg(long, default_value_t = 5)]
        questions: usize,
        #[arg(long, default_value_t = 0.1)]
        flip_fraction: f64,
    },
    /// House and Senate roll calls with precomputed spaces for four bills.
    Bicameral {
        /// Senators cross at a flat rate unrelated to the House.
        #[arg(long)]
        null: bool,
    },
}

impl Command {
    /// Subcommand names, for usage text and report labels.
    pub fn path(&self) -> Vec<&'static str> {
        match self {
            Command::Validate { .. } => vec!["validate"],
            Command::Stats { .. } => vec!["stats"],
            Command::Topics(t) => vec![
                "topics",
                match t {
                    TopicsCommand::Label { .. } => "label",
                    TopicsCommand::Train { .. } => "train",
                    TopicsCommand::Classify { .. } => "classify",
                },
            ],
            Command::Turing(t) => vec![
                "turing",
                match t {
                    TuringCommand::Run { .. } => "run",
                    TuringCommand::Control { .. } => "control",
                    TuringCommand::Cohort { .. } => "cohort",
                },
            ],
            Command::Dkps(d) => vec![
                "dkps",
                match d {
                    DkpsCommand::Build { .. } => "build",
                    DkpsCommand::Predict { .. } => "predict",
                },
            ],
            Command::Flipscore(f) => vec![
                "flipscore",
                match f {
                    FlipCommand::Compute { .. } => "compute",
                    FlipCommand::Validate { .. } => "validate",
                },
            ],
            Command::Compare(CompareCommand::Wilcoxon { .. }) => vec!["compare", "wilcoxon"],
            Command::Synth(s) => vec![
                "synth",
                match s {
                    SynthCommand::Corpus { .. } => "corpus",
                    SynthCommand::Votes { .. } => "votes",
                    SynthCommand::Bicameral { .. } => "bicameral",
                },
            ],
        }
    }
}

/// Usage line for a subcommand path.
pub fn usage_for(path: &[&str]) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let mut cur = cmd;
    for name in path {
        match cur.find_subcommand(name) {
            Some(sub) => cur = sub.clone(),
            None => break,
        }
    }
    cur.render_usage().to_string()
}

/// Runs the program on `argv` (including the program name) and returns the
/// exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Usage(e.kind().to_string());
            eprint!("{}", e.render());
            eprintln!("{}", err.record());
            return err.exit_code();
        }
    };
    let path = cli.command.path();
    match commands::execute(cli) {
        Ok(written) => {
            for p in written {
                println!("{}", p.display());
            }
            0
        }
        Err(err) => {
            eprintln!("error: {err}");
            if matches!(err, CliError::Usage(_)) {
                eprintln!("\n{}", usage_for(&path));
            }
            eprintln!("{}", err.record());
            err.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_names_the_subcommand() {
        let u = usage_for(&["turing", "run"]);
        assert!(u.contains("turing run"), "{u}");
    }

    #[test]
    fn error_record_is_one_json_line() {
        let rec = CliError::Data("bad\nline".into()).record();
        assert!(!rec.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&rec).unwrap();
        assert_eq!(v["error"]["exit_code"], 2);
        assert_eq!(v["error"]["kind"], "data");
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(run(["twin", "nonsense"]), 1);
        assert_eq!(run(["twin", "--help"]), 0);
        let provider: CliError = twin_core::providers::ProviderError::EmptyInput.into();
        assert_eq!(provider.exit_code(), 3);
        let config: CliError = twin_core::providers::ProviderError::InvalidConfig("x".into()).into();
        assert_eq!(config.exit_code(), 1);
    }
}
