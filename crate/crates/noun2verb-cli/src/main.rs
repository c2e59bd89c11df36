//! `noun2verb` — train, evaluate and query speaker-listener models of
//! denominal verbs, harvest paraphrases, and detect noun-to-verb change
//! points.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
//! abort. Every run writes `run_manifest.json` into the output directory
//! before any computation output.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "noun2verb", version, about, disable_help_subcommand = true)]
struct Cli {
    /// Seed for every stochastic component of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for artifacts and the run manifest.
    #[arg(long, global = true, default_value = "n2v-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine paraphrase verbs for one denominal utterance from a tagged corpus.
    Harvest {
        /// Corpus file: one sentence per line, tokens as surface/POS[/lemma].
        #[arg(long)]
        corpus: PathBuf,
        /// The denominal verb (a noun used verbally).
        #[arg(long)]
        verb: String,
        /// Its single-word object context.
        #[arg(long)]
        context: String,
        /// Relation symbol, e.g. LOCATUM_ON or INSTRUMENT.
        #[arg(long)]
        relation: String,
        #[arg(long, default_value_t = 3)]
        top: usize,
    },
    /// Train a model and write a checkpoint.
    Train {
        /// Model class.
        #[arg(long, value_parser = ["discriminative", "partial", "full"])]
        model: String,
        /// Flat key = value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset file with the supervised records.
        #[arg(long)]
        supervised: PathBuf,
        /// Additional dataset file with unsupervised records.
        #[arg(long)]
        unsupervised: Option<PathBuf>,
        /// Pretrained embeddings in text format.
        #[arg(long)]
        embeddings: PathBuf,
        /// Denominal targets to exclude from candidates and training records.
        #[arg(long = "exclude-target")]
        exclude_targets: Vec<String>,
    },
    /// Evaluate a checkpoint (or the frequency baseline) on annotated data.
    Eval {
        /// Model checkpoint to evaluate.
        #[arg(long, conflicts_with = "frequency_from")]
        model: Option<PathBuf>,
        /// Evaluate the frequency baseline fitted on this training file.
        #[arg(long)]
        frequency_from: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Annotated evaluation records.
        #[arg(long)]
        test: PathBuf,
        /// Optional surface<TAB>lemma map for gold matching.
        #[arg(long)]
        lemmas: Option<PathBuf>,
        /// Emit per-group metric rows.
        #[arg(long, value_parser = ["adult_child", "decade"])]
        group_by: Option<String>,
        #[arg(long, default_value_t = 5)]
        k_max: usize,
        /// Run the subset-KL protocol with this many subsets.
        #[arg(long)]
        subsets: Option<usize>,
        /// Subset size for the subset-KL protocol.
        #[arg(long, default_value_t = 55)]
        subset_size: usize,
        /// Model name column in the metrics output.
        #[arg(long)]
        model_name: Option<String>,
        #[arg(long, default_value = "english")]
        language: String,
    },
    /// Rank interpretations of a denominal utterance.
    Comprehend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        verb: String,
        #[arg(long)]
        context: String,
        #[arg(long, default_value_t = 3)]
        top: usize,
        /// Monte Carlo samples over the frame variable (exact when omitted).
        #[arg(long)]
        frame_samples: Option<usize>,
    },
    /// Rank denominal utterances for an interpretation.
    Produce {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Paraphrase verb of the interpretation.
        #[arg(long)]
        verb: String,
        #[arg(long)]
        relation: String,
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Restrict candidates to the utterances in this 2-column file.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        frame_samples: Option<usize>,
    },
    /// Detect noun-to-verb change points in yearly POS counts.
    Changepoint {
        /// CSV of word,year,noun_count,verb_count rows.
        #[arg(long)]
        counts: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1000)]
        permutations: usize,
        #[arg(long, default_value_t = 5)]
        min_segment: usize,
        /// Keep only words whose total noun and verb counts both exceed this.
        #[arg(long, default_value_t = 500)]
        theta_f: u64,
    },
    /// Consolidate eval metric files into summary tables.
    Report {
        /// Directory holding metrics*.csv files from eval runs.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Usage problems (and --help/--version) all land here; clap
            // renders the message, we own the exit code.
            let is_help = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            err.print().ok();
            return if is_help { 0 } else { 1 };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn exit_code(err: &noun2verb::Error) -> i32 {
    match err {
        noun2verb::Error::Numerical(_) => 3,
        noun2verb::Error::Autodiff(autodiff::Error::NonFinite { .. }) => 3,
        _ => 2,
    }
}
