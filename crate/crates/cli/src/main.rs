use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sumprobe_cli::config::{Mock, Overrides, RunConfig};
use sumprobe_cli::stages::{cmd_analyze, cmd_generate, cmd_score, cmd_transform, StageOutcome};

/// Probe code-summarization models with semantics-hiding code variants.
#[derive(Debug, Parser)]
#[command(name = "sumprobe", version)]
struct Cli {
    /// TOML config file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for donor assignment, few-shot selection and random pairings.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker count for per-example work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory holding every stage's files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Record-level errors tolerated before exiting non-zero.
    #[arg(long, global = true)]
    max_errors: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MockArg {
    Echo,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter the corpus and write one file per code variant.
    Transform {
        /// Variant to produce (repeatable, or `all`).
        #[arg(long = "variant")]
        variants: Vec<String>,
        /// Corpus file, or a directory of `<split>.jsonl` files.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        split: Option<String>,
        /// Accepted for compatibility; language detection is not implemented.
        #[arg(long)]
        skip_lang_filter: bool,
    },
    /// Ask a model to summarize every transformed example.
    Generate {
        #[arg(long)]
        model: Option<String>,
        /// Replace the endpoint with a test client.
        #[arg(long, value_enum)]
        mock: Option<MockArg>,
        /// Chat-completions URL.
        #[arg(long)]
        endpoint: Option<String>,
        /// Number of few-shot demonstrations.
        #[arg(long)]
        shots: Option<usize>,
        /// Few-shot pool; defaults to the train split of the corpus directory.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Compute BLEU, BERTScore, copy rates and attribution per record.
    Score {
        /// `fallback` or a BPE vocabulary file.
        #[arg(long)]
        tokenizer: Option<String>,
    },
    /// Write report tables and figures.
    #[command(alias = "report")]
    Analyze,
}

fn run(cli: Cli) -> anyhow::Result<StageOutcome> {
    let mut o = Overrides { seed: cli.seed, out: cli.out, jobs: cli.jobs, max_errors: cli.max_errors, ..Default::default() };
    let stage: fn(&RunConfig) -> anyhow::Result<StageOutcome> = match cli.command {
        Command::Transform { variants, corpus, split, skip_lang_filter } => {
            if skip_lang_filter {
                log::info!("language filtering is not implemented; --skip-lang-filter has no effect");
            }
            o.variants = variants;
            o.corpus = corpus;
            o.split = split;
            cmd_transform
        }
        Command::Generate { model, mock, endpoint, shots, train, corpus } => {
            o.model = model;
            o.mock = mock.map(|MockArg::Echo| Mock::Echo);
            o.endpoint = endpoint;
            o.shots = shots;
            o.train = train;
            o.corpus = corpus;
            cmd_generate
        }
        Command::Score { tokenizer } => {
            o.tokenizer = tokenizer;
            cmd_score
        }
        Command::Analyze => cmd_analyze,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), o)?;
    stage(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(outcome) if outcome.ok() => {
            log::info!("{} records, {} errors", outcome.records, outcome.errors);
            ExitCode::SUCCESS
        }
        Ok(outcome) => {
            log::error!(
                "{} record-level errors exceed the tolerated {}",
                outcome.errors,
                outcome.tolerated.unwrap_or(usize::MAX)
            );
            ExitCode::from(2)
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
