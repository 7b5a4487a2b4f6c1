//! The `gsn` command line: graph inspection, vocabulary and model training,
//! indexing, querying, evaluation, sweeps and an HTTP search service.
//!
//! Machine-readable results go to standard output as one JSON record per
//! line; diagnostics go to the error stream. Exit codes: 0 success, 1 usage
//! or configuration error, 2 data error, 3 numeric failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gsn_core::config::{load_config, Config, CONFIG_ENV};
use gsn_core::Error;

mod commands;
pub mod search;
pub mod server;

pub use search::SearchService;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gsn", version, about = "Graph-based neural code search")]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    index: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the program or summary graph of one input file.
    Graph(GraphArgs),
    /// Build the shared vocabulary from the corpus.
    Vocab,
    /// Train the dual encoders and write a checkpoint.
    Train,
    /// Embed every corpus program into a vector index.
    Index,
    /// Rank indexed programs against a natural-language query.
    Query(QueryArgs),
    /// Evaluate a checkpoint on a held-out corpus.
    Eval(EvalArgs),
    /// Train and evaluate once per value of one hyperparameter.
    Sweep(SweepArgs),
    /// Compare the full model with its single-component variants.
    Ablation(AblationArgs),
    /// Write a synthetic MiniLang corpus.
    Synth(SynthArgs),
    /// Serve `/search` and `/healthz` over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Lang {
    Minilang,
    Ast,
    Conllu,
    Text,
}

#[derive(Debug, Args)]
struct GraphArgs {
    #[arg(long, value_enum)]
    lang: Lang,
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// NODE/E line dump (the default).
    #[arg(long, conflicts_with = "stats")]
    dump: bool,
    /// One JSON record of node and edge counts.
    #[arg(long)]
    stats: bool,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    q: String,
    #[arg(long, default_value_t = server::DEFAULT_K)]
    k: usize,
    /// `raw` or `plus-one`; defaults to the configured mode.
    #[arg(long)]
    score_mode: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Held-out corpus; defaults to the configured corpus.
    #[arg(long)]
    test: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Records held out for testing.
    #[arg(long, default_value_t = 50)]
    test: usize,
    /// Epoch cap; defaults to the configured `max_epochs`.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// `hops`, `heads` or `dim`.
    #[arg(long)]
    param: String,
    /// `a..b` or a comma-separated list.
    #[arg(long)]
    values: String,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
struct AblationArgs {
    /// Comma-separated training seeds.
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; defaults to the configured corpus.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
}

/// Exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else if matches!(e, Error::Config { .. } | Error::InvalidArgument(_)) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

fn resolve_config(cli: &Cli) -> gsn_core::Result<Config> {
    let mut config = match &cli.config {
        Some(path) => load_config(path).map_err(|e| match e {
            Error::Io(io) => Error::Config {
                line: 0,
                message: format!("{}: {io}", path.display()),
            },
            other => other,
        })?,
        None => Config::default(),
    };
    for item in &cli.set {
        let (key, value) = item.split_once('=').ok_or_else(|| Error::Config {
            line: 0,
            message: format!("--set expects KEY=VALUE, got `{item}`"),
        })?;
        config
            .set(key.trim(), value.trim())
            .map_err(|message| Error::Config { line: 0, message })?;
    }
    if let Some(p) = &cli.corpus {
        config.corpus = p.clone();
    }
    if let Some(p) = &cli.vocab {
        config.vocab = p.clone();
    }
    if let Some(p) = &cli.checkpoint {
        config.checkpoint = p.clone();
    }
    if let Some(p) = &cli.index {
        config.index = p.clone();
    }
    config.validate()?;
    Ok(config)
}

/// Runs one invocation. `argv[0]` is the program name.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = resolve_config(&cli).and_then(|config| commands::dispatch(cli.command, &config, out, err));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
