//! `nersplit`: reproducible pipelines over NER benchmark corpora.
//!
//! Every command writes its artifacts plus a `manifest.json` into `--out`.
//! `nersplit rerun --manifest DIR/manifest.json --out NEW` replays a run and
//! checks that every artifact is byte-identical.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 `--check` or
//! `rerun` mismatch.

mod check;
mod commands;
mod input;
mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nersplit::TokenizerMode;

#[derive(Parser, Debug)]
#[command(name = "nersplit", version, about = "MEM/SYN/CON splits, dictionary baselines and debiased tagging for NER corpora")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Input corpus format; `auto` picks by file extension.
    #[arg(long, global = true, value_enum, default_value_t = Format::Auto)]
    pub format: Format,
    /// Tokenizer for PubTator and JSON-lines input: `punct` or `whitespace`.
    #[arg(long, global = true, default_value = "punct")]
    pub tokenizer: TokenizerMode,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Load corpora despite malformed records; problems go to issues.json.
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Rename every entity type to this one (e.g. NCBI's four disease
    /// sub-types to `Disease`).
    #[arg(long, global = true, value_name = "TYPE")]
    pub collapse_types: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Auto,
    Pubtator,
    Conll,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Assign evaluation mentions to MEM/SYN/CON.
    Partition(commands::partition::PartitionArgs),
    /// Run the DICT_train / DICT_syn dictionary baseline and score it.
    Dict(commands::dict::DictArgs),
    /// Train the linear tagger, optionally with the bias product.
    Train(commands::train::TrainArgs),
    /// Tag a corpus with a trained model.
    Predict(commands::predict::PredictArgs),
    /// Score predictions (or a model) against a gold corpus.
    Eval(commands::eval::EvalArgs),
    /// Apply perturbations from an experiment manifest.
    Perturb(commands::perturb::PerturbArgs),
    /// Merge eval.json files of several runs into one table.
    Report(commands::report::ReportArgs),
    /// Generate a synthetic corpus with planted word-level biases.
    Generate(commands::generate::GenerateArgs),
    /// Replay a run from its manifest and compare every artifact.
    Rerun(commands::rerun::RerunArgs),
}

/// Failures that map to a specific exit code; anything else is a data
/// error.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Check(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    Failure::Usage(message.into()).into()
}

/// Arguments to record in a manifest: everything but the output directory
/// and thread count, which must not change the artifacts.
fn replayable_args(args: &[OsString]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args.iter().skip(1) {
        let a = a.to_string_lossy().into_owned();
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" || a == "--threads" {
            skip = true;
            continue;
        }
        if a.starts_with("--out=") || a.starts_with("--threads=") {
            continue;
        }
        out.push(a);
    }
    out
}

/// Parses and runs one invocation; returns the process exit code.
pub fn run_args(args: Vec<OsString>) -> u8 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let recorded = replayable_args(&args);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads.unwrap_or(0)).build();
    let result = match pool {
        Ok(pool) => pool.install(|| commands::dispatch(&cli, recorded)),
        Err(e) => Err(anyhow::anyhow!("cannot start thread pool: {e}")),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Failure>() {
                Some(Failure::Usage(_)) => 1,
                Some(Failure::Check(_)) => 3,
                None => 2,
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(run_args(std::env::args_os().collect()))
}

/// Output directory argument shared by every command.
#[derive(Args, Debug, Clone)]
pub struct OutArg {
    /// Directory for artifacts and manifest.json (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn replayable_args_drop_out_and_threads() {
        let args = os(&["nersplit", "--threads", "4", "partition", "--train", "a.txt", "--out=x", "--eval", "b.txt", "--out", "y"]);
        assert_eq!(replayable_args(&args), ["partition", "--train", "a.txt", "--eval", "b.txt"]);
    }

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        assert_eq!(run_args(os(&["nersplit", "partition"])), 1);
        assert_eq!(run_args(os(&["nersplit", "--tokenizer", "bogus", "report", "--out", "x"])), 1);
        assert_eq!(run_args(os(&["nersplit", "--help"])), 0);
        assert_eq!(run_args(os(&["nersplit", "--version"])), 0);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
