pub mod dict;
pub mod eval;
pub mod generate;
pub mod partition;
pub mod perturb;
pub mod predict;
pub mod report;
pub mod rerun;
pub mod train;

use std::path::Path;

use anyhow::{bail, Result};

use crate::check::{self, CheckOutcome, Golden, SplitRow};
use crate::manifest::Run;
use crate::{input, Cli, Command, Failure};

pub fn dispatch(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Partition(a) => partition::run(g, a, argv),
        Command::Dict(a) => dict::run(g, a, argv),
        Command::Train(a) => train::run(g, a, argv),
        Command::Predict(a) => predict::run(g, a, argv),
        Command::Eval(a) => eval::run(g, a, argv),
        Command::Perturb(a) => perturb::run(g, a, argv),
        Command::Report(a) => report::run(a, argv),
        Command::Generate(a) => generate::run(a, argv),
        Command::Rerun(a) => rerun::run(g, a),
    }
}

/// What a run offers to a `--check` golden file.
pub enum Checkable<'a> {
    Splits(&'a [SplitRow]),
    Eval(&'a nersplit::EvalReport),
}

/// Loads the golden file (recorded as an input), compares, writes
/// check.json and prints one line per comparison. The caller finishes the
/// run and then calls [`enforce`].
pub fn run_check(run: &mut Run, golden_path: &Path, what: Checkable) -> Result<CheckOutcome> {
    let golden: Golden = input::read_json(run, golden_path)?;
    let outcome = match (&golden, what) {
        (Golden::Partition(g), Checkable::Splits(rows)) => check::check_partition(g, rows),
        (Golden::Eval(g), Checkable::Eval(r)) => check::check_eval(g, r),
        (Golden::Partition(_), _) => bail!("{}: partition golden file used with a command that scores predictions", golden_path.display()),
        (Golden::Eval(_), _) => bail!("{}: eval golden file used with a command that only partitions", golden_path.display()),
    };
    for line in &outcome.lines {
        println!("{line}");
    }
    run.write_json("check.json", &outcome)?;
    Ok(outcome)
}

pub fn enforce(outcome: Option<CheckOutcome>) -> Result<()> {
    match outcome {
        Some(o) if !o.passed => {
            let failed = o.lines.iter().filter(|l| l.starts_with("FAIL")).count();
            Err(Failure::Check(format!("{failed} comparison(s) out of tolerance")).into())
        }
        _ => Ok(()),
    }
}
