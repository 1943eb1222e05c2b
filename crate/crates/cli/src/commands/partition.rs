use std::collections::HashSet;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nersplit::partition::partition_corpus;
use nersplit::{SplitReport, SplitRole, TrainSets};
use serde::Serialize;

use super::{enforce, run_check, Checkable};
use crate::check::SplitRow;
use crate::input::{EvalInput, Loader};
use crate::manifest::Run;
use crate::{usage, GlobalOpts, OutArg};

#[derive(Args, Debug)]
pub struct PartitionArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Evaluation corpus as `[dev=|test=]PATH` (default role test).
    #[arg(long = "eval", required = true)]
    pub evals: Vec<EvalInput>,
    /// Restrict table rows to these entity types (default: all).
    #[arg(long = "entity-type")]
    pub entity_types: Vec<String>,
    /// Dataset name used in the table.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub check: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Serialize)]
struct Config<'a> {
    name: &'a str,
    roles: Vec<SplitRole>,
    entity_types: &'a [String],
    format: String,
    tokenizer: nersplit::TokenizerMode,
    collapse_types: &'a Option<String>,
}

pub(crate) fn dataset_name(name: &Option<String>, train: &std::path::Path) -> String {
    name.clone().unwrap_or_else(|| train.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into()))
}

pub fn run(g: &GlobalOpts, a: &PartitionArgs, argv: Vec<String>) -> Result<()> {
    let roles: Vec<SplitRole> = a.evals.iter().map(|e| e.role).collect();
    if roles.iter().collect::<HashSet<_>>().len() != roles.len() {
        return Err(usage("each --eval role may appear once"));
    }
    let name = dataset_name(&a.name, &a.train);
    let mut run = Run::start("partition", argv, &a.out.out)?;
    run.set_config(&Config {
        name: &name,
        roles: roles.clone(),
        entity_types: &a.entity_types,
        format: format!("{:?}", g.format).to_lowercase(),
        tokenizer: g.tokenizer,
        collapse_types: &g.collapse_types,
    })?;
    let mut loader = Loader::new(g);
    let train = loader.load(&mut run, &a.train, SplitRole::Train)?;
    let sets = TrainSets::build(&train)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for e in &a.evals {
        let corpus = loader.load(&mut run, &e.path, e.role)?;
        let report = partition_corpus(&corpus, &sets)?;
        run.write(&format!("split.{}.json", e.role), report.to_json() + "\n")?;
        let types: Vec<String> =
            if a.entity_types.is_empty() { corpus.entity_types.iter().cloned().collect() } else { a.entity_types.clone() };
        for ty in types {
            let view = report.for_type(&ty);
            rows.push(SplitRow::new(&ty, &view));
            reports.push((ty, view));
        }
    }
    let table: Vec<(&str, &str, &SplitReport)> = reports.iter().map(|(ty, r)| (name.as_str(), ty.as_str(), r)).collect();
    run.write("table.md", SplitReport::markdown(&table))?;
    run.write_json("summary.json", &rows)?;
    print!("{}", SplitReport::markdown(&table));
    let outcome = a.check.as_ref().map(|p| run_check(&mut run, p, Checkable::Splits(&rows))).transpose()?;
    loader.finish(&mut run)?;
    run.finish()?;
    enforce(outcome)
}
