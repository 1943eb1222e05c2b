use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nersplit::EvalReport;
use serde::Serialize;

use crate::input::read_json;
use crate::manifest::Run;
use crate::{usage, OutArg};

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directories containing eval.json.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Row labels, one per run (default: directory names).
    #[arg(long, value_delimiter = ',')]
    pub names: Vec<String>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Serialize)]
struct Row<'a> {
    name: &'a str,
    eval: &'a EvalReport,
}

pub fn run(a: &ReportArgs, argv: Vec<String>) -> Result<()> {
    if !a.names.is_empty() && a.names.len() != a.runs.len() {
        return Err(usage(format!("{} names for {} runs", a.names.len(), a.runs.len())));
    }
    let names: Vec<String> = if a.names.is_empty() {
        a.runs.iter().map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())).collect()
    } else {
        a.names.clone()
    };
    let mut run = Run::start("report", argv, &a.out.out)?;
    run.set_config(&serde_json::json!({ "names": &names }))?;
    let mut reports = Vec::new();
    for dir in &a.runs {
        reports.push(read_json::<EvalReport>(&mut run, &dir.join("eval.json"))?);
    }
    let rows: Vec<(&str, &EvalReport)> = names.iter().map(String::as_str).zip(&reports).collect();
    let md = EvalReport::markdown(&rows);
    run.write("table.md", &md)?;
    let json: Vec<Row> = rows.iter().map(|(name, eval)| Row { name, eval }).collect();
    run.write_json("report.json", &json)?;
    print!("{md}");
    run.finish()?;
    Ok(())
}
