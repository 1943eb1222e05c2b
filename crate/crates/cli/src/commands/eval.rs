use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use nersplit::eval::{evaluate, Prediction, RelaxedMode};
use nersplit::partition::partition_corpus;
use nersplit::{Corpus, EvalOptions, EvalReport, SplitReport, SplitRole, TaggerModel, TrainSets};
use serde::Serialize;

use super::{enforce, run_check, Checkable};
use crate::input::{parse_subsets, predictions_jsonl, read_json, read_predictions, EvalInput, Loader};
use crate::manifest::Run;
use crate::{GlobalOpts, OutArg};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RelaxedArg {
    /// A predicted span contains the target occurrence.
    Range,
    /// An overlapping predicted span's text contains the target string.
    Substring,
}

impl From<RelaxedArg> for RelaxedMode {
    fn from(a: RelaxedArg) -> Self {
        match a {
            RelaxedArg::Range => RelaxedMode::Range,
            RelaxedArg::Substring => RelaxedMode::Substring,
        }
    }
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["model", "predictions"]))]
#[command(group = clap::ArgGroup::new("splits").args(["split_report", "train"]))]
pub struct EvalArgs {
    /// Gold corpus as `[dev=|test=]PATH`.
    #[arg(long)]
    pub eval: EvalInput,
    /// Tagger checkpoint to run on the gold corpus.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Predictions as JSON lines.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Split report (from `partition` or `dict`) for per-split recall.
    #[arg(long)]
    pub split_report: Option<PathBuf>,
    /// Training corpus to partition the gold corpus against.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub entity_type: Option<String>,
    #[arg(long)]
    pub target_surface: Option<String>,
    #[arg(long, value_enum, default_value_t = RelaxedArg::Range)]
    pub relaxed_mode: RelaxedArg,
    #[arg(long = "subset")]
    pub subsets: Vec<String>,
    /// Row label in eval.md.
    #[arg(long, default_value = "model")]
    pub name: String,
    #[arg(long)]
    pub check: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Serialize)]
struct Config<'a> {
    name: &'a str,
    role: SplitRole,
    source: &'static str,
    entity_type: &'a Option<String>,
    options: &'a EvalOptions,
    tokenizer: nersplit::TokenizerMode,
    collapse_types: &'a Option<String>,
}

/// Restricts gold mentions, predictions and split assignments to one entity
/// type; with no type everything is scored.
pub fn scored_view(
    eval: &Corpus,
    preds: Vec<Prediction>,
    split: SplitReport,
    entity_type: Option<&str>,
) -> (Corpus, Vec<Prediction>, SplitReport) {
    match entity_type {
        None => (eval.clone(), preds, split),
        Some(ty) => {
            let preds = preds.into_iter().filter(|p| p.entity_type == ty).collect();
            (eval.restrict_to_type(ty), preds, split.for_type(ty))
        }
    }
}

pub fn run(g: &GlobalOpts, a: &EvalArgs, argv: Vec<String>) -> Result<()> {
    let options = EvalOptions {
        target_surface: a.target_surface.clone(),
        relaxed_mode: a.relaxed_mode.into(),
        subsets: parse_subsets(&a.subsets)?,
    };
    let mut run = Run::start("eval", argv, &a.out.out)?;
    run.set_config(&Config {
        name: &a.name,
        role: a.eval.role,
        source: if a.model.is_some() { "model" } else { "predictions" },
        entity_type: &a.entity_type,
        options: &options,
        tokenizer: g.tokenizer,
        collapse_types: &g.collapse_types,
    })?;
    let mut loader = Loader::new(g);
    let eval = loader.load(&mut run, &a.eval.path, a.eval.role)?;
    let preds = match (&a.model, &a.predictions) {
        (Some(path), _) => {
            let bytes = run.read_input(path)?;
            let text = String::from_utf8(bytes).context("checkpoint is not UTF-8")?;
            let model = TaggerModel::from_json(&text).with_context(|| format!("loading {}", path.display()))?;
            let eval = if eval.tokenizer == model.tokenizer { eval.clone() } else { eval.retokenize(model.tokenizer) };
            let preds = model.predict_corpus(&eval)?;
            run.write("predictions.jsonl", predictions_jsonl(&preds))?;
            preds
        }
        (None, Some(path)) => read_predictions(&mut run, path)?,
        (None, None) => unreachable!("clap requires a prediction source"),
    };
    let split = match (&a.split_report, &a.train) {
        (Some(path), _) => Some(read_json::<SplitReport>(&mut run, path)?),
        (None, Some(path)) => {
            let train = loader.load(&mut run, path, SplitRole::Train)?;
            let report = partition_corpus(&eval, &TrainSets::build(&train)?)?;
            run.write("split.json", report.to_json() + "\n")?;
            Some(report)
        }
        (None, None) => None,
    };
    let report = match split {
        Some(split) => {
            let (gold, preds, split) = scored_view(&eval, preds, split, a.entity_type.as_deref());
            evaluate(&gold, &preds, Some(&split), &options)?
        }
        None => {
            let (gold, preds) = match a.entity_type.as_deref() {
                Some(ty) => (eval.restrict_to_type(ty), preds.into_iter().filter(|p| p.entity_type == ty).collect()),
                None => (eval, preds),
            };
            evaluate(&gold, &preds, None, &options)?
        }
    };
    run.write("eval.json", report.to_json() + "\n")?;
    let md = EvalReport::markdown(&[(&a.name, &report)]);
    run.write("eval.md", &md)?;
    print!("{md}");
    let outcome = a.check.as_ref().map(|p| run_check(&mut run, p, Checkable::Eval(&report))).transpose()?;
    loader.finish(&mut run)?;
    run.finish()?;
    enforce(outcome)
}
