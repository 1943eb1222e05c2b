use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use nersplit::dictionary::{read_synonyms, DictionarySource};
use nersplit::eval::{evaluate, Prediction, RelaxedMode};
use nersplit::partition::partition_corpus;
use nersplit::{EntityDictionary, EvalOptions, EvalReport, SplitRole, TrainSets};
use serde::Serialize;

use super::eval::{scored_view, RelaxedArg};
use super::partition::dataset_name;
use super::{enforce, run_check, Checkable};
use crate::input::{parse_subsets, predictions_jsonl, EvalInput, Loader};
use crate::manifest::Run;
use crate::{GlobalOpts, OutArg};

#[derive(Args, Debug)]
pub struct DictArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Evaluation corpus as `[dev=|test=]PATH`.
    #[arg(long)]
    pub eval: EvalInput,
    /// `{"cui": ..., "surfaces": [...]}` JSON lines; turns DICT_train into
    /// DICT_syn.
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    /// Score only mentions and predictions of this entity type.
    #[arg(long)]
    pub entity_type: Option<String>,
    #[arg(long)]
    pub target_surface: Option<String>,
    #[arg(long, value_enum, default_value_t = RelaxedArg::Range)]
    pub relaxed_mode: RelaxedArg,
    /// `abbreviation`, `name_regularity` or `surfaces:a,b` (repeatable).
    #[arg(long = "subset")]
    pub subsets: Vec<String>,
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
    model: DictionarySource,
    role: SplitRole,
    entity_type: &'a Option<String>,
    options: &'a EvalOptions,
    tokenizer: nersplit::TokenizerMode,
    collapse_types: &'a Option<String>,
}

pub fn run(g: &GlobalOpts, a: &DictArgs, argv: Vec<String>) -> Result<()> {
    let options = EvalOptions {
        target_surface: a.target_surface.clone(),
        relaxed_mode: RelaxedMode::from(a.relaxed_mode),
        subsets: parse_subsets(&a.subsets)?,
    };
    let source = if a.synonyms.is_some() { DictionarySource::TrainPlusSynonyms } else { DictionarySource::TrainOnly };
    let name = dataset_name(&a.name, &a.train);
    let mut run = Run::start("dict", argv, &a.out.out)?;
    run.set_config(&Config {
        name: &name,
        model: source,
        role: a.eval.role,
        entity_type: &a.entity_type,
        options: &options,
        tokenizer: g.tokenizer,
        collapse_types: &g.collapse_types,
    })?;
    let mut loader = Loader::new(g);
    let train = loader.load(&mut run, &a.train, SplitRole::Train)?;
    let eval = loader.load(&mut run, &a.eval.path, a.eval.role)?;
    let dict = match &a.synonyms {
        Some(path) => {
            let bytes = run.read_input(path)?;
            let synonyms = read_synonyms(&bytes[..]).with_context(|| format!("reading {}", path.display()))?;
            EntityDictionary::from_train_and_synonyms(&train, &synonyms)?
        }
        None => EntityDictionary::from_train(&train)?,
    };
    let preds: Vec<Prediction> = eval
        .documents
        .iter()
        .flat_map(|d| dict.extract_document(d).into_iter().map(move |s| Prediction::from_span(&d.id, &d.text, &s)))
        .collect();
    let split = partition_corpus(&eval, &TrainSets::build(&train)?)?;
    let (gold, preds, split) = scored_view(&eval, preds, split, a.entity_type.as_deref());
    let report = evaluate(&gold, &preds, Some(&split), &options)?;

    run.write("dictionary.tsv", dict.export())?;
    run.write("predictions.jsonl", predictions_jsonl(&preds))?;
    run.write("split.json", split.to_json() + "\n")?;
    run.write("eval.json", report.to_json() + "\n")?;
    let label = format!("{name} {}", if a.synonyms.is_some() { "DICT_syn" } else { "DICT_train" });
    let md = EvalReport::markdown(&[(&label, &report)]);
    run.write("eval.md", &md)?;
    print!("{md}");
    let outcome = a.check.as_ref().map(|p| run_check(&mut run, p, Checkable::Eval(&report))).transpose()?;
    loader.finish(&mut run)?;
    run.finish()?;
    enforce(outcome)
}
