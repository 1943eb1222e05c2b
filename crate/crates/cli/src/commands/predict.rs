use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use nersplit::TaggerModel;

use crate::input::{predictions_jsonl, EvalInput, Loader};
use crate::manifest::Run;
use crate::{GlobalOpts, OutArg};

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus to tag (`[dev=|test=]PATH`); its annotations are ignored.
    #[arg(long)]
    pub eval: EvalInput,
    #[command(flatten)]
    pub out: OutArg,
}

pub fn run(g: &GlobalOpts, a: &PredictArgs, argv: Vec<String>) -> Result<()> {
    let mut run = Run::start("predict", argv, &a.out.out)?;
    run.set_config(&serde_json::json!({ "role": a.eval.role, "tokenizer": g.tokenizer }))?;
    let bytes = run.read_input(&a.model)?;
    let model = TaggerModel::from_json(std::str::from_utf8(&bytes).context("checkpoint is not UTF-8")?)
        .with_context(|| format!("loading {}", a.model.display()))?;
    let mut loader = Loader::new(g);
    let corpus = loader.load(&mut run, &a.eval.path, a.eval.role)?;
    let corpus = if corpus.tokenizer == model.tokenizer { corpus } else { corpus.retokenize(model.tokenizer) };
    let preds = model.predict_corpus(&corpus)?;
    run.write("predictions.jsonl", predictions_jsonl(&preds))?;
    println!("{} predictions", preds.len());
    loader.finish(&mut run)?;
    run.finish()?;
    Ok(())
}
