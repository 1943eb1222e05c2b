use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::Args;
use nersplit::corpus::TagScheme;
use nersplit::eval::{evaluate, EvalReport};
use nersplit::tagger::{train, TaggerError};
use nersplit::{BiasTable, EvalOptions, SplitRole, TaggerConfig};
use serde::Serialize;
use serde_json::Value;

use crate::input::{read_json, EvalInput, Loader};
use crate::manifest::Run;
use crate::{usage, GlobalOpts, OutArg};

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Held-out corpus scored after training (`[dev=|test=]PATH`).
    #[arg(long)]
    pub dev: Option<EvalInput>,
    /// JSON object with any tagger settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train with the bias product against the count-based word bias.
    #[arg(long)]
    pub debias: bool,
    /// Bias temperature (> 0); higher flattens the bias.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hash_bits: Option<u32>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Serialize)]
struct TrainLog<'a> {
    config: &'a TaggerConfig,
    epoch_losses: &'a [f64],
    train_token_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dev: Option<EvalReport>,
}

/// Defaults, then the JSON config file, then flags.
fn resolve_config(file: Option<Value>, a: &TrainArgs) -> Result<TaggerConfig> {
    let mut merged = serde_json::to_value(TaggerConfig::default())?;
    if let Some(file) = file {
        let Value::Object(overrides) = file else {
            return Err(usage("--config must hold a JSON object"));
        };
        let base = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in overrides {
            if !base.contains_key(&k) {
                return Err(usage(format!("unknown tagger setting {k:?} in --config")));
            }
            base.insert(k, v);
        }
    }
    let mut cfg: TaggerConfig = serde_json::from_value(merged).map_err(|e| usage(format!("--config: {e}")))?;
    cfg.debias |= a.debias;
    if a.temperature.is_some() {
        cfg.temperature = a.temperature;
    }
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.learning_rate = a.learning_rate.unwrap_or(cfg.learning_rate);
    cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
    cfg.hash_bits = a.hash_bits.unwrap_or(cfg.hash_bits);
    cfg.l2 = a.l2.unwrap_or(cfg.l2);
    if cfg.temperature.is_some() && !cfg.debias {
        return Err(usage("--temperature only applies with --debias"));
    }
    Ok(cfg)
}

pub fn run(g: &GlobalOpts, a: &TrainArgs, argv: Vec<String>) -> Result<()> {
    let mut run = Run::start("train", argv, &a.out.out)?;
    let file = a.config.as_ref().map(|p| read_json::<Value>(&mut run, p)).transpose()?;
    let cfg = resolve_config(file, a)?;
    run.set_config(&serde_json::json!({
        "tagger": &cfg,
        "tokenizer": g.tokenizer,
        "collapse_types": &g.collapse_types,
        "dev_role": a.dev.as_ref().map(|d| d.role),
    }))?;
    run.set_seed(cfg.seed);
    let mut loader = Loader::new(g);
    let corpus = loader.load(&mut run, &a.train, SplitRole::Train)?;
    let table = if cfg.debias {
        let scheme = TagScheme::new(corpus.entity_types.iter().cloned());
        let table = BiasTable::build(&corpus, &scheme)?;
        run.write("bias.jsonl", table.to_jsonl())?;
        Some(table)
    } else {
        None
    };
    let model = match train(&corpus, table.as_ref(), &cfg) {
        Ok(m) => m,
        Err(TaggerError::Diverged { epoch, checkpoint }) => {
            run.write("model.diverged.json", checkpoint.to_json() + "\n")?;
            loader.finish(&mut run)?;
            run.finish()?;
            return Err(anyhow!("training diverged in epoch {epoch}; last good checkpoint saved as model.diverged.json"));
        }
        Err(e) => return Err(e.into()),
    };
    run.write("model.json", model.to_json() + "\n")?;
    let dev = match &a.dev {
        Some(d) => {
            let dev = loader.load(&mut run, &d.path, d.role)?;
            let preds = model.predict_corpus(&dev)?;
            Some(evaluate(&dev, &preds, None, &EvalOptions::default())?)
        }
        None => None,
    };
    let log = TrainLog {
        config: &cfg,
        epoch_losses: &model.epoch_losses,
        train_token_accuracy: model.token_accuracy(&corpus)?,
        dev,
    };
    run.write_json("train_log.json", &log)?;
    println!(
        "trained {} epochs, final loss {:.6}",
        model.epoch_losses.len(),
        model.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    if let Some(d) = &log.dev {
        println!("dev P {:.1} R {:.1} F1 {:.1}", d.precision.percent(), d.recall.percent(), d.f1);
    }
    loader.finish(&mut run)?;
    run.finish()?;
    Ok(())
}
