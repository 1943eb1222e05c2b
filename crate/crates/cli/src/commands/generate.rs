use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use nersplit::corpus::write_jsonl;
use nersplit::experiments::{make_biased_corpus, BiasedCorpusConfig};
use serde_json::Value;

use crate::input::read_json;
use crate::manifest::Run;
use crate::{usage, OutArg};

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON object with generator settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of planted bias words.
    #[arg(long)]
    pub planted_words: Option<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

pub fn run(a: &GenerateArgs, argv: Vec<String>) -> Result<()> {
    let mut run = Run::start("generate", argv, &a.out.out)?;
    let mut config = match &a.config {
        Some(p) => {
            let mut merged = serde_json::to_value(BiasedCorpusConfig::default())?;
            let Value::Object(overrides) = read_json::<Value>(&mut run, p)? else {
                return Err(usage("--config must hold a JSON object"));
            };
            let base = merged.as_object_mut().expect("config serializes to an object");
            for (k, v) in overrides {
                if !base.contains_key(&k) {
                    return Err(usage(format!("unknown generator setting {k:?} in --config")));
                }
                base.insert(k, v);
            }
            serde_json::from_value(merged).map_err(|e| usage(format!("--config: {e}")))?
        }
        None => BiasedCorpusConfig::default(),
    };
    if let Some(n) = a.planted_words {
        config.planted_words = n;
    }
    run.set_config(&config)?;
    run.set_seed(a.seed);
    let generated = make_biased_corpus(&config, a.seed)?;
    run.write("train.jsonl", write_jsonl(&generated.train)?)?;
    run.write("dev.jsonl", write_jsonl(&generated.dev)?)?;
    run.write("test.jsonl", write_jsonl(&generated.test)?)?;
    run.write_json("planted.json", &generated.planted)?;
    println!(
        "generated {} / {} / {} mentions, planted words: {}",
        generated.train.mention_count(),
        generated.dev.mention_count(),
        generated.test.mention_count(),
        generated.planted.join(", ")
    );
    run.finish()?;
    Ok(())
}
