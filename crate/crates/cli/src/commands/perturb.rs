use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use nersplit::corpus::write_jsonl;
use nersplit::{Perturbation, PerturbationLog, SplitRole};
use serde::{Deserialize, Serialize};

use crate::input::{read_json, Loader};
use crate::manifest::Run;
use crate::{GlobalOpts, OutArg};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Train,
    Dev,
    Test,
}

impl From<RoleArg> for SplitRole {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Train => SplitRole::Train,
            RoleArg::Dev => SplitRole::Dev,
            RoleArg::Test => SplitRole::Test,
        }
    }
}

#[derive(Args, Debug)]
pub struct PerturbArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Experiment manifest: one perturbation object, a list of them, or
    /// `{"perturbations": [...]}`; applied in order.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = RoleArg::Train)]
    pub role: RoleArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExperimentManifest {
    One(Perturbation),
    Many(Vec<Perturbation>),
    Wrapped { perturbations: Vec<Perturbation> },
}

impl ExperimentManifest {
    fn into_steps(self) -> Vec<Perturbation> {
        match self {
            ExperimentManifest::One(p) => vec![p],
            ExperimentManifest::Many(v) | ExperimentManifest::Wrapped { perturbations: v } => v,
        }
    }
}

#[derive(Serialize)]
struct Step {
    perturbation: Perturbation,
    log: PerturbationLog,
}

pub fn run(g: &GlobalOpts, a: &PerturbArgs, argv: Vec<String>) -> Result<()> {
    let mut run = Run::start("perturb", argv, &a.out.out)?;
    let steps = read_json::<ExperimentManifest>(&mut run, &a.manifest)?.into_steps();
    let seed = steps.iter().find_map(|p| match p {
        Perturbation::InjectPattern { seed, .. } => Some(*seed),
        _ => None,
    });
    run.set_config(&serde_json::json!({
        "perturbations": &steps,
        "role": SplitRole::from(a.role),
        "tokenizer": g.tokenizer,
        "collapse_types": &g.collapse_types,
    }))?;
    if let Some(seed) = seed {
        run.set_seed(seed);
    }
    let mut loader = Loader::new(g);
    let mut corpus = loader.load(&mut run, &a.corpus, a.role.into())?;
    let mut log = Vec::new();
    for (i, p) in steps.into_iter().enumerate() {
        let (next, l) = p.apply(&corpus).with_context(|| format!("perturbation {} ({:?})", i + 1, p))?;
        println!("step {}: {} occurrence(s), {} mention(s) changed", i + 1, l.occurrences, l.mentions_changed);
        corpus = next;
        log.push(Step { perturbation: p, log: l });
    }
    run.write("corpus.jsonl", write_jsonl(&corpus)?)?;
    run.write_json("perturbation_log.json", &log)?;
    loader.finish(&mut run)?;
    run.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_shapes() {
        let one = r#"{"kind": "replace_surface", "old": "COVID-19", "new": "MERS"}"#;
        let many = format!("[{one}, {{\"kind\": \"inject_pattern\", \"k\": 2, \"seed\": 3}}]");
        let wrapped = format!("{{\"perturbations\": {many}}}");
        assert_eq!(serde_json::from_str::<ExperimentManifest>(one).unwrap().into_steps().len(), 1);
        assert_eq!(serde_json::from_str::<ExperimentManifest>(&many).unwrap().into_steps().len(), 2);
        let steps = serde_json::from_str::<ExperimentManifest>(&wrapped).unwrap().into_steps();
        assert!(matches!(&steps[1], Perturbation::InjectPattern { k: 2, seed: 3, template } if template == "{Abbreviation}-{Number}"));
        assert!(serde_json::from_str::<ExperimentManifest>(r#"{"kind": "shuffle"}"#).is_err());
    }
}
