//! Corpus loading with format detection and issue handling.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use nersplit::corpus::{self, ConllOptions, Issue, Parsed, PubtatorOptions};
use nersplit::eval::Prediction;
use nersplit::{Corpus, SplitRole};
use serde::Serialize;

use crate::manifest::Run;
use crate::{usage, Format, GlobalOpts};

pub fn detect_format(path: &Path, requested: Format) -> Format {
    if requested != Format::Auto {
        return requested;
    }
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jsonl" | "json") => Format::Json,
        Some("conll" | "bio" | "iob" | "tsv") => Format::Conll,
        _ => Format::Pubtator,
    }
}

/// Parse problems of one input file.
#[derive(Debug, Serialize)]
pub struct FileIssues {
    pub path: String,
    pub issues: Vec<Issue>,
}

/// Loads corpora for a run and remembers parse problems.
pub struct Loader<'a> {
    pub global: &'a GlobalOpts,
    pub issues: Vec<FileIssues>,
}

impl<'a> Loader<'a> {
    pub fn new(global: &'a GlobalOpts) -> Self {
        Loader { global, issues: Vec::new() }
    }

    pub fn load(&mut self, run: &mut Run, path: &Path, role: SplitRole) -> Result<Corpus> {
        let bytes = run.read_input(path)?;
        let format = detect_format(path, self.global.format);
        let parsed: Parsed = match format {
            Format::Json => corpus::read_jsonl(&bytes[..], Some(role)),
            Format::Conll => corpus::parse_conll(&bytes[..], &ConllOptions::new(role)),
            Format::Pubtator | Format::Auto => {
                let opts = PubtatorOptions { tokenizer: self.global.tokenizer, ..PubtatorOptions::new(role) };
                corpus::parse_pubtator(&bytes[..], &opts)
            }
        }
        .with_context(|| format!("parsing {}", path.display()))?;
        if !parsed.issues.is_empty() {
            if !self.global.lenient {
                let shown: Vec<String> = parsed.issues.iter().take(5).map(|i| i.to_string()).collect();
                bail!(
                    "{}: {} malformed record(s), e.g. {}; rerun with --lenient to skip them",
                    path.display(),
                    parsed.issues.len(),
                    shown.join("; ")
                );
            }
            log::warn!("{}: skipped {} malformed record(s)", path.display(), parsed.issues.len());
            self.issues.push(FileIssues { path: path.display().to_string(), issues: parsed.issues });
        }
        let mut corpus = parsed.corpus;
        if format == Format::Json && corpus.tokenizer != self.global.tokenizer {
            corpus = corpus.retokenize(self.global.tokenizer);
        }
        if let Some(ty) = &self.global.collapse_types {
            let map: BTreeMap<String, String> = corpus.entity_types.iter().map(|t| (t.clone(), ty.clone())).collect();
            corpus = corpus.rename_types(&map);
        }
        Ok(corpus)
    }

    /// Writes issues.json when any input had problems (only reachable with
    /// `--lenient`).
    pub fn finish(self, run: &mut Run) -> Result<()> {
        if !self.issues.is_empty() {
            run.write_json("issues.json", &self.issues)?;
        }
        Ok(())
    }
}

/// `[ROLE=]PATH` for evaluation corpora; the role defaults to `test`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalInput {
    pub role: SplitRole,
    pub path: PathBuf,
}

impl FromStr for EvalInput {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (role, path) = match s.split_once('=') {
            Some(("dev", p)) => (SplitRole::Dev, p),
            Some(("test", p)) => (SplitRole::Test, p),
            Some(("train", _)) => return Err("evaluation corpora take role dev or test".into()),
            _ => (SplitRole::Test, s),
        };
        if path.is_empty() {
            return Err("empty path".into());
        }
        Ok(EvalInput { role, path: PathBuf::from(path) })
    }
}

pub fn read_predictions(run: &mut Run, path: &Path) -> Result<Vec<Prediction>> {
    let bytes = run.read_input(path)?;
    let text = String::from_utf8(bytes).map_err(|_| anyhow!("{}: not UTF-8", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}: line {}", path.display(), i + 1)))
        .collect()
}

/// Predictions as sorted JSON lines.
pub fn predictions_jsonl(preds: &[Prediction]) -> String {
    let mut sorted = preds.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut out = String::new();
    for p in &sorted {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn read_json<T: serde::de::DeserializeOwned>(run: &mut Run, path: &Path) -> Result<T> {
    let bytes = run.read_input(path)?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_subsets(specs: &[String]) -> Result<Vec<nersplit::SubsetPredicate>> {
    specs.iter().map(|s| s.parse().map_err(|e: String| usage(format!("--subset {s:?}: {e}")))).collect()
}
