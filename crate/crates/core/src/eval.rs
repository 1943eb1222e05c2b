//! Entity-level evaluation: exact-match P/R/F1, recall per recognition
//! split, containment-based relaxed recall for a target surface, and recall
//! over predicate-defined subsets.
//!
//! Every ratio is stored with its integer numerator and denominator and is
//! expressed in percent. Precision, recall and F1 with no predictions (or no
//! gold mentions) are defined as 0; subset and split recalls over an empty
//! set are `null`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_mention, Corpus, Mention};
use crate::dictionary::Span;
use crate::partition::{Split, SplitReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction refers to unknown document {0:?}")]
    UnknownDocument(String),
    #[error("prediction span {start}..{end} is outside document {doc_id:?}")]
    BadSpan { doc_id: String, start: usize, end: usize },
    #[error("split report does not match the gold corpus: {0}")]
    SplitMismatch(String),
    #[error("relaxed recall needs a non-empty target surface")]
    EmptyTarget,
}

/// A predicted entity as a document-level byte span.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub entity_type: String,
    #[serde(default)]
    pub surface: String,
}

impl Prediction {
    pub fn from_mention(doc_id: &str, m: &Mention) -> Self {
        Prediction {
            doc_id: doc_id.to_string(),
            start: m.start,
            end: m.end,
            entity_type: m.entity_type.clone(),
            surface: m.surface.clone(),
        }
    }

    pub fn from_span(doc_id: &str, text: &str, s: &Span) -> Self {
        Prediction {
            doc_id: doc_id.to_string(),
            start: s.start,
            end: s.end,
            entity_type: s.entity_type.clone(),
            surface: text[s.start..s.end].to_string(),
        }
    }

    fn key(&self) -> (&str, usize, usize, &str) {
        (&self.doc_id, self.start, self.end, &self.entity_type)
    }
}

/// `hits / total` in percent, with the counts it came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: usize,
    pub total: usize,
    /// `None` when `total` is zero.
    pub value: Option<f64>,
}

impl Ratio {
    pub fn new(hits: usize, total: usize) -> Self {
        let value = (total > 0).then(|| 100.0 * hits as f64 / total as f64);
        Ratio { hits, total, value }
    }

    /// Like [`Ratio::new`] but an empty denominator yields 0.
    pub fn zero_if_empty(hits: usize, total: usize) -> Self {
        Ratio { value: Some(Ratio::new(hits, total).value.unwrap_or(0.0)), ..Ratio::new(hits, total) }
    }

    pub fn percent(&self) -> f64 {
        self.value.unwrap_or(0.0)
    }
}

/// How a target occurrence counts as recalled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxedMode {
    /// Some predicted span's byte range contains the occurrence's range.
    #[default]
    Range,
    /// Some predicted span overlapping the occurrence has text containing
    /// the target string.
    Substring,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxedRecall {
    pub target_surface: String,
    pub mode: RelaxedMode,
    pub recall: Ratio,
    /// Occurrences matched exactly by a predicted span (any type).
    pub exact: Ratio,
}

/// Mention filters for subset recall.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "predicate")]
pub enum SubsetPredicate {
    /// One whitespace-free token of 2–8 characters with at least two
    /// uppercase letters, made of letters and digits with optional internal
    /// hyphens.
    Abbreviation,
    /// Normalized surface of two or more words whose last word is disease,
    /// syndrome, infection, cancer or tumor, or a plural of one of these.
    NameRegularity,
    /// Normalized surface is in the list.
    Surfaces { surfaces: BTreeSet<String> },
}

const REGULAR_HEADS: &[&str] = &[
    "disease", "diseases", "syndrome", "syndromes", "infection", "infections", "cancer", "cancers", "tumor", "tumors",
];

pub fn is_abbreviation(surface: &str) -> bool {
    let n = surface.chars().count();
    (2..=8).contains(&n)
        && surface.chars().filter(|c| c.is_uppercase()).count() >= 2
        && surface.chars().all(|c| c.is_alphanumeric() || c == '-')
        && !surface.starts_with('-')
        && !surface.ends_with('-')
}

pub fn has_name_regularity(surface: &str) -> bool {
    let norm = normalize_mention(surface);
    let words: Vec<&str> = norm.split(' ').collect();
    words.len() >= 2 && REGULAR_HEADS.contains(words.last().unwrap())
}

impl SubsetPredicate {
    pub fn name(&self) -> String {
        match self {
            SubsetPredicate::Abbreviation => "abbreviation".into(),
            SubsetPredicate::NameRegularity => "name_regularity".into(),
            SubsetPredicate::Surfaces { .. } => "surfaces".into(),
        }
    }

    pub fn matches(&self, surface: &str) -> bool {
        match self {
            SubsetPredicate::Abbreviation => is_abbreviation(surface),
            SubsetPredicate::NameRegularity => has_name_regularity(surface),
            SubsetPredicate::Surfaces { surfaces } => surfaces.contains(&normalize_mention(surface)),
        }
    }

    /// A surface-list predicate from raw surfaces (normalized here).
    pub fn surfaces<I: IntoIterator<Item = S>, S: AsRef<str>>(items: I) -> Self {
        SubsetPredicate::Surfaces { surfaces: items.into_iter().map(|s| normalize_mention(s.as_ref())).collect() }
    }
}

impl std::str::FromStr for SubsetPredicate {
    type Err = String;

    /// `abbreviation`, `name_regularity`, or `surfaces:a,b,c`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "abbreviation" => Ok(SubsetPredicate::Abbreviation),
            "name_regularity" => Ok(SubsetPredicate::NameRegularity),
            _ => match s.strip_prefix("surfaces:") {
                Some(list) => Ok(SubsetPredicate::surfaces(list.split(',').filter(|x| !x.is_empty()))),
                None => Err(format!("unknown subset {s:?}; expected abbreviation, name_regularity or surfaces:a,b")),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub predicate: SubsetPredicate,
    pub recall: Ratio,
    /// Recall of the subset within each split, when a split report is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_split: Option<BTreeMap<Split, Ratio>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub target_surface: Option<String>,
    pub relaxed_mode: RelaxedMode,
    pub subsets: Vec<SubsetPredicate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Distinct predictions after de-duplication.
    pub predictions: usize,
    pub gold: usize,
    pub true_positives: usize,
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_split: Option<BTreeMap<Split, Ratio>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relaxed: Option<RelaxedRecall>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub subsets: Vec<SubsetResult>,
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn check_predictions(gold: &Corpus, preds: &[Prediction]) -> Result<(), EvalError> {
    let lengths: HashMap<&str, usize> = gold.documents.iter().map(|d| (d.id.as_str(), d.text.len())).collect();
    for p in preds {
        let len = *lengths.get(p.doc_id.as_str()).ok_or_else(|| EvalError::UnknownDocument(p.doc_id.clone()))?;
        if p.start >= p.end || p.end > len {
            return Err(EvalError::BadSpan { doc_id: p.doc_id.clone(), start: p.start, end: p.end });
        }
    }
    Ok(())
}

/// Scores `preds` against the mentions of `gold` (exact span and type).
/// With a split report, recall is also broken down by split.
pub fn evaluate(
    gold: &Corpus,
    preds: &[Prediction],
    split: Option<&SplitReport>,
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    check_predictions(gold, preds)?;
    let pred_set: HashSet<(&str, usize, usize, &str)> = preds.iter().map(Prediction::key).collect();
    let gold_set: BTreeSet<(&str, usize, usize, &str)> =
        gold.mentions().map(|(d, m)| (d.id.as_str(), m.start, m.end, m.entity_type.as_str())).collect();
    let tp = gold_set.iter().filter(|k| pred_set.contains(*k)).count();
    let precision = Ratio::zero_if_empty(tp, pred_set.len());
    let recall = Ratio::zero_if_empty(tp, gold_set.len());

    let per_split = split.map(|r| split_recall(gold, r, &pred_set)).transpose()?;
    let relaxed = match &options.target_surface {
        Some(t) => Some(relaxed_recall(gold, preds, t, options.relaxed_mode)?),
        None => None,
    };
    let subsets = options.subsets.iter().map(|p| subset_recall(gold, &pred_set, p, split)).collect();

    Ok(EvalReport {
        predictions: pred_set.len(),
        gold: gold_set.len(),
        true_positives: tp,
        f1: f1(precision.percent(), recall.percent()),
        precision,
        recall,
        per_split,
        relaxed,
        subsets,
    })
}

fn split_recall(
    gold: &Corpus,
    report: &SplitReport,
    pred_set: &HashSet<(&str, usize, usize, &str)>,
) -> Result<BTreeMap<Split, Ratio>, EvalError> {
    if report.assignments.len() != gold.mention_count() {
        return Err(EvalError::SplitMismatch(format!(
            "{} assignments for {} gold mentions",
            report.assignments.len(),
            gold.mention_count()
        )));
    }
    for (a, (d, m)) in report.assignments.iter().zip(gold.mentions()) {
        if a.doc_id != d.id || a.start != m.start || a.end != m.end {
            return Err(EvalError::SplitMismatch(format!("assignment {}:{}..{} out of order", a.doc_id, a.start, a.end)));
        }
    }
    let mut hits: BTreeMap<Split, (usize, usize)> = Split::ALL.iter().map(|s| (*s, (0, 0))).collect();
    for a in &report.assignments {
        let e = hits.get_mut(&a.split).expect("all splits present");
        e.1 += 1;
        if pred_set.contains(&(a.doc_id.as_str(), a.start, a.end, a.entity_type.as_str())) {
            e.0 += 1;
        }
    }
    Ok(hits.into_iter().map(|(s, (h, t))| (s, Ratio::new(h, t))).collect())
}

/// Recall of every exact occurrence of `target` in the gold document text.
pub fn relaxed_recall(gold: &Corpus, preds: &[Prediction], target: &str, mode: RelaxedMode) -> Result<RelaxedRecall, EvalError> {
    if target.is_empty() {
        return Err(EvalError::EmptyTarget);
    }
    check_predictions(gold, preds)?;
    let mut by_doc: HashMap<&str, Vec<&Prediction>> = HashMap::new();
    for p in preds {
        by_doc.entry(p.doc_id.as_str()).or_default().push(p);
    }
    let (mut total, mut hits, mut exact) = (0, 0, 0);
    for d in &gold.documents {
        let ps = by_doc.get(d.id.as_str()).map(Vec::as_slice).unwrap_or_default();
        for (start, _) in d.text.match_indices(target) {
            let end = start + target.len();
            total += 1;
            let hit = ps.iter().any(|p| match mode {
                RelaxedMode::Range => p.start <= start && end <= p.end,
                RelaxedMode::Substring => p.start < end && start < p.end && d.text[p.start..p.end].contains(target),
            });
            hits += usize::from(hit);
            exact += usize::from(ps.iter().any(|p| p.start == start && p.end == end));
        }
    }
    Ok(RelaxedRecall {
        target_surface: target.to_string(),
        mode,
        recall: Ratio::new(hits, total),
        exact: Ratio::new(exact, total),
    })
}

fn subset_recall(
    gold: &Corpus,
    pred_set: &HashSet<(&str, usize, usize, &str)>,
    predicate: &SubsetPredicate,
    split: Option<&SplitReport>,
) -> SubsetResult {
    let (mut hits, mut total) = (0, 0);
    for (d, m) in gold.mentions() {
        if predicate.matches(&m.surface) {
            total += 1;
            hits += usize::from(pred_set.contains(&(d.id.as_str(), m.start, m.end, m.entity_type.as_str())));
        }
    }
    let per_split = split.map(|r| {
        Split::ALL
            .iter()
            .map(|&s| {
                let sel: Vec<_> = r.assignments.iter().filter(|a| a.split == s && predicate.matches(&a.surface)).collect();
                let h = sel
                    .iter()
                    .filter(|a| pred_set.contains(&(a.doc_id.as_str(), a.start, a.end, a.entity_type.as_str())))
                    .count();
                (s, Ratio::new(h, sel.len()))
            })
            .collect()
    });
    SubsetResult { predicate: predicate.clone(), recall: Ratio::new(hits, total), per_split }
}

/// Share of the mentions in `split` selected by `predicate`.
pub fn subset_share(report: &SplitReport, predicate: &SubsetPredicate, split: Split) -> Ratio {
    let in_split: Vec<_> = report.assignments.iter().filter(|a| a.split == split).collect();
    Ratio::new(in_split.iter().filter(|a| predicate.matches(&a.surface)).count(), in_split.len())
}

fn cell(r: Option<&Ratio>) -> String {
    match r.and_then(|r| r.value) {
        Some(v) => format!("{v:.1}"),
        None => "-".to_string(),
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("eval report serializes")
    }

    /// One row per report: `| Model | P | R | F1 | MEM | SYN | CON | relaxed |`.
    pub fn markdown(rows: &[(&str, &EvalReport)]) -> String {
        let target = rows.iter().find_map(|(_, r)| r.relaxed.as_ref().map(|x| x.target_surface.clone()));
        let mut out = String::from("| Model | P | R | F1 | MEM | SYN | CON |");
        let mut rule = String::from("|---|---|---|---|---|---|---|");
        if let Some(t) = &target {
            out.push_str(&format!(" {t} (relaxed R) |"));
            rule.push_str("---|");
        }
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');
        for (name, r) in rows {
            out.push_str(&format!("| {name} | {:.1} | {:.1} | {:.1} |", r.precision.percent(), r.recall.percent(), r.f1));
            for s in Split::ALL {
                out.push_str(&format!(" {} |", cell(r.per_split.as_ref().and_then(|m| m.get(&s)))));
            }
            if target.is_some() {
                out.push_str(&format!(" {} |", cell(r.relaxed.as_ref().map(|x| &x.recall))));
            }
            out.push('\n');
        }
        out
    }
}
