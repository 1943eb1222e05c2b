//! Memorization / synonym / concept split of evaluation mentions.
//!
//! A mention is compared against the training set on two axes: its
//! normalized surface (is it in `E_train`?) and its CUIs (does any of them
//! occur in `C_train`?). Mentions whose only CUI is the unknown concept are
//! always new concepts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_mention, Corpus, Mention, SplitRole, UNKNOWN_CUI};

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("training sets must be built from a train-role corpus, got {0}")]
    NotTrain(SplitRole),
    #[error("evaluation corpus must have role dev or test, got {0}")]
    NotEval(SplitRole),
    #[error("training corpus has no mentions")]
    EmptyTrain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Split {
    Mem,
    Syn,
    Con,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Mem, Split::Syn, Split::Con];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Mem => "MEM",
            Split::Syn => "SYN",
            Split::Con => "CON",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    SingleType,
    MultiType,
}

impl DatasetKind {
    pub fn of(corpus: &Corpus) -> Self {
        if corpus.is_single_type() {
            DatasetKind::SingleType
        } else {
            DatasetKind::MultiType
        }
    }
}

/// Machine-readable id of the rule that decided an assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    /// Only CUI is the unknown concept.
    UnknownCui,
    #[serde(rename = "surface_hit+cui_hit")]
    SurfaceHitCuiHit,
    /// Seen surface, unseen concept, single-type dataset.
    #[serde(rename = "surface_hit+cui_miss_single_type")]
    SurfaceHitCuiMissSingleType,
    #[serde(rename = "surface_hit+cui_miss_multi_type")]
    SurfaceHitCuiMissMultiType,
    /// Unseen surface, every CUI seen.
    #[serde(rename = "surface_miss+cui_hit")]
    SurfaceMissCuiHit,
    /// Unseen surface, some but not all CUIs seen.
    MultiCuiPartial,
    #[serde(rename = "surface_miss+cui_miss")]
    SurfaceMissCuiMiss,
}

/// `E_train` (normalized surfaces) and `C_train` (CUIs, never the unknown
/// concept) of a training corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSets {
    pub mentions: BTreeSet<String>,
    pub cuis: BTreeSet<String>,
}

impl TrainSets {
    pub fn build(train: &Corpus) -> Result<Self, PartitionError> {
        if train.role != SplitRole::Train {
            return Err(PartitionError::NotTrain(train.role));
        }
        if train.mention_count() == 0 {
            return Err(PartitionError::EmptyTrain);
        }
        let mut sets = TrainSets::default();
        for (_, m) in train.mentions() {
            sets.add_mention(m);
        }
        Ok(sets)
    }

    pub fn add_mention(&mut self, m: &Mention) {
        let key = normalize_mention(&m.surface);
        if !key.is_empty() {
            self.mentions.insert(key);
        }
        self.cuis.extend(m.cuis.iter().filter(|c| c.as_str() != UNKNOWN_CUI).cloned());
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitAssignment {
    pub split: Split,
    pub reason: Reason,
}

/// Applies the partition rules, in order:
///
/// 1. only CUI is `-1` → CON
/// 2. surface seen, some CUI seen → MEM
/// 3. surface seen, no CUI seen → MEM (single-type) / CON (multi-type)
/// 4. surface unseen, some CUI seen → SYN
/// 5. surface unseen, no CUI seen → CON
pub fn assign_split(m: &Mention, sets: &TrainSets, kind: DatasetKind) -> SplitAssignment {
    let (split, reason) = if m.is_unknown_concept() {
        (Split::Con, Reason::UnknownCui)
    } else {
        let key = normalize_mention(&m.surface);
        let surface_hit = !key.is_empty() && sets.mentions.contains(&key);
        let hits = m.cuis.iter().filter(|c| sets.cuis.contains(*c)).count();
        match (surface_hit, hits) {
            (true, 1..) => (Split::Mem, Reason::SurfaceHitCuiHit),
            (true, 0) => match kind {
                DatasetKind::SingleType => (Split::Mem, Reason::SurfaceHitCuiMissSingleType),
                DatasetKind::MultiType => (Split::Con, Reason::SurfaceHitCuiMissMultiType),
            },
            (false, 0) => (Split::Con, Reason::SurfaceMissCuiMiss),
            (false, n) if n == m.cuis.len() => (Split::Syn, Reason::SurfaceMissCuiHit),
            (false, _) => (Split::Syn, Reason::MultiCuiPartial),
        }
    };
    SplitAssignment { split, reason }
}

/// One evaluation mention and its split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignedMention {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    #[serde(rename = "type")]
    pub entity_type: String,
    pub cuis: Vec<String>,
    pub split: Split,
    pub reason: Reason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCount {
    pub count: usize,
    /// Share of the three-split total, rounded to one decimal.
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub role: SplitRole,
    pub dataset_kind: DatasetKind,
    pub total: usize,
    pub counts: BTreeMap<Split, SplitCount>,
    pub reasons: BTreeMap<Reason, usize>,
    pub assignments: Vec<AssignedMention>,
}

impl SplitReport {
    pub fn count(&self, split: Split) -> usize {
        self.counts.get(&split).map_or(0, |c| c.count)
    }

    pub fn percent(&self, split: Split) -> f64 {
        self.counts.get(&split).map_or(0.0, |c| c.percent)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split report serializes")
    }

    /// One table row per report: `| name | type | MEM | SYN | CON |` with
    /// `count (pct%)` cells.
    pub fn markdown(rows: &[(&str, &str, &SplitReport)]) -> String {
        let mut out = String::from("| Dataset | Type | Role | MEM | SYN | CON |\n|---|---|---|---|---|---|\n");
        for (name, ty, r) in rows {
            out.push_str(&format!("| {name} | {ty} | {} |", r.role));
            for s in Split::ALL {
                out.push_str(&format!(" {} ({:.1}%) |", r.count(s), r.percent(s)));
            }
            out.push('\n');
        }
        out
    }
}

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Partitions every mention of `eval` against `sets`. Single- vs multi-type
/// is derived from `eval`'s entity types.
pub fn partition_corpus(eval: &Corpus, sets: &TrainSets) -> Result<SplitReport, PartitionError> {
    if eval.role == SplitRole::Train {
        return Err(PartitionError::NotEval(eval.role));
    }
    Ok(partition_unchecked(eval, sets))
}

/// [`partition_corpus`] without the role check, for self-overlap studies.
pub fn partition_unchecked(eval: &Corpus, sets: &TrainSets) -> SplitReport {
    let kind = DatasetKind::of(eval);
    let pairs: Vec<(&str, &Mention)> = eval.mentions().map(|(d, m)| (d.id.as_str(), m)).collect();
    let assignments: Vec<AssignedMention> = pairs
        .par_iter()
        .map(|(doc_id, m)| {
            let a = assign_split(m, sets, kind);
            AssignedMention {
                doc_id: doc_id.to_string(),
                start: m.start,
                end: m.end,
                surface: m.surface.clone(),
                entity_type: m.entity_type.clone(),
                cuis: m.cuis.clone(),
                split: a.split,
                reason: a.reason,
            }
        })
        .collect();
    SplitReport::from_assignments(eval.role, kind, assignments)
}

impl SplitReport {
    /// Builds counts, percentages and rule tallies from assignments.
    pub fn from_assignments(role: SplitRole, dataset_kind: DatasetKind, assignments: Vec<AssignedMention>) -> Self {
        let total = assignments.len();
        let mut counts = BTreeMap::new();
        for s in Split::ALL {
            let count = assignments.iter().filter(|a| a.split == s).count();
            let percent = if total == 0 { 0.0 } else { round1(100.0 * count as f64 / total as f64) };
            counts.insert(s, SplitCount { count, percent });
        }
        let mut reasons = BTreeMap::new();
        for a in &assignments {
            *reasons.entry(a.reason).or_insert(0) += 1;
        }
        SplitReport { role, dataset_kind, total, counts, reasons, assignments }
    }

    /// The mentions of one entity type. Assignments are kept as decided on
    /// the full corpus, so a multi-type corpus keeps its multi-type rule.
    pub fn for_type(&self, entity_type: &str) -> SplitReport {
        let kept = self.assignments.iter().filter(|a| a.entity_type == entity_type).cloned().collect();
        SplitReport::from_assignments(self.role, self.dataset_kind, kept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, TokenizerMode};

    fn mention(surface: &str, cuis: &[&str]) -> Mention {
        Mention::new(surface, 0, surface.len(), cuis.iter().map(|c| c.to_string()).collect(), "Disease")
    }

    fn corpus(role: SplitRole, items: &[(&str, &[&str])]) -> Corpus {
        let docs = items
            .iter()
            .enumerate()
            .map(|(i, (s, c))| Document::new(format!("d{i}"), *s, None, vec![mention(s, c)], TokenizerMode::PunctSplit).unwrap())
            .collect();
        Corpus::new(role, TokenizerMode::PunctSplit, docs).unwrap()
    }

    fn sets() -> TrainSets {
        TrainSets::build(&corpus(SplitRole::Train, &[("cancer", &["D009369"]), ("tumor", &["D009369"])])).unwrap()
    }

    #[test]
    fn build_train_sets() {
        let s = sets();
        assert_eq!(s.mentions, ["cancer", "tumor"].iter().map(|s| s.to_string()).collect());
        assert_eq!(s.cuis, ["D009369"].iter().map(|s| s.to_string()).collect());
        let s = TrainSets::build(&corpus(SplitRole::Train, &[("x", &["D1", "-1"])])).unwrap();
        assert!(s.cuis.contains("D1") && !s.cuis.contains("-1"));
    }

    #[test]
    fn build_requires_train_role_and_mentions() {
        assert!(matches!(TrainSets::build(&corpus(SplitRole::Test, &[("x", &["D1"])])), Err(PartitionError::NotTrain(_))));
        let empty = Corpus::new(
            SplitRole::Train,
            TokenizerMode::PunctSplit,
            vec![Document::new("d", "no mentions", None, vec![], TokenizerMode::PunctSplit).unwrap()],
        )
        .unwrap();
        assert!(matches!(TrainSets::build(&empty), Err(PartitionError::EmptyTrain)));
    }

    #[test]
    fn rules() {
        let s = sets();
        let single = DatasetKind::SingleType;
        let a = |surface: &str, cuis: &[&str], k| assign_split(&mention(surface, cuis), &s, k);
        assert_eq!(a("Cancer", &["D009369"], single).split, Split::Mem);
        assert_eq!(a("neoplasm", &["D009369", "D_new"], single), SplitAssignment { split: Split::Syn, reason: Reason::MultiCuiPartial });
        assert_eq!(a("neoplasm", &["D009369"], single).reason, Reason::SurfaceMissCuiHit);
        assert_eq!(a("neoplasm", &["-1"], single).reason, Reason::UnknownCui);
        assert_eq!(a("cancer", &["-1"], single).split, Split::Con);
        assert_eq!(a("cancer", &["D_new"], single).split, Split::Mem);
        assert_eq!(a("cancer", &["D_new"], DatasetKind::MultiType).split, Split::Con);
        assert_eq!(a("neoplasm", &["D_new"], single).split, Split::Con);
        // punctuation-only surface never matches
        assert_eq!(a("--", &["D009369"], single).split, Split::Syn);
    }

    #[test]
    fn self_overlap_is_all_memorized() {
        let items: &[(&str, &[&str])] = &[("cancer", &["D1"]), ("Wilms' tumor", &["D2", "D3"]), ("fever", &["D4"])];
        let train = corpus(SplitRole::Train, items);
        let report = partition_corpus(&corpus(SplitRole::Test, items), &TrainSets::build(&train).unwrap()).unwrap();
        assert_eq!(report.count(Split::Mem), 3);
        assert_eq!(report.percent(Split::Mem), 100.0);
    }

    #[test]
    fn report_counts_and_markdown() {
        let eval = corpus(SplitRole::Test, &[("cancer", &["D009369"]), ("neoplasm", &["D009369"]), ("flu", &["D2"])]);
        let r = partition_corpus(&eval, &sets()).unwrap();
        assert_eq!((r.count(Split::Mem), r.count(Split::Syn), r.count(Split::Con)), (1, 1, 1));
        assert_eq!(r.percent(Split::Mem), 33.3);
        let md = SplitReport::markdown(&[("toy", "Disease", &r)]);
        assert!(md.contains("| toy | Disease | test | 1 (33.3%) | 1 (33.3%) | 1 (33.3%) |"));
        let json = r.to_json();
        assert!(json.contains("\"surface_miss+cui_hit\""));
        assert!(partition_corpus(&corpus(SplitRole::Train, &[("x", &["D1"])]), &sets()).is_err());
    }

    #[test]
    fn per_type_view_keeps_multi_type_decisions() {
        let train = corpus(SplitRole::Train, &[("lithium", &["C1"])]);
        let mut docs = vec![];
        for (i, (s, ty, cui)) in [("lithium", "Disease", "D9"), ("cancer", "Disease", "D1"), ("aspirin", "Chemical", "C2")].iter().enumerate() {
            let m = Mention::new(*s, 0, s.len(), vec![cui.to_string()], *ty);
            docs.push(Document::new(format!("d{i}"), *s, None, vec![m], TokenizerMode::PunctSplit).unwrap());
        }
        let eval = Corpus::new(SplitRole::Test, TokenizerMode::PunctSplit, docs).unwrap();
        let full = partition_corpus(&eval, &TrainSets::build(&train).unwrap()).unwrap();
        let dis = full.for_type("Disease");
        assert_eq!(dis.total, 2);
        assert_eq!(dis.dataset_kind, DatasetKind::MultiType);
        assert_eq!(dis.count(Split::Con), 2);
        assert_eq!(dis.reasons[&Reason::SurfaceHitCuiMissMultiType], 1);
        assert_eq!(dis.percent(Split::Con), 100.0);
        assert_eq!(full.for_type("Chemical").total, 1);
    }
}
