//! Dictionary baselines: every training mention (optionally plus database
//! synonyms of training concepts) becomes an entry, and extraction tags any
//! token n-gram whose normalized text is an entry. Overlaps are resolved by
//! keeping the longest candidate.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_mention, tokenize, Corpus, Document, SplitRole, Token, TokenizerMode, UNKNOWN_CUI};

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("training corpus has no mentions")]
    EmptyTrain,
    #[error("dictionaries are built from a train-role corpus, got {0}")]
    NotTrain(SplitRole),
    #[error("synonym file line {line}: {message} (expected JSON lines of the form {{\"cui\": \"D000001\", \"surfaces\": [\"...\"]}})")]
    SynonymFormat { line: usize, message: String },
    #[error("dictionary line {line}: {message}")]
    Import { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionarySource {
    TrainOnly,
    TrainPlusSynonyms,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    TrainMention,
    Synonym,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    /// First surface seen for this key, in original casing.
    pub exemplar: String,
    pub entity_type: String,
    pub provenance: Provenance,
}

/// CUI → surfaces, as exported from a terminology database.
pub type SynonymMap = BTreeMap<String, BTreeSet<String>>;

/// Reads `{"cui": ..., "surfaces": [...]}` JSON lines. Repeated CUIs merge.
pub fn read_synonyms<R: BufRead>(reader: R) -> Result<SynonymMap, DictionaryError> {
    #[derive(Deserialize)]
    struct Line {
        cui: String,
        surfaces: Vec<String>,
    }
    let mut map = SynonymMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(&line)
            .map_err(|e| DictionaryError::SynonymFormat { line: i + 1, message: e.to_string() })?;
        map.entry(rec.cui).or_default().extend(rec.surfaces);
    }
    Ok(map)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityDictionary {
    pub source: DictionarySource,
    entries: BTreeMap<String, Entry>,
    /// Longest entry in tokens, over every surface added.
    max_tokens: usize,
    tokenizer: TokenizerMode,
}

impl EntityDictionary {
    pub fn empty(tokenizer: TokenizerMode) -> Self {
        EntityDictionary { source: DictionarySource::TrainOnly, entries: BTreeMap::new(), max_tokens: 0, tokenizer }
    }

    /// Dictionary of every training mention surface.
    pub fn from_train(train: &Corpus) -> Result<Self, DictionaryError> {
        if train.role != SplitRole::Train {
            return Err(DictionaryError::NotTrain(train.role));
        }
        if train.mention_count() == 0 {
            return Err(DictionaryError::EmptyTrain);
        }
        let mut dict = EntityDictionary::empty(train.tokenizer);
        // majority type per key, ties broken by type name
        let mut types: HashMap<String, BTreeMap<&str, usize>> = HashMap::new();
        for (_, m) in train.mentions() {
            let key = normalize_mention(&m.surface);
            if key.is_empty() {
                continue;
            }
            *types.entry(key).or_default().entry(m.entity_type.as_str()).or_insert(0) += 1;
            dict.insert(&m.surface, &m.entity_type, Provenance::TrainMention);
        }
        for (key, counts) in types {
            let best = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).unwrap().0;
            dict.entries.get_mut(&key).unwrap().entity_type = best.to_string();
        }
        Ok(dict)
    }

    /// Training dictionary extended with the synonyms of every CUI seen in
    /// training. Synonyms take the type of the training mentions of their CUI.
    pub fn from_train_and_synonyms(train: &Corpus, synonyms: &SynonymMap) -> Result<Self, DictionaryError> {
        let mut dict = Self::from_train(train)?;
        dict.source = DictionarySource::TrainPlusSynonyms;
        let mut cui_types: BTreeMap<&str, &str> = BTreeMap::new();
        for (_, m) in train.mentions() {
            for c in m.cuis.iter().filter(|c| c.as_str() != UNKNOWN_CUI) {
                cui_types.entry(c.as_str()).or_insert(m.entity_type.as_str());
            }
        }
        for (cui, ty) in cui_types {
            if let Some(surfaces) = synonyms.get(cui) {
                for s in surfaces {
                    dict.insert(s, ty, Provenance::Synonym);
                }
            }
        }
        Ok(dict)
    }

    /// Adds `surface` unless its key is empty or already present.
    pub fn insert(&mut self, surface: &str, entity_type: &str, provenance: Provenance) {
        let key = normalize_mention(surface);
        if key.is_empty() {
            return;
        }
        self.max_tokens = self.max_tokens.max(tokenize(surface, self.tokenizer).len());
        self.entries.entry(key).or_insert_with(|| Entry {
            exemplar: surface.to_string(),
            entity_type: entity_type.to_string(),
            provenance,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, surface: &str) -> Option<&Entry> {
        self.entries.get(&normalize_mention(surface))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &Entry)> {
        self.entries.iter()
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    /// Sorted tab-separated export: `key  exemplar  type  provenance`.
    pub fn export(&self) -> String {
        let mut out = format!("#max_tokens\t{}\n", self.max_tokens);
        for (k, e) in &self.entries {
            let prov = match e.provenance {
                Provenance::TrainMention => "train",
                Provenance::Synonym => "synonym",
            };
            out.push_str(&format!("{k}\t{}\t{}\t{prov}\n", e.exemplar, e.entity_type));
        }
        out
    }

    pub fn import<R: BufRead>(reader: R, tokenizer: TokenizerMode) -> Result<Self, DictionaryError> {
        let mut dict = EntityDictionary::empty(tokenizer);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let err = |message: &str| DictionaryError::Import { line: i + 1, message: message.to_string() };
            if let Some(rest) = line.strip_prefix("#max_tokens\t") {
                dict.max_tokens = rest.trim().parse().map_err(|_| err("bad max_tokens"))?;
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let [key, exemplar, ty, prov] = f.as_slice() else {
                return Err(err("expected 4 tab-separated fields"));
            };
            let provenance = match *prov {
                "train" => Provenance::TrainMention,
                "synonym" => {
                    dict.source = DictionarySource::TrainPlusSynonyms;
                    Provenance::Synonym
                }
                _ => return Err(err("provenance must be train or synonym")),
            };
            if normalize_mention(exemplar) != *key {
                return Err(err("key is not the normalized exemplar"));
            }
            dict.max_tokens = dict.max_tokens.max(tokenize(exemplar, tokenizer).len());
            dict.entries.insert(key.to_string(), Entry { exemplar: exemplar.to_string(), entity_type: ty.to_string(), provenance });
        }
        Ok(dict)
    }

    /// All token n-grams (up to [`Self::max_tokens`]) whose normalized text
    /// is an entry. N-grams starting or ending in a token that normalizes to
    /// nothing (bare punctuation) are not candidates.
    pub fn candidates(&self, text: &str, tokens: &[Token]) -> Vec<Span> {
        let mut out = Vec::new();
        if self.entries.is_empty() {
            return out;
        }
        let content: Vec<bool> = tokens.iter().map(|t| !normalize_mention(&t.text).is_empty()).collect();
        for i in 0..tokens.len() {
            if !content[i] {
                continue;
            }
            for j in i..tokens.len().min(i + self.max_tokens) {
                if !content[j] {
                    continue;
                }
                let (s, e) = (tokens[i].start, tokens[j].end);
                if let Some(entry) = self.entries.get(&normalize_mention(&text[s..e])) {
                    out.push(Span { start: s, end: e, first_token: i, last_token: j, entity_type: entry.entity_type.clone() });
                }
            }
        }
        out
    }

    /// Longest-match extraction over one token sequence.
    pub fn extract(&self, text: &str, tokens: &[Token]) -> Vec<Span> {
        select_longest(self.candidates(text, tokens), tokens.len())
    }

    /// Extraction over every sentence of a document.
    pub fn extract_document(&self, doc: &Document) -> Vec<Span> {
        doc.sentences.iter().flat_map(|s| self.extract(&doc.text, &s.tokens)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub first_token: usize,
    pub last_token: usize,
    pub entity_type: String,
}

/// Repeatedly keeps the longest remaining candidate (by byte length, ties:
/// leftmost) and discards everything overlapping it. Output is sorted by
/// position.
pub fn select_longest(mut candidates: Vec<Span>, n_tokens: usize) -> Vec<Span> {
    candidates.sort_by(|a, b| (b.end - b.start).cmp(&(a.end - a.start)).then(a.start.cmp(&b.start)).then(a.end.cmp(&b.end)));
    let mut taken = vec![false; n_tokens];
    let mut out = Vec::new();
    for c in candidates {
        if taken[c.first_token..=c.last_token].iter().any(|&t| t) {
            continue;
        }
        for t in &mut taken[c.first_token..=c.last_token] {
            *t = true;
        }
        out.push(c);
    }
    out.sort_by_key(|s| (s.start, s.end));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Mention, TokenizerMode};

    fn dict(entries: &[&str]) -> EntityDictionary {
        let mut d = EntityDictionary::empty(TokenizerMode::PunctSplit);
        for e in entries {
            d.insert(e, "Disease", Provenance::TrainMention);
        }
        d
    }

    fn spans(d: &EntityDictionary, text: &str) -> Vec<String> {
        let toks = tokenize(text, TokenizerMode::PunctSplit);
        d.extract(text, &toks).into_iter().map(|s| text[s.start..s.end].to_string()).collect()
    }

    fn train(items: &[(&str, &str)]) -> Corpus {
        let docs = items
            .iter()
            .enumerate()
            .map(|(i, (s, c))| {
                let m = Mention::new(*s, 0, s.len(), vec![c.to_string()], "Disease");
                Document::new(format!("d{i}"), *s, None, vec![m], TokenizerMode::PunctSplit).unwrap()
            })
            .collect();
        Corpus::new(SplitRole::Train, TokenizerMode::PunctSplit, docs).unwrap()
    }

    #[test]
    fn longest_wins() {
        let d = dict(&["colorectal cancer", "cancer"]);
        assert_eq!(spans(&d, "risk of colorectal cancer in men"), ["colorectal cancer"]);
        assert_eq!(spans(&d, "cancer, and colorectal cancer."), ["cancer", "colorectal cancer"]);
    }

    #[test]
    fn generalized_seizures_beats_gold_seizures() {
        let d = dict(&["seizures", "generalized seizures"]);
        assert_eq!(spans(&d, "Patients had generalized seizures ."), ["generalized seizures"]);
    }

    #[test]
    fn empty_dictionary_extracts_nothing() {
        assert!(spans(&dict(&[]), "cancer").is_empty());
    }

    #[test]
    fn matching_ignores_case_and_punctuation_but_not_trailing_tokens() {
        let d = dict(&["COVID-19", "Wilms' tumor"]);
        assert_eq!(spans(&d, "covid 19 and Wilms tumor."), ["Wilms tumor"]);
        assert_eq!(spans(&d, "covid-19 and WILMS' TUMOR."), ["covid-19", "WILMS' TUMOR"]);
        assert_eq!(spans(&d, "(COVID-19)"), ["COVID-19"]);
    }

    #[test]
    fn equal_length_tie_goes_left() {
        let d = dict(&["a b", "b c"]);
        assert_eq!(spans(&d, "a b c"), ["a b"]);
    }

    #[test]
    fn build_from_train_dedupes() {
        let d = EntityDictionary::from_train(&train(&[("colorectal cancer", "D1"), ("cancer", "D2"), ("Cancer", "D2")])).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.get("CANCER").unwrap().exemplar, "cancer");
    }

    #[test]
    fn synonyms_only_for_training_cuis() {
        let t = train(&[("pain reliever", "D1")]);
        let mut syn = SynonymMap::new();
        syn.insert("D1".into(), ["Motrin".to_string(), "Ibuprofen".to_string()].into());
        syn.insert("D9".into(), ["aspirin".to_string()].into());
        let d = EntityDictionary::from_train_and_synonyms(&t, &syn).unwrap();
        assert!(d.get("motrin").is_some() && d.get("ibuprofen").is_some());
        assert!(d.get("aspirin").is_none());
        assert_eq!(d.get("motrin").unwrap().provenance, Provenance::Synonym);

        let plain = EntityDictionary::from_train(&t).unwrap();
        let same = EntityDictionary::from_train_and_synonyms(&t, &SynonymMap::new()).unwrap();
        assert_eq!(plain.entries, same.entries);
    }

    #[test]
    fn errors() {
        let test_role = train(&[("x", "D1")]).with_role(SplitRole::Test);
        assert!(matches!(EntityDictionary::from_train(&test_role), Err(DictionaryError::NotTrain(_))));
        let e = read_synonyms("{\"cui\": 1}\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("\"surfaces\""));
    }

    #[test]
    fn synonym_file_and_export_round_trip() {
        let syn = read_synonyms("{\"cui\":\"D1\",\"surfaces\":[\"a\"]}\n\n{\"cui\":\"D1\",\"surfaces\":[\"b c\"]}\n".as_bytes()).unwrap();
        assert_eq!(syn["D1"].len(), 2);
        let d = EntityDictionary::from_train_and_synonyms(&train(&[("x-ray burn", "D1")]), &syn).unwrap();
        let text = d.export();
        let back = EntityDictionary::import(text.as_bytes(), TokenizerMode::PunctSplit).unwrap();
        assert_eq!(back, d);
    }
}
