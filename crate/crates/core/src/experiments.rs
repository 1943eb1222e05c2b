//! Corpus perturbations and a synthetic corpus with planted word-level
//! label bias.
//!
//! All transforms are pure and seeded: the same input, parameters and seed
//! give byte-identical output.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Document, Mention, SplitRole, TokenizerMode};
use crate::eval::is_abbreviation;

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("replacement target is empty")]
    EmptyTarget,
    #[error("document {doc_id}: {what} {start}..{end} partly overlaps a replaced occurrence")]
    Straddle { doc_id: String, what: &'static str, start: usize, end: usize },
    #[error("document {doc_id}: mention at {start} would become empty")]
    EmptyMention { doc_id: String, start: usize },
    #[error("need {needed} abbreviation mention types, corpus has {available}")]
    NotEnoughAbbreviations { needed: usize, available: usize },
    #[error("pattern template must contain {{Abbreviation}} or {{Number}}: {0:?}")]
    BadTemplate(String),
    #[error("could not generate a fresh surface after {0} attempts")]
    Exhausted(usize),
    #[error("infeasible generator config: {0}")]
    Config(String),
    #[error("perturbed corpus violates an invariant: {0}")]
    Invariant(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// A replayable perturbation, as read from an experiment manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    ReplaceSurface { old: String, new: String },
    InjectPattern {
        k: usize,
        #[serde(default = "default_template")]
        template: String,
        seed: u64,
    },
    TokenizationMode { mode: TokenizerMode },
}

pub const DEFAULT_TEMPLATE: &str = "{Abbreviation}-{Number}";

fn default_template() -> String {
    DEFAULT_TEMPLATE.to_string()
}

/// What a perturbation did.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationLog {
    pub occurrences: usize,
    pub mentions_changed: usize,
    /// `old → new` surfaces, for pattern injection.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub replacements: BTreeMap<String, String>,
}

impl Perturbation {
    pub fn apply(&self, corpus: &Corpus) -> Result<(Corpus, PerturbationLog), PerturbError> {
        match self {
            Perturbation::ReplaceSurface { old, new } => replace_surface(corpus, old, new),
            Perturbation::InjectPattern { k, template, seed } => inject_pattern(corpus, *k, template, *seed),
            Perturbation::TokenizationMode { mode } => Ok((corpus.retokenize(*mode), PerturbationLog::default())),
        }
    }
}

/// A text edit: bytes `start..end` become `new`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Edit {
    start: usize,
    end: usize,
    new: String,
}

/// Maps a byte position through sorted, disjoint edits. Positions strictly
/// inside an edited range have no image.
fn map_position(edits: &[Edit], pos: usize) -> Option<usize> {
    let mut shift: isize = 0;
    for e in edits {
        if e.start < pos && pos < e.end {
            return None;
        }
        if e.end <= pos {
            shift += e.new.len() as isize - (e.end - e.start) as isize;
        }
    }
    Some((pos as isize + shift) as usize)
}

/// Applies edits to a document, re-deriving mention, sentence and title
/// offsets and re-tokenizing under `mode`. Returns the new document and the
/// number of mentions whose surface changed.
fn apply_edits(doc: &Document, edits: &[Edit], mode: TokenizerMode) -> Result<(Document, usize), PerturbError> {
    if edits.is_empty() {
        return Ok((doc.clone(), 0));
    }
    let straddle = |what, start, end| PerturbError::Straddle { doc_id: doc.id.clone(), what, start, end };
    let mut text = String::with_capacity(doc.text.len());
    let mut last = 0;
    for e in edits {
        text.push_str(&doc.text[last..e.start]);
        text.push_str(&e.new);
        last = e.end;
    }
    text.push_str(&doc.text[last..]);

    let mut changed = 0;
    let mut mentions = Vec::with_capacity(doc.mentions.len());
    for m in &doc.mentions {
        for e in edits {
            let overlaps = m.start < e.end && e.start < m.end;
            if overlaps && !(m.start <= e.start && e.end <= m.end) {
                return Err(straddle("mention", m.start, m.end));
            }
        }
        let start = map_position(edits, m.start).ok_or_else(|| straddle("mention", m.start, m.end))?;
        let end = map_position(edits, m.end).ok_or_else(|| straddle("mention", m.start, m.end))?;
        if start >= end {
            return Err(PerturbError::EmptyMention { doc_id: doc.id.clone(), start: m.start });
        }
        let surface = &text[start..end];
        if surface != m.surface {
            changed += 1;
        }
        let mut nm = Mention::new(surface, start, end, m.cuis.clone(), m.entity_type.clone());
        nm.cuis = m.cuis.clone();
        mentions.push(nm);
    }
    let mut spans = Vec::with_capacity(doc.sentences.len());
    for s in &doc.sentences {
        let start = map_position(edits, s.start).ok_or_else(|| straddle("sentence", s.start, s.end))?;
        let end = map_position(edits, s.end).ok_or_else(|| straddle("sentence", s.start, s.end))?;
        spans.push((start, end));
    }
    let title_len = match doc.title_len {
        Some(t) => Some(map_position(edits, t).ok_or_else(|| straddle("title boundary", t, t))?),
        None => None,
    };
    Ok((Document::with_sentences(doc.id.clone(), text, title_len, spans, mentions, mode)?, changed))
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Whole-word occurrences of `needle`: an edge of the needle that is a word
/// character must not touch another word character.
pub fn whole_word_occurrences(text: &str, needle: &str) -> Vec<(usize, usize)> {
    let first_word = needle.chars().next().is_some_and(is_word_char);
    let last_word = needle.chars().last().is_some_and(is_word_char);
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(i) = text[from..].find(needle) {
        let s = from + i;
        let e = s + needle.len();
        let left_ok = !first_word || !text[..s].chars().last().is_some_and(is_word_char);
        let right_ok = !last_word || !text[e..].chars().next().is_some_and(is_word_char);
        if left_ok && right_ok {
            out.push((s, e));
            from = e;
        } else {
            from = s + needle.chars().next().map_or(1, char::len_utf8);
        }
    }
    out
}

/// Replaces every whole-word occurrence of `old` in every document with
/// `new`. Mentions containing an occurrence get the new surface; a mention
/// or sentence boundary that cuts through an occurrence is an error.
pub fn replace_surface(corpus: &Corpus, old: &str, new: &str) -> Result<(Corpus, PerturbationLog), PerturbError> {
    if old.is_empty() {
        return Err(PerturbError::EmptyTarget);
    }
    let mut log = PerturbationLog::default();
    let mut docs = Vec::with_capacity(corpus.documents.len());
    for d in &corpus.documents {
        let edits: Vec<Edit> = whole_word_occurrences(&d.text, old)
            .into_iter()
            .map(|(start, end)| Edit { start, end, new: new.to_string() })
            .collect();
        log.occurrences += edits.len();
        let (nd, changed) = apply_edits(d, &edits, corpus.tokenizer)?;
        log.mentions_changed += changed;
        docs.push(nd);
    }
    let out = rebuild(corpus, docs)?;
    Ok((out, log))
}

fn rebuild(template: &Corpus, docs: Vec<Document>) -> Result<Corpus, PerturbError> {
    let mut out = Corpus::new(template.role, template.tokenizer, docs)?;
    // keep declared types even if a transform removed every mention of one
    out.entity_types.extend(template.entity_types.iter().cloned());
    out.validate().map_err(PerturbError::Invariant)?;
    Ok(out)
}

/// Distinct gold mention surfaces that look like abbreviations, sorted.
pub fn abbreviation_types(corpus: &Corpus) -> Vec<String> {
    let set: BTreeSet<&str> = corpus.mentions().map(|(_, m)| m.surface.as_str()).filter(|s| is_abbreviation(s)).collect();
    set.into_iter().map(str::to_string).collect()
}

/// Fills `{Abbreviation}` with 2–5 uppercase letters and `{Number}` with
/// 1–3 digits.
pub fn generate_from_template<R: Rng>(template: &str, rng: &mut R) -> String {
    let mut out = template.to_string();
    while out.contains("{Abbreviation}") {
        let n = rng.gen_range(2..=5);
        let abbr: String = (0..n).map(|_| rng.gen_range(b'A'..=b'Z') as char).collect();
        out = out.replacen("{Abbreviation}", &abbr, 1);
    }
    while out.contains("{Number}") {
        let n = rng.gen_range(1..=3);
        let num: String = (0..n).map(|_| rng.gen_range(b'0'..=b'9') as char).collect();
        out = out.replacen("{Number}", &num, 1);
    }
    out
}

/// Picks `k` abbreviation mention types by seeded sampling and rewrites
/// every gold mention with that exact surface to a freshly generated
/// string. Text outside those mentions is untouched. Generated strings do
/// not occur anywhere in the corpus and are pairwise distinct.
pub fn inject_pattern(
    train: &Corpus,
    k: usize,
    template: &str,
    seed: u64,
) -> Result<(Corpus, PerturbationLog), PerturbError> {
    if !template.contains("{Abbreviation}") && !template.contains("{Number}") {
        return Err(PerturbError::BadTemplate(template.to_string()));
    }
    let types = abbreviation_types(train);
    if types.len() < k {
        return Err(PerturbError::NotEnoughAbbreviations { needed: k, available: types.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<String> = types.iter().cloned().choose_multiple(&mut rng, k);
    chosen.sort();

    let existing: BTreeSet<&str> = train.mentions().map(|(_, m)| m.surface.as_str()).collect();
    let mut replacements = BTreeMap::new();
    let mut used = BTreeSet::new();
    for old in &chosen {
        const ATTEMPTS: usize = 10_000;
        let fresh = (0..ATTEMPTS)
            .map(|_| generate_from_template(template, &mut rng))
            .find(|c| {
                !existing.contains(c.as_str())
                    && !used.contains(c)
                    && !train.documents.iter().any(|d| d.text.contains(c.as_str()))
            })
            .ok_or(PerturbError::Exhausted(ATTEMPTS))?;
        used.insert(fresh.clone());
        replacements.insert(old.clone(), fresh);
    }

    let mut log = PerturbationLog { replacements: replacements.clone(), ..Default::default() };
    let mut docs = Vec::with_capacity(train.documents.len());
    for d in &train.documents {
        let mut edits: Vec<Edit> = d
            .mentions
            .iter()
            .filter_map(|m| replacements.get(&m.surface).map(|n| Edit { start: m.start, end: m.end, new: n.clone() }))
            .collect();
        edits.sort();
        edits.dedup();
        log.occurrences += edits.len();
        let (nd, changed) = apply_edits(d, &edits, train.tokenizer)?;
        log.mentions_changed += changed;
        docs.push(nd);
    }
    Ok((rebuild(train, docs)?, log))
}

/// Knobs of the synthetic biased corpus.
///
/// Mentions are one or two invented name words placed in cue contexts
/// ("Patients with __ were studied ."). Name words of training concepts also
/// occur in plain-text contexts ("The __ assay was performed ."), so in
/// training the context, not the word, decides the label. Planted bias words
/// break that: each is seen in training in one role only, and that role
/// changes at test time. Half of them are abbreviations that are always a
/// whole mention in training (B) and continue a longer, unseen synonym at
/// test time (I); the other half are words only seen outside mentions in
/// training (O) that name new concepts at test time (B).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasedCorpusConfig {
    pub train_docs: usize,
    pub dev_docs: usize,
    pub test_docs: usize,
    pub sentences_per_doc: usize,
    /// Concepts with a training surface and a held-out synonym.
    pub train_concepts: usize,
    /// Concepts that only occur at dev/test time.
    pub new_concepts: usize,
    pub planted_words: usize,
    /// Share of training sentences that reuse a training name word outside
    /// any mention.
    pub name_reuse_rate: f64,
    /// Share of mention sentences that feature a planted word.
    pub planted_rate: f64,
    /// Share of test occurrences of a planted word in its shifted role; the
    /// rest repeat the training role.
    pub planted_shift_rate: f64,
    /// Share of sentences without mentions.
    pub filler_rate: f64,
}

impl Default for BiasedCorpusConfig {
    fn default() -> Self {
        BiasedCorpusConfig {
            train_docs: 120,
            dev_docs: 30,
            test_docs: 60,
            sentences_per_doc: 6,
            train_concepts: 60,
            new_concepts: 40,
            planted_words: 8,
            name_reuse_rate: 0.3,
            planted_rate: 0.25,
            planted_shift_rate: 0.8,
            filler_rate: 0.2,
        }
    }
}

/// A generated corpus triple plus the planted words.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasedCorpus {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub planted: Vec<String>,
}

const ENTITY_TYPE: &str = "Disease";
const PRE: &[&str] = &["Patients with", "A case of", "We diagnosed", "The risk of", "Treatment of", "Symptoms of"];
const POST: &[&str] = &["was observed .", "is rare .", "were studied .", "remains unclear .", "was confirmed ."];
const PLAIN_PRE: &[&str] = &["The", "A new", "Our", "This"];
const PLAIN_POST: &[&str] = &["assay was performed .", "score was recorded .", "protocol is simple .", "level was measured ."];
const FILLER: &[&str] = &[
    "The study enrolled adults from two centers .",
    "Samples were collected at baseline and follow up .",
    "We report the results of a cohort study .",
    "These findings were consistent across groups .",
    "Further work is needed to confirm the effect .",
    "The protocol was approved by the ethics board .",
];
const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ber", "dan", "gol", "hes", "kor", "lin", "mar", "nix", "pol",
    "ser", "tav", "zen",
];

struct Concept {
    cui: String,
    surfaces: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum PlantedRole {
    /// Whole mention in training, continues a longer mention at test time.
    AlwaysB,
    /// Outside mentions in training, names a new concept at test time.
    AlwaysO,
}

struct Planted {
    word: String,
    role: PlantedRole,
    cui: String,
}

struct Vocab {
    taken: BTreeSet<String>,
}

impl Vocab {
    fn fresh<R: Rng>(&mut self, rng: &mut R, make: impl Fn(&mut R) -> String) -> Result<String, PerturbError> {
        for _ in 0..10_000 {
            let w = make(rng);
            if self.taken.insert(w.clone()) {
                return Ok(w);
            }
        }
        Err(PerturbError::Config("vocabulary exhausted; lower the concept or planted-word counts".into()))
    }

    fn name<R: Rng>(&mut self, rng: &mut R) -> Result<String, PerturbError> {
        self.fresh(rng, |rng| {
            let n = rng.gen_range(2..=3);
            (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
        })
    }

    fn abbreviation<R: Rng>(&mut self, rng: &mut R) -> Result<String, PerturbError> {
        self.fresh(rng, |rng| {
            let n = rng.gen_range(2..=3);
            (0..n).map(|_| rng.gen_range(b'A'..=b'Z') as char).collect()
        })
    }

    fn surface<R: Rng>(&mut self, rng: &mut R) -> Result<String, PerturbError> {
        let first = self.name(rng)?;
        Ok(if rng.gen_bool(0.5) { format!("{first} {}", self.name(rng)?) } else { first })
    }
}

type Piece = (String, Option<String>);

/// Joins sentences of `(text, cui)` pieces into a document; pieces with a
/// CUI become mentions.
fn assemble(id: String, sentences: Vec<Vec<Piece>>) -> Result<Document, PerturbError> {
    let mut text = String::new();
    let mut mentions = Vec::new();
    let mut spans = Vec::new();
    for s in sentences {
        if !text.is_empty() {
            text.push(' ');
        }
        let start = text.len();
        for (i, (piece, cui)) in s.iter().enumerate() {
            if i > 0 {
                text.push(' ');
            }
            if let Some(cui) = cui {
                mentions.push(Mention::new(piece.as_str(), text.len(), text.len() + piece.len(), vec![cui.clone()], ENTITY_TYPE));
            }
            text.push_str(piece);
        }
        spans.push((start, text.len()));
    }
    Ok(Document::with_sentences(id, text, None, spans, mentions, TokenizerMode::PunctSplit)?)
}

fn cue<R: Rng>(rng: &mut R, surface: String, cui: &str) -> Vec<Piece> {
    vec![(PRE.choose(rng).unwrap().to_string(), None), (surface, Some(cui.to_string())), (POST.choose(rng).unwrap().to_string(), None)]
}

fn plain<R: Rng>(rng: &mut R, word: &str) -> Vec<Piece> {
    vec![(format!("{} {word} {}", PLAIN_PRE.choose(rng).unwrap(), PLAIN_POST.choose(rng).unwrap()), None)]
}

fn filler<R: Rng>(rng: &mut R) -> Vec<Piece> {
    vec![(FILLER.choose(rng).unwrap().to_string(), None)]
}

/// Generates train/dev/test corpora with planted word-level label bias.
/// Dev and test share the shifted distribution.
pub fn make_biased_corpus(config: &BiasedCorpusConfig, seed: u64) -> Result<BiasedCorpus, PerturbError> {
    let c = config;
    let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
    if c.train_docs == 0 || c.test_docs == 0 || c.sentences_per_doc == 0 {
        return Err(PerturbError::Config("document and sentence counts must be positive".into()));
    }
    if c.train_concepts == 0 {
        return Err(PerturbError::Config("need at least one training concept".into()));
    }
    if ![c.name_reuse_rate, c.planted_rate, c.planted_shift_rate, c.filler_rate].into_iter().all(rate_ok) {
        return Err(PerturbError::Config("rates must lie in [0, 1]".into()));
    }
    if c.filler_rate + c.name_reuse_rate >= 1.0 {
        return Err(PerturbError::Config("filler_rate + name_reuse_rate must leave room for mentions".into()));
    }
    if 2 * (c.train_concepts * 2 + c.new_concepts) > 7000 || c.planted_words > 2000 {
        return Err(PerturbError::Config("vocabulary sizes exceed the generator's syllable inventory".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab = Vocab { taken: BTreeSet::new() };
    let mut known = Vec::new();
    for i in 0..c.train_concepts {
        let surfaces = vec![vocab.surface(&mut rng)?, vocab.surface(&mut rng)?];
        known.push(Concept { cui: format!("K{i:04}"), surfaces });
    }
    let mut fresh = Vec::new();
    for i in 0..c.new_concepts {
        fresh.push(Concept { cui: format!("N{i:04}"), surfaces: vec![vocab.surface(&mut rng)?] });
    }
    let mut planted = Vec::new();
    for i in 0..c.planted_words {
        let (word, role) =
            if i % 2 == 0 { (vocab.abbreviation(&mut rng)?, PlantedRole::AlwaysB) } else { (vocab.name(&mut rng)?, PlantedRole::AlwaysO) };
        planted.push(Planted { word, role, cui: format!("P{i:04}") });
    }
    let train_words: Vec<&str> = known.iter().flat_map(|k| k.surfaces[0].split(' ')).collect();

    let mut train_docs = Vec::new();
    for d in 0..c.train_docs {
        let mut sents = Vec::new();
        for _ in 0..c.sentences_per_doc {
            let roll: f64 = rng.gen();
            if roll < c.filler_rate {
                sents.push(filler(&mut rng));
            } else if roll < c.filler_rate + c.name_reuse_rate {
                let w = *train_words.choose(&mut rng).unwrap();
                sents.push(plain(&mut rng, w));
            } else if !planted.is_empty() && rng.gen_bool(c.planted_rate) {
                let p = planted.choose(&mut rng).unwrap();
                match p.role {
                    PlantedRole::AlwaysB => sents.push(cue(&mut rng, p.word.clone(), &p.cui)),
                    PlantedRole::AlwaysO => sents.push(plain(&mut rng, &p.word)),
                }
            } else {
                let k = known.choose(&mut rng).unwrap();
                sents.push(cue(&mut rng, k.surfaces[0].clone(), &k.cui));
            }
        }
        train_docs.push(assemble(format!("train{d:04}"), sents)?);
    }

    let shifted = |prefix: &str, n: usize, rng: &mut ChaCha8Rng, vocab: &mut Vocab| -> Result<Vec<Document>, PerturbError> {
        let mut docs = Vec::new();
        for d in 0..n {
            let mut sents = Vec::new();
            for _ in 0..c.sentences_per_doc {
                let roll: f64 = rng.gen();
                if roll < c.filler_rate {
                    sents.push(filler(rng));
                } else if roll < c.filler_rate + c.name_reuse_rate {
                    let w = *train_words.choose(rng).unwrap();
                    sents.push(plain(rng, w));
                } else if !planted.is_empty() && rng.gen_bool(c.planted_rate) {
                    let p = planted.choose(rng).unwrap();
                    let shift = rng.gen_bool(c.planted_shift_rate);
                    match (p.role, shift) {
                        (PlantedRole::AlwaysB, false) => sents.push(cue(rng, p.word.clone(), &p.cui)),
                        (PlantedRole::AlwaysB, true) => {
                            // an unseen synonym that ends in the planted word
                            let s = format!("{} {}", vocab.name(rng)?, p.word);
                            sents.push(cue(rng, s, &p.cui));
                        }
                        (PlantedRole::AlwaysO, false) => sents.push(plain(rng, &p.word)),
                        (PlantedRole::AlwaysO, true) => sents.push(cue(rng, p.word.clone(), &p.cui)),
                    }
                } else {
                    let pick: f64 = rng.gen();
                    if pick < 0.4 || fresh.is_empty() && pick < 0.7 {
                        let k = known.choose(rng).unwrap();
                        sents.push(cue(rng, k.surfaces[0].clone(), &k.cui));
                    } else if pick < 0.7 || fresh.is_empty() {
                        let k = known.choose(rng).unwrap();
                        sents.push(cue(rng, k.surfaces[1].clone(), &k.cui));
                    } else {
                        let k = fresh.choose(rng).unwrap();
                        sents.push(cue(rng, k.surfaces[0].clone(), &k.cui));
                    }
                }
            }
            docs.push(assemble(format!("{prefix}{d:04}"), sents)?);
        }
        Ok(docs)
    };
    let dev_docs = shifted("dev", c.dev_docs.max(1), &mut rng, &mut vocab)?;
    let test_docs = shifted("test", c.test_docs, &mut rng, &mut vocab)?;

    let corpus = |role, docs| -> Result<Corpus, PerturbError> {
        let mut out = Corpus::new(role, TokenizerMode::PunctSplit, docs)?;
        out.entity_types.insert(ENTITY_TYPE.to_string());
        Ok(out)
    };
    Ok(BiasedCorpus {
        train: corpus(SplitRole::Train, train_docs)?,
        dev: corpus(SplitRole::Dev, dev_docs)?,
        test: corpus(SplitRole::Test, test_docs)?,
        planted: planted.into_iter().map(|p| p.word).collect(),
    })
}
