//! In-memory model of concept-linked NER corpora.
//!
//! A [`Corpus`] is a list of [`Document`]s. Each document owns its raw text,
//! its gold [`Mention`]s (document-level byte spans) and a sentence/token
//! segmentation derived from the text. Mentions are attached to the sentence
//! that contains their start offset; the sentence splitter never places a
//! boundary inside a mention.
//!
//! All offsets are byte offsets into `Document::text`. External formats that
//! count characters (PubTator) are converted at the parsing boundary.

mod bio;
mod conll;
mod jsonl;
mod normalize;
mod pubtator;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bio::{from_bio, repair_tags, to_bio, BioError, MisalignedPolicy, Projection, Tag, TagScheme, TagSequence};
pub use conll::{parse_conll, ConllOptions};
pub use jsonl::{read_jsonl, write_jsonl};
pub use normalize::{is_punct, normalize_mention};
pub use pubtator::{parse_pubtator, write_pubtator, PubtatorOptions};
pub use tokenize::{tokenize, TokenizerMode};

/// CUI used by the benchmarks for concepts that have no database entry.
pub const UNKNOWN_CUI: &str = "-1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: document {doc_id} is truncated ({detail})")]
    TruncatedDocument {
        doc_id: String,
        line: usize,
        detail: &'static str,
    },
    #[error("duplicate document id {0}")]
    DuplicateDocument(String),
    #[error("corpus contains no sentences")]
    Empty,
    #[error("document {doc_id}: mention [{start}, {end}) is not a valid span of the text")]
    BadSpan {
        doc_id: String,
        start: usize,
        end: usize,
    },
    #[error("document {doc_id}: token [{start}, {end}) does not match the text")]
    BadToken {
        doc_id: String,
        start: usize,
        end: usize,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Bio(#[from] BioError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Role a corpus plays in an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Dev,
    Test,
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitRole::Train => "train",
            SplitRole::Dev => "dev",
            SplitRole::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub cuis: Vec<String>,
    pub entity_type: String,
    /// Set when the span does not start and end on token boundaries under
    /// the document's tokenizer. The span itself is kept as annotated; BIO
    /// projection uses the covering token run.
    #[serde(default)]
    pub misaligned: bool,
}

impl Mention {
    /// Builds a mention with de-duplicated CUIs (first occurrence wins). An
    /// empty CUI list becomes the unknown concept.
    pub fn new(
        surface: impl Into<String>,
        start: usize,
        end: usize,
        cuis: Vec<String>,
        entity_type: impl Into<String>,
    ) -> Self {
        let mut seen = HashSet::new();
        let mut cuis: Vec<String> = cuis
            .into_iter()
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty() && seen.insert(c.clone()))
            .collect();
        if cuis.is_empty() {
            cuis.push(UNKNOWN_CUI.to_string());
        }
        Mention {
            surface: surface.into(),
            start,
            end,
            cuis,
            entity_type: entity_type.into(),
            misaligned: false,
        }
    }

    pub fn is_unknown_concept(&self) -> bool {
        self.cuis.len() == 1 && self.cuis[0] == UNKNOWN_CUI
    }

    pub fn overlaps(&self, other: &Mention) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub start: usize,
    pub end: usize,
    pub tokens: Vec<Token>,
    /// Indices into the owning document's `mentions`.
    pub mentions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// Byte length of the title for title/abstract documents.
    pub title_len: Option<usize>,
    pub sentences: Vec<Sentence>,
    pub mentions: Vec<Mention>,
}

impl Document {
    /// Builds a document, splitting sentences with the rule-based splitter
    /// and tokenizing each sentence with `mode`.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        title_len: Option<usize>,
        mentions: Vec<Mention>,
        mode: TokenizerMode,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let text = text.into();
        let mentions = check_mentions(&id, &text, mentions)?;
        let spans = split_sentences(&text, title_len, &mentions);
        Ok(Self::assemble(id, text, title_len, spans, mentions, mode))
    }

    /// Builds a document with caller-provided sentence spans.
    pub fn with_sentences(
        id: impl Into<String>,
        text: impl Into<String>,
        title_len: Option<usize>,
        sentence_spans: Vec<(usize, usize)>,
        mentions: Vec<Mention>,
        mode: TokenizerMode,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let text = text.into();
        for &(s, e) in &sentence_spans {
            if s > e || e > text.len() || !text.is_char_boundary(s) || !text.is_char_boundary(e) {
                return Err(CorpusError::BadSpan { doc_id: id, start: s, end: e });
            }
        }
        let mentions = check_mentions(&id, &text, mentions)?;
        Ok(Self::assemble(id, text, title_len, sentence_spans, mentions, mode))
    }

    /// Builds a document from explicit tokens grouped by sentence. Token
    /// offsets must match the text exactly.
    pub(crate) fn with_tokens(
        id: String,
        text: String,
        title_len: Option<usize>,
        sentences: Vec<(usize, usize, Vec<(usize, usize)>)>,
        mentions: Vec<Mention>,
    ) -> Result<Self, CorpusError> {
        let mentions = check_mentions(&id, &text, mentions)?;
        let mut out = Vec::with_capacity(sentences.len());
        for (start, end, toks) in sentences {
            let mut tokens = Vec::with_capacity(toks.len());
            let mut prev_end = start;
            for (s, e) in toks {
                if s >= e || s < prev_end || e > end || !text.is_char_boundary(s) || !text.is_char_boundary(e) {
                    return Err(CorpusError::BadToken { doc_id: id, start: s, end: e });
                }
                tokens.push(Token { text: text[s..e].to_string(), start: s, end: e });
                prev_end = e;
            }
            out.push(Sentence { start, end, tokens, mentions: Vec::new() });
        }
        let mut doc = Document { id, text, title_len, sentences: out, mentions };
        doc.attach_mentions();
        Ok(doc)
    }

    fn assemble(
        id: String,
        text: String,
        title_len: Option<usize>,
        spans: Vec<(usize, usize)>,
        mentions: Vec<Mention>,
        mode: TokenizerMode,
    ) -> Self {
        let sentences = spans
            .into_iter()
            .map(|(start, end)| {
                let tokens = tokenize(&text[start..end], mode)
                    .into_iter()
                    .map(|t| Token { text: t.text, start: t.start + start, end: t.end + start })
                    .collect();
                Sentence { start, end, tokens, mentions: Vec::new() }
            })
            .collect();
        let mut doc = Document { id, text, title_len, sentences, mentions };
        doc.attach_mentions();
        doc
    }

    /// Assigns mentions to sentences and recomputes the `misaligned` flags.
    fn attach_mentions(&mut self) {
        for s in &mut self.sentences {
            s.mentions.clear();
        }
        for (idx, m) in self.mentions.iter_mut().enumerate() {
            let sent = self
                .sentences
                .iter_mut()
                .find(|s| s.start <= m.start && m.start < s.end);
            match sent {
                Some(s) => {
                    let run: Vec<&Token> = s.tokens.iter().filter(|t| t.start < m.end && m.start < t.end).collect();
                    m.misaligned = match (run.first(), run.last()) {
                        (Some(first), Some(last)) => first.start != m.start || last.end != m.end || m.end > s.end,
                        _ => true,
                    };
                    s.mentions.push(idx);
                }
                None => m.misaligned = true,
            }
        }
    }

    /// Tokens of every sentence, in document order.
    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn sentence_mentions<'a>(&'a self, sentence: &'a Sentence) -> impl Iterator<Item = &'a Mention> + 'a {
        sentence.mentions.iter().map(move |&i| &self.mentions[i])
    }

    /// Re-derives sentences and tokens under a different tokenizer, keeping
    /// the sentence boundaries.
    pub fn retokenize(&self, mode: TokenizerMode) -> Document {
        let spans = self.sentences.iter().map(|s| (s.start, s.end)).collect();
        Self::assemble(self.id.clone(), self.text.clone(), self.title_len, spans, self.mentions.clone(), mode)
    }
}

fn check_mentions(doc_id: &str, text: &str, mut mentions: Vec<Mention>) -> Result<Vec<Mention>, CorpusError> {
    for m in &mentions {
        let ok = m.start < m.end
            && m.end <= text.len()
            && text.is_char_boundary(m.start)
            && text.is_char_boundary(m.end)
            && text[m.start..m.end] == m.surface;
        if !ok {
            return Err(CorpusError::BadSpan { doc_id: doc_id.to_string(), start: m.start, end: m.end });
        }
    }
    mentions.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)).then(a.entity_type.cmp(&b.entity_type)));
    Ok(mentions)
}

/// Rule-based sentence splitter.
///
/// Boundaries fall at the end of the title, at newlines, and after `.`, `!`
/// or `?` followed by whitespace and an uppercase letter or digit. No
/// boundary is placed inside a mention. Returned spans are trimmed of
/// surrounding whitespace and never empty.
pub fn split_sentences(text: &str, title_len: Option<usize>, mentions: &[Mention]) -> Vec<(usize, usize)> {
    let inside_mention = |pos: usize| mentions.iter().any(|m| m.start < pos && pos < m.end);
    let mut cuts = vec![0usize];
    if let Some(t) = title_len {
        if t < text.len() && !inside_mention(t) {
            cuts.push(t);
        }
    }
    let bytes = text.as_bytes();
    for (i, c) in text.char_indices() {
        if c == '\n' && !inside_mention(i) {
            cuts.push(i);
            continue;
        }
        if matches!(c, '.' | '!' | '?') {
            let after = i + 1;
            let mut j = after;
            while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
                j += 1;
            }
            if j > after && j < bytes.len() {
                let next = text[j..].chars().next().unwrap();
                if (next.is_uppercase() || next.is_ascii_digit()) && !inside_mention(after) {
                    cuts.push(after);
                }
            }
        }
    }
    cuts.push(text.len());
    cuts.sort_unstable();
    cuts.dedup();
    cuts.windows(2)
        .filter_map(|w| {
            let seg = &text[w[0]..w[1]];
            let lead = seg.len() - seg.trim_start().len();
            let trimmed = seg.trim();
            (!trimmed.is_empty()).then(|| (w[0] + lead, w[0] + lead + trimmed.len()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub role: SplitRole,
    pub tokenizer: TokenizerMode,
    pub documents: Vec<Document>,
    pub entity_types: BTreeSet<String>,
}

impl Corpus {
    /// Validates document ids and derives the entity type set.
    pub fn new(role: SplitRole, tokenizer: TokenizerMode, documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut ids = HashSet::new();
        for d in &documents {
            if !ids.insert(d.id.as_str()) {
                return Err(CorpusError::DuplicateDocument(d.id.clone()));
            }
        }
        if documents.iter().all(|d| d.sentences.is_empty()) {
            return Err(CorpusError::Empty);
        }
        let entity_types = documents
            .iter()
            .flat_map(|d| d.mentions.iter().map(|m| m.entity_type.clone()))
            .collect();
        Ok(Corpus { role, tokenizer, documents, entity_types })
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn mention_count(&self) -> usize {
        self.documents.iter().map(|d| d.mentions.len()).sum()
    }

    pub fn mentions(&self) -> impl Iterator<Item = (&Document, &Mention)> {
        self.documents.iter().flat_map(|d| d.mentions.iter().map(move |m| (d, m)))
    }

    /// A corpus is single-type when its gold mentions carry at most one
    /// entity type.
    pub fn is_single_type(&self) -> bool {
        self.entity_types.len() <= 1
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Keeps only mentions of `entity_type` (e.g. the disease or chemical
    /// half of a two-type corpus). Text and segmentation are unchanged.
    pub fn restrict_to_type(&self, entity_type: &str) -> Corpus {
        let documents = self
            .documents
            .iter()
            .map(|d| {
                let mentions = d.mentions.iter().filter(|m| m.entity_type == entity_type).cloned().collect();
                let mut nd = Document {
                    id: d.id.clone(),
                    text: d.text.clone(),
                    title_len: d.title_len,
                    sentences: d.sentences.clone(),
                    mentions,
                };
                nd.attach_mentions();
                nd
            })
            .collect();
        let mut entity_types = BTreeSet::new();
        if self.entity_types.contains(entity_type) {
            entity_types.insert(entity_type.to_string());
        }
        Corpus { role: self.role, tokenizer: self.tokenizer, documents, entity_types }
    }

    /// Maps every entity type through `map` (types absent from the map are
    /// kept). Used to collapse NCBI's four disease sub-types into one.
    pub fn rename_types(&self, map: &BTreeMap<String, String>) -> Corpus {
        let rename = |t: &str| map.get(t).cloned().unwrap_or_else(|| t.to_string());
        let documents = self
            .documents
            .iter()
            .map(|d| {
                let mut nd = d.clone();
                for m in &mut nd.mentions {
                    m.entity_type = rename(&m.entity_type);
                }
                nd
            })
            .collect();
        let entity_types = self.entity_types.iter().map(|t| rename(t)).collect();
        Corpus { role: self.role, tokenizer: self.tokenizer, documents, entity_types }
    }

    pub fn with_role(mut self, role: SplitRole) -> Corpus {
        self.role = role;
        self
    }

    pub fn retokenize(&self, mode: TokenizerMode) -> Corpus {
        Corpus {
            role: self.role,
            tokenizer: mode,
            documents: self.documents.iter().map(|d| d.retokenize(mode)).collect(),
            entity_types: self.entity_types.clone(),
        }
    }

    /// Checks the structural invariants every corpus must satisfy: token and
    /// mention spans agree with the text, tokens are strictly increasing and
    /// inside their sentence, sentences do not overlap, and every mention is
    /// attached to exactly one sentence.
    pub fn validate(&self) -> Result<(), String> {
        let mut ids = HashSet::new();
        for d in &self.documents {
            if !ids.insert(&d.id) {
                return Err(format!("duplicate document {}", d.id));
            }
            let mut prev_sent_end = 0;
            let mut attached = vec![0usize; d.mentions.len()];
            for s in &d.sentences {
                if s.start < prev_sent_end || s.end > d.text.len() || s.start > s.end {
                    return Err(format!("{}: bad sentence [{}, {})", d.id, s.start, s.end));
                }
                prev_sent_end = s.end;
                let mut prev = s.start;
                for t in &s.tokens {
                    if t.start < prev || t.start >= t.end || t.end > s.end || d.text.get(t.start..t.end) != Some(t.text.as_str()) {
                        return Err(format!("{}: bad token [{}, {})", d.id, t.start, t.end));
                    }
                    prev = t.end;
                }
                for &i in &s.mentions {
                    attached[i] += 1;
                }
            }
            for (i, m) in d.mentions.iter().enumerate() {
                if m.start >= m.end || d.text.get(m.start..m.end) != Some(m.surface.as_str()) {
                    return Err(format!("{}: mention [{}, {}) does not match text", d.id, m.start, m.end));
                }
                if m.cuis.is_empty() {
                    return Err(format!("{}: mention [{}, {}) has no CUI", d.id, m.start, m.end));
                }
                if attached[i] > 1 || (attached[i] == 0 && !m.misaligned) {
                    return Err(format!("{}: mention [{}, {}) attached to {} sentences", d.id, m.start, m.end, attached[i]));
                }
            }
        }
        Ok(())
    }
}

/// Result of parsing a corpus file: the corpus plus per-record problems that
/// did not prevent loading (bad spans, malformed lines).
#[derive(Clone, Debug)]
pub struct Parsed {
    pub corpus: Corpus,
    pub issues: Vec<Issue>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub line: usize,
    pub doc_id: Option<String>,
    pub kind: IssueKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IssueKind {
    MalformedLine { content: String },
    SpanOutOfBounds { start: usize, end: usize },
    SurfaceMismatch { start: usize, end: usize, expected: String, found: String },
    UnknownDocument,
    OverlappingMention { start: usize, end: usize },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}", self.line)?;
        if let Some(d) = &self.doc_id {
            write!(f, " (doc {d})")?;
        }
        match &self.kind {
            IssueKind::MalformedLine { content } => write!(f, ": malformed line {content:?}"),
            IssueKind::SpanOutOfBounds { start, end } => write!(f, ": span [{start}, {end}) out of bounds"),
            IssueKind::SurfaceMismatch { start, end, expected, found } => {
                write!(f, ": span [{start}, {end}) is {found:?}, annotation says {expected:?}")
            }
            IssueKind::UnknownDocument => write!(f, ": annotation for unknown document"),
            IssueKind::OverlappingMention { start, end } => write!(f, ": mention [{start}, {end}) overlaps a longer mention"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(text: &str, surface: &str) -> Mention {
        let start = text.find(surface).unwrap();
        Mention::new(surface, start, start + surface.len(), vec!["D1".into()], "Disease")
    }

    #[test]
    fn cuis_deduplicated_and_defaulted() {
        let a = Mention::new("x", 0, 1, vec!["D1".into(), "D1".into(), "D2".into()], "T");
        assert_eq!(a.cuis, vec!["D1", "D2"]);
        let b = Mention::new("x", 0, 1, vec![], "T");
        assert!(b.is_unknown_concept());
    }

    #[test]
    fn splitter_respects_mentions_and_title() {
        let text = "A title. First sentence here. Second one follows.";
        let spans = split_sentences(text, Some(8), &[]);
        let parts: Vec<&str> = spans.iter().map(|&(s, e)| &text[s..e]).collect();
        assert_eq!(parts, vec!["A title.", "First sentence here.", "Second one follows."]);

        let text = "Type St. Louis encephalitis. Next";
        let mention = m(text, "St. Louis encephalitis");
        let spans = split_sentences(text, None, &[mention]);
        let parts: Vec<&str> = spans.iter().map(|&(s, e)| &text[s..e]).collect();
        assert_eq!(parts, vec!["Type St. Louis encephalitis.", "Next"]);
    }

    #[test]
    fn misaligned_mentions_are_flagged() {
        let text = "the BRCA1-related cancer";
        let mention = m(text, "BRCA1");
        let doc = Document::new("d", text, None, vec![mention.clone()], TokenizerMode::PunctSplit).unwrap();
        assert!(!doc.mentions[0].misaligned);
        let doc = Document::new("d", text, None, vec![mention], TokenizerMode::Whitespace).unwrap();
        assert!(doc.mentions[0].misaligned);
    }

    #[test]
    fn bad_span_rejected() {
        let bad = Mention::new("xx", 0, 2, vec![], "T");
        assert!(matches!(
            Document::new("d", "ab", None, vec![bad], TokenizerMode::PunctSplit),
            Err(CorpusError::BadSpan { .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let d = Document::new("d", "text", None, vec![], TokenizerMode::PunctSplit).unwrap();
        assert!(matches!(
            Corpus::new(SplitRole::Train, TokenizerMode::PunctSplit, vec![d.clone(), d]),
            Err(CorpusError::DuplicateDocument(_))
        ));
    }

    #[test]
    fn restrict_and_validate() {
        let text = "aspirin causes asthma";
        let mut chem = m(text, "aspirin");
        chem.entity_type = "Chemical".into();
        let dis = m(text, "asthma");
        let doc = Document::new("d", text, None, vec![chem, dis], TokenizerMode::PunctSplit).unwrap();
        let c = Corpus::new(SplitRole::Test, TokenizerMode::PunctSplit, vec![doc]).unwrap();
        assert!(!c.is_single_type());
        let dis_only = c.restrict_to_type("Disease");
        assert!(dis_only.is_single_type());
        assert_eq!(dis_only.mention_count(), 1);
        dis_only.validate().unwrap();
        c.validate().unwrap();
    }
}
