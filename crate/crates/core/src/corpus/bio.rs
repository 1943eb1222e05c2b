use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Document, Mention, Sentence, Token, UNKNOWN_CUI};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BioError {
    #[error("token {index}: {tag} cannot follow {prev}")]
    IllegalTransition { index: usize, prev: String, tag: String },
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("{tokens} tokens but {tags} tags")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("mention [{start}, {end}) is not aligned to token boundaries")]
    Misaligned { start: usize, end: usize },
    #[error("entity type {0:?} is not part of the tag scheme")]
    UnknownType(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    O,
    B(String),
    I(String),
}

impl Tag {
    pub fn entity_type(&self) -> Option<&str> {
        match self {
            Tag::O => None,
            Tag::B(t) | Tag::I(t) => Some(t),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(t) => write!(f, "B-{t}"),
            Tag::I(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for Tag {
    type Err = BioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::O);
        }
        match s.split_once('-') {
            Some(("B", t)) if !t.is_empty() => Ok(Tag::B(t.to_string())),
            Some(("I", t)) if !t.is_empty() => Ok(Tag::I(t.to_string())),
            _ => Err(BioError::UnknownTag(s.to_string())),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type TagSequence = Vec<Tag>;

/// Maps BIO tags to class indices `0..K`.
///
/// For entity types `t_0 .. t_{n-1}` (sorted) the classes are
/// `B-t_0, I-t_0, B-t_1, I-t_1, ..., O`, so `K = 2n + 1` and `O` is last.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagScheme {
    types: Vec<String>,
}

impl TagScheme {
    pub fn new<I, S>(types: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut types: Vec<String> = types.into_iter().map(Into::into).collect();
        types.sort();
        types.dedup();
        TagScheme { types }
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn num_classes(&self) -> usize {
        2 * self.types.len() + 1
    }

    pub fn outside(&self) -> usize {
        2 * self.types.len()
    }

    pub fn index(&self, tag: &Tag) -> Result<usize, BioError> {
        let type_index = |t: &str| {
            self.types
                .binary_search_by(|x| x.as_str().cmp(t))
                .map_err(|_| BioError::UnknownType(t.to_string()))
        };
        match tag {
            Tag::O => Ok(self.outside()),
            Tag::B(t) => Ok(2 * type_index(t)?),
            Tag::I(t) => Ok(2 * type_index(t)? + 1),
        }
    }

    pub fn tag(&self, index: usize) -> Tag {
        if index >= self.outside() {
            return Tag::O;
        }
        let t = self.types[index / 2].clone();
        if index % 2 == 0 {
            Tag::B(t)
        } else {
            Tag::I(t)
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.num_classes()).map(|i| self.tag(i).to_string()).collect()
    }
}

/// What [`to_bio`] does with a mention that does not sit on token boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MisalignedPolicy {
    Reject,
    /// Tag the covering token run.
    Cover,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Projection {
    pub tags: TagSequence,
    /// Mentions dropped because they overlap a longer mention, as
    /// `(start, end)` byte spans.
    pub dropped: Vec<(usize, usize)>,
}

/// Projects the gold mentions of `sentence` onto its tokens.
///
/// Overlapping mentions are resolved longest-first (ties: leftmost); the
/// losers are reported in [`Projection::dropped`].
pub fn to_bio(doc: &Document, sentence: &Sentence, policy: MisalignedPolicy) -> Result<Projection, BioError> {
    let mut mentions: Vec<&Mention> = doc.sentence_mentions(sentence).collect();
    mentions.sort_by(|a, b| b.len().cmp(&a.len()).then(a.start.cmp(&b.start)));
    let mut tags = vec![Tag::O; sentence.tokens.len()];
    let mut taken = vec![false; sentence.tokens.len()];
    let mut dropped = Vec::new();
    for m in mentions {
        let run: Vec<usize> = sentence
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.start < m.end && m.start < t.end)
            .map(|(i, _)| i)
            .collect();
        let (Some(&first), Some(&last)) = (run.first(), run.last()) else {
            return Err(BioError::Misaligned { start: m.start, end: m.end });
        };
        if policy == MisalignedPolicy::Reject
            && (sentence.tokens[first].start != m.start || sentence.tokens[last].end != m.end)
        {
            return Err(BioError::Misaligned { start: m.start, end: m.end });
        }
        if taken[first..=last].iter().any(|&t| t) {
            dropped.push((m.start, m.end));
            continue;
        }
        for i in first..=last {
            taken[i] = true;
            tags[i] = if i == first { Tag::B(m.entity_type.clone()) } else { Tag::I(m.entity_type.clone()) };
        }
    }
    dropped.sort_unstable();
    Ok(Projection { tags, dropped })
}

/// Decodes a tag sequence into mentions over `text`.
///
/// An `I-t` that does not continue an open `t` entity is illegal; with
/// `repair` it starts a new entity instead. Decoded mentions carry the
/// unknown CUI since tags do not encode concepts.
pub fn from_bio(text: &str, tokens: &[Token], tags: &[Tag], repair: bool) -> Result<Vec<Mention>, BioError> {
    if tokens.len() != tags.len() {
        return Err(BioError::LengthMismatch { tokens: tokens.len(), tags: tags.len() });
    }
    let mut out = Vec::new();
    let mut open: Option<(usize, usize, &str)> = None;
    let close = |open: &mut Option<(usize, usize, &str)>, out: &mut Vec<Mention>| {
        if let Some((s, e, t)) = open.take() {
            out.push(Mention::new(&text[s..e], s, e, vec![UNKNOWN_CUI.to_string()], t));
        }
    };
    for (i, (tok, tag)) in tokens.iter().zip(tags).enumerate() {
        match tag {
            Tag::O => close(&mut open, &mut out),
            Tag::B(t) => {
                close(&mut open, &mut out);
                open = Some((tok.start, tok.end, t.as_str()));
            }
            Tag::I(t) => match &mut open {
                Some((_, e, ot)) if *ot == t.as_str() => *e = tok.end,
                _ => {
                    if !repair {
                        let prev = if i == 0 { "start of sentence".to_string() } else { tags[i - 1].to_string() };
                        return Err(BioError::IllegalTransition { index: i, prev, tag: tag.to_string() });
                    }
                    close(&mut open, &mut out);
                    open = Some((tok.start, tok.end, t.as_str()));
                }
            },
        }
    }
    close(&mut open, &mut out);
    Ok(out)
}

/// Rewrites illegal `I-t` tags as `B-t` so the sequence is well formed.
pub fn repair_tags(tags: &mut [Tag]) {
    let mut open: Option<String> = None;
    for tag in tags.iter_mut() {
        if let Tag::I(t) = tag {
            if open.as_deref() != Some(t.as_str()) {
                *tag = Tag::B(t.clone());
            }
        }
        open = tag.entity_type().map(str::to_string);
    }
}
