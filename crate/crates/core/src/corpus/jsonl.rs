//! Canonical corpus interchange: UTF-8 JSON lines. The first line is a
//! header, every following line is one document.
//!
//! ```text
//! {"format":"nersplit-corpus","version":1,"role":"test","tokenizer":"punct_split"}
//! {"doc_id":"d1","text":"COVID-19 is bad.","title_len":16,"sentences":[{"start":0,"end":16,"tokens":[[0,5],[5,6],[6,8],[9,11],[12,15],[15,16]]}],"mentions":[{"start":0,"end":8,"surface":"COVID-19","type":"Disease","cuis":["-1"],"misaligned":false}]}
//! ```
//!
//! Offsets are byte offsets into `text`. `misaligned` is informational and
//! recomputed on load.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Document, Mention, Parsed, SplitRole, TokenizerMode};

const FORMAT: &str = "nersplit-corpus";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    role: SplitRole,
    tokenizer: TokenizerMode,
}

#[derive(Serialize, Deserialize)]
struct DocRecord {
    doc_id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title_len: Option<usize>,
    sentences: Vec<SentenceRecord>,
    mentions: Vec<MentionRecord>,
}

#[derive(Serialize, Deserialize)]
struct SentenceRecord {
    start: usize,
    end: usize,
    tokens: Vec<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
struct MentionRecord {
    start: usize,
    end: usize,
    surface: String,
    #[serde(rename = "type")]
    entity_type: String,
    cuis: Vec<String>,
    #[serde(default)]
    misaligned: bool,
}

pub fn write_jsonl(corpus: &Corpus) -> Result<String, CorpusError> {
    let header = Header {
        format: FORMAT.to_string(),
        version: VERSION,
        role: corpus.role,
        tokenizer: corpus.tokenizer,
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for d in &corpus.documents {
        let rec = DocRecord {
            doc_id: d.id.clone(),
            text: d.text.clone(),
            title_len: d.title_len,
            sentences: d
                .sentences
                .iter()
                .map(|s| SentenceRecord {
                    start: s.start,
                    end: s.end,
                    tokens: s.tokens.iter().map(|t| [t.start, t.end]).collect(),
                })
                .collect(),
            mentions: d
                .mentions
                .iter()
                .map(|m| MentionRecord {
                    start: m.start,
                    end: m.end,
                    surface: m.surface.clone(),
                    entity_type: m.entity_type.clone(),
                    cuis: m.cuis.clone(),
                    misaligned: m.misaligned,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

/// Reads a corpus written by [`write_jsonl`]. `role` overrides the role
/// stored in the header.
pub fn read_jsonl<R: BufRead>(reader: R, role: Option<SplitRole>) -> Result<Parsed, CorpusError> {
    let mut lines = reader.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
    let Some((_, first)) = lines.next() else {
        return Err(CorpusError::Empty);
    };
    let header: Header = serde_json::from_str(&first?)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(CorpusError::Syntax {
            line: 1,
            message: format!("unsupported corpus format {} v{}", header.format, header.version),
        });
    }
    let mut docs = Vec::new();
    for (idx, line) in lines {
        let rec: DocRecord = serde_json::from_str(&line?).map_err(|e| CorpusError::Syntax {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let sentences = rec
            .sentences
            .into_iter()
            .map(|s| (s.start, s.end, s.tokens.into_iter().map(|[a, b]| (a, b)).collect()))
            .collect();
        let mentions = rec
            .mentions
            .into_iter()
            .map(|m| Mention::new(m.surface, m.start, m.end, m.cuis, m.entity_type))
            .collect();
        docs.push(Document::with_tokens(rec.doc_id, rec.text, rec.title_len, sentences, mentions)?);
    }
    let corpus = Corpus::new(role.unwrap_or(header.role), header.tokenizer, docs)?;
    Ok(Parsed { corpus, issues: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_pubtator, PubtatorOptions};
    use proptest::prelude::*;

    #[test]
    fn documented_example_reads() {
        let s = "{\"format\":\"nersplit-corpus\",\"version\":1,\"role\":\"test\",\"tokenizer\":\"punct_split\"}\n\
{\"doc_id\":\"d1\",\"text\":\"COVID-19 is bad.\",\"title_len\":16,\"sentences\":[{\"start\":0,\"end\":16,\"tokens\":[[0,5],[5,6],[6,8],[9,11],[12,15],[15,16]]}],\"mentions\":[{\"start\":0,\"end\":8,\"surface\":\"COVID-19\",\"type\":\"Disease\",\"cuis\":[\"-1\"],\"misaligned\":false}]}\n";
        let p = read_jsonl(s.as_bytes(), None).unwrap();
        let from_pubtator = parse_pubtator(
            "d1|t|COVID-19 is bad.\nd1|a|\nd1\t0\t8\tCOVID-19\tDisease\t-1\n".as_bytes(),
            &PubtatorOptions::new(SplitRole::Test),
        )
        .unwrap();
        assert_eq!(p.corpus, from_pubtator.corpus);
        assert_eq!(write_jsonl(&p.corpus).unwrap(), s);
    }

    #[test]
    fn token_mismatch_rejected() {
        let s = "{\"format\":\"nersplit-corpus\",\"version\":1,\"role\":\"test\",\"tokenizer\":\"punct_split\"}\n\
{\"doc_id\":\"d1\",\"text\":\"ab\",\"sentences\":[{\"start\":0,\"end\":2,\"tokens\":[[0,3]]}],\"mentions\":[]}\n";
        assert!(read_jsonl(s.as_bytes(), None).is_err());
    }

    proptest! {
        #[test]
        fn pubtator_to_jsonl_round_trip(
            words in proptest::collection::vec("[A-Za-z0-9]{1,7}(-[0-9]{1,2})?[.,]?", 2..30),
            picks in proptest::collection::vec((0usize..30, 0usize..3), 0..5),
        ) {
            let title = words[0].clone();
            let abstract_text = words[1..].join(" ");
            let text = format!("{title} {abstract_text}");
            let mut lines = format!("7|t|{title}\n7|a|{abstract_text}\n");
            let mut pos = 0;
            let starts: Vec<usize> = words.iter().map(|w| { let s = pos; pos += w.len() + 1; s }).collect();
            for (w, c) in picks {
                if w >= words.len() { continue; }
                let s = starts[w];
                let e = s + words[w].len();
                lines.push_str(&format!("7\t{s}\t{e}\t{}\tDisease\tD{c}\n", &text[s..e]));
            }
            let parsed = parse_pubtator(lines.as_bytes(), &PubtatorOptions::new(SplitRole::Dev)).unwrap();
            let json = write_jsonl(&parsed.corpus).unwrap();
            let back = read_jsonl(json.as_bytes(), None).unwrap();
            prop_assert_eq!(&back.corpus, &parsed.corpus);
            prop_assert_eq!(write_jsonl(&back.corpus).unwrap(), json);
        }
    }
}
