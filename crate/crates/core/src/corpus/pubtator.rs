//! PubTator title/abstract format as distributed with NCBI-disease and
//! BC5CDR:
//!
//! ```text
//! 10021369|t|Identification of APC2, a homologue of the adenomatous polyposis coli tumour suppressor.
//! 10021369|a|The adenomatous polyposis coli (APC) tumour-suppressor protein ...
//! 10021369	43	69	adenomatous polyposis coli	Modifier	D011125
//! 10021369	CID	D008750	D000069
//!
//! ```
//!
//! Annotation offsets count characters in `title + " " + abstract`.
//! Relation lines (four fields) are skipped.

use std::io::BufRead;

use super::{Corpus, CorpusError, Document, Issue, IssueKind, Mention, Parsed, SplitRole, TokenizerMode};

#[derive(Clone, Copy, Debug)]
pub struct PubtatorOptions {
    pub role: SplitRole,
    pub tokenizer: TokenizerMode,
    /// Character placed between title and abstract. Offsets in the official
    /// files assume a single character here.
    pub separator: char,
}

impl PubtatorOptions {
    pub fn new(role: SplitRole) -> Self {
        PubtatorOptions { role, tokenizer: TokenizerMode::PunctSplit, separator: ' ' }
    }
}

struct Block {
    id: String,
    line: usize,
    title: Option<String>,
    abstract_text: Option<String>,
    annotations: Vec<(usize, String)>,
}

pub fn parse_pubtator<R: BufRead>(reader: R, opts: &PubtatorOptions) -> Result<Parsed, CorpusError> {
    let mut docs = Vec::new();
    let mut issues = Vec::new();
    let mut block: Option<Block> = None;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(b) = block.take() {
                docs.push(finish(b, opts, &mut issues)?);
            }
            continue;
        }
        if !line.contains('\t') {
            let mut parts = line.splitn(3, '|');
            let (id, kind, rest) = (parts.next(), parts.next(), parts.next());
            match (id, kind, rest) {
                (Some(id), Some("t"), Some(title)) => {
                    if let Some(b) = block.take() {
                        docs.push(finish(b, opts, &mut issues)?);
                    }
                    block = Some(Block {
                        id: id.to_string(),
                        line: lineno,
                        title: Some(title.to_string()),
                        abstract_text: None,
                        annotations: Vec::new(),
                    });
                }
                (Some(id), Some("a"), Some(text)) => match &mut block {
                    Some(b) if b.id == id && b.abstract_text.is_none() => b.abstract_text = Some(text.to_string()),
                    _ => {
                        return Err(CorpusError::TruncatedDocument {
                            doc_id: id.to_string(),
                            line: lineno,
                            detail: "abstract without a preceding title",
                        })
                    }
                },
                _ => issues.push(Issue {
                    line: lineno,
                    doc_id: block.as_ref().map(|b| b.id.clone()),
                    kind: IssueKind::MalformedLine { content: line.to_string() },
                }),
            }
            continue;
        }
        let id = line.split('\t').next().unwrap_or_default();
        match &mut block {
            Some(b) if b.id == id => b.annotations.push((lineno, line.to_string())),
            _ => issues.push(Issue { line: lineno, doc_id: Some(id.to_string()), kind: IssueKind::UnknownDocument }),
        }
    }
    if let Some(b) = block.take() {
        docs.push(finish(b, opts, &mut issues)?);
    }
    let corpus = Corpus::new(opts.role, opts.tokenizer, docs)?;
    Ok(Parsed { corpus, issues })
}

fn finish(b: Block, opts: &PubtatorOptions, issues: &mut Vec<Issue>) -> Result<Document, CorpusError> {
    let title = b.title.unwrap_or_default();
    let Some(abstract_text) = b.abstract_text else {
        return Err(CorpusError::TruncatedDocument { doc_id: b.id, line: b.line, detail: "missing abstract line" });
    };
    let mut text = title.clone();
    if !abstract_text.is_empty() {
        text.push(opts.separator);
        text.push_str(&abstract_text);
    }
    // byte offset of every char position, plus one past the end
    let char_to_byte: Vec<usize> = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len())).collect();

    let mut mentions = Vec::new();
    for (lineno, line) in b.annotations {
        let fields: Vec<&str> = line.split('\t').collect();
        let offsets = match fields.as_slice() {
            [_, s, e, _, _, ..] => s.parse::<usize>().ok().zip(e.parse::<usize>().ok()),
            _ => None,
        };
        let Some((cs, ce)) = offsets else {
            // four-field relation lines carry no span
            let is_relation = fields.len() == 4 && fields[1].chars().all(|c| c.is_ascii_alphabetic());
            if !is_relation {
                issues.push(Issue {
                    line: lineno,
                    doc_id: Some(b.id.clone()),
                    kind: IssueKind::MalformedLine { content: line.clone() },
                });
            }
            continue;
        };
        if cs >= ce || ce >= char_to_byte.len() {
            issues.push(Issue {
                line: lineno,
                doc_id: Some(b.id.clone()),
                kind: IssueKind::SpanOutOfBounds { start: cs, end: ce },
            });
            continue;
        }
        let (start, end) = (char_to_byte[cs], char_to_byte[ce]);
        let surface = fields[3];
        if &text[start..end] != surface {
            issues.push(Issue {
                line: lineno,
                doc_id: Some(b.id.clone()),
                kind: IssueKind::SurfaceMismatch {
                    start: cs,
                    end: ce,
                    expected: surface.to_string(),
                    found: text[start..end].to_string(),
                },
            });
            continue;
        }
        let cuis = fields.get(5).map(|c| c.split('|').map(str::to_string).collect()).unwrap_or_default();
        mentions.push(Mention::new(surface, start, end, cuis, fields[4]));
    }
    Document::new(b.id, text, Some(title.len()), mentions, opts.tokenizer)
}

/// Writes a corpus back in PubTator format. Documents without a title are
/// written with the whole text as title and an empty abstract.
pub fn write_pubtator(corpus: &Corpus, separator: char) -> Result<String, CorpusError> {
    let mut out = String::new();
    for d in &corpus.documents {
        if d.text.contains('\n') {
            return Err(CorpusError::Syntax {
                line: 0,
                message: format!("document {} contains a newline and cannot be written as PubTator", d.id),
            });
        }
        let t = d.title_len.unwrap_or(d.text.len()).min(d.text.len());
        let title = &d.text[..t];
        let abstract_text = if t < d.text.len() { &d.text[t + separator.len_utf8()..] } else { "" };
        out.push_str(&format!("{}|t|{}\n{}|a|{}\n", d.id, title, d.id, abstract_text));
        for m in &d.mentions {
            let cs = d.text[..m.start].chars().count();
            let ce = cs + m.surface.chars().count();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                d.id,
                cs,
                ce,
                m.surface,
                m.entity_type,
                m.cuis.join("|")
            ));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Parsed {
        parse_pubtator(s.as_bytes(), &PubtatorOptions::new(SplitRole::Test)).unwrap()
    }

    const SAMPLE: &str = "\
10021369|t|Identification of APC2, a homologue of the adenomatous polyposis coli tumour suppressor.
10021369|a|The adenomatous polyposis coli (APC) tumour-suppressor protein controls the Wnt signalling pathway.
10021369\t43\t69\tadenomatous polyposis coli\tModifier\tD011125
10021369\t93\t119\tadenomatous polyposis coli\tModifier\tD011125
10021369\t121\t124\tAPC\tModifier\tD011125|D000069
10021369\tCID\tD008750\tD000069

";

    #[test]
    fn single_record() {
        let p = parse("d1|t|COVID-19 is bad.\nd1|a|\nd1\t0\t8\tCOVID-19\tDisease\t-1\n");
        assert!(p.issues.is_empty());
        assert_eq!(p.corpus.documents.len(), 1);
        let m = &p.corpus.documents[0].mentions[0];
        assert_eq!(m.surface, "COVID-19");
        assert_eq!(m.cuis, vec!["-1"]);
        assert!(m.is_unknown_concept());
    }

    #[test]
    fn ncbi_style_block() {
        let p = parse(SAMPLE);
        assert!(p.issues.is_empty(), "{:?}", p.issues);
        let d = &p.corpus.documents[0];
        assert_eq!(d.mentions.len(), 3);
        assert_eq!(d.mentions[2].cuis, vec!["D011125", "D000069"]);
        assert_eq!(d.title_len, Some(88));
        assert!(d.mentions.iter().all(|m| !m.misaligned));
        p.corpus.validate().unwrap();
    }

    #[test]
    fn mismatch_is_recorded_and_document_kept() {
        let p = parse("d1|t|COVID-19 is bad.\nd1|a|x\nd1\t0\t5\tCOVID-19\tDisease\t-1\nd1\t0\t99\tCOVID\tDisease\t-1\nd1\tjunk\n");
        assert_eq!(p.corpus.documents.len(), 1);
        assert!(p.corpus.documents[0].mentions.is_empty());
        assert_eq!(p.issues.len(), 3);
        assert!(matches!(p.issues[0].kind, IssueKind::SurfaceMismatch { .. }));
        assert_eq!(p.issues[0].doc_id.as_deref(), Some("d1"));
        assert!(matches!(p.issues[1].kind, IssueKind::SpanOutOfBounds { .. }));
        assert!(matches!(p.issues[2].kind, IssueKind::MalformedLine { .. }));
    }

    #[test]
    fn truncated_document_is_an_error() {
        let r = parse_pubtator("d1|t|Title only\n\n".as_bytes(), &PubtatorOptions::new(SplitRole::Test));
        assert!(matches!(r, Err(CorpusError::TruncatedDocument { .. })));
        let r = parse_pubtator("d1|a|Abstract only\n".as_bytes(), &PubtatorOptions::new(SplitRole::Test));
        assert!(matches!(r, Err(CorpusError::TruncatedDocument { .. })));
    }

    #[test]
    fn character_offsets_with_multibyte_text() {
        let p = parse("d1|t|Sjögren syndrome\nd1|a|Sjögren syndrome again.\nd1\t17\t33\tSjögren syndrome\tDisease\tD012859\n");
        assert!(p.issues.is_empty(), "{:?}", p.issues);
        let m = &p.corpus.documents[0].mentions[0];
        assert_eq!((m.start, m.end), (18, 35));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let p = parse(SAMPLE);
        let again = parse(&write_pubtator(&p.corpus, ' ').unwrap());
        assert_eq!(again.corpus, p.corpus);
        let p = parse("d1|t|Sjögren syndrome\nd1|a|\nd1\t0\t16\tSjögren syndrome\tDisease\tD012859\n");
        let again = parse(&write_pubtator(&p.corpus, ' ').unwrap());
        assert_eq!(again.corpus, p.corpus);
    }
}
