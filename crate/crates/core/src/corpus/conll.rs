//! Two/three-column CoNLL: `token tag [cui]` per line, blank lines between
//! sentences, optional `-DOCSTART-` lines between documents. Document text is
//! rebuilt by joining tokens with a space and sentences with a newline.

use std::io::BufRead;

use super::bio::{from_bio, Tag};
use super::{Corpus, CorpusError, Document, Parsed, SplitRole, TokenizerMode};

#[derive(Clone, Copy, Debug)]
pub struct ConllOptions {
    pub role: SplitRole,
    /// Treat an `I-t` that does not continue a `t` entity as `B-t` instead
    /// of failing.
    pub repair: bool,
}

impl ConllOptions {
    pub fn new(role: SplitRole) -> Self {
        ConllOptions { role, repair: true }
    }
}

#[derive(Default)]
struct PendingDoc {
    text: String,
    sentences: Vec<(usize, usize, Vec<(usize, usize)>)>,
    mentions: Vec<super::Mention>,
}

pub fn parse_conll<R: BufRead>(reader: R, opts: &ConllOptions) -> Result<Parsed, CorpusError> {
    let mut docs: Vec<Document> = Vec::new();
    let mut doc = PendingDoc::default();
    // (token, tag, cui, line)
    let mut sent: Vec<(String, Tag, Option<String>, usize)> = Vec::new();

    let flush_sentence = |doc: &mut PendingDoc, sent: &mut Vec<(String, Tag, Option<String>, usize)>| -> Result<(), CorpusError> {
        if sent.is_empty() {
            return Ok(());
        }
        if !doc.text.is_empty() {
            doc.text.push('\n');
        }
        let start = doc.text.len();
        let mut spans = Vec::with_capacity(sent.len());
        for (i, (tok, _, _, _)) in sent.iter().enumerate() {
            if i > 0 {
                doc.text.push(' ');
            }
            let s = doc.text.len();
            doc.text.push_str(tok);
            spans.push((s, doc.text.len()));
        }
        let end = doc.text.len();
        let tokens: Vec<super::Token> = spans
            .iter()
            .map(|&(s, e)| super::Token { text: doc.text[s..e].to_string(), start: s, end: e })
            .collect();
        let tags: Vec<Tag> = sent.iter().map(|(_, t, _, _)| t.clone()).collect();
        let mut decoded = from_bio(&doc.text, &tokens, &tags, opts.repair).map_err(|e| CorpusError::Syntax {
            line: sent[0].3,
            message: format!("sentence starting here: {e}"),
        })?;
        for m in &mut decoded {
            let first = spans.iter().position(|&(s, _)| s == m.start).unwrap();
            if let Some(cui) = &sent[first].2 {
                m.cuis = cui.split('|').map(str::to_string).collect();
            }
        }
        doc.mentions.extend(decoded);
        doc.sentences.push((start, end, spans));
        sent.clear();
        Ok(())
    };

    let flush_doc = |doc: &mut PendingDoc, docs: &mut Vec<Document>| -> Result<(), CorpusError> {
        if doc.sentences.is_empty() {
            return Ok(());
        }
        let d = std::mem::take(doc);
        let id = format!("doc{}", docs.len());
        docs.push(Document::with_tokens(id, d.text, None, d.sentences, d.mentions)?);
        Ok(())
    };

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush_sentence(&mut doc, &mut sent)?;
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols[0] == "-DOCSTART-" {
            flush_sentence(&mut doc, &mut sent)?;
            flush_doc(&mut doc, &mut docs)?;
            continue;
        }
        if !(2..=3).contains(&cols.len()) {
            return Err(CorpusError::Syntax { line: lineno, message: format!("expected 2 or 3 columns, got {}", cols.len()) });
        }
        let tag: Tag = cols[1]
            .parse()
            .map_err(|e| CorpusError::Syntax { line: lineno, message: format!("{e}") })?;
        let cui = cols.get(2).map(|c| c.to_string());
        sent.push((cols[0].to_string(), tag, cui, lineno));
    }
    flush_sentence(&mut doc, &mut sent)?;
    flush_doc(&mut doc, &mut docs)?;
    let corpus = Corpus::new(opts.role, TokenizerMode::Whitespace, docs)?;
    Ok(Parsed { corpus, issues: Vec::new() })
}
