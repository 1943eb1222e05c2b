//! Test-only helpers: random mini-corpora and an independent re-derivation
//! of the partition rules that never touches `TrainSets`.

#![allow(dead_code)]

use nersplit::corpus::{Corpus, Document, Mention, SplitRole, TokenizerMode};
use nersplit::partition::Split;
use rand::seq::SliceRandom;
use rand::Rng;

const SURFACES: &[&str] = &[
    "cancer", "Cancer", "CANCER.", "breast cancer", "breast-cancer", "Wilms' tumor", "wilms tumor", "tumor",
    "APC", "A.P.C.", "fever", "ataxia - telangiectasia", "ataxia telangiectasia", "(", "B-cell lymphoma",
];
const CUIS: &[&str] = &["D1", "D2", "D3", "D4", "D5", "-1"];
const TYPES: &[&str] = &["Disease", "Chemical"];

fn random_mention<R: Rng>(rng: &mut R, multi_type: bool) -> (String, Vec<String>, String) {
    let surface = SURFACES.choose(rng).unwrap().to_string();
    let n = rng.gen_range(1..=3);
    let cuis = (0..n).map(|_| CUIS.choose(rng).unwrap().to_string()).collect();
    let ty = if multi_type { TYPES.choose(rng).unwrap() } else { TYPES[0] };
    (surface, cuis, ty.to_string())
}

/// A corpus of one-mention documents ("<surface> ." each).
pub fn mini_corpus<R: Rng>(rng: &mut R, role: SplitRole, n: usize, multi_type: bool) -> Corpus {
    let docs = (0..n.max(1))
        .map(|i| {
            let (surface, cuis, ty) = random_mention(rng, multi_type);
            let text = format!("{surface} .");
            let m = Mention::new(surface.clone(), 0, surface.len(), cuis, ty);
            let mentions = if i < n { vec![m] } else { vec![] };
            Document::new(format!("d{i}"), text, None, mentions, TokenizerMode::PunctSplit).unwrap()
        })
        .collect();
    Corpus::new(role, TokenizerMode::PunctSplit, docs).unwrap()
}

fn oracle_key(s: &str) -> String {
    const PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
    let mut words = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if PUNCT.contains(c) {
            continue;
        }
        if c.is_whitespace() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
        } else {
            cur.extend(c.to_lowercase());
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words.join(" ")
}

/// Decides a split by scanning every training mention directly.
pub fn oracle_split(m: &Mention, train: &Corpus, multi_type: bool) -> Split {
    if m.cuis == ["-1"] {
        return Split::Con;
    }
    let key = oracle_key(&m.surface);
    let mut surface_seen = false;
    let mut cui_seen = false;
    for d in &train.documents {
        for t in &d.mentions {
            if !key.is_empty() && oracle_key(&t.surface) == key {
                surface_seen = true;
            }
            for c in &m.cuis {
                if c != "-1" && t.cuis.contains(c) {
                    cui_seen = true;
                }
            }
        }
    }
    match (surface_seen, cui_seen) {
        (true, true) => Split::Mem,
        (true, false) if multi_type => Split::Con,
        (true, false) => Split::Mem,
        (false, true) => Split::Syn,
        (false, false) => Split::Con,
    }
}
