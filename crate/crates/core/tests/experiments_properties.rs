use std::collections::BTreeSet;

use nersplit::corpus::{Corpus, Document, Mention, SplitRole, TokenizerMode};
use nersplit::experiments::{abbreviation_types, inject_pattern, replace_surface, DEFAULT_TEMPLATE};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &["the", "COVID-19", "virus", "EA-2", "APC", "DM1", "fever", "and", "HNPCC", "risk", "of", "cancer"];

/// Random documents of space-separated words, with some words (and some
/// adjacent pairs) annotated.
fn random_corpus<R: Rng>(rng: &mut R) -> Corpus {
    let n_docs = rng.gen_range(1..5);
    let docs = (0..n_docs)
        .map(|i| {
            let mut text = String::new();
            let mut mentions = Vec::new();
            let n = rng.gen_range(3..15);
            let mut j = 0;
            while j < n {
                if !text.is_empty() {
                    text.push(' ');
                }
                let start = text.len();
                let span = if rng.gen_bool(0.2) && j + 1 < n { 2 } else { 1 };
                let words: Vec<&str> = (0..span).map(|_| *WORDS.choose(rng).unwrap()).collect();
                text.push_str(&words.join(" "));
                if rng.gen_bool(0.4) {
                    let cui = format!("D{}", rng.gen_range(0..5));
                    mentions.push(Mention::new(&text[start..], start, text.len(), vec![cui], "Disease"));
                }
                if rng.gen_bool(0.2) {
                    text.push_str(" .");
                }
                j += span;
            }
            Document::new(format!("d{i}"), text, None, mentions, TokenizerMode::PunctSplit).unwrap()
        })
        .collect();
    Corpus::new(SplitRole::Train, TokenizerMode::PunctSplit, docs).unwrap()
}

#[test]
fn replace_surface_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut applied = 0;
    for trial in 0..300 {
        let c = random_corpus(&mut rng);
        let old = *WORDS.choose(&mut rng).unwrap();
        let new = ["COVID", "XQ", "zeta-9", "long replacement"][trial % 4];
        // invertibility is only promised when `new` is absent from the original
        if c.documents.iter().any(|d| d.text.contains(new)) {
            continue;
        }
        let (out, log) = replace_surface(&c, old, new).unwrap();
        out.validate().unwrap();
        let (back, back_log) = replace_surface(&out, new, old).unwrap();
        assert_eq!(back_log.occurrences, log.occurrences, "trial {trial}");
        assert_eq!(back, c, "trial {trial}: {old} -> {new}");
        if log.occurrences > 0 {
            applied += 1;
            // every mention keeps its CUIs and type, and no offset drifts
            for (a, b) in c.documents.iter().zip(&out.documents) {
                assert_eq!(a.mentions.len(), b.mentions.len());
                for (x, y) in a.mentions.iter().zip(&b.mentions) {
                    assert_eq!((&x.cuis, &x.entity_type), (&y.cuis, &y.entity_type));
                    assert_eq!(&b.text[y.start..y.end], y.surface);
                }
            }
        }
    }
    assert!(applied >= 100, "only {applied} trials changed anything");
}

#[test]
fn inject_pattern_changes_exactly_k_types() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut checked = 0;
    while checked < 150 {
        let c = random_corpus(&mut rng);
        let available = abbreviation_types(&c).len();
        if available == 0 {
            continue;
        }
        let k = rng.gen_range(0..=available);
        let seed = rng.gen();
        let (out, log) = inject_pattern(&c, k, DEFAULT_TEMPLATE, seed).unwrap();
        out.validate().unwrap();
        let before: BTreeSet<String> = c.mentions().map(|(_, m)| m.surface.clone()).collect();
        let after: BTreeSet<String> = out.mentions().map(|(_, m)| m.surface.clone()).collect();
        let removed: BTreeSet<String> = before.difference(&after).cloned().collect();
        let added: BTreeSet<String> = after.difference(&before).cloned().collect();
        assert_eq!(removed.len(), k);
        assert_eq!(added.len(), k);
        assert_eq!(removed, log.replacements.keys().cloned().collect());
        assert_eq!(added, log.replacements.values().cloned().collect());
        // text outside replaced mentions is unchanged: undo by splicing back
        for (a, b) in c.documents.iter().zip(&out.documents) {
            let mut restored = b.text.clone();
            for m in b.mentions.iter().rev() {
                if let Some((old, _)) = log.replacements.iter().find(|(_, n)| **n == m.surface) {
                    restored.replace_range(m.start..m.end, old);
                }
            }
            assert_eq!(restored, a.text);
        }
        assert_eq!(inject_pattern(&c, k, DEFAULT_TEMPLATE, seed).unwrap().0, out, "seeded replay");
        checked += 1;
    }
}
