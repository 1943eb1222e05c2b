//! Benchmark fixtures shared by the criterion benches.

use nersplit::experiments::{make_biased_corpus, BiasedCorpus, BiasedCorpusConfig};

/// A synthetic corpus roughly `scale` times the size of the default one.
pub fn fixture(scale: usize) -> BiasedCorpus {
    let base = BiasedCorpusConfig::default();
    let config = BiasedCorpusConfig {
        train_docs: base.train_docs * scale,
        dev_docs: base.dev_docs * scale,
        test_docs: base.test_docs * scale,
        ..base
    };
    make_biased_corpus(&config, 0).expect("default generator settings are feasible")
}
