//! Benchmark toolkit for probing what named-entity recognizers memorize and
//! how they generalize to synonyms and unseen concepts.
//!
//! * [`corpus`]: corpus model, PubTator/CoNLL/JSON-lines I/O, tokenization
//!   and BIO projection.
//! * [`partition`]: MEM/SYN/CON assignment of evaluation mentions.
//! * [`dictionary`]: longest-match dictionary baselines.
//! * [`bias`]: count-based biased model, temperature smoothing and the bias
//!   product loss.
//! * [`tagger`]: a hashed-feature linear softmax tagger trainable with or
//!   without the bias product.
//! * [`eval`]: entity-level metrics, per-split recall, relaxed and subset
//!   recall.
//! * [`experiments`]: corpus perturbations and a synthetic biased-corpus
//!   generator.

pub mod bias;
pub mod corpus;
pub mod dictionary;
pub mod eval;
pub mod experiments;
pub mod partition;
pub mod tagger;

pub use corpus::{Corpus, Document, Mention, Sentence, SplitRole, Token, TokenizerMode};

pub use bias::{BiasTable, TagDistribution};
pub use dictionary::EntityDictionary;
pub use eval::{EvalOptions, EvalReport, Prediction, SubsetPredicate};
pub use experiments::{Perturbation, PerturbationLog};
pub use partition::{Split, SplitReport, TrainSets};
pub use tagger::{TaggerConfig, TaggerModel};
