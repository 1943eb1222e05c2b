//! Per-token linear softmax tagger over hashed sparse features.
//!
//! The model is small and convex so that the effect of debiased training
//! can be measured reproducibly on a laptop. Training minimizes the mean
//! per-token negative log-likelihood by mini-batch SGD, either of the
//! tagger's own distribution or, with a [`BiasTable`], of the bias product
//! (see [`crate::bias::debiased_nll`]). Prediction always uses the tagger's
//! distribution alone.
//!
//! Determinism: sentence order is shuffled by a ChaCha8 stream seeded from
//! the config, and each mini-batch gradient is accumulated over fixed-size
//! sentence chunks that are reduced in chunk order, so results do not depend
//! on the number of worker threads.

use std::hash::Hasher;

use fnv::{FnvHashMap, FnvHasher};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bias::{argmax, debiased_nll, softmax, BiasTable, TagDistribution};
use crate::corpus::{
    from_bio, is_punct, repair_tags, to_bio, BioError, Corpus, Document, Mention, MisalignedPolicy, Sentence, Tag,
    TagScheme, TokenizerMode,
};
use crate::eval::Prediction;

pub const CHECKPOINT_FORMAT: &str = "nersplit-tagger";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Sentences per gradient chunk. Fixed so that the floating-point reduction
/// order is independent of the thread pool.
const CHUNK: usize = 16;

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("training corpus has no tokens")]
    EmptyCorpus,
    #[error("debiased training requested but no bias table given")]
    MissingBias,
    #[error("bias table has {table} classes but the tag scheme has {scheme}")]
    BiasClassMismatch { table: usize, scheme: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training diverged in epoch {epoch}; the returned checkpoint holds the last finite weights")]
    Diverged { epoch: usize, checkpoint: Box<TaggerModel> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Bio(#[from] BioError),
    #[error(transparent)]
    Bias(#[from] crate::bias::BiasError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    /// Feature space has `2^hash_bits` rows.
    pub hash_bits: u32,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Sentences per mini-batch.
    pub batch_size: usize,
    /// L2 penalty, applied lazily to the feature rows active in a batch.
    pub l2: f64,
    pub seed: u64,
    pub debias: bool,
    /// Temperature applied to the bias table when `debias` is on.
    pub temperature: Option<f64>,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            hash_bits: 18,
            learning_rate: 0.5,
            epochs: 10,
            batch_size: 16,
            l2: 1e-6,
            seed: 13,
            debias: false,
            temperature: None,
        }
    }
}

impl TaggerConfig {
    fn validate(&self) -> Result<(), TaggerError> {
        let bad = |m: &str| Err(TaggerError::Config(m.to_string()));
        if !(1..=28).contains(&self.hash_bits) {
            return bad("hash_bits must be in 1..=28");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if let Some(t) = self.temperature {
            if !(t.is_finite() && t > 0.0) {
                return bad("temperature must be positive");
            }
        }
        Ok(())
    }
}

fn hash_feature(name: &str, bits: u32) -> u32 {
    let mut h = FnvHasher::default();
    h.write(name.as_bytes());
    (h.finish() & ((1u64 << bits) - 1)) as u32
}

/// Word shape with runs collapsed: `COVID-19` → `X-d`, `Wilms` → `Xx`.
pub fn word_shape(word: &str) -> String {
    let mut out = String::new();
    for c in word.chars() {
        let s = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        };
        if !out.ends_with(s) {
            out.push(s);
        }
    }
    out
}

/// Named features of token `i` in `words`.
pub fn feature_names(words: &[&str], i: usize) -> Vec<String> {
    let w = words[i];
    let chars: Vec<char> = w.chars().collect();
    let mut f = vec!["bias".to_string(), format!("w={w}"), format!("lw={}", w.to_lowercase())];
    for n in [3, 4] {
        if chars.len() >= n {
            f.push(format!("p{n}={}", chars[..n].iter().collect::<String>()));
            f.push(format!("s{n}={}", chars[chars.len() - n..].iter().collect::<String>()));
        }
    }
    f.push(format!("shape={}", word_shape(w)));
    if !w.is_empty() && w.chars().all(is_punct) {
        f.push("punct".to_string());
    }
    for off in [-2i64, -1, 1, 2] {
        let j = i as i64 + off;
        let ctx = if j < 0 {
            "<s>"
        } else if j as usize >= words.len() {
            "</s>"
        } else {
            words[j as usize]
        };
        f.push(format!("w{off:+}={ctx}"));
    }
    f
}

/// Hashed feature indices for every token of a sentence. Colliding names
/// keep their multiplicity.
pub fn sentence_features(sentence: &Sentence, hash_bits: u32) -> Vec<Vec<u32>> {
    let words: Vec<&str> = sentence.tokens.iter().map(|t| t.text.as_str()).collect();
    (0..words.len())
        .map(|i| feature_names(&words, i).iter().map(|n| hash_feature(n, hash_bits)).collect())
        .collect()
}

/// A sentence prepared for training.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub features: Vec<Vec<u32>>,
    pub gold: Vec<usize>,
    pub bias: Option<Vec<TagDistribution>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggerModel {
    pub config: TaggerConfig,
    pub scheme: TagScheme,
    pub tokenizer: TokenizerMode,
    /// Row-major `2^hash_bits × K`.
    weights: Vec<f64>,
    /// Mean training loss per completed epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    hash: String,
    config: TaggerConfig,
    types: Vec<String>,
    tokenizer: TokenizerMode,
    epoch_losses: Vec<f64>,
    /// Non-zero rows as `(feature, weights)`, ascending by feature.
    rows: Vec<(u32, Vec<f64>)>,
}

/// Sparse gradient: feature row → per-class gradient.
pub type SparseGrad = FnvHashMap<u32, Vec<f64>>;

impl TaggerModel {
    pub fn new(config: TaggerConfig, scheme: TagScheme, tokenizer: TokenizerMode) -> Result<Self, TaggerError> {
        config.validate()?;
        let k = scheme.num_classes();
        Ok(TaggerModel { weights: vec![0.0; (1usize << config.hash_bits) * k], config, scheme, tokenizer, epoch_losses: vec![] })
    }

    pub fn num_classes(&self) -> usize {
        self.scheme.num_classes()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn logits(&self, feats: &[u32]) -> Vec<f64> {
        let k = self.num_classes();
        let mut z = vec![0.0; k];
        for &f in feats {
            let row = &self.weights[f as usize * k..(f as usize + 1) * k];
            for (a, w) in z.iter_mut().zip(row) {
                *a += w;
            }
        }
        z
    }

    /// Prepares a sentence for training, attaching bias distributions when
    /// a table is given.
    pub fn encode(&self, doc: &Document, sentence: &Sentence, bias: Option<&BiasTable>) -> Result<Encoded, TaggerError> {
        let proj = to_bio(doc, sentence, MisalignedPolicy::Cover)?;
        let gold = proj.tags.iter().map(|t| self.scheme.index(t)).collect::<Result<Vec<_>, _>>()?;
        let bias = bias.map(|b| sentence.tokens.iter().map(|t| b.distribution(&t.text)).collect());
        Ok(Encoded { features: sentence_features(sentence, self.config.hash_bits), gold, bias })
    }

    /// Summed per-token loss, token count and summed gradient for a chunk
    /// of sentences, without regularization.
    fn chunk_gradient(&self, chunk: &[&Encoded]) -> (f64, usize, SparseGrad) {
        let mut loss = 0.0;
        let mut n = 0;
        let mut grad = SparseGrad::default();
        for s in chunk {
            for (i, feats) in s.features.iter().enumerate() {
                let z = self.logits(feats);
                let lg = debiased_nll(&z, s.bias.as_ref().map(|b| &b[i]), s.gold[i]);
                loss += lg.loss;
                n += 1;
                for &f in feats {
                    let row = grad.entry(f).or_insert_with(|| vec![0.0; lg.grad.len()]);
                    for (a, g) in row.iter_mut().zip(&lg.grad) {
                        *a += g;
                    }
                }
            }
        }
        (loss, n, grad)
    }

    /// Mean per-token loss of a mini-batch plus `l2/2 ‖W_f‖²` over the
    /// active rows, and its gradient with respect to those rows.
    pub fn batch_loss_and_grad(&self, batch: &[&Encoded]) -> (f64, usize, SparseGrad) {
        let parts: Vec<(f64, usize, SparseGrad)> = batch.par_chunks(CHUNK).map(|c| self.chunk_gradient(c)).collect();
        let mut loss = 0.0;
        let mut n = 0;
        let mut grad = SparseGrad::default();
        for (l, c, g) in parts {
            loss += l;
            n += c;
            for (f, row) in g {
                match grad.get_mut(&f) {
                    Some(acc) => acc.iter_mut().zip(&row).for_each(|(a, g)| *a += g),
                    None => {
                        grad.insert(f, row);
                    }
                }
            }
        }
        if n == 0 {
            return (0.0, 0, grad);
        }
        let k = self.num_classes();
        let scale = 1.0 / n as f64;
        let mut penalty = 0.0;
        for (&f, row) in grad.iter_mut() {
            let w = &self.weights[f as usize * k..(f as usize + 1) * k];
            for (g, w) in row.iter_mut().zip(w) {
                *g = *g * scale + self.config.l2 * w;
                penalty += w * w;
            }
        }
        (loss * scale + 0.5 * self.config.l2 * penalty, n, grad)
    }

    fn apply(&mut self, grad: &SparseGrad) {
        let k = self.num_classes();
        let lr = self.config.learning_rate;
        for (&f, row) in grad {
            let w = &mut self.weights[f as usize * k..(f as usize + 1) * k];
            for (w, g) in w.iter_mut().zip(row) {
                *w -= lr * g;
            }
        }
    }

    /// Per-token class distributions and repaired tags for one sentence.
    pub fn tag_sentence(&self, sentence: &Sentence) -> (Vec<Tag>, Vec<TagDistribution>) {
        let dists: Vec<TagDistribution> = sentence_features(sentence, self.config.hash_bits)
            .iter()
            .map(|f| TagDistribution::from_logits(&self.logits(f)))
            .collect();
        let mut tags: Vec<Tag> = dists.iter().map(|d| self.scheme.tag(d.argmax())).collect();
        repair_tags(&mut tags);
        (tags, dists)
    }

    /// Mentions predicted in one sentence.
    pub fn predict_sentence(&self, doc: &Document, sentence: &Sentence) -> Result<Vec<Mention>, TaggerError> {
        let (tags, _) = self.tag_sentence(sentence);
        Ok(from_bio(&doc.text, &sentence.tokens, &tags, true)?)
    }

    pub fn predict_document(&self, doc: &Document) -> Result<Vec<Prediction>, TaggerError> {
        let mut out = Vec::new();
        for s in &doc.sentences {
            out.extend(self.predict_sentence(doc, s)?.into_iter().map(|m| Prediction::from_mention(&doc.id, &m)));
        }
        Ok(out)
    }

    /// Predictions for every document, in corpus order.
    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<Prediction>, TaggerError> {
        let per_doc: Vec<Vec<Prediction>> =
            corpus.documents.par_iter().map(|d| self.predict_document(d)).collect::<Result<_, _>>()?;
        Ok(per_doc.into_iter().flatten().collect())
    }

    /// Fraction of tokens whose argmax tag (before repair) equals the gold
    /// projection.
    pub fn token_accuracy(&self, corpus: &Corpus) -> Result<f64, TaggerError> {
        let mut hit = 0usize;
        let mut total = 0usize;
        for d in &corpus.documents {
            for s in &d.sentences {
                let proj = to_bio(d, s, MisalignedPolicy::Cover)?;
                for (f, g) in sentence_features(s, self.config.hash_bits).iter().zip(&proj.tags) {
                    total += 1;
                    if argmax(&softmax(&self.logits(f))) == self.scheme.index(g)? {
                        hit += 1;
                    }
                }
            }
        }
        Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
    }

    pub fn to_json(&self) -> String {
        let k = self.num_classes();
        let rows = self
            .weights
            .chunks(k)
            .enumerate()
            .filter(|(_, r)| r.iter().any(|w| *w != 0.0))
            .map(|(f, r)| (f as u32, r.to_vec()))
            .collect();
        let cp = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            hash: "fnv1a64".into(),
            config: self.config.clone(),
            types: self.scheme.types().to_vec(),
            tokenizer: self.tokenizer,
            epoch_losses: self.epoch_losses.clone(),
            rows,
        };
        serde_json::to_string(&cp).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TaggerError> {
        let cp: Checkpoint = serde_json::from_str(s).map_err(|e| TaggerError::Checkpoint(e.to_string()))?;
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION || cp.hash != "fnv1a64" {
            return Err(TaggerError::Checkpoint(format!(
                "unsupported checkpoint {} v{} ({})",
                cp.format, cp.version, cp.hash
            )));
        }
        let mut model = TaggerModel::new(cp.config, TagScheme::new(cp.types), cp.tokenizer)?;
        model.epoch_losses = cp.epoch_losses;
        let k = model.num_classes();
        for (f, row) in cp.rows {
            if row.len() != k || (f as usize) >= (1usize << model.config.hash_bits) {
                return Err(TaggerError::Checkpoint(format!("bad weight row {f}")));
            }
            if row.iter().any(|w| !w.is_finite()) {
                return Err(TaggerError::Checkpoint(format!("non-finite weight in row {f}")));
            }
            model.weights[f as usize * k..(f as usize + 1) * k].copy_from_slice(&row);
        }
        Ok(model)
    }
}

/// Trains a tagger on `corpus`. With `config.debias` the loss is the
/// debiased NLL against `bias` (smoothed with `config.temperature`).
pub fn train(corpus: &Corpus, bias: Option<&BiasTable>, config: &TaggerConfig) -> Result<TaggerModel, TaggerError> {
    let scheme = TagScheme::new(corpus.entity_types.iter().cloned());
    let mut model = TaggerModel::new(config.clone(), scheme, corpus.tokenizer)?;
    let bias = if config.debias {
        let table = bias.ok_or(TaggerError::MissingBias)?;
        if table.num_classes() != model.num_classes() {
            return Err(TaggerError::BiasClassMismatch { table: table.num_classes(), scheme: model.num_classes() });
        }
        Some(table.smooth(config.temperature)?)
    } else {
        None
    };

    let mut data = Vec::new();
    for d in &corpus.documents {
        for s in &d.sentences {
            if !s.tokens.is_empty() {
                data.push(model.encode(d, s, bias.as_ref())?);
            }
        }
    }
    if data.is_empty() {
        return Err(TaggerError::EmptyCorpus);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut last_good = model.clone();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut tokens = 0usize;
        for batch in order.chunks(config.batch_size) {
            let batch: Vec<&Encoded> = batch.iter().map(|&i| &data[i]).collect();
            let (loss, n, grad) = model.batch_loss_and_grad(&batch);
            if !loss.is_finite() || grad.values().flatten().any(|g| !g.is_finite()) {
                return Err(TaggerError::Diverged { epoch, checkpoint: Box::new(last_good) });
            }
            loss_sum += loss * n as f64;
            tokens += n;
            model.apply(&grad);
        }
        if model.weights.iter().any(|w| !w.is_finite()) {
            return Err(TaggerError::Diverged { epoch, checkpoint: Box::new(last_good) });
        }
        let mean = loss_sum / tokens as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        model.epoch_losses.push(mean);
        last_good = model.clone();
    }
    Ok(model)
}
