//! Count-based biased model and the bias product.
//!
//! The biased model predicts, for a word, the empirical distribution of the
//! tags that word received in the training set. During debiased training the
//! tagger's distribution `p` is combined with the biased distribution `b` as
//! `softmax(log p + log b)` and the loss is the negative log-likelihood of
//! that combination; `b` is held fixed. At inference only `p` is used.
//!
//! Exact zeros in `b` are floored at [`DEFAULT_EPSILON`] before any log.

use std::collections::BTreeMap;
use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{to_bio, Corpus, MisalignedPolicy, TagScheme};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum BiasError {
    #[error("training corpus has no tokens")]
    EmptyCorpus,
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("probability vector is invalid: {0}")]
    BadDistribution(String),
    #[error("expected {expected} classes, got {got}")]
    ClassMismatch { expected: usize, got: usize },
    #[error("bias table line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Bio(#[from] crate::corpus::BioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A probability vector over the `K` tag classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagDistribution(Vec<f64>);

impl TagDistribution {
    /// Accepts a vector of finite non-negative entries summing to 1 within
    /// 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self, BiasError> {
        if probs.is_empty() {
            return Err(BiasError::BadDistribution("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(BiasError::BadDistribution(format!("{probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(BiasError::BadDistribution(format!("sums to {sum}")));
        }
        Ok(TagDistribution(probs))
    }

    pub fn uniform(k: usize) -> Self {
        TagDistribution(vec![1.0 / k as f64; k])
    }

    /// Softmax of `logits`.
    pub fn from_logits(logits: &[f64]) -> Self {
        TagDistribution(softmax(logits))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}

/// `softmax(log_p + log_b)`. Adding a constant to either argument leaves the
/// result unchanged.
pub fn combine_log(log_p: &[f64], log_b: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = log_p.iter().zip(log_b).map(|(a, b)| a + b).collect();
    softmax(&s)
}

fn floored_logs(p: &[f64], epsilon: f64) -> Vec<f64> {
    p.iter().map(|x| x.max(epsilon).ln()).collect()
}

/// Bias product of two distributions, each floored at `epsilon` first.
pub fn bias_product_with(p: &TagDistribution, b: &TagDistribution, epsilon: f64) -> Result<TagDistribution, BiasError> {
    if p.len() != b.len() {
        return Err(BiasError::ClassMismatch { expected: p.len(), got: b.len() });
    }
    Ok(TagDistribution(combine_log(&floored_logs(&p.0, epsilon), &floored_logs(&b.0, epsilon))))
}

pub fn bias_product(p: &TagDistribution, b: &TagDistribution) -> Result<TagDistribution, BiasError> {
    bias_product_with(p, b, DEFAULT_EPSILON)
}

/// Loss and its gradient with respect to the tagger's logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Negative log-likelihood of `gold` under `softmax(log softmax(logits) +
/// log b)`, with `b` constant. Since `log softmax(z)` differs from `z` by a
/// constant this is `softmax(z + log b)`, and the gradient is that
/// distribution minus the one-hot gold vector. `bias = None` gives plain
/// cross-entropy.
pub fn debiased_nll(logits: &[f64], bias: Option<&TagDistribution>, gold: usize) -> LossGrad {
    let scores: Vec<f64> = match bias {
        Some(b) => logits.iter().zip(&b.0).map(|(z, p)| z + p.max(DEFAULT_EPSILON).ln()).collect(),
        None => logits.to_vec(),
    };
    let lse = log_sum_exp(&scores);
    let loss = lse - scores[gold];
    let mut grad: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
    grad[gold] -= 1.0;
    LossGrad { loss, grad }
}

/// Floors `b` at `epsilon`, raises it to `1/T` and renormalizes. `None`
/// applies only the floor.
pub fn smooth_distribution(b: &[f64], epsilon: f64, temperature: Option<f64>) -> Vec<f64> {
    let inv_t = temperature.map_or(1.0, |t| 1.0 / t);
    let logs: Vec<f64> = b.iter().map(|x| x.max(epsilon).ln() * inv_t).collect();
    softmax(&logs)
}

/// Per-word tag counts over a training corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasTable {
    classes: usize,
    counts: BTreeMap<String, Vec<u64>>,
    epsilon: f64,
    temperature: Option<f64>,
}

impl BiasTable {
    pub fn new(classes: usize) -> Self {
        BiasTable { classes, counts: BTreeMap::new(), epsilon: DEFAULT_EPSILON, temperature: None }
    }

    /// Counts how often each token text carries each tag class. Words are
    /// keyed by their exact token text.
    pub fn build(train: &Corpus, scheme: &TagScheme) -> Result<Self, BiasError> {
        let k = scheme.num_classes();
        let per_doc: Vec<BTreeMap<String, Vec<u64>>> = train
            .documents
            .par_iter()
            .map(|doc| -> Result<_, BiasError> {
                let mut local: BTreeMap<String, Vec<u64>> = BTreeMap::new();
                for s in &doc.sentences {
                    let proj = to_bio(doc, s, MisalignedPolicy::Cover)?;
                    for (tok, tag) in s.tokens.iter().zip(&proj.tags) {
                        let c = scheme.index(tag)?;
                        local.entry(tok.text.clone()).or_insert_with(|| vec![0; k])[c] += 1;
                    }
                }
                Ok(local)
            })
            .collect::<Result<_, _>>()?;
        let mut table = BiasTable::new(k);
        for local in per_doc {
            for (w, c) in local {
                let row = table.counts.entry(w).or_insert_with(|| vec![0; k]);
                for (a, b) in row.iter_mut().zip(c) {
                    *a += b;
                }
            }
        }
        if table.counts.is_empty() {
            return Err(BiasError::EmptyCorpus);
        }
        Ok(table)
    }

    pub fn add(&mut self, word: &str, class: usize) {
        self.counts.entry(word.to_string()).or_insert_with(|| vec![0; self.classes])[class] += 1;
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn temperature(&self) -> Option<f64> {
        self.temperature
    }

    pub fn counts(&self, word: &str) -> Option<&[u64]> {
        self.counts.get(word).map(Vec::as_slice)
    }

    pub fn total(&self, word: &str) -> u64 {
        self.counts.get(word).map_or(0, |c| c.iter().sum())
    }

    /// Unsmoothed class ratios for `word`; uniform for unseen words.
    pub fn raw(&self, word: &str) -> Vec<f64> {
        match self.counts.get(word) {
            Some(c) => {
                let total: u64 = c.iter().sum();
                c.iter().map(|&x| x as f64 / total as f64).collect()
            }
            None => vec![1.0 / self.classes as f64; self.classes],
        }
    }

    /// The distribution used in training: floored, tempered, renormalized.
    pub fn distribution(&self, word: &str) -> TagDistribution {
        TagDistribution(smooth_distribution(&self.raw(word), self.epsilon, self.temperature))
    }

    /// Same counts with temperature `t` (`None` disables scaling).
    pub fn smooth(&self, t: Option<f64>) -> Result<BiasTable, BiasError> {
        if let Some(t) = t {
            if !(t.is_finite() && t > 0.0) {
                return Err(BiasError::BadTemperature(t));
            }
        }
        Ok(BiasTable { temperature: t, ..self.clone() })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Sorted JSON lines `{"word": ..., "counts": [...], "total": n}`.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            word: &'a str,
            counts: &'a [u64],
            total: u64,
        }
        let mut out = String::new();
        for (w, c) in &self.counts {
            let row = Row { word: w, counts: c, total: c.iter().sum() };
            out.push_str(&serde_json::to_string(&row).expect("bias row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl<R: BufRead>(reader: R, classes: usize) -> Result<Self, BiasError> {
        #[derive(Deserialize)]
        struct Row {
            word: String,
            counts: Vec<u64>,
            total: u64,
        }
        let mut table = BiasTable::new(classes);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| BiasError::Format { line: i + 1, message };
            let row: Row = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            if row.counts.len() != classes {
                return Err(BiasError::ClassMismatch { expected: classes, got: row.counts.len() });
            }
            if row.counts.iter().sum::<u64>() != row.total || row.total == 0 {
                return Err(err(format!("counts of {:?} do not sum to total {}", row.word, row.total)));
            }
            table.counts.insert(row.word, row.counts);
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Mention, SplitRole, TokenizerMode};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn count_ratio() {
        let mut t = BiasTable::new(3);
        for c in [0, 0, 0, 2] {
            t.add("MI", c);
        }
        assert_eq!(t.raw("MI"), vec![0.75, 0.0, 0.25]);
        assert_eq!(t.total("MI"), 4);
        assert!(close(&t.raw("unseen"), &[1.0 / 3.0; 3], 0.0));
        assert!(close(t.distribution("unseen").probs(), &[1.0 / 3.0; 3], 1e-15));
    }

    #[test]
    fn build_from_corpus() {
        let text = "acute encephalopathy and encephalopathy";
        let mentions = vec![
            Mention::new("acute encephalopathy", 0, 20, vec!["D1".into()], "Disease"),
            Mention::new("encephalopathy", 25, 39, vec!["D1".into()], "Disease"),
        ];
        let doc = Document::new("d", text, None, mentions, TokenizerMode::PunctSplit).unwrap();
        let c = Corpus::new(SplitRole::Train, TokenizerMode::PunctSplit, vec![doc]).unwrap();
        let t = BiasTable::build(&c, &TagScheme::new(["Disease"])).unwrap();
        assert_eq!(t.counts("acute"), Some(&[1, 0, 0][..]));
        assert_eq!(t.counts("encephalopathy"), Some(&[1, 1, 0][..]));
        assert_eq!(t.counts("and"), Some(&[0, 0, 1][..]));
    }

    #[test]
    fn floor_without_temperature() {
        let got = smooth_distribution(&[1.0, 0.0, 0.0], 1e-8, None);
        let want = [0.9999999800000004, 9.999999800000004e-9, 9.999999800000004e-9];
        assert!(close(&got, &want, 1e-15), "{got:?}");
    }

    #[test]
    fn temperature_golden() {
        // 50-digit evaluation of max(b, 1e-8)^(1/1.1) / sum
        let want = [0.49999997494604190998, 0.49999997494604190998, 5.0107916180038295243e-8];
        let got = smooth_distribution(&[0.5, 0.5, 0.0], 1e-8, Some(1.1));
        assert!(close(&got, &want, 1e-15), "{got:?}");
    }

    #[test]
    fn uniform_stays_uniform() {
        for t in [None, Some(0.3), Some(1.1), Some(7.0)] {
            assert!(close(&smooth_distribution(&[0.25; 4], 1e-8, t), &[0.25; 4], 1e-15));
        }
    }

    #[test]
    fn bad_temperature() {
        let t = BiasTable::new(3);
        assert!(t.smooth(Some(0.0)).is_err());
        assert!(t.smooth(Some(-1.0)).is_err());
        assert!(t.smooth(Some(f64::NAN)).is_err());
        assert_eq!(t.smooth(Some(1.1)).unwrap().temperature(), Some(1.1));
    }

    #[test]
    fn product_examples() {
        let half = TagDistribution::new(vec![0.5, 0.5]).unwrap();
        assert!(close(bias_product(&half, &half).unwrap().probs(), &[0.5, 0.5], 1e-15));
        let p = TagDistribution::new(vec![0.8, 0.2]).unwrap();
        let b = TagDistribution::new(vec![0.25, 0.75]).unwrap();
        let got = bias_product(&p, &b).unwrap();
        assert!(close(got.probs(), &[0.57142857142857142857, 0.42857142857142857143], 1e-15));
        let p = TagDistribution::new(vec![0.7, 0.2, 0.1]).unwrap();
        let onehot = TagDistribution::new(vec![0.0, 1.0, 0.0]).unwrap();
        let got = bias_product(&p, &onehot).unwrap();
        assert!(got.probs()[1] > 1.0 - 1e-6);
        assert!(bias_product(&p, &half).is_err());
    }

    #[test]
    fn nll_reduces_to_cross_entropy() {
        let z = [0.3, -1.2, 2.0];
        let plain = debiased_nll(&z, None, 1);
        let uni = debiased_nll(&z, Some(&TagDistribution::uniform(3)), 1);
        assert!((plain.loss - uni.loss).abs() < 1e-12);
        assert!(close(&plain.grad, &uni.grad, 1e-12));
        let p = softmax(&z);
        assert!((plain.loss + p[1].ln()).abs() < 1e-12);
    }

    #[test]
    fn skewed_bias_weakens_the_signal() {
        let z = [0.1, 0.0, 0.4];
        let b = TagDistribution::new(vec![0.98, 0.01, 0.01]).unwrap();
        let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let plain = debiased_nll(&z, None, 0);
        let deb = debiased_nll(&z, Some(&b), 0);
        assert!(norm(&deb.grad) < norm(&plain.grad));
        assert!(deb.loss < plain.loss);
    }

    #[test]
    fn distribution_validation() {
        assert!(TagDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(TagDistribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(TagDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(TagDistribution::new(vec![]).is_err());
        assert_eq!(TagDistribution::new(vec![0.2, 0.8]).unwrap().argmax(), 1);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut t = BiasTable::new(3);
        t.add("b", 2);
        t.add("a", 0);
        t.add("a", 2);
        let s = t.to_jsonl();
        assert_eq!(s, "{\"word\":\"a\",\"counts\":[1,0,1],\"total\":2}\n{\"word\":\"b\",\"counts\":[0,0,1],\"total\":1}\n");
        assert_eq!(BiasTable::from_jsonl(s.as_bytes(), 3).unwrap(), t);
        assert!(BiasTable::from_jsonl("{\"word\":\"a\",\"counts\":[1,0,1],\"total\":3}".as_bytes(), 3).is_err());
        assert!(BiasTable::from_jsonl(s.as_bytes(), 5).is_err());
    }
}
