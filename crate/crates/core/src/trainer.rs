//! Skip-gram with negative sampling.
//!
//! The deterministic single-writer loop lives here; the parameter storage
//! is abstracted behind [`Weights`] so a multi-threaded driver can reuse the
//! per-sentence update with lock-free shared matrices.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clp::NormalizedCorpus;
use crate::num::{dot, sigmoid, softplus, sqrt};
use crate::vectors::{KeyedVectors, VectorError};

/// The learning rate never decays below `lr0 * LR_FLOOR`.
pub const LR_FLOOR: f64 = 1e-4;
/// Draws allowed to find a negative distinct from the positive word.
pub const MAX_NEGATIVE_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub min_count: u64,
    /// Subsampling threshold; 0 disables subsampling.
    pub subsample: f64,
    pub noise_power: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr0: 0.025,
            min_count: 5,
            subsample: 1e-3,
            noise_power: 0.75,
            seed: 1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what| Err(TrainError::InvalidConfig(what));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.subsample) {
            return bad("subsample must lie in [0, 1]");
        }
        if !self.noise_power.is_finite() {
            return bad("noise_power must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("no term reaches min_count")]
    EmptyVocabulary,
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error("relative frequency {0} outside (0, 1]")]
    DomainError(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training produced an unusable model: {0}")]
    Model(#[from] VectorError),
}

/// Cumulative distribution over vocabulary indices, sampled by bisection.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTable {
    cdf: Vec<f64>,
}

impl NoiseTable {
    pub fn new(counts: &[u64], power: f64) -> Self {
        let weights: Vec<f64> = counts.iter().map(|&c| libm::pow(c as f64, power)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        NoiseTable { cdf }
    }

    pub fn probability(&self, index: usize) -> f64 {
        let prev = if index == 0 { 0.0 } else { self.cdf[index - 1] };
        self.cdf[index] - prev
    }

    /// Maps a uniform draw in [0, 1) to an index.
    pub fn sample_at(&self, u: f64) -> usize {
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sample_at(rng.random::<f64>())
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }
}

/// Terms surviving `min_count`, indexed by descending count then term.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    counts: Vec<u64>,
    index: BTreeMap<String, usize>,
    noise: NoiseTable,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn noise(&self) -> &NoiseTable {
        &self.noise
    }

    /// Number of corpus tokens that are in the vocabulary.
    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sentences rewritten as vocabulary indices, out-of-vocabulary terms dropped.
    pub fn encode(&self, corpus: &NormalizedCorpus) -> Vec<Vec<usize>> {
        corpus
            .sentences
            .iter()
            .map(|s| s.iter().filter_map(|t| self.index_of(t)).collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect()
    }
}

pub fn build_vocab(corpus: &NormalizedCorpus, cfg: &TrainingConfig) -> Result<Vocabulary, TrainError> {
    let mut entries: Vec<(&String, u64)> =
        corpus.vocab_counts.iter().filter(|(_, &c)| c >= cfg.min_count).map(|(t, &c)| (t, c)).collect();
    if entries.is_empty() {
        return Err(TrainError::EmptyVocabulary);
    }
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let terms: Vec<String> = entries.iter().map(|(t, _)| (*t).clone()).collect();
    let counts: Vec<u64> = entries.iter().map(|&(_, c)| c).collect();
    let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    let noise = NoiseTable::new(&counts, cfg.noise_power);
    Ok(Vocabulary { terms, counts, index, noise })
}

/// Probability of keeping a token of relative frequency `freq`:
/// `min(1, sqrt(t / freq))`, or 1 when `t = 0` switches subsampling off.
pub fn subsample_keep_prob(freq: f64, t: f64) -> Result<f64, TrainError> {
    if !(freq > 0.0 && freq <= 1.0) {
        return Err(TrainError::DomainError(freq));
    }
    if t <= 0.0 {
        return Ok(1.0);
    }
    Ok(sqrt(t / freq).min(1.0))
}

/// Linear decay from `lr0` to `lr0 * LR_FLOOR` over the planned word count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    lr0: f64,
    total_words: u64,
}

impl LrSchedule {
    pub fn new(lr0: f64, total_words: u64) -> Self {
        LrSchedule { lr0, total_words: total_words.max(1) }
    }

    pub fn at(&self, words_done: u64) -> f64 {
        let progress = words_done as f64 / self.total_words as f64;
        self.lr0 * (1.0 - progress).max(LR_FLOOR)
    }
}

/// `-log σ(u_pos·v) - Σ log σ(-u_neg·v)`.
pub fn sgns_loss(v: &[f64], u_pos: &[f64], u_negs: &[&[f64]]) -> Result<f64, TrainError> {
    check_dims(v, u_pos, u_negs)?;
    let pos = softplus(-dot(u_pos, v));
    let neg: f64 = u_negs.iter().map(|u| softplus(dot(u, v))).sum();
    Ok(pos + neg)
}

/// Analytic gradient of [`sgns_loss`] with respect to every argument.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradient {
    pub v: Vec<f64>,
    pub u_pos: Vec<f64>,
    pub u_negs: Vec<Vec<f64>>,
}

pub fn sgns_gradient(v: &[f64], u_pos: &[f64], u_negs: &[&[f64]]) -> Result<SgnsGradient, TrainError> {
    check_dims(v, u_pos, u_negs)?;
    let g_pos = sigmoid(dot(u_pos, v)) - 1.0;
    let mut grad_v: Vec<f64> = u_pos.iter().map(|u| g_pos * u).collect();
    let mut grad_negs = Vec::with_capacity(u_negs.len());
    for u in u_negs {
        let g = sigmoid(dot(u, v));
        for (gv, ui) in grad_v.iter_mut().zip(u.iter()) {
            *gv += g * ui;
        }
        grad_negs.push(v.iter().map(|x| g * x).collect());
    }
    Ok(SgnsGradient { v: grad_v, u_pos: v.iter().map(|x| g_pos * x).collect(), u_negs: grad_negs })
}

fn check_dims(v: &[f64], u_pos: &[f64], u_negs: &[&[f64]]) -> Result<(), TrainError> {
    let expected = v.len();
    core::iter::once(u_pos)
        .chain(u_negs.iter().copied())
        .find(|u| u.len() != expected)
        .map_or(Ok(()), |u| Err(TrainError::DimensionMismatch { expected, got: u.len() }))
}

/// Row storage for the input (`v`) and output (`u`) matrices.
pub trait Weights {
    fn dim(&self) -> usize;
    fn read_input(&self, row: usize, out: &mut [f64]);
    fn read_output(&self, row: usize, out: &mut [f64]);
    /// `input[row] += scale * delta`
    fn add_input(&mut self, row: usize, delta: &[f64], scale: f64);
    /// `output[row] += scale * delta`
    fn add_output(&mut self, row: usize, delta: &[f64], scale: f64);
}

/// Dense row-major matrices owned by a single writer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseWeights {
    dim: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl DenseWeights {
    /// Input rows uniform in `[-0.5/d, 0.5/d)`, output rows zero.
    pub fn init<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let input = (0..rows * dim).map(|_| (rng.random::<f64>() - 0.5) / dim as f64).collect();
        DenseWeights { dim, input, output: vec![0.0; rows * dim] }
    }
}

impl Weights for DenseWeights {
    fn dim(&self) -> usize {
        self.dim
    }

    fn read_input(&self, row: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.input[row * self.dim..(row + 1) * self.dim]);
    }

    fn read_output(&self, row: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.output[row * self.dim..(row + 1) * self.dim]);
    }

    fn add_input(&mut self, row: usize, delta: &[f64], scale: f64) {
        for (w, d) in self.input[row * self.dim..(row + 1) * self.dim].iter_mut().zip(delta) {
            *w += scale * d;
        }
    }

    fn add_output(&mut self, row: usize, delta: &[f64], scale: f64) {
        for (w, d) in self.output[row * self.dim..(row + 1) * self.dim].iter_mut().zip(delta) {
            *w += scale * d;
        }
    }
}

/// Per-sentence SGNS update shared by the sequential and parallel drivers.
pub struct SentenceTrainer<'a> {
    cfg: &'a TrainingConfig,
    vocab: &'a Vocabulary,
    keep: Vec<f64>,
    schedule: LrSchedule,
}

impl<'a> SentenceTrainer<'a> {
    pub fn new(cfg: &'a TrainingConfig, vocab: &'a Vocabulary) -> Self {
        let total = vocab.total_count();
        let keep = vocab
            .counts()
            .iter()
            .map(|&c| subsample_keep_prob(c as f64 / total as f64, cfg.subsample).unwrap_or(1.0))
            .collect();
        let schedule = LrSchedule::new(cfg.lr0, total * cfg.epochs as u64);
        SentenceTrainer { cfg, vocab, keep, schedule }
    }

    pub fn schedule(&self) -> LrSchedule {
        self.schedule
    }

    /// Trains on one encoded sentence. `words_done` is the number of corpus
    /// words processed before it, which drives the learning-rate decay.
    pub fn train_sentence<W: Weights, R: Rng + ?Sized>(
        &self,
        weights: &mut W,
        rng: &mut R,
        sentence: &[usize],
        words_done: u64,
    ) {
        let lr = self.schedule.at(words_done);
        let kept: Vec<usize> = if self.cfg.subsample > 0.0 {
            sentence.iter().copied().filter(|&w| self.keep[w] >= 1.0 || rng.random::<f64>() < self.keep[w]).collect()
        } else {
            sentence.to_vec()
        };
        let d = weights.dim();
        let mut v = vec![0.0; d];
        let mut u = vec![0.0; d];
        let mut e = vec![0.0; d];
        for (i, &center) in kept.iter().enumerate() {
            let b = rng.random_range(1..=self.cfg.window);
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(kept.len() - 1);
            for j in (lo..=hi).filter(|&j| j != i) {
                let context = kept[j];
                weights.read_input(center, &mut v);
                e.iter_mut().for_each(|x| *x = 0.0);
                self.update_output(weights, context, 1.0, lr, &v, &mut u, &mut e);
                for _ in 0..self.cfg.negatives {
                    if let Some(neg) = self.draw_negative(rng, context) {
                        self.update_output(weights, neg, 0.0, lr, &v, &mut u, &mut e);
                    }
                }
                weights.add_input(center, &e, -lr);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn update_output<W: Weights>(
        &self,
        weights: &mut W,
        target: usize,
        label: f64,
        lr: f64,
        v: &[f64],
        u: &mut [f64],
        e: &mut [f64],
    ) {
        weights.read_output(target, u);
        let g = sigmoid(dot(u, v)) - label;
        for (ei, ui) in e.iter_mut().zip(u.iter()) {
            *ei += g * ui;
        }
        weights.add_output(target, v, -lr * g);
    }

    fn draw_negative<R: Rng + ?Sized>(&self, rng: &mut R, positive: usize) -> Option<usize> {
        (0..MAX_NEGATIVE_ATTEMPTS).map(|_| self.vocab.noise().sample(rng)).find(|&n| n != positive)
    }
}

/// Deterministic single-worker training; the same seed yields bit-identical vectors.
pub fn train(corpus: &NormalizedCorpus, cfg: &TrainingConfig) -> Result<KeyedVectors, TrainError> {
    cfg.validate()?;
    let vocab = build_vocab(corpus, cfg)?;
    let sentences = vocab.encode(corpus);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = DenseWeights::init(vocab.len(), cfg.dim, &mut rng);
    let trainer = SentenceTrainer::new(cfg, &vocab);
    let mut done = 0u64;
    for _ in 0..cfg.epochs {
        for s in &sentences {
            trainer.train_sentence(&mut weights, &mut rng, s, done);
            done += s.len() as u64;
        }
    }
    Ok(KeyedVectors::new(vocab.terms().to_vec(), weights.input, cfg.dim)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(counts: &[(&str, usize)]) -> NormalizedCorpus {
        let sentence = counts
            .iter()
            .flat_map(|&(t, n)| core::iter::repeat_n(String::from(t), n))
            .collect();
        NormalizedCorpus::from_sentences(vec![sentence])
    }

    #[test]
    fn vocab_filters_and_orders() {
        let c = corpus(&[("c", 1), ("b", 2), ("a", 5)]);
        let v = build_vocab(&c, &TrainingConfig { min_count: 2, ..Default::default() }).unwrap();
        assert_eq!(v.terms(), ["a", "b"]);
        assert_eq!(v.index_of("b"), Some(1));
        assert_eq!(v.index_of("c"), None);
    }

    #[test]
    fn vocab_ties_break_lexicographically() {
        let c = corpus(&[("zz", 2), ("aa", 2), ("mm", 3)]);
        let v = build_vocab(&c, &TrainingConfig { min_count: 1, ..Default::default() }).unwrap();
        assert_eq!(v.terms(), ["mm", "aa", "zz"]);
    }

    #[test]
    fn empty_vocabulary() {
        let cfg = TrainingConfig { min_count: 1, ..Default::default() };
        assert_eq!(build_vocab(&NormalizedCorpus::default(), &cfg), Err(TrainError::EmptyVocabulary));
        assert_eq!(train(&NormalizedCorpus::default(), &cfg), Err(TrainError::EmptyVocabulary));
    }

    #[test]
    fn noise_distribution_normalizes() {
        let c = corpus(&[("a", 3), ("b", 1)]);
        let v = build_vocab(&c, &TrainingConfig { min_count: 1, noise_power: 1.0, ..Default::default() }).unwrap();
        assert!((v.noise().probability(0) - 0.75).abs() < 1e-12);
        assert!((v.noise().probability(1) - 0.25).abs() < 1e-12);
        let total: f64 = (0..2).map(|i| v.noise().probability(i)).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(v.noise().sample_at(0.0), 0);
        assert_eq!(v.noise().sample_at(0.7499), 0);
        assert_eq!(v.noise().sample_at(0.75), 1);
        assert_eq!(v.noise().sample_at(0.999_999), 1);
    }

    #[test]
    fn keep_probability() {
        assert_eq!(subsample_keep_prob(0.001, 0.001).unwrap(), 1.0);
        assert!((subsample_keep_prob(0.01, 0.001).unwrap() - 0.316_227_766_016_837_94).abs() < 1e-12);
        assert_eq!(subsample_keep_prob(0.9, 0.0).unwrap(), 1.0);
        assert_eq!(subsample_keep_prob(1e-6, 0.5).unwrap(), 1.0);
        assert!(matches!(subsample_keep_prob(0.0, 0.1), Err(TrainError::DomainError(_))));
        assert!(matches!(subsample_keep_prob(1.5, 0.1), Err(TrainError::DomainError(_))));
    }

    #[test]
    fn schedule_floor() {
        let s = LrSchedule::new(0.025, 100);
        assert_eq!(s.at(0), 0.025);
        assert!((s.at(50) - 0.0125).abs() < 1e-15);
        assert_eq!(s.at(100), 0.025 * LR_FLOOR);
        assert_eq!(s.at(10_000), 0.025 * LR_FLOOR);
    }

    #[test]
    fn loss_at_zero_is_two_log_two() {
        let z = [0.0; 4];
        let l = sgns_loss(&z, &z, &[&z]).unwrap();
        assert!((l - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn loss_vanishes_in_the_limit() {
        let v = [1.0, 0.0];
        let l = sgns_loss(&v, &[1e3, 0.0], &[&[-1e3, 0.0]]).unwrap();
        assert!((0.0..1e-300).contains(&l));
        let l = sgns_loss(&v, &[f64::INFINITY, 0.0], &[&[f64::NEG_INFINITY, 0.0]]).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn loss_dimension_mismatch() {
        assert_eq!(
            sgns_loss(&[0.0; 3], &[0.0; 3], &[&[0.0; 2]]),
            Err(TrainError::DimensionMismatch { expected: 3, got: 2 })
        );
        assert!(sgns_gradient(&[0.0; 3], &[0.0; 4], &[]).is_err());
    }

    /// Records every output update so the first gradient can be inspected.
    struct Probe {
        inner: DenseWeights,
        output_scales: Vec<(usize, f64)>,
    }

    impl Weights for Probe {
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn read_input(&self, row: usize, out: &mut [f64]) {
            self.inner.read_input(row, out)
        }
        fn read_output(&self, row: usize, out: &mut [f64]) {
            self.inner.read_output(row, out)
        }
        fn add_input(&mut self, row: usize, delta: &[f64], scale: f64) {
            self.inner.add_input(row, delta, scale)
        }
        fn add_output(&mut self, row: usize, delta: &[f64], scale: f64) {
            self.output_scales.push((row, scale));
            self.inner.add_output(row, delta, scale)
        }
    }

    #[test]
    fn first_positive_update_has_half_gradient() {
        let c = NormalizedCorpus::from_sentences(vec![vec!["a".into(), "b".into()]]);
        let cfg = TrainingConfig { min_count: 1, negatives: 1, subsample: 0.0, dim: 4, ..Default::default() };
        let vocab = build_vocab(&c, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut probe = Probe { inner: DenseWeights::init(vocab.len(), 4, &mut rng), output_scales: vec![] };
        let trainer = SentenceTrainer::new(&cfg, &vocab);
        trainer.train_sentence(&mut probe, &mut rng, &vocab.encode(&c)[0], 0);
        // scale = -lr * g with g = σ(0) - 1 = -0.5 on the untouched output row
        let (row, scale) = probe.output_scales[0];
        assert_eq!(row, vocab.index_of("b").unwrap());
        assert!((scale - cfg.lr0 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn training_is_reproducible_and_finite() {
        let sentences = (0..40)
            .map(|i| (0..6).map(|j| alloc::format!("w{}", (i * 7 + j * 3) % 11)).collect())
            .collect();
        let c = NormalizedCorpus::from_sentences(sentences);
        let cfg = TrainingConfig { dim: 8, min_count: 1, epochs: 3, seed: 42, ..Default::default() };
        let a = train(&c, &cfg).unwrap();
        let b = train(&c, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|x| x.is_finite()));
        let other = train(&c, &TrainingConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        for bad in [
            TrainingConfig { dim: 0, ..Default::default() },
            TrainingConfig { window: 0, ..Default::default() },
            TrainingConfig { negatives: 0, ..Default::default() },
            TrainingConfig { epochs: 0, ..Default::default() },
            TrainingConfig { lr0: 0.0, ..Default::default() },
            TrainingConfig { min_count: 0, ..Default::default() },
            TrainingConfig { subsample: 1.5, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(TrainError::InvalidConfig(_))), "{bad:?}");
        }
    }
}
