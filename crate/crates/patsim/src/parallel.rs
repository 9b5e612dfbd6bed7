//! Multi-worker SGNS training over shared matrices.
//!
//! Workers read and write rows without any locking. Each coordinate is an
//! `AtomicU64` holding `f64` bits and accessed with relaxed ordering, so
//! concurrent updates to the same row can overwrite each other. Results are
//! therefore not reproducible across runs; use one worker when they must be.

use std::sync::atomic::{AtomicU64, Ordering};

use patsim_core::clp::NormalizedCorpus;
use patsim_core::trainer::{self, DenseWeights, SentenceTrainer, TrainError, TrainingConfig, Weights};
use patsim_core::vectors::KeyedVectors;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct SharedMatrix {
    dim: usize,
    cells: Vec<AtomicU64>,
}

impl SharedMatrix {
    fn from_values(dim: usize, values: &[f64]) -> Self {
        SharedMatrix { dim, cells: values.iter().map(|x| AtomicU64::new(x.to_bits())).collect() }
    }

    fn read(&self, row: usize, out: &mut [f64]) {
        let cells = &self.cells[row * self.dim..(row + 1) * self.dim];
        for (o, c) in out.iter_mut().zip(cells) {
            *o = f64::from_bits(c.load(Ordering::Relaxed));
        }
    }

    fn add(&self, row: usize, delta: &[f64], scale: f64) {
        let cells = &self.cells[row * self.dim..(row + 1) * self.dim];
        for (c, d) in cells.iter().zip(delta) {
            let v = f64::from_bits(c.load(Ordering::Relaxed)) + scale * d;
            c.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    fn into_values(self) -> Vec<f64> {
        self.cells.into_iter().map(|c| f64::from_bits(c.into_inner())).collect()
    }
}

/// A worker's view of the shared input/output matrices.
struct SharedWeights<'a> {
    input: &'a SharedMatrix,
    output: &'a SharedMatrix,
}

impl Weights for SharedWeights<'_> {
    fn dim(&self) -> usize {
        self.input.dim
    }

    fn read_input(&self, row: usize, out: &mut [f64]) {
        self.input.read(row, out)
    }

    fn read_output(&self, row: usize, out: &mut [f64]) {
        self.output.read(row, out)
    }

    fn add_input(&mut self, row: usize, delta: &[f64], scale: f64) {
        self.input.add(row, delta, scale)
    }

    fn add_output(&mut self, row: usize, delta: &[f64], scale: f64) {
        self.output.add(row, delta, scale)
    }
}

/// Trains with `workers` threads; `workers <= 1` runs the deterministic
/// single-writer trainer instead.
pub fn train(corpus: &NormalizedCorpus, cfg: &TrainingConfig, workers: usize) -> Result<KeyedVectors, TrainError> {
    if workers <= 1 {
        return trainer::train(corpus, cfg);
    }
    cfg.validate()?;
    let vocab = trainer::build_vocab(corpus, cfg)?;
    let sentences = vocab.encode(corpus);
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = DenseWeights::init(vocab.len(), cfg.dim, &mut init_rng);
    let input = SharedMatrix::from_values(cfg.dim, &init.input);
    let output = SharedMatrix::from_values(cfg.dim, &init.output);
    let words_done = AtomicU64::new(0);
    let sentence_trainer = SentenceTrainer::new(cfg, &vocab);

    std::thread::scope(|scope| {
        for worker in 0..workers {
            let (input, output, words_done, sentences) = (&input, &output, &words_done, &sentences);
            let sentence_trainer = &sentence_trainer;
            scope.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(worker as u64 + 1);
                let mut weights = SharedWeights { input, output };
                for _ in 0..cfg.epochs {
                    for s in sentences.iter().skip(worker).step_by(workers) {
                        let done = words_done.fetch_add(s.len() as u64, Ordering::Relaxed);
                        sentence_trainer.train_sentence(&mut weights, &mut rng, s, done);
                    }
                }
            });
        }
    });
    // Scope join: every worker write happens-before this read.
    Ok(KeyedVectors::new(vocab.terms().to_vec(), input.into_values(), cfg.dim)?)
}
