//! The trainable sentence splitter.
//!
//! [`SeqModel`] is the seq2seq interface the rest of the pipeline talks to;
//! [`Trainable`] adds flat parameters with exact gradients so supervised
//! fine-tuning and preference alignment can run on any backend that
//! provides them. [`TinySeq2Seq`] is the bundled character-level backend.

mod checkpoint;
mod tiny;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complexity::ComplexityLabel;
use crate::data::Quadruplet;
use crate::error::{Error, Result};
use crate::teacher::{Origin, SplitCandidate};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, MODEL_FILE};
pub use tiny::{CharVocab, TinyConfig, TinySeq2Seq};

/// Conditional distribution over target strings given a source string.
pub trait SeqModel: Send + Sync {
    /// `log p(target | source)`, summed over target tokens including the
    /// end marker. Always `<= 0`.
    fn log_prob(&self, source: &str, target: &str) -> f64;

    /// Up to `width` distinct completions with their log-probabilities,
    /// best first.
    fn beam_generate(&self, source: &str, width: usize) -> Vec<(String, f64)>;
}

impl<M: SeqModel + ?Sized> SeqModel for &M {
    fn log_prob(&self, source: &str, target: &str) -> f64 {
        (**self).log_prob(source, target)
    }

    fn beam_generate(&self, source: &str, width: usize) -> Vec<(String, f64)> {
        (**self).beam_generate(source, width)
    }
}

/// A [`SeqModel`] with a flat parameter vector and exact gradients.
pub trait Trainable: SeqModel + Clone {
    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Adds `scale * d log p(target|source) / d params` into `grad` and
    /// returns `log p(target|source)`.
    fn accumulate_log_prob_grad(&self, source: &str, target: &str, scale: f64, grad: &mut [f64]) -> f64;

    /// One plain gradient-descent step on the mean NLL of `batch`. Returns
    /// the mean loss before the update.
    fn train_step(&mut self, batch: &[(String, String)], learning_rate: f64) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let mut grad = vec![0.0; self.params().len()];
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (s, t) in batch {
            loss -= self.accumulate_log_prob_grad(s, t, scale, &mut grad) * scale;
        }
        // grad holds d(mean log p); descending the NLL means ascending it
        for (p, g) in self.params_mut().iter_mut().zip(&grad) {
            *p += learning_rate * g;
        }
        loss
    }
}

/// Splitter that never changes its input. Used for no-split baselines.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentitySplitter;

impl SeqModel for IdentitySplitter {
    fn log_prob(&self, source: &str, target: &str) -> f64 {
        if source == target {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn beam_generate(&self, source: &str, width: usize) -> Vec<(String, f64)> {
        if width == 0 {
            Vec::new()
        } else {
            vec![(source.to_string(), 0.0)]
        }
    }
}

/// Negative log-likelihood of `target` given `source`.
pub fn sft_loss(model: &dyn SeqModel, source: &str, target: &str) -> f64 {
    -model.log_prob(source, target)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SftConfig {
    pub train_batch: usize,
    pub val_batch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig {
            train_batch: 64,
            val_batch: 8,
            epochs: 50,
            learning_rate: 6e-5,
            early_stop_patience: 20,
            seed: 42,
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_batch == 0 || self.val_batch == 0 || self.epochs == 0 || self.early_stop_patience == 0 {
            return Err(Error::ConfigInvalid("SFT batch sizes, epochs and patience must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::ConfigInvalid("SFT learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One distillation record: source sentence, teacher split, gold tuples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftExample {
    #[serde(default)]
    pub id: String,
    pub source: String,
    pub target: String,
    #[serde(default)]
    pub quads: Vec<Quadruplet>,
}

impl SftExample {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        SftExample { id: String::new(), source: source.into(), target: target.into(), quads: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SftLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mean NLL over a set of pairs.
pub fn mean_nll(model: &dyn SeqModel, pairs: &[SftExample]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|p| sft_loss(model, &p.source, &p.target)).sum::<f64>() / pairs.len() as f64
}

/// Supervised fine-tuning with minibatch gradient descent.
///
/// Returns the parameters from the epoch with the lowest validation NLL
/// (training NLL when `val` is empty) and stops after
/// `early_stop_patience` epochs without improvement.
pub fn train_sft<M: Trainable>(model: M, corpus: &[SftExample], config: &SftConfig, val: &[SftExample]) -> Result<(M, SftLog)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    config.validate()?;
    let mut model = model;
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut log = SftLog::default();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.train_batch) {
            let batch: Vec<(String, String)> = chunk
                .iter()
                .map(|&i| (corpus[i].source.clone(), corpus[i].target.clone()))
                .collect();
            let loss = model.train_step(&batch, config.learning_rate);
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            total += loss * batch.len() as f64;
        }
        let train_loss = total / corpus.len() as f64;
        let val_loss = if val.is_empty() { mean_nll(&model, corpus) } else { mean_nll(&model, val) };
        if !val_loss.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::DivergedLoss { epoch });
        }
        if val_loss < best_loss {
            best_loss = val_loss;
            best = model.clone();
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        log.epochs.push(EpochLog { epoch, train_loss, val_loss, best_val_loss: best_loss });
        log::debug!("sft epoch {epoch}: train {train_loss:.4} val {val_loss:.4}");
        if since_best >= config.early_stop_patience {
            log.stopped_early = true;
            break;
        }
    }
    Ok((best, log))
}

/// Beam candidates for one source sentence.
pub fn generate_splits(model: &dyn SeqModel, source_id: &str, source: &str, width: usize) -> Vec<SplitCandidate> {
    model
        .beam_generate(source, width)
        .into_iter()
        .map(|(text, score)| {
            let mut c = SplitCandidate::new(source_id, text, Origin::Beam);
            c.criteria_score = score.exp().clamp(0.0, 1.0);
            c
        })
        .collect()
}

/// Splits `text` unless the gate marks it simple.
pub fn split(model: &dyn SeqModel, text: &str, gate: Option<ComplexityLabel>, width: usize) -> String {
    if gate == Some(ComplexityLabel::Simple) {
        return text.to_string();
    }
    model
        .beam_generate(text, width.max(1))
        .into_iter()
        .next()
        .map(|(t, _)| t)
        .unwrap_or_else(|| text.to_string())
}
