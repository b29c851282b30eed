//! Preference pairs from ABSA feedback and DPO alignment of the splitter.
//!
//! The selection rules are written twice: pure functions over precomputed
//! sentence F1 scores (`*_from_scores`), and thin wrappers that obtain
//! those scores from an [`AbsaBackend`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::backend::AbsaBackend;
use crate::complexity::{classify, ComplexityLabel};
use crate::data::AnnotatedExample;
use crate::error::{Error, Result};
use crate::metrics::sentence_f1;
use crate::splitter::{SeqModel, Trainable};
use crate::teacher::{segments, SplitCandidate};

/// F1 values closer than this are treated as equal.
const F1_EPS: f64 = 1e-12;

fn f1_cmp(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= F1_EPS {
        Ordering::Equal
    } else if a < b {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

/// Levenshtein distance over whitespace tokens.
pub fn token_edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<&str> = a.split_whitespace().collect();
    let b: Vec<&str> = b.split_whitespace().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ta) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ta != tb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - edit / max_len` over whitespace tokens; 1.0 for two empty strings.
pub fn similarity(a: &str, b: &str) -> f64 {
    let n = a.split_whitespace().count().max(b.split_whitespace().count());
    if n == 0 {
        return 1.0;
    }
    1.0 - token_edit_distance(a, b) as f64 / n as f64
}

/// A candidate text with its downstream sentence F1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredText {
    pub text: String,
    pub f1: f64,
}

impl ScoredText {
    pub fn new(text: impl Into<String>, f1: f64) -> Self {
        ScoredText { text: text.into(), f1 }
    }
}

fn distinct(texts: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    texts.into_iter().filter(|t| seen.insert(t.clone())).collect()
}

fn max_f1(scored: &[ScoredText]) -> Option<f64> {
    scored.iter().map(|s| s.f1).fold(None, |m, f| Some(m.map_or(f, |m: f64| m.max(f))))
}

/// Picks by similarity to `original`, never returning `original` itself.
/// Ties go to the lexicographically smallest text.
fn by_similarity<'a>(original: &str, pool: impl Iterator<Item = &'a ScoredText>, highest: bool) -> Option<String> {
    pool.filter(|s| s.text != original)
        .map(|s| (similarity(original, &s.text), &s.text))
        .min_by(|(sa, ta), (sb, tb)| {
            let by_sim = if highest { sb.total_cmp(sa) } else { sa.total_cmp(sb) };
            by_sim.then_with(|| ta.cmp(tb))
        })
        .map(|(_, t)| t.clone())
}

/// Preferred outputs given precomputed scores.
///
/// Simple sentences keep every distinct candidate whose segment count
/// equals the tuple count. Compound sentences compare the original's F1
/// `f0` with the best candidate: worse originals yield every distinct
/// candidate beating `f0`, a tie yields the original, and a strictly better
/// original yields nothing.
pub fn preferred_from_scores(
    label: ComplexityLabel,
    quad_count: usize,
    original: &str,
    f0: f64,
    candidates: &[ScoredText],
) -> Vec<String> {
    match label {
        ComplexityLabel::Simple => distinct(
            candidates
                .iter()
                .filter(|c| segments(&c.text).len() == quad_count)
                .map(|c| c.text.clone()),
        ),
        ComplexityLabel::Compound => match max_f1(candidates) {
            None => Vec::new(),
            Some(best) => match f1_cmp(f0, best) {
                Ordering::Greater => Vec::new(),
                Ordering::Equal => vec![original.to_string()],
                Ordering::Less => distinct(
                    candidates
                        .iter()
                        .filter(|c| f1_cmp(c.f1, f0) == Ordering::Greater)
                        .map(|c| c.text.clone()),
                ),
            },
        },
    }
}

/// Dispreferred output given precomputed beam scores. At most one text.
///
/// Simple sentences take the beam most similar to the original. Compound
/// sentences yield nothing when some beam beats the original, the least
/// similar beam on a tie, and otherwise the most similar of the beams that
/// score below the original.
pub fn dispreferred_from_scores(label: ComplexityLabel, original: &str, f0: f64, beams: &[ScoredText]) -> Vec<String> {
    let pick = match label {
        ComplexityLabel::Simple => by_similarity(original, beams.iter(), true),
        ComplexityLabel::Compound => match max_f1(beams) {
            None => None,
            Some(best) => match f1_cmp(f0, best) {
                Ordering::Less => None,
                Ordering::Equal => by_similarity(original, beams.iter(), false),
                Ordering::Greater => {
                    by_similarity(original, beams.iter().filter(|b| f1_cmp(b.f1, f0) == Ordering::Less), true)
                }
            },
        },
    };
    pick.into_iter().collect()
}

fn score_texts<B: AbsaBackend + ?Sized>(
    example: &AnnotatedExample,
    texts: impl Iterator<Item = String>,
    backend: &B,
) -> Result<Vec<ScoredText>> {
    texts
        .map(|t| {
            let pred = backend.predict(&t, example.task)?;
            Ok(ScoredText { f1: sentence_f1(&pred, &example.quads).f1, text: t })
        })
        .collect()
}

fn original_f1<B: AbsaBackend + ?Sized>(example: &AnnotatedExample, backend: &B) -> Result<f64> {
    Ok(sentence_f1(&backend.predict(&example.text, example.task)?, &example.quads).f1)
}

pub fn select_preferred<B: AbsaBackend + ?Sized>(
    example: &AnnotatedExample,
    candidates: &[SplitCandidate],
    backend: &B,
) -> Result<Vec<String>> {
    let label = classify(example);
    let f0 = original_f1(example, backend)?;
    let scored = score_texts(example, candidates.iter().map(|c| c.text.clone()), backend)?;
    Ok(preferred_from_scores(label, example.quads.len(), &example.text, f0, &scored))
}

pub fn select_dispreferred<B: AbsaBackend + ?Sized>(
    example: &AnnotatedExample,
    beams: &[SplitCandidate],
    backend: &B,
) -> Result<Vec<String>> {
    let label = classify(example);
    let f0 = original_f1(example, backend)?;
    let scored = score_texts(example, beams.iter().map(|c| c.text.clone()), backend)?;
    Ok(dispreferred_from_scores(label, &example.text, f0, &scored))
}

/// One `(s, p+, p-)` triple plus the scores that selected it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    #[serde(default)]
    pub id: String,
    pub source: String,
    pub preferred: String,
    pub dispreferred: String,
    #[serde(default)]
    pub f1_original: f64,
    #[serde(default)]
    pub f1_candidate: f64,
    #[serde(default)]
    pub f1_dispreferred: f64,
}

impl PreferencePair {
    pub fn new(source: impl Into<String>, preferred: impl Into<String>, dispreferred: impl Into<String>) -> Self {
        PreferencePair {
            id: String::new(),
            source: source.into(),
            preferred: preferred.into(),
            dispreferred: dispreferred.into(),
            f1_original: 0.0,
            f1_candidate: 0.0,
            f1_dispreferred: 0.0,
        }
    }
}

/// Pairs for one example given precomputed scores: every preferred text
/// against every dispreferred text, skipping identical texts.
pub fn pairs_from_scores(
    example: &AnnotatedExample,
    f0: f64,
    few_shot: &[ScoredText],
    beams: &[ScoredText],
) -> Vec<PreferencePair> {
    let label = classify(example);
    let preferred = preferred_from_scores(label, example.quads.len(), &example.text, f0, few_shot);
    let dispreferred = dispreferred_from_scores(label, &example.text, f0, beams);
    let lookup = |pool: &[ScoredText], text: &str| { pool.iter().find(|s| s.text == text).map_or(f0, |s| s.f1) };
    let mut out = Vec::new();
    for p in &preferred {
        for d in &dispreferred {
            if p == d {
                continue;
            }
            out.push(PreferencePair {
                id: example.id.clone(),
                source: example.text.clone(),
                preferred: p.clone(),
                dispreferred: d.clone(),
                f1_original: f0,
                f1_candidate: lookup(few_shot, p),
                f1_dispreferred: lookup(beams, d),
            });
        }
    }
    out
}

fn group_by_source(cands: &[SplitCandidate]) -> BTreeMap<&str, Vec<String>> {
    let mut by_id: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for c in cands {
        by_id.entry(c.source_id.as_str()).or_default().push(c.text.clone());
    }
    by_id
}

/// Builds pairs for every example, matching candidates by `source_id`.
/// Examples are scored in parallel; output follows `examples` order.
pub fn build_pairs<B: AbsaBackend + ?Sized>(
    examples: &[AnnotatedExample],
    few_shot: &[SplitCandidate],
    beams: &[SplitCandidate],
    backend: &B,
) -> Result<Vec<PreferencePair>> {
    let few_by_id = group_by_source(few_shot);
    let beams_by_id = group_by_source(beams);
    let per_example: Vec<Vec<PreferencePair>> = examples
        .par_iter()
        .map(|ex| {
            let few = few_by_id.get(ex.id.as_str()).cloned().unwrap_or_default();
            let bm = beams_by_id.get(ex.id.as_str()).cloned().unwrap_or_default();
            if few.is_empty() || bm.is_empty() {
                return Ok(Vec::new());
            }
            let f0 = original_f1(ex, backend)?;
            let few = score_texts(ex, few.into_iter(), backend)?;
            let bm = score_texts(ex, bm.into_iter(), backend)?;
            Ok(pairs_from_scores(ex, f0, &few, &bm))
        })
        .collect::<Result<_>>()?;
    Ok(per_example.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpoConfig {
    pub beta: f64,
    pub batch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub loss_kind: LossKind,
    pub seed: u64,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig { beta: 0.1, batch: 8, epochs: 1, learning_rate: 1e-4, loss_kind: LossKind::Sigmoid, seed: 42 }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::ConfigInvalid("DPO beta must be positive".into()));
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::ConfigInvalid("DPO batch and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::ConfigInvalid("DPO learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The DPO margin `beta * ((pi+ - ref+) - (pi- - ref-))` from log-probs.
pub fn dpo_margin(policy_pos: f64, reference_pos: f64, policy_neg: f64, reference_neg: f64, beta: f64) -> f64 {
    beta * ((policy_pos - reference_pos) - (policy_neg - reference_neg))
}

/// `-log sigmoid(margin)`.
pub fn dpo_loss_from_margin(margin: f64) -> f64 {
    softplus(-margin)
}

pub fn dpo_loss(policy: &dyn SeqModel, reference: &dyn SeqModel, pair: &PreferencePair, config: &DpoConfig) -> f64 {
    let margin = dpo_margin(
        policy.log_prob(&pair.source, &pair.preferred),
        reference.log_prob(&pair.source, &pair.preferred),
        policy.log_prob(&pair.source, &pair.dispreferred),
        reference.log_prob(&pair.source, &pair.dispreferred),
        config.beta,
    );
    dpo_loss_from_margin(margin)
}

/// Adds `scale * d loss / d params` for one pair into `grad` and returns
/// the loss. `reference` holds the frozen `(log ref+, log ref-)`.
pub fn accumulate_dpo_grad<M: Trainable>(
    policy: &M,
    reference: (f64, f64),
    pair: &PreferencePair,
    beta: f64,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let lp_pos = policy.log_prob(&pair.source, &pair.preferred);
    let lp_neg = policy.log_prob(&pair.source, &pair.dispreferred);
    let margin = dpo_margin(lp_pos, reference.0, lp_neg, reference.1, beta);
    // d loss / d margin = -sigmoid(-margin)
    let w = sigmoid(-margin) * beta * scale;
    if w != 0.0 {
        policy.accumulate_log_prob_grad(&pair.source, &pair.preferred, -w, grad);
        policy.accumulate_log_prob_grad(&pair.source, &pair.dispreferred, w, grad);
    }
    dpo_loss_from_margin(margin)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpoStep {
    pub step: usize,
    pub epoch: usize,
    /// Mean batch loss before the update.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DpoLog {
    pub steps: Vec<DpoStep>,
    /// Mean loss over all pairs before training (ln 2 by construction).
    pub initial_loss: f64,
    /// Mean loss over all pairs after the last step.
    pub final_loss: f64,
    /// Pairs skipped because the reference assigns them zero probability.
    pub skipped: usize,
}

fn mean_loss<M: Trainable>(policy: &M, refs: &[(f64, f64)], pairs: &[&PreferencePair], beta: f64) -> f64 {
    let total: f64 = pairs
        .iter()
        .zip(refs)
        .map(|(p, r)| {
            dpo_loss_from_margin(dpo_margin(
                policy.log_prob(&p.source, &p.preferred),
                r.0,
                policy.log_prob(&p.source, &p.dispreferred),
                r.1,
                beta,
            ))
        })
        .sum();
    total / pairs.len() as f64
}

/// Aligns `policy_init` on `pairs` against a frozen copy of itself.
pub fn train_dpo<M: Trainable>(policy_init: M, pairs: &[PreferencePair], config: &DpoConfig) -> Result<(M, DpoLog)> {
    config.validate()?;
    let reference = policy_init.clone();
    let mut usable = Vec::new();
    let mut refs = Vec::new();
    for p in pairs {
        let r = (reference.log_prob(&p.source, &p.preferred), reference.log_prob(&p.source, &p.dispreferred));
        if r.0.is_finite() && r.1.is_finite() && p.preferred != p.dispreferred {
            usable.push(p);
            refs.push(r);
        }
    }
    if usable.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut log = DpoLog { skipped: pairs.len() - usable.len(), ..Default::default() };
    if log.skipped > 0 {
        log::warn!("skipping {} preference pairs the reference cannot generate", log.skipped);
    }
    let mut policy = policy_init;
    log.initial_loss = mean_loss(&policy, &refs, &usable, config.beta);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch) {
            let mut grad = vec![0.0; policy.params().len()];
            let scale = 1.0 / chunk.len() as f64;
            let mut loss = 0.0;
            for &i in chunk {
                loss += accumulate_dpo_grad(&policy, refs[i], usable[i], config.beta, scale, &mut grad) * scale;
            }
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            for (p, g) in policy.params_mut().iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            step += 1;
            log.steps.push(DpoStep { step, epoch, loss });
            log::debug!("dpo step {step}: loss {loss:.5}");
        }
    }
    log.final_loss = mean_loss(&policy, &refs, &usable, config.beta);
    if !log.final_loss.is_finite() {
        return Err(Error::DivergedLoss { epoch: config.epochs });
    }
    Ok((policy, log))
}
