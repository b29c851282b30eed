//! Exact-match tuple scoring shared by sentence-level and corpus-level
//! metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::Quadruplet;

/// Precision, recall and F1 in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Matched, predicted and gold counts after deduplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl MatchCounts {
    pub fn prf(&self) -> Prf {
        prf(self.matched, self.predicted, self.gold)
    }
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.matched += rhs.matched;
        self.predicted += rhs.predicted;
        self.gold += rhs.gold;
    }
}

pub fn prf(matched: usize, predicted: usize, gold: usize) -> Prf {
    let precision = if predicted == 0 { 0.0 } else { matched as f64 / predicted as f64 };
    let recall = if gold == 0 { 0.0 } else { matched as f64 / gold as f64 };
    Prf { precision, recall, f1: harmonic(precision, recall) }
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Set-semantics exact matching of any comparable items.
pub fn match_sets<T: Ord>(predicted: impl IntoIterator<Item = T>, gold: impl IntoIterator<Item = T>) -> MatchCounts {
    let p: BTreeSet<T> = predicted.into_iter().collect();
    let g: BTreeSet<T> = gold.into_iter().collect();
    MatchCounts {
        matched: p.intersection(&g).count(),
        predicted: p.len(),
        gold: g.len(),
    }
}

pub fn match_quads(predicted: &[Quadruplet], gold: &[Quadruplet]) -> MatchCounts {
    match_sets(predicted.iter(), gold.iter())
}

/// Sentence-level scores: a tuple is correct only if every element matches.
pub fn sentence_f1(predicted: &[Quadruplet], gold: &[Quadruplet]) -> Prf {
    match_quads(predicted, gold).prf()
}
