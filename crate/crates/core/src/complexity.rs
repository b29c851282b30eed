//! Simple / compound sentence categorization.
//!
//! A sentence is simple when it carries a single annotation tuple and shows
//! no sign of clause coordination: no comma and no coordinating conjunction
//! token. Everything else is compound.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::AnnotatedExample;
use crate::error::{Error, Result};

/// Coordinating conjunctions treated as clause joiners.
pub const CONJUNCTIONS: [&str; 3] = ["and", "or", "but"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComplexityLabel {
    Simple,
    Compound,
}

impl fmt::Display for ComplexityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComplexityLabel::Simple => "simple",
            ComplexityLabel::Compound => "compound",
        })
    }
}

/// Whether the text shows coordination: a comma or a whole-token
/// conjunction.
pub fn has_coordination(text: &str) -> bool {
    text.contains(',')
        || text
            .split_whitespace()
            .any(|tok| CONJUNCTIONS.iter().any(|c| tok.eq_ignore_ascii_case(c)))
}

pub fn classify_parts(text: &str, quad_count: usize) -> ComplexityLabel {
    if quad_count == 1 && !has_coordination(text) {
        ComplexityLabel::Simple
    } else {
        ComplexityLabel::Compound
    }
}

pub fn classify(example: &AnnotatedExample) -> ComplexityLabel {
    classify_parts(&example.text, example.quads.len())
}

/// Percentages of simple and compound inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub simple_pct: f64,
    pub compound_pct: f64,
    pub simple: usize,
    pub compound: usize,
}

pub fn ratio_report(examples: &[AnnotatedExample]) -> Result<RatioReport> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let simple = examples
        .iter()
        .filter(|e| classify(e) == ComplexityLabel::Simple)
        .count();
    let compound = examples.len() - simple;
    let simple_pct = 100.0 * simple as f64 / examples.len() as f64;
    Ok(RatioReport {
        simple_pct,
        compound_pct: 100.0 - simple_pct,
        simple,
        compound,
    })
}
