//! Aspect-oriented sentence splitting for aspect-based sentiment analysis.
//!
//! A sequence-to-sequence splitter rewrites compound review sentences into
//! short sentences that each carry one aspect, so that an off-the-shelf ABSA
//! model sees simpler inputs. The splitter is distilled from a teacher LLM
//! and then aligned with the target ABSA model through preference pairs.

pub mod backend;
pub mod complexity;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod preference;
pub mod splitter;
pub mod synthetic;
pub mod teacher;

pub use error::{Error, Result};
