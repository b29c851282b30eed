//! Split candidates from a teacher LLM.
//!
//! The teacher is prompted zero-shot (distillation data) or few-shot with
//! gold tuples (preference data). Every candidate is scored locally against
//! aspect-oriented splitting criteria and the best `k` are kept.

mod cache;
mod prompt;
mod remote;
mod scripted;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{normalize, AnnotatedExample, Term};
use crate::error::{Error, Result};

pub use cache::{CacheRecord, ReplayClient};
pub use prompt::{render_prompt, target_sentence, PromptMode, TASK_DESCRIPTION};
pub use remote::{RemoteClient, RemoteConfig};
pub use scripted::ScriptedClient;

/// Anything that can turn a prompt into `n` completions.
pub trait TeacherClient: Send + Sync {
    fn generate(&self, prompt: &str, n: usize, temperature: f64) -> Result<Vec<String>>;
}

impl<T: TeacherClient + ?Sized> TeacherClient for std::sync::Arc<T> {
    fn generate(&self, prompt: &str, n: usize, temperature: f64) -> Result<Vec<String>> {
        (**self).generate(prompt, n, temperature)
    }
}

impl<T: TeacherClient + ?Sized> TeacherClient for Box<T> {
    fn generate(&self, prompt: &str, n: usize, temperature: f64) -> Result<Vec<String>> {
        (**self).generate(prompt, n, temperature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    ZeroShot,
    FewShot,
    Beam,
}

impl From<PromptMode> for Origin {
    fn from(mode: PromptMode) -> Self {
        match mode {
            PromptMode::ZeroShot => Origin::ZeroShot,
            PromptMode::FewShot => Origin::FewShot,
        }
    }
}

/// One candidate split of a source sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub source_id: String,
    pub text: String,
    pub segments: Vec<String>,
    pub origin: Origin,
    pub criteria_score: f64,
}

impl SplitCandidate {
    pub fn new(source_id: impl Into<String>, text: impl Into<String>, origin: Origin) -> Self {
        let text = text.into();
        SplitCandidate {
            source_id: source_id.into(),
            segments: segments(&text),
            text,
            origin,
            criteria_score: 0.0,
        }
    }

    pub fn scored(mut self, example: &AnnotatedExample) -> Self {
        self.criteria_score = score_candidate(&self, example);
        self
    }
}

/// Splits at `.`, `!` or `?` followed by whitespace or the end of text.
pub fn segments(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = match chars.peek() {
                None => true,
                Some((_, next)) => next.is_whitespace(),
            };
            if at_boundary {
                let end = i + c.len_utf8();
                let seg = text[start..end].trim();
                if !seg.is_empty() {
                    out.push(seg.to_string());
                }
                start = end;
            }
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    if out.is_empty() {
        out.push(text.trim().to_string());
    }
    out
}

/// Candidate count, survivors and sampling temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub k: usize,
    pub n_candidates: usize,
    pub temperature: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { k: 2, n_candidates: 10, temperature: 1.0 }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n_candidates {
            return Err(Error::ConfigInvalid(format!(
                "need 1 <= k <= n_candidates, got k={} n={}",
                self.k, self.n_candidates
            )));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::ConfigInvalid("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

/// Strips echoed labels and keeps the first non-empty line of a completion.
pub fn clean_completion(raw: &str) -> String {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let line = line
        .strip_prefix("Split sentence:")
        .or_else(|| line.strip_prefix("split sentence:"))
        .unwrap_or(line);
    line.trim().to_string()
}

/// Prompts the teacher once for `config.n_candidates` splits of `example`.
pub fn generate_candidates(
    client: &dyn TeacherClient,
    example: &AnnotatedExample,
    mode: PromptMode,
    demos: &[(AnnotatedExample, String)],
    config: &FilterConfig,
) -> Result<Vec<SplitCandidate>> {
    let prompt = render_prompt(mode, example, demos)?;
    let completions = client.generate(&prompt, config.n_candidates, config.temperature)?;
    if completions.len() != config.n_candidates {
        return Err(Error::TeacherUnavailable(format!(
            "teacher returned {} completions, expected {}",
            completions.len(),
            config.n_candidates
        )));
    }
    Ok(completions
        .iter()
        .map(|c| SplitCandidate::new(&example.id, clean_completion(c), mode.into()).scored(example))
        .collect())
}

/// [`generate_candidates`] over many examples with at most `parallelism`
/// concurrent teacher calls. Output order follows `examples`.
pub fn generate_for_examples(
    client: &dyn TeacherClient,
    examples: &[AnnotatedExample],
    mode: PromptMode,
    demos: &[(AnnotatedExample, String)],
    config: &FilterConfig,
    parallelism: usize,
) -> Result<Vec<Vec<SplitCandidate>>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        examples
            .par_iter()
            .map(|ex| generate_candidates(client, ex, mode, demos, config))
            .collect()
    })
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "so", "of", "to", "in", "on", "at", "for", "with", "is", "was",
    "are", "were", "be", "been", "it", "its", "this", "that", "i", "we", "you", "they", "he", "she", "my",
    "our", "their", "as", "by", "from", "have", "had", "has", "do", "did", "not", "very", "s", "ve", "t",
];

fn content_token(tok: &str) -> Option<String> {
    let t = tok.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    (!t.is_empty() && !STOPWORDS.contains(&t.as_str())).then_some(t)
}

/// Occurrence of `term` in `haystack` on alphanumeric boundaries, after
/// whitespace/case normalization of both.
pub fn contains_term(haystack: &str, term: &str) -> bool {
    let h = normalize(haystack);
    let t = normalize(term);
    if t.is_empty() {
        return false;
    }
    let is_word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric());
    h.match_indices(&t).any(|(i, m)| {
        !is_word(h[..i].chars().next_back()) && !is_word(h[i + m.len()..].chars().next())
    })
}

fn distinct_spans<'a>(terms: impl Iterator<Item = &'a Term>) -> Vec<String> {
    let mut seen = HashSet::new();
    terms
        .filter_map(|t| t.as_span())
        .map(normalize)
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Mean of four criteria in `[0, 1]`: each gold aspect in exactly one
/// segment, each gold opinion in some segment, content tokens preserved,
/// and no more segments than tuples.
pub fn score_candidate(candidate: &SplitCandidate, example: &AnnotatedExample) -> f64 {
    let segs = &candidate.segments;

    let aspects = distinct_spans(example.quads.iter().map(|q| &q.aspect));
    let aspect_score = if aspects.is_empty() {
        1.0
    } else {
        let ok = aspects
            .iter()
            .filter(|a| segs.iter().filter(|s| contains_term(s, a)).count() == 1)
            .count();
        ok as f64 / aspects.len() as f64
    };

    let opinions = distinct_spans(example.quads.iter().filter_map(|q| q.opinion.as_ref()));
    let opinion_score = if opinions.is_empty() {
        1.0
    } else {
        let ok = opinions
            .iter()
            .filter(|o| segs.iter().any(|s| contains_term(s, o)))
            .count();
        ok as f64 / opinions.len() as f64
    };

    let original: HashSet<String> = example.text.split_whitespace().filter_map(content_token).collect();
    let kept: HashSet<String> = candidate.text.split_whitespace().filter_map(content_token).collect();
    let spelling_score = if original.is_empty() {
        1.0
    } else {
        original.iter().filter(|t| kept.contains(*t)).count() as f64 / original.len() as f64
    };

    let n_quads = example.quads.len().max(1);
    let count_score = if segs.len() <= n_quads {
        1.0
    } else {
        n_quads as f64 / segs.len() as f64
    };

    (aspect_score + opinion_score + spelling_score + count_score) / 4.0
}

/// Deduplicates by text and keeps the best `k` by score, then fewer
/// segments, then text.
pub fn filter_top_k(candidates: &[SplitCandidate], config: &FilterConfig) -> Result<Vec<SplitCandidate>> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut seen = HashSet::new();
    let mut unique: Vec<SplitCandidate> = candidates
        .iter()
        .filter(|c| seen.insert(c.text.as_str()))
        .cloned()
        .collect();
    unique.sort_by(|a, b| {
        b.criteria_score
            .total_cmp(&a.criteria_score)
            .then(a.segments.len().cmp(&b.segments.len()))
            .then_with(|| a.text.cmp(&b.text))
    });
    unique.truncate(config.k);
    Ok(unique)
}
