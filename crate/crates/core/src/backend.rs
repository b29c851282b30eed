//! Target ABSA models behind one prediction interface.
//!
//! The splitter never touches a backend's parameters; it only rewrites the
//! text a backend sees. Implementations here: a deterministic lexicon model,
//! an LLM prompted for tuples, and an adapter that shells out to an external
//! fine-tuned model.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::{parse_tuples, Polarity, Quadruplet, Task, Term};
use crate::error::{Error, Result};
use crate::teacher::{contains_term, segments, TeacherClient};

/// An ABSA model: text in, tuples out. Deterministic for a fixed
/// configuration; predicted terms are spans of the input or NULL.
pub trait AbsaBackend: Send + Sync {
    fn name(&self) -> &str;

    fn predict(&self, text: &str, task: Task) -> Result<Vec<Quadruplet>>;
}

impl<B: AbsaBackend + ?Sized> AbsaBackend for &B {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn predict(&self, text: &str, task: Task) -> Result<Vec<Quadruplet>> {
        (**self).predict(text, task)
    }
}

impl<B: AbsaBackend + ?Sized> AbsaBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn predict(&self, text: &str, task: Task) -> Result<Vec<Quadruplet>> {
        (**self).predict(text, task)
    }
}

/// Drops the elements a task does not have.
pub fn shape_for_task(mut quad: Quadruplet, task: Task) -> Quadruplet {
    if !task.has_category() {
        quad.category = None;
    }
    if !task.has_opinion() {
        quad.opinion = None;
    }
    quad
}

/// Aspect and opinion word lists for [`LexiconBackend`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    /// Aspect term to category.
    pub aspects: BTreeMap<String, String>,
    /// Opinion term to polarity.
    pub opinions: BTreeMap<String, Polarity>,
    /// Category for implicit-aspect predictions.
    pub default_category: String,
}

/// Segment-level lexicon matcher.
///
/// Within each sentence segment every aspect found is paired with the first
/// opinion of that segment. A segment holding two (aspect, opinion) pairs
/// therefore mislabels the second aspect; split input does not.
#[derive(Debug, Clone)]
pub struct LexiconBackend {
    lexicon: Lexicon,
    name: String,
}

impl LexiconBackend {
    pub fn new(lexicon: Lexicon) -> Self {
        LexiconBackend { lexicon, name: "lexicon".into() }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    fn find<'a, V>(words: &[String], table: &'a BTreeMap<String, V>) -> Vec<(usize, &'a str, &'a V)> {
        // longest match first, terms up to three tokens
        let mut out = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let mut hit = None;
            for len in (1..=3.min(words.len() - i)).rev() {
                let key = words[i..i + len].join(" ");
                if let Some((k, v)) = table.get_key_value(&key) {
                    hit = Some((len, k.as_str(), v));
                    break;
                }
            }
            match hit {
                Some((len, k, v)) => {
                    out.push((i, k, v));
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

impl AbsaBackend for LexiconBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, text: &str, task: Task) -> Result<Vec<Quadruplet>> {
        let mut out: Vec<Quadruplet> = Vec::new();
        for seg in segments(text) {
            let words: Vec<String> = seg
                .split_whitespace()
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
                .filter(|w| !w.is_empty())
                .collect();
            let aspects = Self::find(&words, &self.lexicon.aspects);
            let Some(&(_, opinion, polarity)) = Self::find(&words, &self.lexicon.opinions).first() else {
                continue;
            };
            let mut push = |aspect: Term, category: &str| {
                let q = shape_for_task(
                    Quadruplet {
                        aspect,
                        category: Some(category.to_string()),
                        polarity: *polarity,
                        opinion: Some(Term::Span(opinion.to_string())),
                    },
                    task,
                );
                if !out.contains(&q) {
                    out.push(q);
                }
            };
            if aspects.is_empty() {
                push(Term::Null, &self.lexicon.default_category);
            }
            for (_, aspect, category) in aspects {
                push(Term::Span(aspect.to_string()), category);
            }
        }
        Ok(out)
    }
}

/// Keeps only tuples whose explicit terms occur in `text`.
fn grounded(quads: Vec<Quadruplet>, text: &str) -> Vec<Quadruplet> {
    quads
        .into_iter()
        .filter(|q| {
            std::iter::once(&q.aspect)
                .chain(q.opinion.as_ref())
                .all(|t| t.as_span().map_or(true, |s| contains_term(text, s)))
        })
        .collect()
}

/// Extracts the first bracketed list from free-form model output.
fn tuple_list(raw: &str) -> Option<&str> {
    let start = raw.find('[')?;
    let end = raw.rfind(']')?;
    (end > start).then(|| &raw[start..=end])
}

/// Prompts an LLM for tuples and parses its Python-style list answer.
pub struct LlmBackend {
    client: Box<dyn TeacherClient>,
    name: String,
}

impl LlmBackend {
    pub fn new(client: Box<dyn TeacherClient>, name: impl Into<String>) -> Self {
        LlmBackend { client, name: name.into() }
    }

    pub fn prompt(text: &str, task: Task) -> String {
        let shape = match task {
            Task::Asqp | Task::Acos => "[aspect, category, sentiment, opinion]",
            Task::Tasd => "[aspect, category, sentiment]",
            Task::Aste => "[aspect, opinion, sentiment]",
        };
        format!(
            "Extract every {shape} tuple expressed in the review sentence below. Use 'null' for implicit aspects or opinions. \
             Sentiment is one of positive, negative, neutral. Answer with a Python list of lists only.\n\nSentence: {text}\nTuples:"
        )
    }
}

impl AbsaBackend for LlmBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, text: &str, task: Task) -> Result<Vec<Quadruplet>> {
        let answer = self
            .client
            .generate(&Self::prompt(text, task), 1, 0.0)
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        let Some(list) = answer.first().and_then(|a| tuple_list(a)) else {
            return Ok(Vec::new());
        };
        // unparseable answers count as predicting nothing
        Ok(parse_tuples(list, task, None).map(|q| grounded(q, text)).unwrap_or_default())
    }
}

/// Runs an external program per prediction: the sentence goes to stdin and
/// a tuple list is read from stdout.
#[derive(Debug, Clone)]
pub struct CommandBackend {
    program: String,
    args: Vec<String>,
    name: String,
}

impl CommandBackend {
    pub fn new(program: impl Into<String>, args: Vec<String>, name: impl Into<String>) -> Self {
        CommandBackend { program: program.into(), args, name: name.into() }
    }
}

impl AbsaBackend for CommandBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, text: &str, task: Task) -> Result<Vec<Quadruplet>> {
        let unavailable = |e: std::io::Error| Error::BackendUnavailable(format!("{}: {e}", self.program));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .env("ABSA_TASK", task.as_str())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(unavailable)?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(format!("{text}\n").as_bytes())
            .map_err(unavailable)?;
        let output = child.wait_with_output().map_err(unavailable)?;
        if !output.status.success() {
            return Err(Error::BackendUnavailable(format!("{} exited with {}", self.program, output.status)));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        match tuple_list(&stdout) {
            Some(list) => Ok(grounded(parse_tuples(list, task, None)?, text)),
            None => Ok(Vec::new()),
        }
    }
}

/// Per-text memoization in front of any backend.
pub struct MemoBackend<B> {
    inner: B,
    cache: Mutex<HashMap<(String, Task), Vec<Quadruplet>>>,
}

impl<B: AbsaBackend> MemoBackend<B> {
    pub fn new(inner: B) -> Self {
        MemoBackend { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("memo lock poisoned").len()
    }
}

impl<B: AbsaBackend> AbsaBackend for MemoBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn predict(&self, text: &str, task: Task) -> Result<Vec<Quadruplet>> {
        let key = (text.to_string(), task);
        if let Some(hit) = self.cache.lock().expect("memo lock poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let out = self.inner.predict(text, task)?;
        self.cache.lock().expect("memo lock poisoned").insert(key, out.clone());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use crate::teacher::ScriptedClient;

    fn q(a: &str, c: &str, p: Polarity, o: &str) -> Quadruplet {
        Quadruplet::new(a, c, p, o)
    }

    #[test]
    fn lexicon_confuses_fused_clauses_but_not_split_ones() {
        let b = LexiconBackend::new(synthetic::lexicon());
        let fused = b.predict("the pizza was great but the staff was rude .", Task::Asqp).unwrap();
        assert_eq!(
            fused,
            vec![
                q("pizza", "food quality", Polarity::Positive, "great"),
                q("staff", "service general", Polarity::Positive, "great"),
            ]
        );
        let split = b.predict("the pizza was great . but the staff was rude .", Task::Asqp).unwrap();
        assert_eq!(
            split,
            vec![
                q("pizza", "food quality", Polarity::Positive, "great"),
                q("staff", "service general", Polarity::Negative, "rude"),
            ]
        );
    }

    #[test]
    fn lexicon_implicit_aspect_and_triplet_shapes() {
        let b = LexiconBackend::new(synthetic::lexicon());
        let out = b.predict("simply great .", Task::Acos).unwrap();
        assert_eq!(out[0].aspect, Term::Null);
        let tasd = b.predict("the pizza was great .", Task::Tasd).unwrap();
        assert_eq!(tasd[0].opinion, None);
        let aste = b.predict("the pizza was great .", Task::Aste).unwrap();
        assert_eq!(aste[0].category, None);
        assert!(b.predict("nothing here .", Task::Asqp).unwrap().is_empty());
    }

    #[test]
    fn llm_backend_parses_and_grounds() {
        let client = ScriptedClient::fixed(vec![
            "Sure: [['pizza', 'food quality', 'positive', 'great'], ['ghost', 'food quality', 'positive', 'great']]".into(),
        ]);
        let b = LlmBackend::new(Box::new(client), "llm");
        let out = b.predict("the pizza was great .", Task::Asqp).unwrap();
        assert_eq!(out, vec![q("pizza", "food quality", Polarity::Positive, "great")]);

        let silent = LlmBackend::new(Box::new(ScriptedClient::fixed(vec!["no idea".into()])), "llm");
        assert!(silent.predict("x .", Task::Asqp).unwrap().is_empty());
    }

    #[test]
    fn command_backend_round_trip() {
        let b = CommandBackend::new(
            "sh",
            vec!["-c".into(), "read line; echo \"[['pizza', 'food quality', 'positive', 'great']]\"".into()],
            "cmd",
        );
        let out = b.predict("the pizza was great .", Task::Asqp).unwrap();
        assert_eq!(out, vec![q("pizza", "food quality", Polarity::Positive, "great")]);
        let missing = CommandBackend::new("/nonexistent/absa-model", vec![], "cmd");
        assert!(matches!(missing.predict("x", Task::Asqp), Err(Error::BackendUnavailable(_))));
    }

    #[test]
    fn memo_caches_per_text() {
        let b = MemoBackend::new(LexiconBackend::new(synthetic::lexicon()));
        let a = b.predict("the pizza was great .", Task::Asqp).unwrap();
        let c = b.predict("the pizza was great .", Task::Asqp).unwrap();
        assert_eq!(a, c);
        assert_eq!(b.cached(), 1);
    }
}
