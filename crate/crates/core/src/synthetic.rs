//! Synthetic restaurant-review corpus and an offline rule-based teacher.
//!
//! Compound sentences join clauses that each carry one (aspect, opinion)
//! pair with different opinions, so the segment-level [`LexiconBackend`]
//! mislabels all but the first aspect unless the sentence is split first.
//!
//! [`LexiconBackend`]: crate::backend::LexiconBackend

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::Lexicon;
use crate::complexity::{classify_parts, ComplexityLabel, CONJUNCTIONS};
use crate::data::{parse_tuples, AnnotatedExample, Polarity, Quadruplet, Task};
use crate::error::Result;
use crate::io::sha256_hex;
use crate::teacher::{target_sentence, PromptMode, ScriptedClient};

const ASPECTS: &[(&str, &str)] = &[
    ("pizza", "food quality"),
    ("pasta", "food quality"),
    ("sushi", "food quality"),
    ("dessert", "food quality"),
    ("soup", "food quality"),
    ("wine", "drinks quality"),
    ("coffee", "drinks quality"),
    ("staff", "service general"),
    ("waiter", "service general"),
    ("service", "service general"),
    ("decor", "ambience general"),
    ("music", "ambience general"),
    ("prices", "restaurant prices"),
];

const OPINIONS: &[(&str, Polarity)] = &[
    ("great", Polarity::Positive),
    ("delicious", Polarity::Positive),
    ("friendly", Polarity::Positive),
    ("excellent", Polarity::Positive),
    ("amazing", Polarity::Positive),
    ("lovely", Polarity::Positive),
    ("terrible", Polarity::Negative),
    ("rude", Polarity::Negative),
    ("awful", Polarity::Negative),
    ("bland", Polarity::Negative),
    ("slow", Polarity::Negative),
    ("cold", Polarity::Negative),
    ("okay", Polarity::Neutral),
    ("average", Polarity::Neutral),
];

const CLAUSES: &[&str] = &["the {a} was {o}", "the {a} is {o}", "the {a} was really {o}", "our {a} was {o}"];
const TAILS: &[&str] = &["i will be back", "we left early", "i would return"];

pub fn lexicon() -> Lexicon {
    Lexicon {
        aspects: ASPECTS.iter().map(|(a, c)| (a.to_string(), c.to_string())).collect(),
        opinions: OPINIONS.iter().map(|(o, p)| (o.to_string(), *p)).collect(),
        default_category: "restaurant general".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n: usize,
    pub seed: u64,
    /// Share of single-clause, single-tuple sentences.
    pub simple_fraction: f64,
    /// Share of compound sentences with three clauses.
    pub three_clause_fraction: f64,
    /// Share of single-tuple sentences with a trailing conjoined clause.
    pub tail_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { n: 240, seed: 7, simple_fraction: 0.3, three_clause_fraction: 0.2, tail_fraction: 0.1 }
    }
}

fn clause(rng: &mut ChaCha8Rng, aspect: &str, opinion: &str) -> String {
    CLAUSES.choose(rng).unwrap().replace("{a}", aspect).replace("{o}", opinion)
}

/// Generates `config.n` annotated sentences with ids `syn-<i>`.
pub fn corpus(config: &SyntheticConfig) -> Vec<AnnotatedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.n)
        .map(|i| {
            let roll: f64 = rng.gen();
            let n_clauses = if roll < config.simple_fraction + config.tail_fraction {
                1
            } else if rng.gen::<f64>() < config.three_clause_fraction {
                3
            } else {
                2
            };
            let aspects: Vec<_> = ASPECTS.choose_multiple(&mut rng, n_clauses).collect();
            let opinions: Vec<_> = OPINIONS.choose_multiple(&mut rng, n_clauses).collect();
            let mut text = String::new();
            let mut quads = Vec::new();
            for (k, ((a, cat), (o, pol))) in aspects.iter().zip(&opinions).enumerate() {
                if k > 0 {
                    let last = k + 1 == n_clauses;
                    let joiner = if !last {
                        " , "
                    } else if opinions[k - 1].1 == *pol {
                        " and "
                    } else {
                        " but "
                    };
                    text.push_str(joiner);
                }
                text.push_str(&clause(&mut rng, a, o));
                quads.push(Quadruplet::new(a, cat, *pol, o));
            }
            if n_clauses == 1 && roll >= config.simple_fraction {
                text.push_str(" and ");
                text.push_str(TAILS.choose(&mut rng).unwrap());
            }
            text.push_str(if rng.gen::<f64>() < 0.85 { " ." } else { " !" });
            AnnotatedExample::new(format!("syn-{i}"), text, quads, Task::Asqp)
        })
        .collect()
}

fn is_joiner(tok: &str) -> bool {
    CONJUNCTIONS.contains(&tok)
}

/// Splits before every inner conjunction and turns comma joins into full
/// stops: `a was x , b was y and c was z .` becomes
/// `a was x . b was y . and c was z .`
pub fn gold_split(text: &str) -> String {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let mut out: Vec<&str> = Vec::with_capacity(toks.len() + 4);
    for (i, tok) in toks.iter().enumerate() {
        if i > 0 && is_joiner(tok) {
            out.push(".");
            out.push(tok);
        } else if *tok == "," {
            out.push(".");
        } else {
            out.push(tok);
        }
    }
    out.join(" ")
}

/// Like [`gold_split`] but with the full stop attached to the previous word.
pub fn attached_split(text: &str) -> String {
    gold_split(text).replace(" . ", ". ")
}

/// Splits only at the first boundary.
fn partial_split(text: &str) -> String {
    let full = gold_split(text);
    let toks: Vec<&str> = text.split_whitespace().collect();
    let Some(first) = toks.iter().enumerate().position(|(i, t)| (i > 0 && is_joiner(t)) || *t == ",") else {
        return full;
    };
    let mut out: Vec<&str> = toks[..first].to_vec();
    if toks[first] == "," {
        out.push(".");
        out.extend(&toks[first + 1..]);
    } else {
        out.push(".");
        out.extend(&toks[first..]);
    }
    out.join(" ")
}

/// Also breaks between each aspect and its predicate.
fn over_split(text: &str, aspects: &[String]) -> String {
    let gold = gold_split(text);
    let toks: Vec<&str> = gold.split_whitespace().collect();
    let mut out = Vec::new();
    for (i, tok) in toks.iter().enumerate() {
        out.push(*tok);
        if aspects.iter().any(|a| a == tok) && toks.get(i + 1).is_some_and(|n| *n != ".") {
            out.push(".");
        }
    }
    out.join(" ")
}

/// Gold split with one opinion word misspelled.
fn typo_split(text: &str, opinions: &[String]) -> String {
    let gold = gold_split(text);
    match opinions.first() {
        Some(o) => {
            let mut doubled = o.clone();
            doubled.push(o.chars().last().unwrap_or('x'));
            gold.replacen(&format!(" {o} "), &format!(" {doubled} "), 1)
        }
        None => gold,
    }
}

#[derive(Clone, Copy)]
enum Variant {
    Original,
    Spaced,
    Attached,
    Partial,
    Over,
    Typo,
}

fn variant_pattern(mode: PromptMode, label: ComplexityLabel, n_quads: usize) -> &'static [Variant] {
    use Variant::*;
    match (label, n_quads > 1, mode) {
        (ComplexityLabel::Simple, _, _) => &[Original],
        (_, true, PromptMode::ZeroShot) => &[Spaced, Attached, Spaced, Over, Spaced, Attached, Typo, Spaced, Attached, Spaced],
        (_, true, PromptMode::FewShot) => &[Spaced, Attached, Partial, Over, Spaced, Typo, Original, Attached, Partial, Spaced],
        (_, false, PromptMode::ZeroShot) => &[Original, Spaced, Original, Attached, Original, Spaced, Typo, Original, Over, Original],
        (_, false, PromptMode::FewShot) => &[Original, Spaced, Attached, Original, Over, Original, Typo, Spaced, Original, Partial],
    }
}

/// Candidate splits a cooperative teacher might return for `text`, in a
/// rotation fixed by `salt`.
pub fn teacher_candidates(text: &str, quads: &[Quadruplet], mode: PromptMode, n: usize, salt: usize) -> Vec<String> {
    let label = classify_parts(text, quads.len());
    let aspects: Vec<String> = quads.iter().filter_map(|q| q.aspect.as_span().map(str::to_string)).collect();
    let opinions: Vec<String> = quads
        .iter()
        .filter_map(|q| q.opinion.as_ref().and_then(|o| o.as_span()).map(str::to_string))
        .collect();
    let pattern = variant_pattern(mode, label, quads.len());
    (0..n)
        .map(|i| match pattern[(i + salt) % pattern.len()] {
            Variant::Original => text.to_string(),
            Variant::Spaced => gold_split(text),
            Variant::Attached => attached_split(text),
            Variant::Partial => partial_split(text),
            Variant::Over => over_split(text, &aspects),
            Variant::Typo => typo_split(text, &opinions),
        })
        .collect()
}

/// Offline teacher that reads the target sentence and tuples back out of a
/// rendered prompt and answers with [`teacher_candidates`].
pub fn teacher() -> ScriptedClient {
    ScriptedClient::from_fn(|prompt, n, _temperature| {
        let text = target_sentence(prompt).unwrap_or_default().to_string();
        let quads_line = prompt
            .rsplit_once("Quadruplets: ")
            .and_then(|(_, rest)| rest.lines().next())
            .unwrap_or("[]");
        let quads: Vec<Quadruplet> = parse_tuples(quads_line, Task::Asqp, None).unwrap_or_default();
        let mode = if prompt.contains("[Example 1]") { PromptMode::FewShot } else { PromptMode::ZeroShot };
        let salt = usize::from_str_radix(&sha256_hex(prompt.as_bytes())[..4], 16).unwrap_or(0);
        Ok(teacher_candidates(&text, &quads, mode, n, salt))
    })
}

/// Demonstrations for few-shot prompts: the first compound examples with
/// their gold splits.
pub fn demos(examples: &[AnnotatedExample], count: usize) -> Vec<(AnnotatedExample, String)> {
    examples
        .iter()
        .filter(|e| e.quads.len() > 1)
        .take(count)
        .map(|e| (e.clone(), gold_split(&e.text)))
        .collect()
}

/// `n` (source, gold split) pairs for quick training checks.
pub fn split_pairs(n: usize, seed: u64) -> Result<Vec<(String, String)>> {
    let cfg = SyntheticConfig { n, seed, simple_fraction: 0.0, tail_fraction: 0.0, ..Default::default() };
    Ok(corpus(&cfg).into_iter().map(|e| (e.text.clone(), gold_split(&e.text))).collect())
}
