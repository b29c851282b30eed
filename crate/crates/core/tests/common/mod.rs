//! Helpers shared by the integration test targets: random small corpora,
//! brute-force metric oracles and a table-driven backend.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use aspect_splitter::backend::AbsaBackend;
use aspect_splitter::data::{AnnotatedExample, Polarity, Quadruplet, Task, Term};
use aspect_splitter::Result;
use rand::seq::SliceRandom;
use rand::Rng;

const ASPECTS: [&str; 4] = ["pizza", "staff", "null", "wine"];
const CATEGORIES: [&str; 2] = ["food quality", "service general"];
const OPINIONS: [&str; 3] = ["great", "rude", "null"];

/// A quad drawn from tiny pools so that collisions are frequent.
pub fn random_quad(rng: &mut impl Rng) -> Quadruplet {
    Quadruplet {
        aspect: Term::parse(ASPECTS.choose(rng).unwrap()),
        category: Some(CATEGORIES.choose(rng).unwrap().to_string()),
        polarity: *Polarity::ALL.choose(rng).unwrap(),
        opinion: Some(Term::parse(OPINIONS.choose(rng).unwrap())),
    }
}

pub fn random_quads(rng: &mut impl Rng, max: usize) -> Vec<Quadruplet> {
    (0..rng.gen_range(0..=max)).map(|_| random_quad(rng)).collect()
}

/// Up to `max_examples` gold examples with up to `max_quads` tuples each,
/// plus predictions for every id.
pub fn random_corpus(
    rng: &mut impl Rng,
    max_examples: usize,
    max_quads: usize,
) -> (Vec<AnnotatedExample>, BTreeMap<String, Vec<Quadruplet>>) {
    let n = rng.gen_range(1..=max_examples);
    let mut golds = Vec::new();
    let mut preds = BTreeMap::new();
    for i in 0..n {
        let id = format!("r-{i}");
        let text = if rng.gen_bool(0.5) { "pizza great" } else { "pizza great , staff rude" };
        golds.push(AnnotatedExample::new(&id, text, random_quads(rng, max_quads), Task::Asqp));
        preds.insert(id, random_quads(rng, max_quads));
    }
    (golds, preds)
}

/// Deduplicates by pairwise comparison, no ordering or hashing involved.
pub fn brute_unique<T: PartialEq + Clone>(items: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for x in items {
        if !out.iter().any(|y| y == x) {
            out.push(x.clone());
        }
    }
    out
}

/// `(matched, predicted, gold)` by all-pairs comparison of unique items.
pub fn brute_counts<T: PartialEq + Clone>(pred: &[T], gold: &[T]) -> (usize, usize, usize) {
    let p = brute_unique(pred);
    let g = brute_unique(gold);
    let matched = p.iter().filter(|x| g.iter().any(|y| y == *x)).count();
    (matched, p.len(), g.len())
}

pub fn brute_prf(matched: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    let p = if predicted == 0 { 0.0 } else { matched as f64 / predicted as f64 };
    let r = if gold == 0 { 0.0 } else { matched as f64 / gold as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Micro scores summed over a corpus with a per-example projection.
pub fn brute_micro<T: PartialEq + Clone>(
    golds: &[AnnotatedExample],
    preds: &BTreeMap<String, Vec<Quadruplet>>,
    project: impl Fn(&Quadruplet) -> T,
) -> (f64, f64, f64) {
    let (mut m, mut p, mut g) = (0, 0, 0);
    for gold in golds {
        let pv: Vec<T> = preds[&gold.id].iter().map(&project).collect();
        let gv: Vec<T> = gold.quads.iter().map(&project).collect();
        let (a, b, c) = brute_counts(&pv, &gv);
        m += a;
        p += b;
        g += c;
    }
    brute_prf(m, p, g)
}

/// Backend answering from a fixed text-to-tuples table; unknown texts get
/// no tuples.
#[derive(Default)]
pub struct TableBackend {
    pub table: HashMap<String, Vec<Quadruplet>>,
}

impl TableBackend {
    pub fn with(mut self, text: &str, quads: Vec<Quadruplet>) -> Self {
        self.table.insert(text.to_string(), quads);
        self
    }
}

impl AbsaBackend for TableBackend {
    fn name(&self) -> &str {
        "table"
    }

    fn predict(&self, text: &str, _task: Task) -> Result<Vec<Quadruplet>> {
        Ok(self.table.get(text).cloned().unwrap_or_default())
    }
}

/// Optional dataset root for the dataset-dependent checks, laid out as
/// `<root>/<task>/<dataset>/<split>.txt`.
pub fn data_root() -> Option<std::path::PathBuf> {
    std::env::var_os("ABSA_DATA_DIR").map(Into::into).filter(|p: &std::path::PathBuf| p.is_dir())
}
