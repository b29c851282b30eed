//! Plug-and-play inference and corpus scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::AbsaBackend;
use crate::complexity::{classify, ComplexityLabel};
use crate::data::{AnnotatedExample, Quadruplet, Task, Term};
use crate::error::{Error, Result};
use crate::io::to_csv;
use crate::metrics::{match_quads, match_sets, sentence_f1, MatchCounts, Prf};
use crate::splitter::{split, SeqModel};
use crate::teacher::{segments, SplitCandidate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceOptions {
    pub beam_width: usize,
    /// Query the backend once per split segment and union the tuples,
    /// instead of once on the whole split text.
    pub per_segment: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions { beam_width: 1, per_segment: false }
    }
}

fn dedup(quads: Vec<Quadruplet>) -> Vec<Quadruplet> {
    let mut seen = BTreeSet::new();
    quads.into_iter().filter(|q| seen.insert(q.clone())).collect()
}

/// The text the backend sees for `example`: simple inputs pass through.
pub fn split_for_inference(splitter: &dyn SeqModel, example: &AnnotatedExample, beam_width: usize) -> String {
    split(splitter, &example.text, Some(classify(example)), beam_width)
}

fn predict_text<B: AbsaBackend + ?Sized>(backend: &B, text: &str, task: Task, per_segment: bool) -> Result<Vec<Quadruplet>> {
    if !per_segment {
        return Ok(dedup(backend.predict(text, task)?));
    }
    let mut out = Vec::new();
    for seg in segments(text) {
        out.extend(backend.predict(&seg, task)?);
    }
    Ok(dedup(out))
}

pub fn plug_and_play_predict<B: AbsaBackend + ?Sized>(
    splitter: &dyn SeqModel,
    backend: &B,
    example: &AnnotatedExample,
    options: &InferenceOptions,
) -> Result<Vec<Quadruplet>> {
    let text = split_for_inference(splitter, example, options.beam_width);
    predict_text(backend, &text, example.task, options.per_segment)
}

/// One inference record: the text sent to the backend and its tuples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub text: String,
    pub quads: Vec<Quadruplet>,
}

/// Runs plug-and-play inference over a corpus in parallel. Output follows
/// input order.
pub fn predict_corpus<B: AbsaBackend + ?Sized>(
    splitter: &dyn SeqModel,
    backend: &B,
    examples: &[AnnotatedExample],
    options: &InferenceOptions,
) -> Result<Vec<Prediction>> {
    examples
        .par_iter()
        .map(|ex| {
            let text = split_for_inference(splitter, ex, options.beam_width);
            let quads = predict_text(backend, &text, ex.task, options.per_segment)?;
            Ok(Prediction { id: ex.id.clone(), text, quads })
        })
        .collect()
}

pub fn predictions_by_id(predictions: &[Prediction]) -> BTreeMap<String, Vec<Quadruplet>> {
    predictions.iter().map(|p| (p.id.clone(), p.quads.clone())).collect()
}

/// Scores for one complexity subset. `accuracy` is recall.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SubsetScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub n_examples: usize,
}

impl SubsetScores {
    fn from_counts(c: MatchCounts, n_examples: usize) -> Self {
        let Prf { precision, recall, f1 } = c.prf();
        SubsetScores { precision, recall, f1, accuracy: recall, n_examples }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_complexity: BTreeMap<ComplexityLabel, SubsetScores>,
    pub aspect_f1: f64,
    pub n_examples: usize,
    pub counts: MatchCounts,
}

fn check_ids(predictions: &BTreeMap<String, Vec<Quadruplet>>, golds: &[AnnotatedExample]) -> Result<()> {
    let gold_ids: BTreeSet<&str> = golds.iter().map(|g| g.id.as_str()).collect();
    if gold_ids.len() != golds.len() {
        return Err(Error::IdMismatch("duplicate gold ids".into()));
    }
    if let Some(extra) = predictions.keys().find(|k| !gold_ids.contains(k.as_str())) {
        return Err(Error::IdMismatch(format!("prediction for unknown id {extra}")));
    }
    if let Some(missing) = golds.iter().find(|g| !predictions.contains_key(&g.id)) {
        return Err(Error::IdMismatch(format!("no prediction for id {}", missing.id)));
    }
    Ok(())
}

fn aspect_set(quads: &[Quadruplet]) -> BTreeSet<&Term> {
    quads.iter().map(|q| &q.aspect).collect()
}

/// Micro-averaged scores over every tuple in the corpus.
pub fn evaluate(predictions: &BTreeMap<String, Vec<Quadruplet>>, golds: &[AnnotatedExample]) -> Result<EvalReport> {
    let labels: Vec<ComplexityLabel> = golds.iter().map(classify).collect();
    evaluate_labeled(predictions, golds, &labels)
}

fn evaluate_labeled(
    predictions: &BTreeMap<String, Vec<Quadruplet>>,
    golds: &[AnnotatedExample],
    labels: &[ComplexityLabel],
) -> Result<EvalReport> {
    check_ids(predictions, golds)?;
    let mut total = MatchCounts::default();
    let mut aspects = MatchCounts::default();
    let mut by_label: BTreeMap<ComplexityLabel, (MatchCounts, usize)> = BTreeMap::new();
    for (gold, label) in golds.iter().zip(labels) {
        let pred = &predictions[&gold.id];
        let c = match_quads(pred, &gold.quads);
        total += c;
        aspects += match_sets(aspect_set(pred), aspect_set(&gold.quads));
        let slot = by_label.entry(*label).or_default();
        slot.0 += c;
        slot.1 += 1;
    }
    let Prf { precision, recall, f1 } = total.prf();
    Ok(EvalReport {
        precision,
        recall,
        f1,
        per_complexity: by_label.into_iter().map(|(k, (c, n))| (k, SubsetScores::from_counts(c, n))).collect(),
        aspect_f1: aspects.prf().f1,
        n_examples: golds.len(),
        counts: total,
    })
}

/// Micro F1 over per-example aspect-term sets (NULL counts as a term).
pub fn aspect_level_f1(predictions: &BTreeMap<String, Vec<Quadruplet>>, golds: &[AnnotatedExample]) -> Result<f64> {
    check_ids(predictions, golds)?;
    let mut c = MatchCounts::default();
    for gold in golds {
        c += match_sets(aspect_set(&predictions[&gold.id]), aspect_set(&gold.quads));
    }
    Ok(c.prf().f1)
}

/// Drops the element a triplet task lacks and deduplicates. Quadruplet
/// tasks only deduplicate.
pub fn project_to_triplet(quads: &[Quadruplet], task: Task) -> Vec<Quadruplet> {
    dedup(
        quads
            .iter()
            .cloned()
            .map(|mut q| {
                match task {
                    Task::Tasd => q.opinion = None,
                    Task::Aste => q.category = None,
                    Task::Asqp | Task::Acos => {}
                }
                q
            })
            .collect(),
    )
}

/// Projects predictions and golds onto `task` before scoring. Complexity
/// labels come from the unprojected golds.
pub fn evaluate_projected(
    predictions: &BTreeMap<String, Vec<Quadruplet>>,
    golds: &[AnnotatedExample],
    task: Task,
) -> Result<EvalReport> {
    let labels: Vec<ComplexityLabel> = golds.iter().map(classify).collect();
    let preds = predictions.iter().map(|(k, v)| (k.clone(), project_to_triplet(v, task))).collect();
    let golds: Vec<AnnotatedExample> = golds
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.quads = project_to_triplet(&g.quads, task);
            g
        })
        .collect();
    evaluate_labeled(&preds, &golds, &labels)
}

/// Best achievable sentence F1 as more candidates become available.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OracleCurve {
    pub points: Vec<(usize, f64)>,
}

impl OracleCurve {
    pub fn is_non_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1)
    }

    pub fn at(&self, m: usize) -> Option<f64> {
        self.points.iter().find(|(k, _)| *k == m).map(|(_, f)| *f)
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self.points.iter().map(|(m, f)| vec![m.to_string(), format!("{f:.6}")]).collect();
        to_csv(&["num_candidates", "f1"], &rows)
    }
}

/// Per-example curve from precomputed F1 values. Point `m` is the best of
/// the original and the first `m` candidates.
pub fn curve_from_scores(f0: f64, candidate_f1: &[f64], max_m: usize) -> OracleCurve {
    let mut best = f0;
    let mut points = vec![(0, f0)];
    for m in 1..=max_m {
        if let Some(f) = candidate_f1.get(m - 1) {
            best = best.max(*f);
        }
        points.push((m, best));
    }
    OracleCurve { points }
}

fn candidate_scores<B: AbsaBackend + ?Sized>(
    example: &AnnotatedExample,
    candidates: &[&SplitCandidate],
    backend: &B,
    max_m: usize,
) -> Result<(f64, Vec<f64>)> {
    let f0 = sentence_f1(&backend.predict(&example.text, example.task)?, &example.quads).f1;
    let scores = candidates
        .iter()
        .take(max_m)
        .map(|c| Ok(sentence_f1(&backend.predict(&c.text, example.task)?, &example.quads).f1))
        .collect::<Result<Vec<_>>>()?;
    Ok((f0, scores))
}

pub fn oracle_vote<B: AbsaBackend + ?Sized>(
    example: &AnnotatedExample,
    candidates: &[SplitCandidate],
    backend: &B,
    max_m: usize,
) -> Result<OracleCurve> {
    let refs: Vec<&SplitCandidate> = candidates.iter().collect();
    let (f0, scores) = candidate_scores(example, &refs, backend, max_m)?;
    Ok(curve_from_scores(f0, &scores, max_m))
}

/// Corpus curve: the mean over examples of each example's oracle F1.
/// Candidates are matched to examples by `source_id`, in generation order.
pub fn corpus_oracle_curve<B: AbsaBackend + ?Sized>(
    examples: &[AnnotatedExample],
    candidates: &[SplitCandidate],
    backend: &B,
    max_m: usize,
) -> Result<OracleCurve> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut by_id: BTreeMap<&str, Vec<&SplitCandidate>> = BTreeMap::new();
    for c in candidates {
        by_id.entry(c.source_id.as_str()).or_default().push(c);
    }
    let curves = examples
        .par_iter()
        .map(|ex| {
            let cands = by_id.get(ex.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            let (f0, scores) = candidate_scores(ex, cands, backend, max_m)?;
            Ok(curve_from_scores(f0, &scores, max_m))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = curves.len() as f64;
    let points = (0..=max_m)
        .map(|m| (m, curves.iter().map(|c| c.points[m].1).sum::<f64>() / n))
        .collect();
    Ok(OracleCurve { points })
}

/// Structured report record, one per (dataset, backend, splitter) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub task: Task,
    pub dataset: String,
    pub backend: String,
    pub splitter: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub aspect_f1: f64,
    pub simple: SubsetScores,
    pub compound: SubsetScores,
}

impl ReportRecord {
    pub fn new(task: Task, dataset: &str, backend: &str, splitter: &str, report: &EvalReport) -> Self {
        let subset = |l| report.per_complexity.get(&l).copied().unwrap_or_default();
        ReportRecord {
            task,
            dataset: dataset.into(),
            backend: backend.into(),
            splitter: splitter.into(),
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
            aspect_f1: report.aspect_f1,
            simple: subset(ComplexityLabel::Simple),
            compound: subset(ComplexityLabel::Compound),
        }
    }
}

const COLUMNS: [&str; 10] = [
    "dataset", "task", "backend", "splitter", "precision", "recall", "f1", "aspect_f1", "simple_acc", "compound_acc",
];

fn row(r: &ReportRecord) -> Vec<String> {
    let pct = |x: f64| format!("{:.2}", 100.0 * x);
    vec![
        r.dataset.clone(),
        r.task.to_string(),
        r.backend.clone(),
        r.splitter.clone(),
        pct(r.precision),
        pct(r.recall),
        pct(r.f1),
        pct(r.aspect_f1),
        pct(r.simple.accuracy),
        pct(r.compound.accuracy),
    ]
}

/// Scores in percent, one row per record.
pub fn render_table(records: &[ReportRecord]) -> String {
    let rows: Vec<Vec<String>> = records.iter().map(row).collect();
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([COLUMNS[i].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(COLUMNS.to_vec(), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(rule.iter().map(String::as_str).collect(), &mut out);
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

pub fn report_csv(records: &[ReportRecord]) -> String {
    let rows: Vec<Vec<String>> = records.iter().map(row).collect();
    to_csv(&COLUMNS, &rows)
}
