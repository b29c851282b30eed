//! Stage orchestration with run manifests.
//!
//! Every stage reads artifacts from the run directory, writes its outputs
//! atomically, then writes `manifests/<stage>.json` recording content
//! digests of the config and every input, so runs can be audited and
//! replayed.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    build_backend, build_teacher, BackendConfig, BackendKind, CandidatePool, DataConfig, EvalConfig, PipelineConfig,
    SyntheticData, TeacherConfig, TeacherKind,
};
use config::resolve;

use crate::backend::AbsaBackend;
use crate::complexity::{classify, ratio_report, ComplexityLabel, RatioReport};
use crate::data::{dataset_stats, read_dataset, AnnotatedExample, DatasetStats, Polarity, Task};
use crate::error::{Error, Result};
use crate::evaluation::{
    corpus_oracle_curve, evaluate, evaluate_projected, predict_corpus, predictions_by_id, render_table, report_csv,
    EvalReport, OracleCurve, Prediction, ReportRecord,
};
use crate::io::{digest_path, read_json, read_jsonl, sha256_hex, to_csv, write_atomic, write_json, write_jsonl};
use crate::preference::{build_pairs, train_dpo, DpoLog, PreferencePair};
use crate::splitter::{
    generate_splits, load_checkpoint, save_checkpoint, train_sft, CharVocab, CheckpointManifest, IdentitySplitter,
    SeqModel, SftExample, TinySeq2Seq,
};
use crate::synthetic;
use crate::teacher::{filter_top_k, generate_for_examples, FilterConfig, PromptMode, ReplayClient, SplitCandidate, TeacherClient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Prepare,
    Categorize,
    GenSplits,
    Filter,
    TrainSft,
    BuildPrefs,
    TrainDpo,
    Infer,
    Evaluate,
    OracleVote,
}

impl Stage {
    /// Execution order of a full run.
    pub const ALL: [Stage; 10] = [
        Stage::Prepare,
        Stage::Categorize,
        Stage::GenSplits,
        Stage::Filter,
        Stage::TrainSft,
        Stage::BuildPrefs,
        Stage::TrainDpo,
        Stage::Infer,
        Stage::Evaluate,
        Stage::OracleVote,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Categorize => "categorize",
            Stage::GenSplits => "gen_splits",
            Stage::Filter => "filter",
            Stage::TrainSft => "train_sft",
            Stage::BuildPrefs => "build_prefs",
            Stage::TrainDpo => "train_dpo",
            Stage::Infer => "infer",
            Stage::Evaluate => "evaluate",
            Stage::OracleVote => "oracle_vote",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    /// Accepts `gen_splits` and `gen-splits` alike.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == norm)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown stage {s:?}")))
    }
}

/// Lineage record written after a stage succeeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub stage: Stage,
    pub config_digest: String,
    /// Run-relative input path to content digest.
    pub input_digests: BTreeMap<String, String>,
    /// Run-relative output paths.
    pub output_paths: Vec<String>,
    pub seed: u64,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
}

/// Side-by-side reports of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub run_id: String,
    pub baseline: EvalReport,
    pub sft: EvalReport,
    pub aligned: EvalReport,
    pub oracle: OracleCurve,
    pub preference_pairs: usize,
    pub teacher_cache_hits: usize,
    pub teacher_cache_misses: usize,
    pub manifests: Vec<RunManifest>,
}

/// Split names `prepare` may write.
const SPLITS: [&str; 3] = ["train", "dev", "test"];

pub mod paths {
    pub const MANIFESTS: &str = "manifests";
    pub const STATS: &str = "data/stats.json";
    pub const STATS_CSV: &str = "data/stats.csv";
    pub const LABELS: &str = "complexity/labels.jsonl";
    pub const RATIOS: &str = "complexity/ratios.json";
    pub const RATIOS_CSV: &str = "complexity/ratios.csv";
    pub const ZERO_SHOT: &str = "candidates/zero_shot.jsonl";
    pub const FEW_SHOT: &str = "candidates/few_shot.jsonl";
    pub const DEMOS: &str = "candidates/demos.jsonl";
    pub const BEAMS: &str = "candidates/beams.jsonl";
    pub const SFT_TRAIN: &str = "sft/train.jsonl";
    pub const SFT_VAL: &str = "sft/val.jsonl";
    pub const SFT_LOG: &str = "sft/log.json";
    pub const SFT_MODEL: &str = "models/sft";
    pub const PAIRS: &str = "prefs/pairs.jsonl";
    pub const DPO_LOG: &str = "dpo/log.json";
    pub const DPO_MODEL: &str = "models/dpo";
    pub const REPORT: &str = "reports/report.json";
    pub const TABLE: &str = "reports/table.txt";
    pub const TABLE_CSV: &str = "reports/table.csv";
    pub const ORACLE: &str = "reports/oracle.json";
    pub const ORACLE_CSV: &str = "reports/oracle.csv";

    pub fn split(name: &str) -> String {
        format!("data/{name}.jsonl")
    }

    pub fn predictions(name: &str) -> String {
        format!("predictions/{name}.jsonl")
    }
}

/// Splitters compared at inference time.
const SYSTEMS: [&str; 3] = ["baseline", "sft", "aligned"];

/// Backend name recorded in tiny-model checkpoints.
pub const TINY_BACKEND: &str = "tiny-char";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub example: AnnotatedExample,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LabelRecord {
    id: String,
    split: String,
    label: ComplexityLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OracleReport {
    pool: CandidatePool,
    split: String,
    curve: OracleCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Report {
    records: Vec<ReportRecord>,
    reports: BTreeMap<String, EvalReport>,
}

/// Inputs read and outputs written by one stage.
struct StageIo<'a> {
    run_dir: &'a Path,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl<'a> StageIo<'a> {
    fn path(&self, rel: &str) -> PathBuf {
        self.run_dir.join(rel)
    }

    /// Declares an upstream artifact, failing if it is absent.
    fn input(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if !p.exists() {
            return Err(Error::MissingUpstream(p));
        }
        self.inputs.insert(rel.to_string(), digest_path(&p)?);
        Ok(p)
    }

    /// Declares an external input such as a dataset file.
    fn external(&mut self, p: &Path) -> Result<()> {
        if !p.exists() {
            return Err(Error::MissingUpstream(p.to_path_buf()));
        }
        self.inputs.insert(p.display().to_string(), digest_path(p)?);
        Ok(())
    }

    fn output(&mut self, rel: &str) -> PathBuf {
        self.outputs.push(rel.to_string());
        self.path(rel)
    }

    fn has(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// A configured run.
pub struct Pipeline {
    config: PipelineConfig,
    base_dir: PathBuf,
    run_dir: PathBuf,
    config_digest: String,
    run_id: String,
    teacher_override: Option<Arc<dyn TeacherClient>>,
    teacher: OnceLock<ReplayClient>,
}

impl Pipeline {
    pub fn load(config_path: &Path) -> Result<Self> {
        let config = PipelineConfig::load(config_path)?;
        let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(config, base)
    }

    /// `base_dir` anchors relative paths in `config`.
    pub fn new(config: PipelineConfig, base_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let base_dir = base_dir.into();
        let config_digest = sha256_hex(&serde_json::to_vec(&config)?);
        let run_id = config.run_id.clone().unwrap_or_else(|| config_digest[..12].to_string());
        Ok(Pipeline {
            run_dir: resolve(&base_dir, &config.run_dir),
            config,
            base_dir,
            config_digest,
            run_id,
            teacher_override: None,
            teacher: OnceLock::new(),
        })
    }

    /// Replaces the live teacher behind the replay cache.
    pub fn with_teacher(mut self, client: Arc<dyn TeacherClient>) -> Self {
        self.teacher_override = Some(client);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    fn cache_dir(&self, kind: &str) -> PathBuf {
        match (&self.config.teacher.cache_dir, kind) {
            (Some(p), "teacher") => resolve(&self.base_dir, p),
            _ => self.run_dir.join("cache").join(kind),
        }
    }

    fn teacher(&self) -> Result<&ReplayClient> {
        if let Some(t) = self.teacher.get() {
            return Ok(t);
        }
        let client = match &self.teacher_override {
            Some(inner) => ReplayClient::new(self.cache_dir("teacher"), Some(inner.clone())),
            None => build_teacher(&self.config.teacher, self.cache_dir("teacher"))?,
        };
        Ok(self.teacher.get_or_init(|| client))
    }

    /// Teacher cache `(hits, misses)` so far.
    pub fn teacher_stats(&self) -> (usize, usize) {
        self.teacher.get().map_or((0, 0), |t| (t.hits(), t.misses()))
    }

    fn backend(&self) -> Result<Box<dyn AbsaBackend>> {
        build_backend(self.config.require_backend()?, &self.base_dir, self.cache_dir("backend"))
    }

    pub fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.run_dir.join(paths::MANIFESTS).join(format!("{stage}.json"))
    }

    pub fn read_manifest(&self, stage: Stage) -> Result<RunManifest> {
        read_json(&self.manifest_path(stage))
    }

    /// Runs one stage. Configuration and missing-artifact errors are
    /// returned as is; anything else is wrapped in `StageFailed`.
    pub fn run_stage(&self, stage: Stage) -> Result<RunManifest> {
        let started_at = now();
        let mut io = StageIo { run_dir: &self.run_dir, inputs: BTreeMap::new(), outputs: Vec::new() };
        log::info!("stage {stage}: start");
        let seed = match stage {
            Stage::Prepare => self.prepare(&mut io),
            Stage::Categorize => self.categorize(&mut io),
            Stage::GenSplits => self.gen_splits(&mut io),
            Stage::Filter => self.filter(&mut io),
            Stage::TrainSft => self.train_sft(&mut io),
            Stage::BuildPrefs => self.build_prefs(&mut io),
            Stage::TrainDpo => self.train_dpo(&mut io),
            Stage::Infer => self.infer(&mut io),
            Stage::Evaluate => self.evaluate(&mut io),
            Stage::OracleVote => self.oracle_vote(&mut io),
        }
        .map_err(|e| match e {
            Error::ConfigInvalid(_) | Error::MissingUpstream(_) | Error::StageFailed { .. } => e,
            other => Error::StageFailed { stage: stage.to_string(), source: Box::new(other) },
        })?;
        let manifest = RunManifest {
            run_id: self.run_id.clone(),
            stage,
            config_digest: self.config_digest.clone(),
            input_digests: io.inputs,
            output_paths: io.outputs,
            seed,
            started_at,
            finished_at: now(),
        };
        write_json(&self.manifest_path(stage), &manifest)?;
        log::info!("stage {stage}: done");
        Ok(manifest)
    }

    /// Every stage in order, then the side-by-side summary. A failing stage
    /// aborts the run; manifests of finished stages stay on disk.
    pub fn run_all(&self) -> Result<PipelineSummary> {
        self.config.require_backend()?;
        let mut manifests = Vec::new();
        for stage in Stage::ALL {
            manifests.push(self.run_stage(stage)?);
        }
        let report: Report = read_json(&self.run_dir.join(paths::REPORT))?;
        let oracle: OracleReport = read_json(&self.run_dir.join(paths::ORACLE))?;
        let pairs: Vec<PreferencePair> = read_jsonl(&self.run_dir.join(paths::PAIRS))?;
        let take = |name: &str| {
            report
                .reports
                .get(name)
                .cloned()
                .ok_or_else(|| Error::MissingUpstream(self.run_dir.join(paths::REPORT)))
        };
        let (hits, misses) = self.teacher_stats();
        Ok(PipelineSummary {
            run_id: self.run_id.clone(),
            baseline: take("baseline")?,
            sft: take("sft")?,
            aligned: take("aligned")?,
            oracle: oracle.curve,
            preference_pairs: pairs.len(),
            teacher_cache_hits: hits,
            teacher_cache_misses: misses,
            manifests,
        })
    }

    fn read_split(&self, io: &mut StageIo, name: &str) -> Result<Vec<AnnotatedExample>> {
        read_jsonl(&io.input(&paths::split(name))?)
    }

    /// The split inference and oracle voting run on: test, else dev, else
    /// train.
    fn eval_split(&self, io: &StageIo) -> Result<&'static str> {
        ["test", "dev", "train"]
            .into_iter()
            .find(|s| io.has(&paths::split(s)))
            .ok_or_else(|| Error::MissingUpstream(self.run_dir.join(paths::split("test"))))
    }

    fn prepare(&self, io: &mut StageIo) -> Result<u64> {
        let data = &self.config.data;
        let task = self.config.task;
        let mut splits: Vec<(&str, Vec<AnnotatedExample>)> = Vec::new();
        let mut seed = self.config.seed;
        if let Some(syn) = &data.synthetic {
            let mut corpus = synthetic::corpus(&syn.corpus);
            for e in &mut corpus {
                e.task = task;
            }
            let n_test = ((corpus.len() as f64) * syn.test_fraction).round() as usize;
            let test = corpus.split_off(corpus.len() - n_test);
            splits.push(("train", corpus));
            if !test.is_empty() {
                splits.push(("test", test));
            }
            seed = syn.corpus.seed;
        } else {
            let opts = self.config.parse_options(&self.base_dir)?;
            for (name, path) in [("train", &data.train), ("dev", &data.dev), ("test", &data.test)] {
                if let Some(p) = path {
                    let p = resolve(&self.base_dir, p);
                    io.external(&p)?;
                    let examples = read_dataset(&p, task, &opts)?;
                    if examples.is_empty() {
                        return Err(Error::EmptyDataset);
                    }
                    splits.push((name, examples));
                }
            }
        }
        let mut stats: BTreeMap<String, DatasetStats> = BTreeMap::new();
        for (name, examples) in &splits {
            write_jsonl(&io.output(&paths::split(name)), examples)?;
            stats.insert(name.to_string(), dataset_stats(examples));
        }
        write_json(&io.output(paths::STATS), &stats)?;
        let rows: Vec<Vec<String>> = stats
            .iter()
            .map(|(name, s)| {
                let mut row = vec![name.clone(), s.sentence_count.to_string()];
                row.extend(Polarity::ALL.iter().map(|p| s.count(*p).to_string()));
                row.push(s.category_set_size.to_string());
                row
            })
            .collect();
        write_atomic(
            &io.output(paths::STATS_CSV),
            to_csv(&["split", "sentences", "positive", "neutral", "negative", "categories"], &rows).as_bytes(),
        )?;
        Ok(seed)
    }

    fn categorize(&self, io: &mut StageIo) -> Result<u64> {
        let mut labels = Vec::new();
        let mut ratios: BTreeMap<String, RatioReport> = BTreeMap::new();
        for name in SPLITS {
            if !io.has(&paths::split(name)) {
                continue;
            }
            let examples = self.read_split(io, name)?;
            labels.extend(examples.iter().map(|e| LabelRecord { id: e.id.clone(), split: name.into(), label: classify(e) }));
            ratios.insert(name.to_string(), ratio_report(&examples)?);
        }
        if ratios.is_empty() {
            return Err(Error::MissingUpstream(self.run_dir.join(paths::split("train"))));
        }
        write_jsonl(&io.output(paths::LABELS), &labels)?;
        write_json(&io.output(paths::RATIOS), &ratios)?;
        let rows: Vec<Vec<String>> = ratios
            .iter()
            .map(|(n, r)| {
                vec![n.clone(), r.simple.to_string(), r.compound.to_string(), format!("{:.2}", r.simple_pct), format!("{:.2}", r.compound_pct)]
            })
            .collect();
        write_atomic(
            &io.output(paths::RATIOS_CSV),
            to_csv(&["split", "simple", "compound", "simple_pct", "compound_pct"], &rows).as_bytes(),
        )?;
        Ok(self.config.seed)
    }

    fn generate(&self, examples: &[AnnotatedExample], mode: PromptMode, demos: &[Demo]) -> Result<Vec<SplitCandidate>> {
        let demos: Vec<(AnnotatedExample, String)> = demos.iter().map(|d| (d.example.clone(), d.split.clone())).collect();
        let per_example = generate_for_examples(
            self.teacher()?,
            examples,
            mode,
            &demos,
            &self.config.teacher.filter(),
            self.config.teacher.parallelism,
        )?;
        Ok(per_example.into_iter().flatten().collect())
    }

    fn gen_splits(&self, io: &mut StageIo) -> Result<u64> {
        let train = self.read_split(io, "train")?;
        let zero = self.generate(&train, PromptMode::ZeroShot, &[])?;
        write_jsonl(&io.output(paths::ZERO_SHOT), &zero)?;
        let demos = pick_demos(&train, &zero, &self.config.teacher.filter(), self.config.teacher.demo_count)?;
        if demos.is_empty() {
            return Err(Error::MissingDemos);
        }
        write_jsonl(&io.output(paths::DEMOS), &demos)?;
        let few = self.generate(&train, PromptMode::FewShot, &demos)?;
        write_jsonl(&io.output(paths::FEW_SHOT), &few)?;
        Ok(self.config.seed)
    }

    fn filter(&self, io: &mut StageIo) -> Result<u64> {
        let train = self.read_split(io, "train")?;
        let zero: Vec<SplitCandidate> = read_jsonl(&io.input(paths::ZERO_SHOT)?)?;
        let (train_recs, val_recs) = distillation_records(
            &train,
            &zero,
            &self.config.teacher.filter(),
            self.config.teacher.val_fraction,
            self.config.seed,
        )?;
        write_jsonl(&io.output(paths::SFT_TRAIN), &train_recs)?;
        write_jsonl(&io.output(paths::SFT_VAL), &val_recs)?;
        Ok(self.config.seed)
    }

    fn train_sft(&self, io: &mut StageIo) -> Result<u64> {
        let train: Vec<SftExample> = read_jsonl(&io.input(paths::SFT_TRAIN)?)?;
        let val: Vec<SftExample> = read_jsonl(&io.input(paths::SFT_VAL)?)?;
        let vocab = CharVocab::from_texts(train.iter().chain(&val).flat_map(|r| [r.source.as_str(), r.target.as_str()]));
        let model = TinySeq2Seq::new(vocab, &self.config.tiny);
        let (model, log) = train_sft(model, &train, &self.config.sft, &val)?;
        let best = log.epochs.iter().find(|e| e.epoch == log.best_epoch).map_or(f64::NAN, |e| e.val_loss);
        let manifest = CheckpointManifest {
            backend_name: TINY_BACKEND.into(),
            config: serde_json::json!({ "sft": self.config.sft, "tiny": self.config.tiny }),
            epoch: log.best_epoch,
            val_loss: best,
        };
        save_checkpoint(&io.output(paths::SFT_MODEL), &model, &manifest)?;
        write_json(&io.output(paths::SFT_LOG), &log)?;
        Ok(self.config.sft.seed)
    }

    fn load_model(&self, io: &mut StageIo, rel: &str) -> Result<TinySeq2Seq> {
        let (model, _): (TinySeq2Seq, CheckpointManifest) = load_checkpoint(&io.input(rel)?)?;
        Ok(model)
    }

    fn build_prefs(&self, io: &mut StageIo) -> Result<u64> {
        let backend = self.backend()?;
        let train = self.read_split(io, "train")?;
        let few: Vec<SplitCandidate> = read_jsonl(&io.input(paths::FEW_SHOT)?)?;
        let model = self.load_model(io, paths::SFT_MODEL)?;
        let width = self.config.eval.preference_beams;
        let beams: Vec<SplitCandidate> = {
            use rayon::prelude::*;
            train
                .par_iter()
                .map(|e| generate_splits(&model, &e.id, &e.text, width))
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect()
        };
        write_jsonl(&io.output(paths::BEAMS), &beams)?;
        let pairs = build_pairs(&train, &few, &beams, &backend)?;
        log::info!("{} preference pairs from {} examples", pairs.len(), train.len());
        write_jsonl(&io.output(paths::PAIRS), &pairs)?;
        Ok(self.config.seed)
    }

    fn train_dpo(&self, io: &mut StageIo) -> Result<u64> {
        let model = self.load_model(io, paths::SFT_MODEL)?;
        let pairs: Vec<PreferencePair> = read_jsonl(&io.input(paths::PAIRS)?)?;
        let (aligned, log): (TinySeq2Seq, DpoLog) = train_dpo(model, &pairs, &self.config.dpo)?;
        let manifest = CheckpointManifest {
            backend_name: TINY_BACKEND.into(),
            config: serde_json::json!({ "dpo": self.config.dpo }),
            epoch: self.config.dpo.epochs,
            val_loss: log.final_loss,
        };
        save_checkpoint(&io.output(paths::DPO_MODEL), &aligned, &manifest)?;
        write_json(&io.output(paths::DPO_LOG), &log)?;
        Ok(self.config.dpo.seed)
    }

    fn infer(&self, io: &mut StageIo) -> Result<u64> {
        let backend = self.backend()?;
        let split = self.eval_split(io)?;
        let examples = self.read_split(io, split)?;
        let sft = self.load_model(io, paths::SFT_MODEL)?;
        let aligned = self.load_model(io, paths::DPO_MODEL)?;
        let opts = &self.config.eval.inference;
        for (name, model) in SYSTEMS.iter().zip([&IdentitySplitter as &dyn SeqModel, &sft, &aligned]) {
            let preds = predict_corpus(model, &backend, &examples, opts)?;
            write_jsonl(&io.output(&paths::predictions(name)), &preds)?;
        }
        Ok(self.config.seed)
    }

    fn evaluate(&self, io: &mut StageIo) -> Result<u64> {
        let split = self.eval_split(io)?;
        let golds = self.read_split(io, split)?;
        let backend_name = self.config.require_backend()?.label();
        let task = self.config.task;
        let mut records = Vec::new();
        let mut reports = BTreeMap::new();
        for name in SYSTEMS {
            let preds: Vec<Prediction> = read_jsonl(&io.input(&paths::predictions(name))?)?;
            let by_id = predictions_by_id(&preds);
            let report = evaluate(&by_id, &golds)?;
            records.push(ReportRecord::new(task, split, &backend_name, name, &report));
            if task.has_category() && task.has_opinion() {
                for projected in [Task::Tasd, Task::Aste] {
                    let r = evaluate_projected(&by_id, &golds, projected)?;
                    records.push(ReportRecord::new(projected, split, &backend_name, name, &r));
                }
            }
            reports.insert(name.to_string(), report);
        }
        write_atomic(&io.output(paths::TABLE), render_table(&records).as_bytes())?;
        write_atomic(&io.output(paths::TABLE_CSV), report_csv(&records).as_bytes())?;
        write_json(&io.output(paths::REPORT), &Report { records, reports })?;
        Ok(self.config.seed)
    }

    fn oracle_vote(&self, io: &mut StageIo) -> Result<u64> {
        let backend = self.backend()?;
        let split = self.eval_split(io)?;
        let examples = self.read_split(io, split)?;
        let pool = self.config.eval.oracle_pool;
        let mode = PromptMode::from(pool);
        let demos: Vec<Demo> = match mode {
            PromptMode::FewShot => read_jsonl(&io.input(paths::DEMOS)?)?,
            PromptMode::ZeroShot => Vec::new(),
        };
        let cands = self.generate(&examples, mode, &demos)?;
        let pool_name = match pool {
            CandidatePool::ZeroShot => "zero_shot",
            CandidatePool::FewShot => "few_shot",
        };
        write_jsonl(&io.output(&format!("candidates/oracle_{pool_name}.jsonl")), &cands)?;
        let curve = corpus_oracle_curve(&examples, &cands, &backend, self.config.eval.oracle_max_m)?;
        write_atomic(&io.output(paths::ORACLE_CSV), curve.to_csv().as_bytes())?;
        write_json(&io.output(paths::ORACLE), &OracleReport { pool, split: split.into(), curve })?;
        Ok(self.config.seed)
    }
}

/// Demonstrations: the best zero-shot split of the first `count` compound
/// examples with more than one tuple.
pub fn pick_demos(
    examples: &[AnnotatedExample],
    zero: &[SplitCandidate],
    filter: &FilterConfig,
    count: usize,
) -> Result<Vec<Demo>> {
    let by_id = group_candidates(zero);
    let one = FilterConfig { k: 1, ..*filter };
    let mut demos = Vec::new();
    for e in examples.iter().filter(|e| e.quads.len() > 1 && classify(e) == ComplexityLabel::Compound) {
        if demos.len() >= count {
            break;
        }
        let Some(cands) = by_id.get(e.id.as_str()) else { continue };
        let owned: Vec<SplitCandidate> = cands.iter().map(|c| (*c).clone()).collect();
        if let Some(best) = filter_top_k(&owned, &one)?.into_iter().next() {
            demos.push(Demo { example: e.clone(), split: best.text });
        }
    }
    Ok(demos)
}

/// SFT records from the top-k candidates of each example, with a seeded
/// share of examples held out for validation. Returns `(train, val)`.
pub fn distillation_records(
    examples: &[AnnotatedExample],
    candidates: &[SplitCandidate],
    filter: &FilterConfig,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<SftExample>, Vec<SftExample>)> {
    let by_id = group_candidates(candidates);
    let mut ids: Vec<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((ids.len() as f64) * val_fraction).round() as usize;
    let val_ids: BTreeSet<&str> = ids.into_iter().take(n_val).collect();

    let (mut train, mut val) = (Vec::new(), Vec::new());
    for e in examples {
        let Some(cands) = by_id.get(e.id.as_str()) else { continue };
        let owned: Vec<SplitCandidate> = cands.iter().map(|c| (*c).clone()).collect();
        for c in filter_top_k(&owned, filter)? {
            let rec = SftExample { id: e.id.clone(), source: e.text.clone(), target: c.text, quads: e.quads.clone() };
            if val_ids.contains(e.id.as_str()) {
                val.push(rec);
            } else {
                train.push(rec);
            }
        }
    }
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok((train, val))
}

fn group_candidates(cands: &[SplitCandidate]) -> BTreeMap<&str, Vec<&SplitCandidate>> {
    let mut by_id: BTreeMap<&str, Vec<&SplitCandidate>> = BTreeMap::new();
    for c in cands {
        by_id.entry(c.source_id.as_str()).or_default().push(c);
    }
    by_id
}

/// Loads `config_path` and runs one stage.
pub fn run_stage(stage: Stage, config_path: &Path) -> Result<RunManifest> {
    Pipeline::load(config_path)?.run_stage(stage)
}

/// Loads `config_path` and runs every stage.
pub fn full_pipeline(config_path: &Path) -> Result<PipelineSummary> {
    Pipeline::load(config_path)?.run_all()
}
