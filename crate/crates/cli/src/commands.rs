use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use aspect_splitter::complexity::{classify, ratio_report, ComplexityLabel};
use aspect_splitter::data::{dataset_stats, read_dataset, AnnotatedExample, ParseOptions, Polarity, Task};
use aspect_splitter::evaluation::{
    corpus_oracle_curve, evaluate, evaluate_projected, predict_corpus, predictions_by_id, render_table, report_csv,
    InferenceOptions, Prediction, ReportRecord,
};
use aspect_splitter::io::{read_jsonl, to_csv, write_atomic, write_json, write_jsonl};
use aspect_splitter::pipeline::{
    build_backend, build_teacher, distillation_records, BackendConfig, Demo, Pipeline, TeacherConfig, TINY_BACKEND,
};
use aspect_splitter::preference::{build_pairs, train_dpo, PreferencePair};
use aspect_splitter::splitter::{
    generate_splits, load_checkpoint, save_checkpoint, split, train_sft, CharVocab, CheckpointManifest,
    IdentitySplitter, SeqModel, SftExample, TinySeq2Seq,
};
use aspect_splitter::synthetic::{self, SyntheticConfig};
use aspect_splitter::teacher::{filter_top_k, generate_for_examples, FilterConfig, PromptMode, SplitCandidate};
use aspect_splitter::{backend::AbsaBackend, data::serialize_example, Error, Result};
use serde::Serialize;

use crate::settings::Settings;
use crate::{
    BackendArgs, BuildPrefsArgs, CategorizeArgs, Cli, Command, DatasetArgs, EvaluateArgs, FilterArgs, GenBeamsArgs,
    GenSplitsArgs, InferArgs, Mode, OracleVoteArgs, SplitArgs, StatsArgs, SynthArgs, TrainDpoArgs, TrainSftArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Stats(a) => stats(&settings, a),
        Command::Categorize(a) => categorize(&settings, a),
        Command::GenSplits(a) => gen_splits(&settings, a),
        Command::Filter(a) => filter(&settings, a),
        Command::TrainSft(a) => train(&settings, a),
        Command::Split(a) => split_cmd(&settings, a),
        Command::GenBeams(a) => gen_beams(&settings, a),
        Command::BuildPrefs(a) => build_prefs(&settings, a),
        Command::TrainDpo(a) => align(&settings, a),
        Command::Infer(a) => infer(&settings, a),
        Command::Evaluate(a) => evaluate_cmd(&settings, a),
        Command::OracleVote(a) => oracle_vote(&settings, a),
        Command::Synth(a) => synth(a),
        Command::Run(a) => {
            let manifest = pipeline(cli.config.as_deref())?.run_stage(a.stage)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(())
        }
        Command::Pipeline(a) => {
            let summary = pipeline(cli.config.as_deref())?.run_all()?;
            for (name, r) in [("baseline", &summary.baseline), ("sft", &summary.sft), ("aligned", &summary.aligned)] {
                let compound = r.per_complexity.get(&ComplexityLabel::Compound).map_or(0.0, |s| s.f1);
                println!("{name:<9} f1 {:6.2}  compound f1 {:6.2}", 100.0 * r.f1, 100.0 * compound);
            }
            println!("preference pairs {}", summary.preference_pairs);
            if let Some(out) = a.out {
                write_json(&out, &summary)?;
            }
            Ok(())
        }
    }
}

fn pipeline(config: Option<&Path>) -> Result<Pipeline> {
    let path = config.ok_or_else(|| Error::ConfigInvalid("--config is required for this verb".into()))?;
    Pipeline::load(path)
}

fn task_of(settings: &Settings, task: Option<Task>) -> Task {
    task.unwrap_or(settings.task)
}

fn read_examples(settings: &Settings, d: &DatasetArgs) -> Result<Vec<AnnotatedExample>> {
    let order = d.order.as_deref().map(str::parse).transpose()?;
    let categories = match &d.categories {
        Some(p) => Some(
            std::fs::read_to_string(p)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect::<BTreeSet<_>>(),
        ),
        None => None,
    };
    let examples = read_dataset(&d.input, task_of(settings, d.task), &ParseOptions { order, categories })?;
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(examples)
}

fn read_gold(settings: &Settings, path: &Path, task: Option<Task>) -> Result<Vec<AnnotatedExample>> {
    let d = DatasetArgs { input: path.to_path_buf(), task, order: None, categories: None };
    read_examples(settings, &d)
}

fn load_model(dir: &Path) -> Result<TinySeq2Seq> {
    if !dir.join("manifest.json").exists() {
        return Err(Error::MissingUpstream(dir.to_path_buf()));
    }
    let (model, _): (TinySeq2Seq, CheckpointManifest) = load_checkpoint(dir)?;
    Ok(model)
}

fn backend(settings: &Settings, a: &BackendArgs) -> Result<Box<dyn AbsaBackend>> {
    let config = match a.backend {
        Some(kind) => BackendConfig {
            kind,
            lexicon: a.lexicon.clone(),
            remote: settings.backend.as_ref().and_then(|b| b.remote.clone()),
            program: a.program.clone(),
            args: a.args.clone(),
            name: a.backend_name.clone(),
        },
        None => settings
            .backend
            .clone()
            .ok_or_else(|| Error::ConfigInvalid("no backend: pass --backend or add a [backend] section".into()))?,
    };
    build_backend(&config, &settings.base_dir, settings.base_dir.join(".cache").join("backend"))
}

fn stats(settings: &Settings, a: StatsArgs) -> Result<()> {
    let examples = read_examples(settings, &a.data)?;
    let s = dataset_stats(&examples);
    println!(
        "sentences {}  positive {}  neutral {}  negative {}  categories {}",
        s.sentence_count,
        s.count(Polarity::Positive),
        s.count(Polarity::Neutral),
        s.count(Polarity::Negative),
        s.category_set_size
    );
    if let Some(out) = a.out {
        write_json(&out, &s)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RatioRow {
    dataset: String,
    simple: usize,
    compound: usize,
    simple_pct: f64,
    compound_pct: f64,
}

#[derive(Serialize)]
struct LabelRecord<'a> {
    dataset: &'a str,
    id: &'a str,
    label: ComplexityLabel,
}

fn categorize(settings: &Settings, a: CategorizeArgs) -> Result<()> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for input in &a.inputs {
        let examples = read_gold(settings, input, a.task)?;
        let r = ratio_report(&examples)?;
        let name = input.display().to_string();
        labels.extend(examples.iter().map(|e| (name.clone(), e.id.clone(), classify(e))));
        rows.push(RatioRow {
            dataset: name,
            simple: r.simple,
            compound: r.compound,
            simple_pct: r.simple_pct,
            compound_pct: r.compound_pct,
        });
    }
    println!("{:<40} {:>8} {:>8} {:>8} {:>8}", "dataset", "simple", "compound", "simple%", "compound%");
    for r in &rows {
        println!("{:<40} {:>8} {:>8} {:>8.2} {:>8.2}", r.dataset, r.simple, r.compound, r.simple_pct, r.compound_pct);
    }
    for r in &rows {
        println!("{}", serde_json::to_string(r)?);
    }
    if let Some(path) = a.labels {
        let records: Vec<LabelRecord> =
            labels.iter().map(|(d, id, label)| LabelRecord { dataset: d, id, label: *label }).collect();
        write_jsonl(&path, &records)?;
    }
    if let Some(path) = a.csv {
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.dataset.clone(),
                    r.simple.to_string(),
                    r.compound.to_string(),
                    format!("{:.2}", r.simple_pct),
                    format!("{:.2}", r.compound_pct),
                ]
            })
            .collect();
        let header = ["dataset", "simple", "compound", "simple_pct", "compound_pct"];
        write_atomic(&path, to_csv(&header, &table).as_bytes())?;
    }
    Ok(())
}

fn gen_splits(settings: &Settings, a: GenSplitsArgs) -> Result<()> {
    let examples = read_examples(settings, &a.data)?;
    let mut teacher: TeacherConfig = settings.teacher.clone();
    if let Some(kind) = a.teacher {
        teacher.kind = kind;
    }
    let filter = FilterConfig {
        k: a.k.unwrap_or(teacher.k),
        n_candidates: a.n.unwrap_or(teacher.n_candidates),
        temperature: a.temperature.unwrap_or(teacher.temperature),
    };
    filter.validate()?;
    let (mode, demos) = match a.mode {
        Mode::Zero => (PromptMode::ZeroShot, Vec::new()),
        Mode::Few => {
            let path = a.demos.as_ref().ok_or(Error::MissingDemos)?;
            let demos: Vec<Demo> = read_jsonl(path)?;
            (PromptMode::FewShot, demos.into_iter().map(|d| (d.example, d.split)).collect())
        }
    };
    let cache = match (&a.cache, &teacher.cache_dir) {
        (Some(c), _) => c.clone(),
        (None, Some(c)) => settings.resolve(c),
        (None, None) => PathBuf::from(".cache").join("teacher"),
    };
    let client = build_teacher(&teacher, cache)?;
    let parallelism = a.parallelism.unwrap_or(teacher.parallelism);
    let per_example = generate_for_examples(&client, &examples, mode, &demos, &filter, parallelism)?;
    let mut out = Vec::new();
    for cands in per_example {
        match a.k {
            Some(_) => out.extend(filter_top_k(&cands, &filter)?),
            None => out.extend(cands),
        }
    }
    write_jsonl(&a.out, &out)?;
    println!("{} candidates for {} sentences ({} cache hits)", out.len(), examples.len(), client.hits());
    Ok(())
}

fn filter(settings: &Settings, a: FilterArgs) -> Result<()> {
    let examples = read_examples(settings, &a.data)?;
    let candidates: Vec<SplitCandidate> = read_jsonl(&a.candidates)?;
    let config = FilterConfig { k: a.k.unwrap_or(settings.teacher.k), ..settings.teacher.filter() };
    let val_fraction = a.val_fraction.unwrap_or(settings.teacher.val_fraction);
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::ConfigInvalid("--val-fraction must be in [0, 1)".into()));
    }
    let (train, val) = distillation_records(&examples, &candidates, &config, val_fraction, settings.seed)?;
    write_jsonl(&a.out, &train)?;
    if let Some(path) = a.val_out {
        write_jsonl(&path, &val)?;
    }
    println!("{} training and {} validation records", train.len(), val.len());
    Ok(())
}

fn train(settings: &Settings, a: TrainSftArgs) -> Result<()> {
    let data: Vec<SftExample> = read_jsonl(&a.data)?;
    let val: Vec<SftExample> = match &a.val {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let mut config = settings.sft;
    config.epochs = a.epochs.unwrap_or(config.epochs);
    config.learning_rate = a.learning_rate.unwrap_or(config.learning_rate);
    config.train_batch = a.batch.unwrap_or(config.train_batch);
    config.validate()?;
    let vocab = CharVocab::from_texts(data.iter().chain(&val).flat_map(|r| [r.source.as_str(), r.target.as_str()]));
    let (model, log) = train_sft(TinySeq2Seq::new(vocab, &settings.tiny), &data, &config, &val)?;
    let best = log.epochs.iter().find(|e| e.epoch == log.best_epoch).map_or(f64::NAN, |e| e.val_loss);
    let manifest = CheckpointManifest {
        backend_name: TINY_BACKEND.into(),
        config: serde_json::json!({ "sft": config, "tiny": settings.tiny }),
        epoch: log.best_epoch,
        val_loss: best,
    };
    save_checkpoint(&a.out, &model, &manifest)?;
    write_json(&a.out.join("log.json"), &log)?;
    if let (Some(first), Some(last)) = (log.epochs.first(), log.epochs.last()) {
        println!("epochs {}  train loss {:.4} -> {:.4}", log.epochs.len(), first.train_loss, last.train_loss);
    }
    Ok(())
}

#[derive(Serialize)]
struct SplitRecord {
    id: String,
    source: String,
    split: String,
}

fn split_cmd(settings: &Settings, a: SplitArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let inputs: Vec<(String, String, Option<ComplexityLabel>)> = if a.raw {
        std::fs::read_to_string(&a.data.input)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (format!("line-{}", i + 1), l.to_string(), None))
            .collect()
    } else {
        read_examples(settings, &a.data)?
            .into_iter()
            .map(|e| {
                let gate = a.gate.then(|| classify(&e));
                (e.id, e.text, gate)
            })
            .collect()
    };
    let records: Vec<SplitRecord> = inputs
        .into_iter()
        .map(|(id, source, gate)| {
            let split = split(&model, &source, gate, a.beam);
            SplitRecord { id, source, split }
        })
        .collect();
    write_jsonl(&a.out, &records)?;
    println!("split {} sentences", records.len());
    Ok(())
}

fn gen_beams(settings: &Settings, a: GenBeamsArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let examples = read_examples(settings, &a.data)?;
    let width = a.width.unwrap_or(settings.eval.preference_beams);
    let beams: Vec<SplitCandidate> =
        examples.iter().flat_map(|e| generate_splits(&model, &e.id, &e.text, width)).collect();
    write_jsonl(&a.out, &beams)?;
    println!("{} beam candidates for {} sentences", beams.len(), examples.len());
    Ok(())
}

fn build_prefs(settings: &Settings, a: BuildPrefsArgs) -> Result<()> {
    let golds = read_gold(settings, &a.gold, a.task)?;
    let few: Vec<SplitCandidate> = read_jsonl(&a.fewshot)?;
    let beams: Vec<SplitCandidate> = read_jsonl(&a.beams)?;
    let backend = backend(settings, &a.backend)?;
    let pairs = build_pairs(&golds, &few, &beams, &backend)?;
    write_jsonl(&a.out, &pairs)?;
    println!("{} preference pairs from {} sentences", pairs.len(), golds.len());
    Ok(())
}

fn align(settings: &Settings, a: TrainDpoArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let pairs: Vec<PreferencePair> = read_jsonl(&a.pairs)?;
    let mut config = settings.dpo;
    config.beta = a.beta.unwrap_or(config.beta);
    config.learning_rate = a.learning_rate.unwrap_or(config.learning_rate);
    config.epochs = a.epochs.unwrap_or(config.epochs);
    config.validate()?;
    let (aligned, log) = train_dpo(model, &pairs, &config)?;
    let manifest = CheckpointManifest {
        backend_name: TINY_BACKEND.into(),
        config: serde_json::json!({ "dpo": config }),
        epoch: config.epochs,
        val_loss: log.final_loss,
    };
    save_checkpoint(&a.out, &aligned, &manifest)?;
    write_json(&a.out.join("log.json"), &log)?;
    println!("dpo loss {:.4} -> {:.4} over {} steps", log.initial_loss, log.final_loss, log.steps.len());
    Ok(())
}

fn infer(settings: &Settings, a: InferArgs) -> Result<()> {
    let examples = read_examples(settings, &a.data)?;
    let backend = backend(settings, &a.backend)?;
    let options = InferenceOptions { beam_width: a.beam, per_segment: a.per_segment };
    let preds = match &a.ckpt {
        Some(dir) => predict_corpus(&load_model(dir)?, &backend, &examples, &options)?,
        None => predict_corpus(&IdentitySplitter as &dyn SeqModel, &backend, &examples, &options)?,
    };
    write_jsonl(&a.out, &preds)?;
    println!("{} predictions", preds.len());
    Ok(())
}

fn evaluate_cmd(settings: &Settings, a: EvaluateArgs) -> Result<()> {
    let golds = read_gold(settings, &a.gold, a.task)?;
    let preds: Vec<Prediction> = read_jsonl(&a.pred)?;
    let by_id = predictions_by_id(&preds);
    let task = task_of(settings, a.task);
    let report = evaluate(&by_id, &golds)?;
    let mut records = vec![ReportRecord::new(task, &a.dataset, &a.backend_name, &a.splitter, &report)];
    if a.project && task.has_category() && task.has_opinion() {
        for projected in [Task::Tasd, Task::Aste] {
            let r = evaluate_projected(&by_id, &golds, projected)?;
            records.push(ReportRecord::new(projected, &a.dataset, &a.backend_name, &a.splitter, &r));
        }
    }
    print!("{}", render_table(&records));
    if let Some(out) = a.out {
        write_json(&out, &serde_json::json!({ "records": records, "report": report }))?;
    }
    if let Some(csv) = a.csv {
        write_atomic(&csv, report_csv(&records).as_bytes())?;
    }
    Ok(())
}

fn oracle_vote(settings: &Settings, a: OracleVoteArgs) -> Result<()> {
    let golds = read_gold(settings, &a.gold, a.task)?;
    let candidates: Vec<SplitCandidate> = read_jsonl(&a.candidates)?;
    let backend = backend(settings, &a.backend)?;
    let curve = corpus_oracle_curve(&golds, &candidates, &backend, a.max_m.unwrap_or(settings.eval.oracle_max_m))?;
    for (m, f1) in &curve.points {
        println!("m={m:<3} f1 {:6.2}", 100.0 * f1);
    }
    if let Some(plot) = a.plot {
        write_atomic(&plot, curve.to_csv().as_bytes())?;
    }
    if let Some(out) = a.out {
        write_json(&out, &curve)?;
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    if !(0.0..1.0).contains(&a.test_fraction) || a.n < 2 {
        return Err(Error::ConfigInvalid("need --n >= 2 and --test-fraction in [0, 1)".into()));
    }
    let mut corpus = synthetic::corpus(&SyntheticConfig { n: a.n, seed: a.seed, ..Default::default() });
    let n_test = ((corpus.len() as f64) * a.test_fraction).round() as usize;
    let test = corpus.split_off(corpus.len() - n_test);
    std::fs::create_dir_all(&a.out_dir)?;
    for (name, examples) in [("train", &corpus), ("test", &test)] {
        let mut text: String = examples.iter().map(|e| serialize_example(e) + "\n").collect();
        if examples.is_empty() {
            text.clear();
        }
        write_atomic(&a.out_dir.join(format!("{name}.txt")), text.as_bytes())?;
    }
    write_json(&a.out_dir.join("lexicon.json"), &synthetic::lexicon())?;
    println!("wrote {} train and {} test sentences to {}", corpus.len(), test.len(), a.out_dir.display());
    Ok(())
}
