//! Acceptance criteria, one check per criterion, each with its stated
//! tolerance and runtime bound.
//!
//! Every check prints a `PASS`, `FAIL` or `SKIP` line straight to stdout so
//! the summary shows up even when libtest captures output. Criteria 1 and 2
//! need the official datasets under `$ABSA_DATA_DIR` laid out as
//! `<task>/<dataset>/<split>.txt` (for example `asqp/rest15/train.txt`) and
//! are skipped with a warning when it is unset.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use aspect_splitter::backend::{AbsaBackend, LexiconBackend};
use aspect_splitter::complexity::{classify, ratio_report, ComplexityLabel};
use aspect_splitter::data::{
    dataset_stats, parse_dataset, parse_line, serialize_example, AnnotatedExample, ParseOptions, Polarity, Quadruplet,
    Task,
};
use aspect_splitter::evaluation::{aspect_level_f1, curve_from_scores, evaluate, evaluate_projected, oracle_vote};
use aspect_splitter::metrics::sentence_f1;
use aspect_splitter::pipeline::{Pipeline, PipelineConfig};
use aspect_splitter::preference::{
    accumulate_dpo_grad, build_pairs, dpo_loss, select_dispreferred, select_preferred, train_dpo, DpoConfig,
    PreferencePair,
};
use aspect_splitter::splitter::{
    mean_nll, sft_loss, train_sft, CharVocab, SeqModel, SftConfig, SftExample, TinyConfig, TinySeq2Seq, Trainable,
};
use aspect_splitter::synthetic::{self, gold_split, SyntheticConfig};
use aspect_splitter::teacher::{generate_for_examples, FilterConfig, Origin, PromptMode, SplitCandidate};
use common::{brute_counts, brute_micro, brute_prf, data_root, random_corpus, TableBackend};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Skip(String),
}

type Check = std::result::Result<Outcome, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> std::result::Result<(), String> {
    if elapsed > limit {
        return Err(format!("{what} took {elapsed:.2?}, limit {limit:?}"));
    }
    Ok(())
}

/// Sentence count and POS/NEU/NEG tuple counts per official split.
const EXPECTED_STATS: &[(&str, &str, &str, usize, [usize; 3])] = &[
    ("asqp", "rest15", "train", 834, [1005, 34, 315]),
    ("asqp", "rest15", "dev", 209, [252, 14, 81]),
    ("asqp", "rest15", "test", 537, [453, 37, 305]),
    ("asqp", "rest16", "train", 1264, [1369, 62, 558]),
    ("asqp", "rest16", "dev", 316, [341, 23, 143]),
    ("asqp", "rest16", "test", 544, [584, 40, 177]),
    ("acos", "rest16", "train", 1530, [1656, 95, 733]),
    ("acos", "rest16", "dev", 171, [180, 12, 69]),
    ("acos", "rest16", "test", 583, [668, 44, 205]),
    ("acos", "laptop16", "train", 2934, [2583, 227, 1364]),
    ("acos", "laptop16", "dev", 326, [279, 24, 137]),
    ("acos", "laptop16", "test", 816, [716, 65, 380]),
    ("aste", "rest14", "train", 1266, [1692, 166, 480]),
    ("aste", "rest14", "dev", 310, [404, 54, 119]),
    ("aste", "rest14", "test", 492, [773, 66, 155]),
    ("aste", "laptop14", "train", 906, [817, 126, 517]),
    ("aste", "laptop14", "dev", 219, [169, 36, 141]),
    ("aste", "laptop14", "test", 328, [364, 63, 116]),
    ("tasd", "rest15", "train", 1120, [1198, 53, 403]),
    ("tasd", "rest15", "test", 582, [454, 45, 346]),
    ("tasd", "rest16", "train", 1708, [1657, 101, 749]),
    ("tasd", "rest16", "test", 587, [611, 44, 204]),
];

/// Simple-input percentages on the test splits.
const EXPECTED_SIMPLE_PCT: &[(&str, &str, f64)] = &[
    ("asqp", "rest15", 32.93),
    ("asqp", "rest16", 32.63),
    ("acos", "laptop16", 32.72),
    ("acos", "rest16", 32.16),
];

fn task_of(dir: &str) -> Option<Task> {
    match dir {
        "asqp" => Some(Task::Asqp),
        "acos" => Some(Task::Acos),
        "tasd" => Some(Task::Tasd),
        "aste" => Some(Task::Aste),
        _ => None,
    }
}

fn criterion_1_round_trip() -> Check {
    let Some(root) = data_root() else {
        return Ok(Outcome::Skip("ABSA_DATA_DIR not set; official datasets absent".into()));
    };
    let mut files = 0;
    let mut lines = 0;
    let mut stat_checks = 0;
    for task_dir in ["asqp", "acos", "tasd", "aste"] {
        let task = task_of(task_dir).unwrap();
        let Ok(datasets) = std::fs::read_dir(root.join(task_dir)) else { continue };
        for ds in datasets.flatten() {
            for split in ["train", "dev", "test"] {
                let path = ds.path().join(format!("{split}.txt"));
                if !path.is_file() {
                    continue;
                }
                let start = Instant::now();
                let content = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                for (i, line) in content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let ex = parse_line(line, task).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
                    ensure!(serialize_example(&ex) == line, "{}:{} does not round-trip", path.display(), i + 1);
                    lines += 1;
                }
                let examples = parse_dataset(&content, split, task, &ParseOptions::default()).map_err(|e| e.to_string())?;
                within(start.elapsed(), Duration::from_secs(5), &path.display().to_string())?;
                let name = ds.file_name().to_string_lossy().to_lowercase();
                if let Some((.., n, counts)) =
                    EXPECTED_STATS.iter().find(|(t, d, s, ..)| *t == task_dir && *d == name && *s == split)
                {
                    let st = dataset_stats(&examples);
                    let got = [st.count(Polarity::Positive), st.count(Polarity::Neutral), st.count(Polarity::Negative)];
                    ensure!(
                        st.sentence_count == *n && got == *counts,
                        "{}: stats {} {:?}, expected {} {:?}",
                        path.display(),
                        st.sentence_count,
                        got,
                        n,
                        counts
                    );
                    stat_checks += 1;
                }
                files += 1;
            }
        }
    }
    if files == 0 {
        return Ok(Outcome::Skip(format!("no dataset files under {}", root.display())));
    }
    Ok(Outcome::Pass(format!("{files} files, {lines} lines byte-identical, {stat_checks} stats tables exact")))
}

fn criterion_2_complexity_calibration() -> Check {
    let Some(root) = data_root() else {
        return Ok(Outcome::Skip("ABSA_DATA_DIR not set; official datasets absent".into()));
    };
    let mut seen = Vec::new();
    for (task_dir, ds, expected) in EXPECTED_SIMPLE_PCT {
        let path = root.join(task_dir).join(ds).join("test.txt");
        if !path.is_file() {
            continue;
        }
        let content = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let examples = parse_dataset(&content, "test", task_of(task_dir).unwrap(), &ParseOptions::default())
            .map_err(|e| e.to_string())?;
        let r = ratio_report(&examples).map_err(|e| e.to_string())?;
        ensure!(
            (r.simple_pct - expected).abs() <= 2.0,
            "{task_dir}/{ds}: simple {:.2}%, expected {expected:.2} +/- 2.0",
            r.simple_pct
        );
        seen.push(format!("{task_dir}/{ds} {:.2}%", r.simple_pct));
    }
    if seen.is_empty() {
        return Ok(Outcome::Skip(format!("no calibration test splits under {}", root.display())));
    }
    Ok(Outcome::Pass(seen.join(", ")))
}

fn criterion_3_metric_oracles() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let (golds, preds) = random_corpus(&mut rng, 5, 4);
        for g in &golds {
            let p = sentence_f1(&preds[&g.id], &g.quads);
            let (m, np, ng) = brute_counts(&preds[&g.id], &g.quads);
            ensure!(
                (p.precision, p.recall, p.f1) == brute_prf(m, np, ng),
                "case {case}: sentence_f1 differs from oracle"
            );
        }
        let r = evaluate(&preds, &golds).map_err(|e| e.to_string())?;
        ensure!((r.precision, r.recall, r.f1) == brute_micro(&golds, &preds, Quadruplet::clone), "case {case}: evaluate differs");
        let aspect = aspect_level_f1(&preds, &golds).map_err(|e| e.to_string())?;
        ensure!(aspect == brute_micro(&golds, &preds, |q| q.aspect.clone()).2, "case {case}: aspect_level_f1 differs");
        ensure!(r.aspect_f1 == aspect, "case {case}: report aspect_f1 differs");
    }
    within(start.elapsed(), Duration::from_secs(30), "1000 corpora")?;
    Ok(Outcome::Pass(format!("1000 random corpora agree exactly ({:.2?})", start.elapsed())))
}

fn quad(aspect: &str, category: &str, polarity: Polarity, opinion: &str) -> Quadruplet {
    Quadruplet::new(aspect, category, polarity, opinion)
}

struct Scenario {
    name: &'static str,
    example: AnnotatedExample,
    original: Vec<Quadruplet>,
    few_shot: Vec<(&'static str, Vec<Quadruplet>)>,
    beams: Vec<(&'static str, Vec<Quadruplet>)>,
    preferred: Vec<&'static str>,
    dispreferred: Vec<&'static str>,
    pairs: usize,
}

/// Hand-enumerated rule table. F1 values against the compound gold
/// `{a, b}`: FULL = 1, HALF = {a} = 2/3, HALFX = {a, x} = 1/2, NONE = 0.
/// Token similarities to the compound original: NEAR 0.9, MID 0.8, FAR 0.3.
/// Similarities to the simple original: S_GOOD and S_FINE 0.8, S_FAR 0.4.
fn rule_table() -> Vec<Scenario> {
    const S: &str = "the pizza was great .";
    const C1: &str = "the pizza was great !";
    const C2: &str = "the pizza . was great .";
    const C3: &str = "the . pizza was great .";
    const S_GOOD: &str = "the pizza was good .";
    const S_FINE: &str = "the pizza was fine .";
    const S_FAR: &str = "pizza .";
    const O: &str = "the pizza was great and the staff was rude .";
    const G1: &str = "the pizza was great . and the staff was rude .";
    const G2: &str = "the pizza was great. and the staff was rude .";
    const P1: &str = "the pizza was great . the staff was rude .";
    const NEAR: &str = "the pizza was great and the staff was rude !";
    const MID: &str = "the pizza was great . staff was rude .";
    const FAR: &str = "pizza . staff .";

    let a = quad("pizza", "food quality", Polarity::Positive, "great");
    let b = quad("staff", "service general", Polarity::Negative, "rude");
    let x = quad("staff", "service general", Polarity::Positive, "great");
    let full = vec![a.clone(), b.clone()];
    let half = vec![a.clone()];
    let halfx = vec![a.clone(), x.clone()];
    let none: Vec<Quadruplet> = Vec::new();
    let simple = |id: &str| AnnotatedExample::new(id, S, vec![a.clone()], Task::Asqp);
    let compound = |id: &str| AnnotatedExample::new(id, O, full.clone(), Task::Asqp);
    let n = || none.clone();

    vec![
        Scenario {
            name: "simple: one candidate with |Q| segments",
            example: simple("s1"),
            original: half.clone(),
            few_shot: vec![(C1, n()), (C2, n()), (C3, n())],
            beams: vec![(S_GOOD, n()), (S_FAR, n())],
            preferred: vec![C1],
            dispreferred: vec![S_GOOD],
            pairs: 1,
        },
        Scenario {
            name: "simple: no candidate with |Q| segments",
            example: simple("s2"),
            original: half.clone(),
            few_shot: vec![(C2, n()), (C3, n())],
            beams: vec![(S_GOOD, n()), (S_FAR, n())],
            preferred: vec![],
            dispreferred: vec![S_GOOD],
            pairs: 0,
        },
        Scenario {
            name: "simple: duplicate candidates collapse",
            example: simple("s3"),
            original: half.clone(),
            few_shot: vec![(C1, n()), (C1, n()), (C2, n())],
            beams: vec![(S_GOOD, n()), (S_FAR, n())],
            preferred: vec![C1],
            dispreferred: vec![S_GOOD],
            pairs: 1,
        },
        Scenario {
            name: "simple: original may be preferred, never dispreferred",
            example: simple("s4"),
            original: half.clone(),
            few_shot: vec![(S, n()), (C1, n())],
            beams: vec![(S, n()), (S_GOOD, n())],
            preferred: vec![S, C1],
            dispreferred: vec![S_GOOD],
            pairs: 2,
        },
        Scenario {
            name: "compound: original beats every candidate",
            example: compound("c5"),
            original: full.clone(),
            few_shot: vec![(G1, half.clone()), (P1, n())],
            beams: vec![(NEAR, half.clone()), (FAR, n())],
            preferred: vec![],
            dispreferred: vec![NEAR],
            pairs: 0,
        },
        Scenario {
            name: "compound: tie keeps original, least similar beam",
            example: compound("c6"),
            original: half.clone(),
            few_shot: vec![(G1, half.clone()), (P1, n())],
            beams: vec![(NEAR, half.clone()), (MID, n()), (FAR, halfx.clone())],
            preferred: vec![O],
            dispreferred: vec![FAR],
            pairs: 1,
        },
        Scenario {
            name: "compound: every better candidate, zero-score tie",
            example: compound("c7"),
            original: n(),
            few_shot: vec![(G1, full.clone()), (G2, half.clone()), (P1, n())],
            beams: vec![(NEAR, n()), (FAR, n())],
            preferred: vec![G1, G2],
            dispreferred: vec![FAR],
            pairs: 2,
        },
        Scenario {
            name: "compound: duplicate better candidates collapse",
            example: compound("c8"),
            original: halfx.clone(),
            few_shot: vec![(G1, half.clone()), (P1, halfx.clone()), (G1, half.clone())],
            beams: vec![(NEAR, n()), (MID, halfx.clone())],
            preferred: vec![G1],
            dispreferred: vec![MID],
            pairs: 1,
        },
        Scenario {
            name: "compound: a beam beats the original",
            example: compound("c9"),
            original: halfx.clone(),
            few_shot: vec![(G1, full.clone())],
            beams: vec![(NEAR, half.clone()), (FAR, n())],
            preferred: vec![G1],
            dispreferred: vec![],
            pairs: 0,
        },
        Scenario {
            name: "compound: most similar of the worse beams",
            example: compound("c10"),
            original: half.clone(),
            few_shot: vec![(G1, full.clone()), (G2, full.clone())],
            beams: vec![(NEAR, halfx.clone()), (MID, n()), (FAR, n())],
            preferred: vec![G1, G2],
            dispreferred: vec![NEAR],
            pairs: 2,
        },
        Scenario {
            name: "compound: only beam is the original",
            example: compound("c11"),
            original: half.clone(),
            few_shot: vec![(G1, full.clone())],
            beams: vec![(O, half.clone())],
            preferred: vec![G1],
            dispreferred: vec![],
            pairs: 0,
        },
        Scenario {
            name: "simple: identical preferred and dispreferred dropped",
            example: simple("s12"),
            original: half.clone(),
            few_shot: vec![(C1, n())],
            beams: vec![(C1, n()), (S_FAR, n())],
            preferred: vec![C1],
            dispreferred: vec![C1],
            pairs: 0,
        },
        Scenario {
            name: "simple: similarity tie broken lexicographically",
            example: simple("s13"),
            original: half.clone(),
            few_shot: vec![(C1, n())],
            beams: vec![(S_GOOD, n()), (S_FINE, n())],
            preferred: vec![C1],
            dispreferred: vec![S_FINE],
            pairs: 1,
        },
        Scenario {
            name: "compound: no few-shot candidates",
            example: compound("c14"),
            original: half.clone(),
            few_shot: vec![],
            beams: vec![(NEAR, n())],
            preferred: vec![],
            dispreferred: vec![NEAR],
            pairs: 0,
        },
    ]
}

fn criterion_4_preference_rules() -> Check {
    let table = rule_table();
    let expected_total = 11;
    let mut total = 0;
    for sc in &table {
        let mut backend = TableBackend::default().with(&sc.example.text, sc.original.clone());
        for (t, q) in sc.few_shot.iter().chain(&sc.beams) {
            backend = backend.with(t, q.clone());
        }
        let cand = |items: &[(&str, Vec<Quadruplet>)], origin| -> Vec<SplitCandidate> {
            items.iter().map(|(t, _)| SplitCandidate::new(&sc.example.id, *t, origin)).collect()
        };
        let few = cand(&sc.few_shot, Origin::FewShot);
        let beams = cand(&sc.beams, Origin::Beam);
        let pref = select_preferred(&sc.example, &few, &backend).map_err(|e| e.to_string())?;
        let disp = select_dispreferred(&sc.example, &beams, &backend).map_err(|e| e.to_string())?;
        ensure!(pref == sc.preferred, "{}: preferred {pref:?}, expected {:?}", sc.name, sc.preferred);
        ensure!(disp == sc.dispreferred, "{}: dispreferred {disp:?}, expected {:?}", sc.name, sc.dispreferred);
        let pairs = build_pairs(std::slice::from_ref(&sc.example), &few, &beams, &backend).map_err(|e| e.to_string())?;
        ensure!(pairs.len() == sc.pairs, "{}: {} pairs, expected {}", sc.name, pairs.len(), sc.pairs);
        ensure!(pairs.iter().all(|p| p.preferred != p.dispreferred), "{}: degenerate pair", sc.name);
        total += pairs.len();
    }
    let labels: Vec<ComplexityLabel> = table.iter().map(|s| classify(&s.example)).collect();
    ensure!(labels.contains(&ComplexityLabel::Simple) && labels.contains(&ComplexityLabel::Compound), "grid lacks a label");
    ensure!(total == expected_total, "{total} pairs over the grid, expected {expected_total}");
    Ok(Outcome::Pass(format!("{} scenarios, {total} pairs, all branches exact", table.len())))
}

fn synthetic_vocab() -> CharVocab {
    let corpus = synthetic::corpus(&SyntheticConfig::default());
    CharVocab::from_texts(corpus.iter().flat_map(|e| [e.text.clone(), gold_split(&e.text)]))
}

fn dpo_pairs(n: usize) -> Vec<PreferencePair> {
    synthetic::corpus(&SyntheticConfig { n, seed: 11, simple_fraction: 0.0, tail_fraction: 0.0, ..Default::default() })
        .into_iter()
        .map(|e| {
            let worse = e.text.replacen(" was ", " was was ", 1);
            PreferencePair::new(&e.text, gold_split(&e.text), worse)
        })
        .collect()
}

fn criterion_5_dpo() -> Check {
    let cfg = DpoConfig::default();
    let reference = TinySeq2Seq::new(synthetic_vocab(), &TinyConfig { init_scale: 0.2, seed: 5, ..Default::default() });
    let pairs = dpo_pairs(20);
    for p in &pairs {
        let l = dpo_loss(&reference, &reference, p, &cfg);
        ensure!((l - std::f64::consts::LN_2).abs() <= 1e-9, "loss {l} at policy == reference");
    }

    // gradient against central differences, policy away from the reference
    let mut policy = reference.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for w in policy.params_mut() {
        *w += rng.gen_range(-0.1..0.1);
    }
    let batch = &pairs[..3];
    let refs: Vec<(f64, f64)> = batch
        .iter()
        .map(|p| (reference.log_prob(&p.source, &p.preferred), reference.log_prob(&p.source, &p.dispreferred)))
        .collect();
    let loss_at = |m: &TinySeq2Seq| -> f64 { batch.iter().map(|p| dpo_loss(m, &reference, p, &cfg)).sum::<f64>() };
    let mut grad = vec![0.0; policy.params().len()];
    for (p, r) in batch.iter().zip(&refs) {
        accumulate_dpo_grad(&policy, *r, p, cfg.beta, 1.0, &mut grad);
    }
    let active: Vec<usize> = (0..grad.len()).filter(|&i| grad[i].abs() > 1e-7).collect();
    ensure!(active.len() >= 20, "only {} parameters with gradient", active.len());
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let i = active[rng.gen_range(0..active.len())];
        let mut plus = policy.clone();
        plus.params_mut()[i] += h;
        let mut minus = policy.clone();
        minus.params_mut()[i] -= h;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs());
        worst = worst.max(rel);
    }
    ensure!(worst < 1e-4, "DPO gradient relative error {worst:.2e}");

    let toy = TinySeq2Seq::new(synthetic_vocab(), &TinyConfig::default());
    let (_, log) = train_dpo(toy, &pairs, &DpoConfig { learning_rate: 0.5, ..cfg }).map_err(|e| e.to_string())?;
    ensure!(log.final_loss < std::f64::consts::LN_2, "toy alignment ends at {}", log.final_loss);
    Ok(Outcome::Pass(format!(
        "ln 2 at policy == reference; gradient rel err {worst:.1e}; 20-pair epoch {:.4} -> {:.4}",
        log.initial_loss, log.final_loss
    )))
}

/// `-log p` summed from raw next-step scores with a naive softmax.
fn per_token_oracle(model: &TinySeq2Seq, source: &str, target: &str) -> f64 {
    let chars: Vec<char> = target.chars().collect();
    let mut total = 0.0;
    for t in 0..=chars.len() {
        let prefix: String = chars[..t].iter().collect();
        let logits = model.next_logits(source, &prefix);
        let class = model.output_class(chars.get(t).copied());
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        total -= (logits[class].exp() / z).ln();
    }
    total
}

fn criterion_6_sft() -> Check {
    let start = Instant::now();
    let random = TinySeq2Seq::new(synthetic_vocab(), &TinyConfig { init_scale: 0.3, seed: 9, ..Default::default() });
    let pairs = synthetic::split_pairs(50, 21).map_err(|e| e.to_string())?;
    for (s, t) in pairs.iter().take(10) {
        let loss = sft_loss(&random, s, t);
        ensure!(loss == -random.log_prob(s, t), "sft_loss differs from -log_prob");
        let oracle = per_token_oracle(&random, s, t);
        ensure!((loss - oracle).abs() <= 1e-9 * oracle.max(1.0), "per-token oracle {oracle} vs loss {loss}");
    }

    let corpus: Vec<SftExample> = pairs.iter().map(|(s, t)| SftExample::new(s, t)).collect();
    let vocab = CharVocab::from_texts(pairs.iter().flat_map(|(s, t)| [s.as_str(), t.as_str()]));
    let config = SftConfig { train_batch: 8, epochs: 50, learning_rate: 0.5, early_stop_patience: 50, ..Default::default() };
    let (model, log) = train_sft(TinySeq2Seq::new(vocab, &TinyConfig::default()), &corpus, &config, &[])
        .map_err(|e| e.to_string())?;
    let first = log.epochs[0].train_loss;
    let last = mean_nll(&model, &corpus);
    ensure!(last <= 0.5 * first, "train NLL {first:.3} -> {last:.3}");
    let exact = corpus.iter().filter(|e| model.beam_generate(&e.source, 1)[0].0 == e.target).count();
    ensure!(exact * 10 >= corpus.len() * 9, "greedy decode reproduces {exact}/{}", corpus.len());
    within(start.elapsed(), Duration::from_secs(120), "SFT checks")?;
    Ok(Outcome::Pass(format!(
        "per-token oracle exact; NLL {first:.2} -> {last:.3}; greedy {exact}/50 ({:.2?})",
        start.elapsed()
    )))
}

fn criterion_7_oracle_voting() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let f0 = rng.gen::<f64>();
        let scores: Vec<f64> = (0..rng.gen_range(0..12)).map(|_| rng.gen::<f64>()).collect();
        let c = curve_from_scores(f0, &scores, 10);
        ensure!(c.is_non_decreasing() && c.at(0) == Some(f0), "random curve not monotone");
    }
    let corpus = synthetic::corpus(&SyntheticConfig::default());
    let demos = synthetic::demos(&corpus, 3);
    let teacher = synthetic::teacher();
    let cands = generate_for_examples(&teacher, &corpus, PromptMode::FewShot, &demos, &FilterConfig::default(), 4)
        .map_err(|e| e.to_string())?;
    let backend = LexiconBackend::new(synthetic::lexicon());
    let (mut at0, mut at10) = (0.0, 0.0);
    for (ex, cs) in corpus.iter().zip(&cands) {
        let curve = oracle_vote(ex, cs, &backend, 10).map_err(|e| e.to_string())?;
        ensure!(curve.is_non_decreasing(), "{}: curve decreases", ex.id);
        let original_only = [SplitCandidate::new(&ex.id, &ex.text, Origin::FewShot)];
        let flat = oracle_vote(ex, &original_only, &backend, 1).map_err(|e| e.to_string())?;
        ensure!(flat.at(1) == flat.at(0), "{}: original as candidate moved the curve", ex.id);
        at0 += curve.at(0).unwrap();
        at10 += curve.at(10).unwrap();
    }
    let n = corpus.len() as f64;
    ensure!(at10 > at0, "oracle F1 at m=10 {:.3} not above m=0 {:.3}", at10 / n, at0 / n);
    Ok(Outcome::Pass(format!("monotone on all curves; mean F1 m=0 {:.3} -> m=10 {:.3}", at0 / n, at10 / n)))
}

fn criterion_8_end_to_end() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = PipelineConfig::from_toml(&format!(
        r#"
run_dir = "{}"
seed = 42
[data.synthetic]
n = 240
seed = 7
test_fraction = 0.25
[teacher]
kind = "synthetic"
[sft]
train_batch = 16
epochs = 15
learning_rate = 0.5
early_stop_patience = 5
[dpo]
learning_rate = 0.05
[backend]
kind = "lexicon"
"#,
        dir.path().join("run").display()
    ))
    .map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(config, dir.path()).map_err(|e| e.to_string())?;
    let summary = pipeline.run_all().map_err(|e| e.to_string())?;

    // the corpus is built so that fused clauses defeat the lexicon backend
    let backend = LexiconBackend::new(synthetic::lexicon());
    let corpus = synthetic::corpus(&SyntheticConfig::default());
    ensure!(corpus.len() >= 200, "synthetic corpus has {} sentences", corpus.len());
    for e in corpus.iter().filter(|e| e.quads.len() > 1) {
        let fused = sentence_f1(&backend.predict(&e.text, e.task).unwrap(), &e.quads).f1;
        let split = sentence_f1(&backend.predict(&gold_split(&e.text), e.task).unwrap(), &e.quads).f1;
        ensure!(fused < 1.0 && split == 1.0, "{}: fused {fused}, split {split}", e.id);
    }

    let compound = |r: &aspect_splitter::evaluation::EvalReport| r.per_complexity[&ComplexityLabel::Compound].f1;
    let (base, aligned) = (&summary.baseline, &summary.aligned);
    ensure!(aligned.f1 >= base.f1, "aligned F1 {:.3} below baseline {:.3}", aligned.f1, base.f1);
    ensure!(compound(aligned) > compound(base), "compound F1 {:.3} not above {:.3}", compound(aligned), compound(base));
    within(start.elapsed(), Duration::from_secs(300), "full pipeline")?;
    Ok(Outcome::Pass(format!(
        "micro-F1 {:.3} -> {:.3}, compound {:.3} -> {:.3}, {} pairs ({:.2?})",
        base.f1,
        aligned.f1,
        compound(base),
        compound(aligned),
        summary.preference_pairs,
        start.elapsed()
    )))
}

fn criterion_9_projection() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..500 {
        let (golds, preds) = random_corpus(&mut rng, 5, 4);
        let tasd = evaluate_projected(&preds, &golds, Task::Tasd).map_err(|e| e.to_string())?;
        let direct = brute_micro(&golds, &preds, |q| (q.aspect.clone(), q.category.clone(), q.polarity));
        ensure!((tasd.precision, tasd.recall, tasd.f1) == direct, "case {case}: TASD projection differs");
        let aste = evaluate_projected(&preds, &golds, Task::Aste).map_err(|e| e.to_string())?;
        let direct = brute_micro(&golds, &preds, |q| (q.aspect.clone(), q.opinion.clone(), q.polarity));
        ensure!((aste.precision, aste.recall, aste.f1) == direct, "case {case}: ASTE projection differs");
    }
    Ok(Outcome::Pass("500 random cases agree exactly for TASD and ASTE".into()))
}

#[test]
fn acceptance_criteria() {
    let checks: [(u8, &str, fn() -> Check); 9] = [
        (1, "parsing round-trip and dataset statistics", criterion_1_round_trip),
        (2, "complexity calibration", criterion_2_complexity_calibration),
        (3, "metric oracle equivalence", criterion_3_metric_oracles),
        (4, "preference rule table", criterion_4_preference_rules),
        (5, "DPO correctness", criterion_5_dpo),
        (6, "SFT correctness", criterion_6_sft),
        (7, "oracle voting", criterion_7_oracle_voting),
        (8, "end-to-end plug-and-play gain", criterion_8_end_to_end),
        (9, "cross-task projection", criterion_9_projection),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout();
    for (id, name, check) in checks {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let line = match &result {
            Ok(Outcome::Pass(detail)) => format!("PASS  criterion {id} ({name}): {detail}"),
            Ok(Outcome::Skip(why)) => {
                eprintln!("warning: criterion {id} skipped: {why}");
                format!("SKIP  criterion {id} ({name}): {why}")
            }
            Err(why) => {
                failed.push(id);
                format!("FAIL  criterion {id} ({name}): {why}")
            }
        };
        // bypass libtest capture so the summary is always visible
        let _ = writeln!(out, "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
