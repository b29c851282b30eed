//! Shared fixtures for the benchmarks.

use aspect_splitter::data::serialize_example;
use aspect_splitter::splitter::{train_sft, CharVocab, SftConfig, SftExample, TinyConfig, TinySeq2Seq};
use aspect_splitter::synthetic::{self, SyntheticConfig};

/// A synthetic dataset rendered as file content.
pub fn dataset_text(n: usize) -> String {
    synthetic::corpus(&SyntheticConfig { n, ..Default::default() })
        .iter()
        .map(|e| serialize_example(e) + "\n")
        .collect()
}

/// A briefly trained tiny splitter and its training pairs.
pub fn trained_model() -> (TinySeq2Seq, Vec<SftExample>) {
    let pairs = synthetic::split_pairs(50, 3).expect("synthetic pairs");
    let corpus: Vec<SftExample> = pairs.iter().map(|(s, t)| SftExample::new(s, t)).collect();
    let vocab = CharVocab::from_texts(pairs.iter().flat_map(|(s, t)| [s.as_str(), t.as_str()]));
    let config = SftConfig { train_batch: 8, epochs: 10, learning_rate: 0.5, ..Default::default() };
    let (model, _) = train_sft(TinySeq2Seq::new(vocab, &TinyConfig::default()), &corpus, &config, &[]).expect("training");
    (model, corpus)
}
