//! Character-level log-linear seq2seq model with a monotone source pointer.
//!
//! The decoder keeps a pointer into the source. Emitting the character under
//! the pointer copies it (pointer advances), emitting the character after it
//! skips one source character, anything else is an insertion. Each step is a
//! softmax over output characters whose logits are a sum of weight rows
//! selected by sparse features: a window of source characters around the
//! pointer, the last three emitted characters, steps since the last copy,
//! and hashed words around the pointer (previous, next and the one after). Pointer moves are a deterministic
//! function of the emitted prefix, so `log_prob` is an exact sequence
//! probability and gradients are closed form.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SeqModel, Trainable};

const PAD: u32 = 0;
const UNK: u32 = 1;
const EOS: u32 = 2;
const FIRST_CHAR: u32 = 3;

const SRC_OFFSETS: [isize; 6] = [-2, -1, 0, 1, 2, 3];
const PREV_CHARS: usize = 3;
const SINCE_COPY_BUCKETS: usize = 4;

/// Character inventory. Ids 0..3 are padding, unknown and end-of-sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, u32>,
}

impl CharVocab {
    pub fn from_chars(mut chars: Vec<char>) -> Self {
        chars.sort_unstable();
        chars.dedup();
        let index = chars.iter().enumerate().map(|(i, c)| (*c, FIRST_CHAR + i as u32)).collect();
        CharVocab { chars, index }
    }

    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::from_chars(texts.into_iter().flat_map(|t| t.as_ref().chars().collect::<Vec<_>>()).collect())
    }

    /// Number of ids including the three specials.
    pub fn size(&self) -> usize {
        self.chars.len() + FIRST_CHAR as usize
    }

    fn id(&self, c: char) -> u32 {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    fn char_of(&self, id: u32) -> Option<char> {
        id.checked_sub(FIRST_CHAR).and_then(|i| self.chars.get(i as usize)).copied()
    }
}

impl Serialize for CharVocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.chars.iter().collect::<String>())
    }
}

impl<'de> Deserialize<'de> for CharVocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(CharVocab::from_chars(s.chars().collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TinyConfig {
    /// Hash buckets per word feature template.
    pub word_buckets: usize,
    /// Weights start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig { word_buckets: 64, init_scale: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinySeq2Seq {
    vocab: CharVocab,
    word_buckets: usize,
    weights: Vec<f64>,
}

/// Per-source precomputation shared by every decoding step.
struct Source {
    chars: Vec<char>,
    ids: Vec<u32>,
    next_word: Vec<Option<usize>>,
    next2_word: Vec<Option<usize>>,
    prev_word: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct State {
    pos: usize,
    prev: [u32; PREV_CHARS],
    since_copy: usize,
}

impl State {
    fn start() -> Self {
        State { pos: 0, prev: [PAD; PREV_CHARS], since_copy: 0 }
    }
}

fn fnv1a(s: &[char]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in s {
        let mut buf = [0u8; 4];
        for b in c.encode_utf8(&mut buf).bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl TinySeq2Seq {
    pub fn new(vocab: CharVocab, config: &TinyConfig) -> Self {
        let word_buckets = config.word_buckets.max(1);
        let n = Self::feature_count(vocab.size(), word_buckets) * (vocab.size() - 1);
        let weights = if config.init_scale > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            (0..n).map(|_| rng.gen_range(-config.init_scale..=config.init_scale)).collect()
        } else {
            vec![0.0; n]
        };
        TinySeq2Seq { vocab, word_buckets, weights }
    }

    pub fn vocab(&self) -> &CharVocab {
        &self.vocab
    }

    /// Unnormalized output scores once `prefix` has been emitted, indexed by
    /// [`TinySeq2Seq::output_class`].
    pub fn next_logits(&self, source: &str, prefix: &str) -> Vec<f64> {
        let src = self.prepare(source);
        let mut st = State::start();
        for c in prefix.chars() {
            st = self.step(&src, &st, c);
        }
        let mut feats = Vec::new();
        self.features(&src, &st, &mut feats);
        let n_out = self.n_out();
        let mut logits = vec![0.0; n_out];
        for f in feats {
            for (l, w) in logits.iter_mut().zip(&self.weights[f * n_out..(f + 1) * n_out]) {
                *l += w;
            }
        }
        logits
    }

    /// Output class of the next target character, or of the end marker for
    /// `None`.
    pub fn output_class(&self, next: Option<char>) -> usize {
        match next {
            Some(c) => self.class_of(c),
            None => EOS as usize - 1,
        }
    }

    fn feature_count(n_in: usize, buckets: usize) -> usize {
        (SRC_OFFSETS.len() + PREV_CHARS) * n_in + SINCE_COPY_BUCKETS + 4 * buckets + 1
    }

    fn n_in(&self) -> usize {
        self.vocab.size()
    }

    /// Output classes are ids `1..n_in` (unknown, end, characters).
    fn n_out(&self) -> usize {
        self.vocab.size() - 1
    }

    fn prepare(&self, source: &str) -> Source {
        let chars: Vec<char> = source.chars().collect();
        let ids = chars.iter().map(|c| self.vocab.id(*c)).collect();
        let n = chars.len();
        let mut words: Vec<(usize, usize)> = Vec::new();
        let mut j = 0;
        while j < n {
            if chars[j].is_whitespace() {
                j += 1;
                continue;
            }
            let start = j;
            while j < n && !chars[j].is_whitespace() {
                j += 1;
            }
            let bucket = (fnv1a(&chars[start..j]) % self.word_buckets as u64) as usize;
            words.push((start, bucket));
        }
        let mut next_word = vec![None; n + 1];
        let mut next2_word = vec![None; n + 1];
        let mut prev_word = vec![None; n + 1];
        for p in 0..=n {
            let started = words.partition_point(|(s, _)| *s <= p);
            // the word under the pointer, or the next one when on a space
            let ahead = if p < n && !chars[p].is_whitespace() { started.checked_sub(1) } else { Some(started) };
            if let Some(i) = ahead.filter(|i| *i < words.len()) {
                next_word[p] = Some(words[i].1);
                next2_word[p] = words.get(i + 1).map(|x| x.1);
            }
            let behind = words.partition_point(|(s, _)| *s < p).checked_sub(1);
            prev_word[p] = behind.map(|i| words[i].1);
        }
        Source { chars, ids, next_word, next2_word, prev_word }
    }

    fn features(&self, src: &Source, st: &State, out: &mut Vec<usize>) {
        out.clear();
        let n_in = self.n_in();
        let mut base = 0;
        for off in SRC_OFFSETS {
            let p = st.pos as isize + off;
            let id = if p >= 0 && (p as usize) < src.ids.len() { src.ids[p as usize] } else { PAD };
            out.push(base + id as usize);
            base += n_in;
        }
        for id in st.prev {
            out.push(base + id as usize);
            base += n_in;
        }
        out.push(base + st.since_copy.min(SINCE_COPY_BUCKETS - 1));
        base += SINCE_COPY_BUCKETS;
        let b = self.word_buckets;
        if let Some(w) = src.next_word[st.pos] {
            out.push(base + w);
            let at_boundary = st.pos == 0 || src.chars.get(st.pos).is_some_and(|c| c.is_whitespace());
            if at_boundary {
                out.push(base + b + w);
                if let Some(w2) = src.next2_word[st.pos] {
                    out.push(base + 2 * b + w2);
                }
            }
        }
        base += 3 * b;
        if let Some(w) = src.prev_word[st.pos] {
            out.push(base + w);
        }
        base += b;
        out.push(base);
    }

    /// Log-softmax over output classes for the given active features.
    fn log_softmax(&self, feats: &[usize], logits: &mut Vec<f64>) {
        let n_out = self.n_out();
        logits.clear();
        logits.resize(n_out, 0.0);
        for &f in feats {
            let row = &self.weights[f * n_out..(f + 1) * n_out];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += w;
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        for l in logits.iter_mut() {
            *l -= lse;
        }
    }

    fn step(&self, src: &Source, st: &State, emitted: char) -> State {
        let n = src.chars.len();
        let (pos, since_copy) = if st.pos < n && src.chars[st.pos] == emitted {
            (st.pos + 1, 0)
        } else if st.pos + 1 < n && src.chars[st.pos + 1] == emitted {
            (st.pos + 2, 0)
        } else {
            (st.pos, st.since_copy + 1)
        };
        let mut prev = [PAD; PREV_CHARS];
        prev[0] = self.vocab.id(emitted);
        prev[1..].copy_from_slice(&st.prev[..PREV_CHARS - 1]);
        State { pos, prev, since_copy }
    }

    /// Character emitted for an output class; unknown ids copy an unknown
    /// source character under the pointer when there is one.
    fn emit(&self, src: &Source, st: &State, class: usize) -> char {
        let id = class as u32 + 1;
        if id == UNK {
            for p in [st.pos, st.pos + 1] {
                if src.ids.get(p) == Some(&UNK) {
                    return src.chars[p];
                }
            }
            return char::REPLACEMENT_CHARACTER;
        }
        self.vocab.char_of(id).expect("character class")
    }

    fn class_of(&self, c: char) -> usize {
        self.vocab.id(c) as usize - 1
    }

    fn walk(&self, source: &str, target: &str, mut visit: impl FnMut(&[usize], &[f64], usize)) -> f64 {
        let src = self.prepare(source);
        let mut st = State::start();
        let mut feats = Vec::with_capacity(16);
        let mut logp = Vec::with_capacity(self.n_out());
        let mut total = 0.0;
        for c in target.chars().map(Some).chain(std::iter::once(None)) {
            self.features(&src, &st, &mut feats);
            self.log_softmax(&feats, &mut logp);
            let class = match c {
                Some(c) => self.class_of(c),
                None => EOS as usize - 1,
            };
            total += logp[class];
            visit(&feats, &logp, class);
            if let Some(c) = c {
                st = self.step(&src, &st, c);
            }
        }
        total
    }
}

#[derive(Clone)]
struct Hyp {
    text: String,
    state: State,
    score: f64,
}

impl SeqModel for TinySeq2Seq {
    fn log_prob(&self, source: &str, target: &str) -> f64 {
        self.walk(source, target, |_, _, _| {}).min(0.0)
    }

    fn beam_generate(&self, source: &str, width: usize) -> Vec<(String, f64)> {
        if width == 0 {
            return Vec::new();
        }
        let src = self.prepare(source);
        let max_len = 2 * src.chars.len() + 16;
        let eos = EOS as usize - 1;
        let mut live = vec![Hyp { text: String::new(), state: State::start(), score: 0.0 }];
        let mut finished: Vec<(String, f64)> = Vec::new();
        let mut feats = Vec::with_capacity(16);
        let mut logp = Vec::with_capacity(self.n_out());

        for _ in 0..=max_len {
            let mut expansions: Vec<(f64, usize, usize)> = Vec::new();
            for (h, hyp) in live.iter().enumerate() {
                self.features(&src, &hyp.state, &mut feats);
                self.log_softmax(&feats, &mut logp);
                for (class, lp) in logp.iter().enumerate() {
                    expansions.push((hyp.score + lp, h, class));
                }
            }
            expansions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            // the best `width` expansions survive; those ending here retire
            let mut next = Vec::with_capacity(width);
            for &(score, h, class) in expansions.iter().take(width) {
                if class == eos {
                    finished.push((live[h].text.clone(), score));
                } else {
                    let c = self.emit(&src, &live[h].state, class);
                    let mut text = live[h].text.clone();
                    text.push(c);
                    next.push(Hyp { state: self.step(&src, &live[h].state, c), text, score });
                }
            }
            live = next;
            if live.is_empty() || finished.len() >= width {
                break;
            }
        }
        if finished.is_empty() {
            // length limit hit: return the best partial hypotheses
            finished = live.into_iter().map(|h| (h.text, h.score)).collect();
        }
        finished.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        finished.truncate(width);
        finished
    }
}

impl Trainable for TinySeq2Seq {
    fn params(&self) -> &[f64] {
        &self.weights
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn accumulate_log_prob_grad(&self, source: &str, target: &str, scale: f64, grad: &mut [f64]) -> f64 {
        let n_out = self.n_out();
        self.walk(source, target, |feats, logp, class| {
            for &f in feats {
                let row = &mut grad[f * n_out..(f + 1) * n_out];
                for (o, g) in row.iter_mut().enumerate() {
                    let indicator = if o == class { 1.0 } else { 0.0 };
                    *g += scale * (indicator - logp[o].exp());
                }
            }
        })
    }
}
