//! The literal speaker: a tabular next-word model conditioned on a bucket of
//! referent features and the previous token.
//!
//! Estimates back off from `(bucket, prev)` to `(prev)` to the unigram when a
//! context has no training events. Every level is add-k smoothed over the
//! output slots (vocabulary, EOS and OOV), so distributions sum to one over
//! all slots and are strictly positive whenever `k > 0`.
//!
//! The model only sees the last token of the prefix.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Categories, RefExCorpus, Referent, Utterance, Vocabulary, WordId, EOS_TOKEN, OOV_TOKEN};

#[derive(Debug, Error)]
pub enum SpeakerError {
    #[error("cannot train a speaker on an empty corpus")]
    EmptyCorpus,
    #[error("prefix is already terminated")]
    TerminatedPrefix,
    #[error("smoothing constant must be finite and nonnegative, got {0}")]
    InvalidSmoothing(f64),
    #[error("invalid speaker dump: {0}")]
    InvalidDump(String),
}

pub type Result<T, E = SpeakerError> = std::result::Result<T, E>;

/// Which referent features form the conditioning bucket.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRule {
    #[serde(default)]
    pub use_category: bool,
    #[serde(default)]
    pub attributes: Vec<String>,
}

impl FeatureRule {
    pub fn attributes<I, S>(attrs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            use_category: false,
            attributes: attrs.into_iter().map(Into::into).collect(),
        }
    }

    pub fn with_category(mut self) -> Self {
        self.use_category = true;
        self
    }

    /// Missing attributes bucket as the empty string.
    pub fn bucket(&self, referent: &Referent, categories: &Categories) -> Vec<String> {
        let mut key = Vec::with_capacity(self.attributes.len() + 1);
        if self.use_category {
            key.push(categories.name(referent.category).to_owned());
        }
        for a in &self.attributes {
            key.push(referent.attr(a).unwrap_or("").to_owned());
        }
        key
    }
}

/// Next-token distribution over output slots (see [`Vocabulary::slot`]).
#[derive(Clone, Debug, PartialEq)]
pub struct NextWordDist {
    probs: Vec<f64>,
}

impl NextWordDist {
    pub fn from_slots(probs: Vec<f64>) -> Self {
        assert!(probs.len() >= 2, "distribution needs EOS and OOV slots");
        Self { probs }
    }

    pub fn slots(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_words(&self) -> usize {
        self.probs.len() - 2
    }

    pub fn eos_slot(&self) -> usize {
        self.probs.len() - 2
    }

    pub fn oov_slot(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn slot_of(&self, word: WordId) -> usize {
        match word {
            WordId::EOS => self.eos_slot(),
            WordId(i) if (i as usize) < self.n_words() => i as usize,
            _ => self.oov_slot(),
        }
    }

    pub fn slot_word(&self, slot: usize) -> WordId {
        if slot < self.n_words() {
            WordId(slot as u32)
        } else if slot == self.eos_slot() {
            WordId::EOS
        } else {
            WordId::OOV
        }
    }

    pub fn prob(&self, word: WordId) -> f64 {
        self.probs[self.slot_of(word)]
    }

    pub fn eos(&self) -> f64 {
        self.probs[self.eos_slot()]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Highest-scoring generable slot (words and EOS, never OOV); ties go to the
/// lowest word id.
pub fn argmax_generable(scores: &[f64]) -> usize {
    let candidates = scores.len() - 1;
    let mut best = 0;
    for i in 1..candidates {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    best
}

/// Anything that yields S₀(w | r, prefix). Pragmatic decoding is written
/// against this trait only.
pub trait NextWordModel {
    fn vocabulary(&self) -> &Vocabulary;
    fn next_word_dist(&self, referent: &Referent, prefix: &Utterance) -> Result<NextWordDist>;
}

#[derive(Clone, Debug, PartialEq)]
struct Counts {
    counts: Vec<u32>,
    total: u64,
}

impl Counts {
    fn new(n: usize) -> Self {
        Self {
            counts: vec![0; n],
            total: 0,
        }
    }

    fn add(&mut self, slot: usize) {
        self.counts[slot] += 1;
        self.total += 1;
    }
}

const BOS_KEY: u32 = u32::MAX;

/// Which estimate answered a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackoffLevel {
    Contextual,
    Bigram,
    Unigram,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiteralSpeaker {
    vocabulary: Vocabulary,
    categories: Categories,
    feature_rule: FeatureRule,
    smoothing_k: f64,
    buckets: HashMap<Vec<String>, u32>,
    contextual: HashMap<(u32, u32), Counts>,
    bigram: HashMap<u32, Counts>,
    unigram: Counts,
}

pub fn train_literal_speaker(
    train: &RefExCorpus,
    smoothing_k: f64,
    feature_rule: &FeatureRule,
) -> Result<LiteralSpeaker> {
    if train.is_empty() {
        return Err(SpeakerError::EmptyCorpus);
    }
    let mut speaker = LiteralSpeaker::empty(
        train.vocabulary.clone(),
        train.categories.clone(),
        feature_rule.clone(),
        smoothing_k,
    )?;
    for rec in &train.records {
        let key = feature_rule.bucket(rec.target(), &train.categories);
        let next_id = speaker.buckets.len() as u32;
        let bucket = *speaker.buckets.entry(key).or_insert(next_id);
        let mut prev = BOS_KEY;
        let slots = rec
            .expression
            .tokens
            .iter()
            .map(|&t| speaker.vocabulary.slot(t))
            .chain(rec.expression.terminated.then(|| speaker.vocabulary.eos_slot()));
        for slot in slots.collect::<Vec<_>>() {
            speaker.observe(bucket, prev, slot, 1);
            prev = slot as u32;
        }
    }
    Ok(speaker)
}

impl LiteralSpeaker {
    fn empty(
        vocabulary: Vocabulary,
        categories: Categories,
        feature_rule: FeatureRule,
        smoothing_k: f64,
    ) -> Result<Self> {
        if !smoothing_k.is_finite() || smoothing_k < 0.0 {
            return Err(SpeakerError::InvalidSmoothing(smoothing_k));
        }
        let n = vocabulary.n_slots();
        Ok(Self {
            vocabulary,
            categories,
            feature_rule,
            smoothing_k,
            buckets: HashMap::new(),
            contextual: HashMap::new(),
            bigram: HashMap::new(),
            unigram: Counts::new(n),
        })
    }

    fn observe(&mut self, bucket: u32, prev: u32, slot: usize, times: u32) {
        let n = self.vocabulary.n_slots();
        for _ in 0..times {
            self.contextual
                .entry((bucket, prev))
                .or_insert_with(|| Counts::new(n))
                .add(slot);
            self.bigram.entry(prev).or_insert_with(|| Counts::new(n)).add(slot);
            self.unigram.add(slot);
        }
    }

    pub fn smoothing_k(&self) -> f64 {
        self.smoothing_k
    }

    pub fn feature_rule(&self) -> &FeatureRule {
        &self.feature_rule
    }

    pub fn categories(&self) -> &Categories {
        &self.categories
    }

    fn prev_key(&self, prefix: &Utterance) -> u32 {
        prefix
            .last()
            .map_or(BOS_KEY, |w| self.vocabulary.slot(w) as u32)
    }

    fn lookup(&self, referent: &Referent, prefix: &Utterance) -> (BackoffLevel, &Counts) {
        let prev = self.prev_key(prefix);
        let key = self.feature_rule.bucket(referent, &self.categories);
        if let Some(c) = self
            .buckets
            .get(&key)
            .and_then(|b| self.contextual.get(&(*b, prev)))
            .filter(|c| c.total > 0)
        {
            return (BackoffLevel::Contextual, c);
        }
        if let Some(c) = self.bigram.get(&prev).filter(|c| c.total > 0) {
            return (BackoffLevel::Bigram, c);
        }
        (BackoffLevel::Unigram, &self.unigram)
    }

    pub fn backoff_level(&self, referent: &Referent, prefix: &Utterance) -> BackoffLevel {
        self.lookup(referent, prefix).0
    }

    pub fn dump(&self) -> SpeakerDump {
        let word = |slot: usize| -> String {
            let w = self.vocabulary.slot_word(slot);
            self.vocabulary.word(w).to_owned()
        };
        let prev_name = |p: u32| -> String {
            if p == BOS_KEY {
                BOS_NAME.to_owned()
            } else {
                word(p as usize)
            }
        };
        let sparse = |c: &Counts| -> BTreeMap<String, u32> {
            c.counts
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(|(s, &n)| (word(s), n))
                .collect()
        };
        let mut by_bucket: Vec<(&Vec<String>, u32)> =
            self.buckets.iter().map(|(k, &v)| (k, v)).collect();
        by_bucket.sort();
        let mut contexts = Vec::new();
        for (key, b) in by_bucket {
            let mut prevs: Vec<u32> = self
                .contextual
                .keys()
                .filter(|(bb, _)| *bb == b)
                .map(|&(_, p)| p)
                .collect();
            prevs.sort_by_key(|&p| prev_name(p));
            for p in prevs {
                contexts.push(ContextDump {
                    bucket: key.clone(),
                    prev: prev_name(p),
                    counts: sparse(&self.contextual[&(b, p)]),
                });
            }
        }
        SpeakerDump {
            format: DUMP_FORMAT.to_owned(),
            smoothing_k: self.smoothing_k,
            feature_rule: self.feature_rule.clone(),
            vocabulary: self.vocabulary.words().to_vec(),
            categories: self.categories.names().to_vec(),
            contexts,
        }
    }

    /// Rebuilds a speaker from contextual counts; the bigram and unigram
    /// levels are their marginals.
    pub fn from_dump(dump: &SpeakerDump) -> Result<Self> {
        if dump.format != DUMP_FORMAT {
            return Err(SpeakerError::InvalidDump(format!(
                "unsupported format `{}`",
                dump.format
            )));
        }
        let vocabulary = Vocabulary::from_words(&dump.vocabulary);
        if vocabulary.len() != dump.vocabulary.len() {
            return Err(SpeakerError::InvalidDump("duplicate vocabulary entry".into()));
        }
        let mut speaker = Self::empty(
            vocabulary,
            Categories::from_names(&dump.categories),
            dump.feature_rule.clone(),
            dump.smoothing_k,
        )?;
        let slot_of = |s: &Self, w: &str| -> Result<usize> {
            match w {
                EOS_TOKEN => Ok(s.vocabulary.eos_slot()),
                OOV_TOKEN => Ok(s.vocabulary.oov_slot()),
                _ => s
                    .vocabulary
                    .get(w)
                    .map(|id| id.0 as usize)
                    .ok_or_else(|| SpeakerError::InvalidDump(format!("unknown word `{w}`"))),
            }
        };
        for ctx in &dump.contexts {
            let next_id = speaker.buckets.len() as u32;
            let bucket = *speaker.buckets.entry(ctx.bucket.clone()).or_insert(next_id);
            let prev = if ctx.prev == BOS_NAME {
                BOS_KEY
            } else {
                slot_of(&speaker, &ctx.prev)? as u32
            };
            for (w, &n) in &ctx.counts {
                let slot = slot_of(&speaker, w)?;
                speaker.observe(bucket, prev, slot, n);
            }
        }
        Ok(speaker)
    }
}

impl NextWordModel for LiteralSpeaker {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn next_word_dist(&self, referent: &Referent, prefix: &Utterance) -> Result<NextWordDist> {
        if prefix.terminated {
            return Err(SpeakerError::TerminatedPrefix);
        }
        let (_, counts) = self.lookup(referent, prefix);
        let k = self.smoothing_k;
        let denom = counts.total as f64 + k * counts.counts.len() as f64;
        let probs = counts
            .counts
            .iter()
            .map(|&n| (n as f64 + k) / denom)
            .collect();
        Ok(NextWordDist { probs })
    }
}

const BOS_NAME: &str = "<s>";
pub const DUMP_FORMAT: &str = "refgame.literal-speaker.v1";

/// JSON artifact of a trained speaker: its configuration plus the sparse
/// contextual counts, keyed by bucket values and previous token (`<s>` for
/// the start, `</s>` for the end marker).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerDump {
    pub format: String,
    pub smoothing_k: f64,
    pub feature_rule: FeatureRule,
    pub vocabulary: Vec<String>,
    pub categories: Vec<String>,
    pub contexts: Vec<ContextDump>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextDump {
    pub bucket: Vec<String>,
    pub prev: String,
    pub counts: BTreeMap<String, u32>,
}

/// Greedy S₀ decoding: argmax at every step, stopping at EOS or `max_len`.
pub fn decode_greedy<M: NextWordModel + ?Sized>(
    speaker: &M,
    referent: &Referent,
    max_len: usize,
) -> Utterance {
    let mut out = Utterance::empty();
    while out.len() < max_len {
        let dist = speaker
            .next_word_dist(referent, &out)
            .expect("prefix is open while decoding");
        let slot = argmax_generable(dist.slots());
        if slot == dist.eos_slot() {
            out.terminated = true;
            break;
        }
        out.tokens.push(dist.slot_word(slot));
    }
    out
}

/// log S₀(u | r): per-step log-probabilities, plus the EOS step when the
/// utterance is terminated.
pub fn utterance_log_prob<M: NextWordModel + ?Sized>(
    speaker: &M,
    referent: &Referent,
    utterance: &Utterance,
) -> f64 {
    let mut prefix = Utterance::empty();
    let mut total = 0.0;
    for &w in &utterance.tokens {
        let dist = speaker
            .next_word_dist(referent, &prefix)
            .expect("prefix is open while scoring");
        total += dist.prob(w).ln();
        prefix.tokens.push(w);
    }
    if utterance.terminated {
        let dist = speaker
            .next_word_dist(referent, &prefix)
            .expect("prefix is open while scoring");
        total += dist.eos().ln();
    }
    total
}
