//! Category-marginal pragmatic reasoning.
//!
//! The listener holds a belief P(c | r) over categories and scores a word by
//! marginalizing the word-given-category table:
//!
//! ```text
//! L0(r | w) ∝ Σ_c P(c | r) · P(w | c)
//! ```
//!
//! Scores are left unnormalized. The pragmatic speaker reweights the literal
//! speaker by the listener, either for a whole utterance
//! (`S1(u|r) = S0(u|r) · L0(r|u)^α`) or word by word during greedy decoding
//! (`S1(w|r,prefix) = S0(w|r,prefix) · L0(r|w)^(α+β)`, where β switches on for
//! words already in the prefix).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CategoryId, Referent, Scene, Utterance, WordCategoryTable, WordId};
use crate::speakers::{argmax_generable, utterance_log_prob, NextWordDist, NextWordModel};

#[derive(Debug, Error)]
pub enum PragmaticsError {
    #[error("invalid category belief: {0}")]
    InvalidBelief(String),
    #[error("belief covers {belief} categories but the table has {table}")]
    BeliefSize { belief: usize, table: usize },
    #[error("word id {0:?} is outside the table vocabulary")]
    UnknownWord(WordId),
    #[error("speaker distribution has {speaker} slots but listener scores have {listener}")]
    VocabularyMismatch { speaker: usize, listener: usize },
    #[error("invalid decode parameters: {0}")]
    InvalidParams(String),
    #[error("utterance-level scores need at least one word")]
    EmptyUtterance,
}

pub type Result<T, E = PragmaticsError> = std::result::Result<T, E>;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// P(c | r) over the category inventory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryBelief {
    probs: Vec<f64>,
}

impl CategoryBelief {
    /// Validates nonnegativity and unit mass.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let belief = Self::raw_weights(probs)?;
        let total: f64 = belief.probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(PragmaticsError::InvalidBelief(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(belief)
    }

    /// Nonnegative weights that need not sum to one, for illustrative
    /// unnormalized beliefs.
    pub fn raw_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(PragmaticsError::InvalidBelief("no categories".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(PragmaticsError::InvalidBelief(format!(
                "weight {w} is negative or not finite"
            )));
        }
        Ok(Self { probs: weights })
    }

    pub fn uniform(n_categories: usize) -> Self {
        assert!(n_categories > 0, "uniform belief over zero categories");
        Self {
            probs: vec![1.0 / n_categories as f64; n_categories],
        }
    }

    pub fn one_hot(n_categories: usize, category: CategoryId) -> Self {
        let mut probs = vec![0.0; n_categories];
        probs[category.index()] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeliefMode {
    /// Maximal uncertainty: 1/|C| each.
    #[default]
    Uniform,
    /// One-hot on the referent's true category.
    Oracle,
    Custom,
}

pub fn make_category_belief(
    mode: BeliefMode,
    referent: &Referent,
    n_categories: usize,
    custom: Option<&[f64]>,
) -> Result<CategoryBelief> {
    match (mode, custom) {
        (BeliefMode::Custom, Some(p)) => {
            if p.len() != n_categories {
                return Err(PragmaticsError::InvalidBelief(format!(
                    "custom belief has {} entries for {n_categories} categories",
                    p.len()
                )));
            }
            CategoryBelief::new(p.to_vec())
        }
        (BeliefMode::Custom, None) => Err(PragmaticsError::InvalidBelief(
            "custom mode requires a distribution".into(),
        )),
        (_, Some(_)) => Err(PragmaticsError::InvalidBelief(
            "a distribution is only accepted in custom mode".into(),
        )),
        (_, None) if n_categories == 0 => {
            Err(PragmaticsError::InvalidBelief("no categories".into()))
        }
        (BeliefMode::Uniform, None) => Ok(CategoryBelief::uniform(n_categories)),
        (BeliefMode::Oracle, None) => {
            if referent.category.index() >= n_categories {
                return Err(PragmaticsError::InvalidBelief(format!(
                    "referent category {} outside inventory of {n_categories}",
                    referent.category
                )));
            }
            Ok(CategoryBelief::one_hot(n_categories, referent.category))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta_repeat: f64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_floor")]
    pub listener_floor: f64,
}

fn default_alpha() -> f64 {
    2.0
}
fn default_beta() -> f64 {
    2.0
}
fn default_max_len() -> usize {
    6
}
fn default_floor() -> f64 {
    1e-9
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta_repeat: default_beta(),
            max_len: default_max_len(),
            listener_floor: default_floor(),
        }
    }
}

impl DecodeParams {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(PragmaticsError::InvalidParams(format!("alpha = {}", self.alpha)));
        }
        if !(self.beta_repeat.is_finite() && self.beta_repeat >= 0.0) {
            return Err(PragmaticsError::InvalidParams(format!(
                "beta_repeat = {}",
                self.beta_repeat
            )));
        }
        if !(self.listener_floor.is_finite() && self.listener_floor > 0.0) {
            return Err(PragmaticsError::InvalidParams(format!(
                "listener_floor = {}",
                self.listener_floor
            )));
        }
        if self.max_len == 0 {
            return Err(PragmaticsError::InvalidParams("max_len = 0".into()));
        }
        Ok(())
    }

    /// Listener exponent for a candidate word. With α = 0 the listener is
    /// switched off entirely, so the repeat bonus does not apply either.
    pub fn exponent(&self, repeated: bool) -> f64 {
        if self.alpha == 0.0 {
            0.0
        } else if repeated {
            self.alpha + self.beta_repeat
        } else {
            self.alpha
        }
    }
}

fn check_belief(table: &WordCategoryTable, belief: &CategoryBelief) -> Result<()> {
    if belief.len() != table.n_categories() {
        return Err(PragmaticsError::BeliefSize {
            belief: belief.len(),
            table: table.n_categories(),
        });
    }
    Ok(())
}

fn marginal(table: &WordCategoryTable, belief: &CategoryBelief, word: WordId) -> f64 {
    belief
        .probs()
        .iter()
        .enumerate()
        .map(|(c, &p)| p * table.prob(word, CategoryId(c as u32)))
        .sum()
}

/// Σ_c P(c|r) · P(word|c). `WordId::OOV` scores with the table's floor.
pub fn word_listener_score(
    table: &WordCategoryTable,
    belief: &CategoryBelief,
    word: WordId,
) -> Result<f64> {
    check_belief(table, belief)?;
    if word != WordId::OOV && word.0 as usize >= table.n_words() {
        return Err(PragmaticsError::UnknownWord(word));
    }
    Ok(marginal(table, belief, word))
}

/// Listener scores for every output slot: words, then EOS (neutral 1), then
/// OOV.
pub fn listener_scores(table: &WordCategoryTable, belief: &CategoryBelief) -> Result<Vec<f64>> {
    check_belief(table, belief)?;
    let n = table.n_words();
    let mut scores: Vec<f64> = (0..n as u32)
        .map(|w| marginal(table, belief, WordId(w)))
        .collect();
    scores.push(1.0);
    scores.push(marginal(table, belief, WordId::OOV));
    Ok(scores)
}

/// S₁ step scores: `s0(w) · max(L(w), floor)^(α + β(w))`, with EOS held at a
/// neutral listener score of 1.
pub fn s1_next_word_scores(
    s0: &NextWordDist,
    listener: &[f64],
    prefix: &Utterance,
    params: &DecodeParams,
) -> Result<Vec<f64>> {
    let slots = s0.slots();
    if slots.len() != listener.len() {
        return Err(PragmaticsError::VocabularyMismatch {
            speaker: slots.len(),
            listener: listener.len(),
        });
    }
    let eos = s0.eos_slot();
    Ok(slots
        .iter()
        .zip(listener)
        .enumerate()
        .map(|(slot, (&p, &l))| {
            if slot == eos {
                return p;
            }
            let repeated = prefix.contains(s0.slot_word(slot));
            p * l.max(params.listener_floor).powf(params.exponent(repeated))
        })
        .collect())
}

/// Incremental greedy S₁ decoding.
pub fn s1_decode<M: NextWordModel + ?Sized>(
    speaker: &M,
    table: &WordCategoryTable,
    belief: &CategoryBelief,
    referent: &Referent,
    params: &DecodeParams,
) -> Result<Utterance> {
    params.validate()?;
    let listener = listener_scores(table, belief)?;
    let mut out = Utterance::empty();
    while out.len() < params.max_len {
        let s0 = speaker
            .next_word_dist(referent, &out)
            .expect("prefix is open while decoding");
        let scores = s1_next_word_scores(&s0, &listener, &out, params)?;
        let slot = argmax_generable(&scores);
        if slot == s0.eos_slot() {
            out.terminated = true;
            break;
        }
        out.tokens.push(s0.slot_word(slot));
    }
    Ok(out)
}

/// log S₁(u|r) = log S₀(u|r) + α · Σ_w log L(w). The utterance-level
/// listener score is the product of per-word scores.
pub fn s1_utterance_log_score<M: NextWordModel + ?Sized>(
    speaker: &M,
    table: &WordCategoryTable,
    belief: &CategoryBelief,
    referent: &Referent,
    utterance: &Utterance,
    alpha: f64,
) -> Result<f64> {
    check_belief(table, belief)?;
    if utterance.tokens.is_empty() {
        return Err(PragmaticsError::EmptyUtterance);
    }
    let mut listener = 0.0;
    for &w in &utterance.tokens {
        listener += word_listener_score(table, belief, w)?.ln();
    }
    let s0 = utterance_log_prob(speaker, referent, utterance);
    Ok(if alpha == 0.0 { s0 } else { s0 + alpha * listener })
}

pub fn s1_utterance_score<M: NextWordModel + ?Sized>(
    speaker: &M,
    table: &WordCategoryTable,
    belief: &CategoryBelief,
    referent: &Referent,
    utterance: &Utterance,
    alpha: f64,
) -> Result<f64> {
    s1_utterance_log_score(speaker, table, belief, referent, utterance, alpha).map(f64::exp)
}

/// Referent-level listener: `S₀(u|r)·P(r)` normalized over the scene.
pub fn standard_rsa_listener<M: NextWordModel + ?Sized>(
    speaker: &M,
    scene: &Scene,
    utterance: &Utterance,
) -> Vec<f64> {
    let logs: Vec<f64> = scene
        .referents()
        .iter()
        .zip(scene.prior())
        .map(|(r, p)| utterance_log_prob(speaker, r, utterance) + p.ln())
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return scene.prior();
    }
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}
