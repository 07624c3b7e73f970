//! Noun-avoidance metrics, the evaluation listener and similar-category
//! distractor scenes.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    Categories, CategoryId, CorpusError, NounLexicon, RefExCorpus, Referent, Scene, Utterance,
    Vocabulary, WordCategoryTable, WordId,
};
use crate::speakers::{utterance_log_prob, NextWordModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no utterances to evaluate")]
    Empty,
    #[error("{scenes} scenes but {utterances} utterances")]
    LengthMismatch { scenes: usize, utterances: usize },
    #[error("invalid similar-category map: {0}")]
    InvalidSimilarMap(String),
    #[error("distractor pool too small: {}", format_pools(.0))]
    InsufficientPool(Vec<(String, usize, usize)>),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn format_pools(p: &[(String, usize, usize)]) -> String {
    p.iter()
        .map(|(c, have, need)| format!("`{c}` has {have} similar referents, needs {need}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NounMetrics {
    pub distr_noun_rate: f64,
    pub no_noun_rate: f64,
    pub n: usize,
}

/// First token (left to right) that names a category.
pub fn extract_noun(
    utterance: &Utterance,
    lexicon: &NounLexicon,
    vocab: &Vocabulary,
) -> Option<(WordId, CategoryId)> {
    utterance
        .tokens
        .iter()
        .find_map(|&w| lexicon.owner(vocab.word(w)).map(|c| (w, c)))
}

/// An expression counts as distr-noun when its first noun names a category
/// other than the zero-shot target's.
pub fn noun_metrics(
    utterances: &[Utterance],
    lexicon: &NounLexicon,
    vocab: &Vocabulary,
    zero_shot_category: CategoryId,
) -> Result<NounMetrics> {
    if utterances.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut distr, mut none) = (0usize, 0usize);
    for u in utterances {
        match extract_noun(u, lexicon, vocab) {
            None => none += 1,
            Some((_, c)) if c != zero_shot_category => distr += 1,
            Some(_) => {}
        }
    }
    let n = utterances.len();
    Ok(NounMetrics {
        distr_noun_rate: distr as f64 / n as f64,
        no_noun_rate: none as f64 / n as f64,
        n,
    })
}

/// Distractor pools per target category.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimilarCategoryMap {
    map: BTreeMap<CategoryId, Vec<CategoryId>>,
}

impl SimilarCategoryMap {
    pub fn new(categories: &Categories, by_name: &BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (target, similar) in by_name {
            let t = categories.require(target)?;
            if similar.is_empty() {
                return Err(EvalError::InvalidSimilarMap(format!(
                    "`{target}` has no similar categories"
                )));
            }
            let mut ids = Vec::with_capacity(similar.len());
            for s in similar {
                let id = categories.require(s)?;
                if id == t {
                    return Err(EvalError::InvalidSimilarMap(format!("`{target}` maps to itself")));
                }
                if !ids.contains(&id) {
                    ids.push(id);
                }
            }
            map.insert(t, ids);
        }
        Ok(Self { map })
    }

    pub fn similar(&self, category: CategoryId) -> Option<&[CategoryId]> {
        self.map.get(&category).map(Vec::as_slice)
    }

    /// The map reduced to a single target category.
    pub fn restricted_to(&self, category: CategoryId) -> Self {
        Self {
            map: self
                .map
                .iter()
                .filter(|(c, _)| **c == category)
                .map(|(c, v)| (*c, v.clone()))
                .collect(),
        }
    }

    pub fn targets(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.map.keys().copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolution {
    pub winner: usize,
    pub winner_id: String,
    pub scores: Vec<f64>,
    pub log_scores: Vec<f64>,
}

/// `score(r) = S_eval(u|r) · P(n_u | c_r)`, where the name factor is 1 for
/// utterances without a noun. Ties go to the lowest referent index.
pub fn eval_listener_resolve<M: NextWordModel + ?Sized>(
    s_eval: &M,
    table_full: &WordCategoryTable,
    scene: &Scene,
    utterance: &Utterance,
    lexicon: &NounLexicon,
) -> Resolution {
    let noun = extract_noun(utterance, lexicon, s_eval.vocabulary()).map(|(w, _)| w);
    let log_scores: Vec<f64> = scene
        .referents()
        .iter()
        .map(|r| {
            let name = noun.map_or(0.0, |w| table_full.prob(w, r.category).ln());
            utterance_log_prob(s_eval, r, utterance) + name
        })
        .collect();
    let mut winner = 0;
    for (i, &s) in log_scores.iter().enumerate().skip(1) {
        if s > log_scores[winner] {
            winner = i;
        }
    }
    Resolution {
        winner,
        winner_id: scene.referents()[winner].id.clone(),
        scores: log_scores.iter().map(|l| l.exp()).collect(),
        log_scores,
    }
}

/// Fraction of scenes whose resolved referent is the target.
pub fn resolution_accuracy<M: NextWordModel + ?Sized>(
    scenes: &[Scene],
    utterances: &[Utterance],
    s_eval: &M,
    table_full: &WordCategoryTable,
    lexicon: &NounLexicon,
) -> Result<f64> {
    if scenes.len() != utterances.len() {
        return Err(EvalError::LengthMismatch {
            scenes: scenes.len(),
            utterances: utterances.len(),
        });
    }
    if scenes.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = scenes
        .iter()
        .zip(utterances)
        .filter(|(s, u)| eval_listener_resolve(s_eval, table_full, s, u, lexicon).winner == s.target_index())
        .count();
    Ok(hits as f64 / scenes.len() as f64)
}

/// Indices of the records that [`build_ts_distractors`] builds scenes for:
/// those whose target category has an entry in `similar`.
pub fn ts_distractor_targets(test: &RefExCorpus, similar: &SimilarCategoryMap) -> Vec<usize> {
    test.records
        .iter()
        .enumerate()
        .filter(|(_, r)| similar.similar(r.target().category).is_some())
        .map(|(i, _)| i)
        .collect()
}

/// For every record whose target category is in `similar`, a new scene with
/// the target and `k` referents drawn without replacement from the test
/// corpus' referents of similar categories. The target lands at a random
/// position. Scenes come back in record order.
pub fn build_ts_distractors(
    test: &RefExCorpus,
    similar: &SimilarCategoryMap,
    k: usize,
    seed: u64,
) -> Result<Vec<Scene>> {
    let mut pools: BTreeMap<CategoryId, Vec<(usize, usize)>> = BTreeMap::new();
    for target in similar.targets() {
        let wanted = similar.similar(target).unwrap_or_default();
        let pool = test
            .records
            .iter()
            .enumerate()
            .flat_map(|(si, rec)| {
                rec.scene
                    .referents()
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| wanted.contains(&r.category))
                    .map(move |(ri, _)| (si, ri))
            })
            .collect();
        pools.insert(target, pool);
    }

    let targets = ts_distractor_targets(test, similar);
    let mut short: Vec<(String, usize, usize)> = pools
        .iter()
        .filter(|(c, pool)| pool.len() < k && targets.iter().any(|&i| test.records[i].target().category == **c))
        .map(|(c, pool)| (test.categories.name(*c).to_owned(), pool.len(), k))
        .collect();
    if !short.is_empty() {
        short.sort();
        return Err(EvalError::InsufficientPool(short));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::with_capacity(targets.len());
    for i in targets {
        let rec = &test.records[i];
        let target = rec.target().clone();
        let pool = &pools[&target.category];
        let mut referents: Vec<Referent> = sample(&mut rng, pool.len(), k)
            .into_iter()
            .map(|j| {
                let (si, ri) = pool[j];
                let src = &test.records[si].scene;
                let mut r = src.referents()[ri].clone();
                r.id = format!("{}/{}", src.id, r.id);
                r
            })
            .collect();
        let pos = rng.gen_range(0..=k);
        referents.insert(pos, target);
        scenes.push(Scene::new(format!("{}-tsd", rec.scene.id), referents, pos)?);
    }
    Ok(scenes)
}
