use log::warn;
use serde::{Deserialize, Serialize};

use super::{CategoryId, CorpusError, RefExCorpus, Result, WordId};

/// Add-k smoothed P(word | category), estimated from the words of
/// expressions whose target carries the category.
///
/// Rows sum to one over the real vocabulary. OOV lookups return the row's
/// smoothed floor `k / (N_c + k|V|)`; categories with no training tokens get
/// the uniform row `1/|V|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordCategoryTable {
    probs: Vec<f64>,
    oov: Vec<f64>,
    n_words: usize,
    n_categories: usize,
    smoothing_k: f64,
    observed: Vec<bool>,
    degenerate: bool,
}

pub fn estimate_word_category_table(train: &RefExCorpus, smoothing_k: f64) -> Result<WordCategoryTable> {
    if !smoothing_k.is_finite() || smoothing_k < 0.0 {
        return Err(CorpusError::InvalidSmoothing(smoothing_k));
    }
    let n_words = train.vocabulary.len();
    let n_categories = train.categories.len();
    let mut counts = vec![0u64; n_words * n_categories];
    let mut totals = vec![0u64; n_categories];
    for rec in &train.records {
        let c = rec.target().category.index();
        for &w in &rec.expression.tokens {
            if train.vocabulary.contains(w) {
                counts[c * n_words + w.0 as usize] += 1;
                totals[c] += 1;
            }
        }
    }

    let mut probs = vec![0.0; n_words * n_categories];
    let mut oov = vec![0.0; n_categories];
    let mut observed = vec![false; n_categories];
    let uniform = if n_words > 0 { 1.0 / n_words as f64 } else { 0.0 };
    for c in 0..n_categories {
        let row = &mut probs[c * n_words..(c + 1) * n_words];
        if totals[c] == 0 {
            row.fill(uniform);
            oov[c] = uniform;
            continue;
        }
        observed[c] = true;
        let denom = totals[c] as f64 + smoothing_k * n_words as f64;
        for (p, &n) in row.iter_mut().zip(&counts[c * n_words..(c + 1) * n_words]) {
            *p = (n as f64 + smoothing_k) / denom;
        }
        oov[c] = smoothing_k / denom;
    }

    let degenerate = !observed.iter().any(|&o| o);
    if degenerate {
        warn!("word/category table estimated from an empty training set; all rows are uniform");
    }
    Ok(WordCategoryTable {
        probs,
        oov,
        n_words,
        n_categories,
        smoothing_k,
        observed,
        degenerate,
    })
}

impl WordCategoryTable {
    /// Builds a table from explicit rows (one per category, each over the
    /// vocabulary). Rows are taken as given; OOV maps to the row minimum.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_words = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_words), "ragged table rows");
        let oov = rows
            .iter()
            .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
            .map(|m| if m.is_finite() { m } else { 0.0 })
            .collect();
        Self {
            probs: rows.concat(),
            oov,
            n_words,
            n_categories: rows.len(),
            smoothing_k: 0.0,
            observed: vec![true; rows.len()],
            degenerate: false,
        }
    }

    /// P(word | category); out-of-vocabulary ids return the floor.
    pub fn prob(&self, word: WordId, category: CategoryId) -> f64 {
        let c = category.index();
        if (word.0 as usize) < self.n_words {
            self.probs[c * self.n_words + word.0 as usize]
        } else {
            self.oov[c]
        }
    }

    pub fn oov_prob(&self, category: CategoryId) -> f64 {
        self.oov[category.index()]
    }

    pub fn row(&self, category: CategoryId) -> &[f64] {
        let c = category.index();
        &self.probs[c * self.n_words..(c + 1) * self.n_words]
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn vocab_size(&self) -> usize {
        self.n_words
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn smoothing_k(&self) -> f64 {
        self.smoothing_k
    }

    /// Whether the category had any training tokens.
    pub fn observed(&self, category: CategoryId) -> bool {
        self.observed[category.index()]
    }

    /// Set when the table was estimated from a corpus without tokens.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}
