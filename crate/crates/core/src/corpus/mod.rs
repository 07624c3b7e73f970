//! Reference-game data model.
//!
//! A [`RefExCorpus`] is a list of [`Record`]s, each pairing a [`Scene`] (with
//! its target) and the referring expression produced for the target. Words
//! and categories are interned into dense ids by [`Vocabulary`] and
//! [`Categories`].

mod io;
mod lexicon;
mod split;
mod table;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_corpus, parse_corpus, to_raw, write_corpus, RawRecord, RawReferent};
pub(crate) use io::assemble as io_assemble;
pub use lexicon::{build_noun_lexicon, head_noun, NounLexicon};
pub use split::zero_shot_split;
pub use table::{estimate_word_category_table, WordCategoryTable};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown attribute `{name}`")]
    UnknownAttribute { line: usize, name: String },
    #[error("line {line}: attribute `{name}` has undeclared value `{value}`")]
    UnknownAttributeValue {
        line: usize,
        name: String,
        value: String,
    },
    #[error("line {line}: target `{target_id}` is not a referent of scene `{scene_id}`")]
    MissingTarget {
        line: usize,
        scene_id: String,
        target_id: String,
    },
    #[error("invalid scene `{scene_id}`: {message}")]
    InvalidScene { scene_id: String, message: String },
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("category `{0}` has no name tokens")]
    EmptyNameSet(String),
    #[error("noun `{noun}` is claimed by both `{first}` and `{second}`")]
    SharedNoun {
        noun: String,
        first: String,
        second: String,
    },
    #[error("smoothing constant must be finite and nonnegative, got {0}")]
    InvalidSmoothing(f64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Dense word id. Real words occupy `0..vocab.len()`; the two reserved ids
/// sit at the top of the range so that lowest-id tie breaking always prefers
/// a real word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WordId(pub u32);

impl WordId {
    pub const EOS: WordId = WordId(u32::MAX - 1);
    pub const OOV: WordId = WordId(u32::MAX);

    pub fn is_reserved(self) -> bool {
        self == Self::EOS || self == Self::OOV
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CategoryId(pub u32);

impl CategoryId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

pub const EOS_TOKEN: &str = "</s>";
pub const OOV_TOKEN: &str = "<unk>";

/// Word inventory in first-seen order.
///
/// Output distributions over the vocabulary use *slots*: word `i` is slot
/// `i`, EOS is slot `len`, OOV is slot `len + 1`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, WordId>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Self::new();
        for w in words {
            vocab.intern(w.as_ref());
        }
        vocab
    }

    pub fn intern(&mut self, word: &str) -> WordId {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = WordId(self.words.len() as u32);
        self.words.push(word.to_owned());
        self.index.insert(word.to_owned(), id);
        id
    }

    pub fn get(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    /// Maps unknown words to [`WordId::OOV`].
    pub fn lookup(&self, word: &str) -> WordId {
        self.get(word).unwrap_or(WordId::OOV)
    }

    pub fn word(&self, id: WordId) -> &str {
        match id {
            WordId::EOS => EOS_TOKEN,
            WordId::OOV => OOV_TOKEN,
            WordId(i) => self.words.get(i as usize).map_or(OOV_TOKEN, String::as_str),
        }
    }

    pub fn contains(&self, id: WordId) -> bool {
        (id.0 as usize) < self.words.len()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn ids(&self) -> impl Iterator<Item = WordId> {
        (0..self.words.len() as u32).map(WordId)
    }

    pub fn n_slots(&self) -> usize {
        self.words.len() + 2
    }

    pub fn eos_slot(&self) -> usize {
        self.words.len()
    }

    pub fn oov_slot(&self) -> usize {
        self.words.len() + 1
    }

    /// Slot of a word id; ids outside the vocabulary land on the OOV slot.
    pub fn slot(&self, id: WordId) -> usize {
        match id {
            WordId::EOS => self.eos_slot(),
            WordId(i) if (i as usize) < self.words.len() => i as usize,
            _ => self.oov_slot(),
        }
    }

    pub fn slot_word(&self, slot: usize) -> WordId {
        if slot < self.words.len() {
            WordId(slot as u32)
        } else if slot == self.eos_slot() {
            WordId::EOS
        } else {
            WordId::OOV
        }
    }
}

/// Category inventory in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Categories {
    names: Vec<String>,
    index: HashMap<String, CategoryId>,
}

impl Categories {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut cats = Self::new();
        for n in names {
            cats.intern(n.as_ref());
        }
        cats
    }

    pub fn intern(&mut self, name: &str) -> CategoryId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = CategoryId(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<CategoryId> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<CategoryId> {
        self.get(name)
            .ok_or_else(|| CorpusError::UnknownCategory(name.to_owned()))
    }

    pub fn name(&self, id: CategoryId) -> &str {
        &self.names[id.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = CategoryId> {
        (0..self.names.len() as u32).map(CategoryId)
    }
}

/// Declared attribute names with their admissible values. An empty value
/// list admits any value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeSchema(pub BTreeMap<String, Vec<String>>);

impl AttributeSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_attribute<S: Into<String>>(mut self, name: S, values: &[&str]) -> Self {
        self.0
            .insert(name.into(), values.iter().map(|v| v.to_string()).collect());
        self
    }

    pub fn declares(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn admits(&self, name: &str, value: &str) -> bool {
        match self.0.get(name) {
            Some(values) => values.is_empty() || values.iter().any(|v| v == value),
            None => false,
        }
    }

    pub fn values(&self, name: &str) -> Option<&[String]> {
        self.0.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Referent {
    pub id: String,
    pub category: CategoryId,
    pub attributes: BTreeMap<String, String>,
}

impl Referent {
    pub fn new<S: Into<String>>(id: S, category: CategoryId) -> Self {
        Self {
            id: id.into(),
            category,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attr<K: Into<String>, V: Into<String>>(mut self, name: K, value: V) -> Self {
        self.attributes.insert(name.into(), value.into());
        self
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes.get(name).map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub id: String,
    referents: Vec<Referent>,
    target_index: usize,
    referent_prior: Option<Vec<f64>>,
}

impl Scene {
    pub fn new<S: Into<String>>(
        id: S,
        referents: Vec<Referent>,
        target_index: usize,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |message: String| CorpusError::InvalidScene {
            scene_id: id.clone(),
            message,
        };
        if target_index >= referents.len() {
            return Err(invalid(format!(
                "target index {target_index} out of bounds for {} referents",
                referents.len()
            )));
        }
        for (i, r) in referents.iter().enumerate() {
            if referents[..i].iter().any(|o| o.id == r.id) {
                return Err(invalid(format!("duplicate referent id `{}`", r.id)));
            }
        }
        Ok(Self {
            id,
            referents,
            target_index,
            referent_prior: None,
        })
    }

    pub fn with_prior(mut self, prior: Vec<f64>) -> Result<Self> {
        let invalid = |message: String| CorpusError::InvalidScene {
            scene_id: self.id.clone(),
            message,
        };
        if prior.len() != self.referents.len() {
            return Err(invalid(format!(
                "prior has {} entries for {} referents",
                prior.len(),
                self.referents.len()
            )));
        }
        if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("prior has a negative or non-finite entry".into()));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("prior sums to {total}, expected 1")));
        }
        self.referent_prior = Some(prior);
        Ok(self)
    }

    pub fn referents(&self) -> &[Referent] {
        &self.referents
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn target(&self) -> &Referent {
        &self.referents[self.target_index]
    }

    pub fn referent_prior(&self) -> Option<&[f64]> {
        self.referent_prior.as_deref()
    }

    /// P(r) for each referent; uniform unless a prior was attached.
    pub fn prior(&self) -> Vec<f64> {
        match &self.referent_prior {
            Some(p) => p.clone(),
            None => vec![1.0 / self.referents.len() as f64; self.referents.len()],
        }
    }

    pub fn contains_category(&self, category: CategoryId) -> bool {
        self.referents.iter().any(|r| r.category == category)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Utterance {
    pub tokens: Vec<WordId>,
    pub terminated: bool,
}

impl Utterance {
    pub fn new(tokens: Vec<WordId>, terminated: bool) -> Self {
        Self { tokens, terminated }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// A complete expression, as found in corpora.
    pub fn complete(tokens: Vec<WordId>) -> Self {
        Self::new(tokens, true)
    }

    pub fn from_words(vocab: &Vocabulary, words: &[&str], terminated: bool) -> Self {
        Self::new(words.iter().map(|w| vocab.lookup(w)).collect(), terminated)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn last(&self) -> Option<WordId> {
        self.tokens.last().copied()
    }

    pub fn contains(&self, word: WordId) -> bool {
        self.tokens.contains(&word)
    }

    pub fn words<'v>(&self, vocab: &'v Vocabulary) -> Vec<&'v str> {
        self.tokens.iter().map(|&t| vocab.word(t)).collect()
    }

    pub fn render(&self, vocab: &Vocabulary) -> String {
        self.words(vocab).join(" ")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub scene: Scene,
    pub expression: Utterance,
}

impl Record {
    pub fn target(&self) -> &Referent {
        self.scene.target()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RefExCorpus {
    pub records: Vec<Record>,
    pub categories: Categories,
    pub vocabulary: Vocabulary,
}

impl RefExCorpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// A corpus over the same inventories holding a subset of the records.
    pub fn with_records(&self, records: Vec<Record>) -> Self {
        Self {
            records,
            categories: self.categories.clone(),
            vocabulary: self.vocabulary.clone(),
        }
    }

    pub fn records_with_target(&self, category: CategoryId) -> impl Iterator<Item = &Record> {
        self.records
            .iter()
            .filter(move |r| r.target().category == category)
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}
