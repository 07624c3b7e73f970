//! Zero-shot reference games with a category-marginal pragmatic speaker.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: referents, scenes, utterances, the JSONL corpus format, the
//!   zero-shot split, the word-given-category table and the noun lexicon.
//! - [`worldgen`]: a seeded synthetic reference-game corpus generator.
//! - [`speakers`]: the tabular literal speaker (bigram with feature-bucket
//!   conditioning and back-off), greedy decoding and utterance scoring.
//! - [`pragmatics`]: category beliefs, the category-marginal word listener,
//!   the incremental pragmatic decoder and the referent-level listener.
//! - [`evaluation`]: noun metrics, the evaluation listener and test-set
//!   construction with similar-category distractors.
//! - [`experiment`]: configuration, the end-to-end runner and report output.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod pragmatics;
pub mod speakers;
pub mod worldgen;

pub use corpus::{
    AttributeSchema, Categories, CategoryId, NounLexicon, Record, RefExCorpus, Referent, Scene,
    Utterance, Vocabulary, WordCategoryTable, WordId,
};
pub use error::{Error, Result};
pub use evaluation::{NounMetrics, Resolution, SimilarCategoryMap};
pub use experiment::{ExperimentConfig, ExperimentReport, ReportFormat};
pub use pragmatics::{BeliefMode, CategoryBelief, DecodeParams};
pub use speakers::{FeatureRule, LiteralSpeaker, NextWordDist};
pub use worldgen::WorldConfig;
