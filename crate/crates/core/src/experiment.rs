//! End-to-end experiment: corpus → per-category zero-shot split → literal
//! and pragmatic generation → noun metrics and resolution accuracy.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    build_noun_lexicon, estimate_word_category_table, load_corpus, zero_shot_split, AttributeSchema,
    CategoryId, NounLexicon, RefExCorpus, Scene, Utterance, WordCategoryTable,
};
use crate::evaluation::{
    build_ts_distractors, noun_metrics, resolution_accuracy, NounMetrics, SimilarCategoryMap,
};
use crate::pragmatics::{make_category_belief, s1_decode, BeliefMode, DecodeParams};
use crate::speakers::{decode_greedy, train_literal_speaker, FeatureRule, LiteralSpeaker, SpeakerDump};
use crate::worldgen::{generate_world, WorldConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("[{stage}{}] {source}", category.as_ref().map(|c| format!(" {c}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        category: Option<String>,
        #[source]
        source: Box<crate::Error>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

fn stage<E: Into<crate::Error>>(stage: &'static str, category: Option<&str>) -> impl FnOnce(E) -> ExperimentError {
    let category = category.map(str::to_owned);
    move |e| ExperimentError::Stage {
        stage,
        category,
        source: Box::new(e.into()),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub const DEMO_CONFIG: &str = include_str!("../configs/demo.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Attribute schema for a corpus file; generated worlds derive their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<AttributeSchema>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub synonyms: BTreeMap<String, Vec<String>>,
    pub zero_shot_categories: Vec<String>,
    pub similar: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub decode: DecodeParams,
    #[serde(default = "default_table_k")]
    pub smoothing_k: f64,
    #[serde(default = "default_speaker_k")]
    pub speaker_smoothing_k: f64,
    #[serde(default)]
    pub belief_mode: BeliefMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_belief: Option<Vec<f64>>,
    pub speaker_features: FeatureRule,
    #[serde(default = "default_ts_k")]
    pub ts_distractors_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldConfig>,
}

fn default_table_k() -> f64 {
    0.1
}
fn default_speaker_k() -> f64 {
    0.001
}
fn default_ts_k() -> usize {
    4
}

impl ExperimentConfig {
    pub fn demo() -> Self {
        Self::from_toml(DEMO_CONFIG).expect("bundled demo config parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut config: Self =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.sync_seed();
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync_seed();
        self
    }

    fn sync_seed(&mut self) {
        let seed = self.seed;
        if let Some(w) = self.world.as_mut() {
            w.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        match (&self.world, &self.corpus) {
            (Some(_), Some(_)) => return bad("give either `corpus` or `[world]`, not both".into()),
            (None, None) => return bad("one of `corpus` or `[world]` is required".into()),
            _ => {}
        }
        if self.zero_shot_categories.is_empty() {
            return bad("no zero-shot categories".into());
        }
        for z in &self.zero_shot_categories {
            if !self.similar.contains_key(z) {
                return bad(format!("zero-shot category `{z}` has no similar-category entry"));
            }
        }
        if !(self.smoothing_k.is_finite() && self.smoothing_k >= 0.0) {
            return bad(format!("smoothing_k = {}", self.smoothing_k));
        }
        if !(self.speaker_smoothing_k.is_finite() && self.speaker_smoothing_k >= 0.0) {
            return bad(format!("speaker_smoothing_k = {}", self.speaker_smoothing_k));
        }
        if (self.belief_mode == BeliefMode::Custom) != self.custom_belief.is_some() {
            return bad("`custom_belief` is required exactly when belief_mode = \"custom\"".into());
        }
        self.decode
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        if let Some(world) = &self.world {
            world
                .validate()
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
            let names: Vec<&str> = world.categories.iter().map(|c| c.name.as_str()).collect();
            let referenced = self
                .zero_shot_categories
                .iter()
                .chain(self.similar.keys())
                .chain(self.similar.values().flatten())
                .chain(self.synonyms.keys());
            for c in referenced {
                if !names.contains(&c.as_str()) {
                    return bad(format!("category `{c}` is not part of the world"));
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Option<AttributeSchema> {
        match &self.world {
            Some(w) => Some(w.schema()),
            None => self.attributes.clone(),
        }
    }

    /// Declared synonyms, from the top level and from world categories.
    pub fn all_synonyms(&self) -> BTreeMap<String, Vec<String>> {
        let mut out = self
            .world
            .as_ref()
            .map(WorldConfig::synonyms)
            .unwrap_or_default();
        for (k, v) in &self.synonyms {
            out.entry(k.clone()).or_default().extend(v.iter().cloned());
        }
        out
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Generates or loads the corpus named by the config.
pub fn acquire_corpus(config: &ExperimentConfig) -> Result<RefExCorpus> {
    match (&config.world, &config.corpus) {
        (Some(world), _) => generate_world(world).map_err(stage("world", None)),
        (None, Some(path)) => {
            load_corpus(path, config.attributes.as_ref()).map_err(stage("corpus", None))
        }
        (None, None) => Err(ExperimentError::Config("no corpus source".into())),
    }
}

/// Per-category models trained on the zero-shot train split.
pub struct SplitModels {
    pub category: CategoryId,
    pub train: RefExCorpus,
    pub test: RefExCorpus,
    pub table: WordCategoryTable,
    pub speaker: LiteralSpeaker,
}

pub fn train_split(config: &ExperimentConfig, corpus: &RefExCorpus, category: &str) -> Result<SplitModels> {
    let cat = Some(category);
    let id = corpus.categories.require(category).map_err(stage("split", cat))?;
    let (train, test) = zero_shot_split(corpus, [category]).map_err(stage("split", cat))?;
    let table = estimate_word_category_table(&train, config.smoothing_k).map_err(stage("table", cat))?;
    let speaker = train_literal_speaker(&train, config.speaker_smoothing_k, &config.speaker_features)
        .map_err(stage("train", cat))?;
    Ok(SplitModels {
        category: id,
        train,
        test,
        table,
        speaker,
    })
}

/// S₀ and S₁ expressions for each test record whose target has the split's
/// zero-shot category, in record order.
pub struct Generations {
    pub record_indices: Vec<usize>,
    pub s0: Vec<Utterance>,
    pub s1: Vec<Utterance>,
}

pub fn generate_for_split(config: &ExperimentConfig, models: &SplitModels) -> Result<Generations> {
    let name = models.test.categories.name(models.category).to_owned();
    let cat = Some(name.as_str());
    let n_categories = models.train.categories.len();
    let mut out = Generations {
        record_indices: Vec::new(),
        s0: Vec::new(),
        s1: Vec::new(),
    };
    for (i, rec) in models.test.records.iter().enumerate() {
        let target = rec.target();
        if target.category != models.category {
            continue;
        }
        let belief = make_category_belief(
            config.belief_mode,
            target,
            n_categories,
            config.custom_belief.as_deref(),
        )
        .map_err(stage("generate", cat))?;
        out.record_indices.push(i);
        out.s0.push(decode_greedy(&models.speaker, target, config.decode.max_len));
        out.s1.push(
            s1_decode(&models.speaker, &models.table, &belief, target, &config.decode)
                .map_err(stage("generate", cat))?,
        );
    }
    if out.record_indices.is_empty() {
        return Err(ExperimentError::Config(format!(
            "no test targets of category `{name}`"
        )));
    }
    Ok(out)
}

/// The evaluation listener's models, trained on the whole corpus.
pub struct EvalModels {
    pub speaker: LiteralSpeaker,
    pub table: WordCategoryTable,
    pub lexicon: NounLexicon,
    pub similar: SimilarCategoryMap,
}

pub fn train_eval_models(config: &ExperimentConfig, corpus: &RefExCorpus) -> Result<EvalModels> {
    Ok(EvalModels {
        speaker: train_literal_speaker(corpus, config.speaker_smoothing_k, &config.speaker_features)
            .map_err(stage("eval", None))?,
        table: estimate_word_category_table(corpus, config.smoothing_k).map_err(stage("eval", None))?,
        lexicon: build_noun_lexicon(&corpus.categories, &config.all_synonyms())
            .map_err(stage("eval", None))?,
        similar: SimilarCategoryMap::new(&corpus.categories, &config.similar)
            .map_err(stage("eval", None))?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerReport {
    pub noun_metrics: NounMetrics,
    pub acc_ts_image: f64,
    pub acc_ts_distractors: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub scene_id: String,
    pub reference: String,
    pub s0: String,
    pub s1: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: String,
    pub n_train: usize,
    pub n_test: usize,
    pub n_targets: usize,
    pub s0: SpeakerReport,
    pub s1: SpeakerReport,
    pub samples: Vec<Sample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub categories: Vec<CategoryReport>,
    pub config: ExperimentConfig,
}

const SAMPLES_PER_CATEGORY: usize = 3;

/// Seed for the distractor draw of the `index`-th zero-shot category.
pub fn ts_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1))
}

/// Scores one speaker's expressions for a split.
pub fn evaluate_speaker(
    eval: &EvalModels,
    models: &SplitModels,
    record_indices: &[usize],
    utterances: &[Utterance],
    ts_distractors: &[Scene],
) -> Result<SpeakerReport> {
    let name = models.test.categories.name(models.category);
    let cat = Some(name);
    let vocab = &models.test.vocabulary;
    let noun_metrics =
        noun_metrics(utterances, &eval.lexicon, vocab, models.category).map_err(stage("eval", cat))?;
    let ts_image: Vec<Scene> = record_indices
        .iter()
        .map(|&i| models.test.records[i].scene.clone())
        .collect();
    let acc_ts_image = resolution_accuracy(&ts_image, utterances, &eval.speaker, &eval.table, &eval.lexicon)
        .map_err(stage("eval", cat))?;
    let acc_ts_distractors =
        resolution_accuracy(ts_distractors, utterances, &eval.speaker, &eval.table, &eval.lexicon)
            .map_err(stage("eval", cat))?;
    Ok(SpeakerReport {
        noun_metrics,
        acc_ts_image,
        acc_ts_distractors,
    })
}

fn run_category(
    config: &ExperimentConfig,
    corpus: &RefExCorpus,
    eval: &EvalModels,
    index: usize,
    category: &str,
) -> Result<CategoryReport> {
    let models = train_split(config, corpus, category)?;
    let gens = generate_for_split(config, &models)?;
    let ts_distractors = build_ts_distractors(
        &models.test,
        &eval.similar.restricted_to(models.category),
        config.ts_distractors_k,
        ts_seed(config.seed, index),
    )
    .map_err(stage("ts-distractors", Some(category)))?;
    let s0 = evaluate_speaker(eval, &models, &gens.record_indices, &gens.s0, &ts_distractors)?;
    let s1 = evaluate_speaker(eval, &models, &gens.record_indices, &gens.s1, &ts_distractors)?;
    let vocab = &corpus.vocabulary;
    let samples = gens
        .record_indices
        .iter()
        .zip(gens.s0.iter().zip(&gens.s1))
        .take(SAMPLES_PER_CATEGORY)
        .map(|(&i, (a, b))| Sample {
            scene_id: models.test.records[i].scene.id.clone(),
            reference: models.test.records[i].expression.render(vocab),
            s0: a.render(vocab),
            s1: b.render(vocab),
        })
        .collect();
    info!(
        "{category}: distr-noun {:.3} -> {:.3}, no-noun {:.3} -> {:.3}",
        s0.noun_metrics.distr_noun_rate,
        s1.noun_metrics.distr_noun_rate,
        s0.noun_metrics.no_noun_rate,
        s1.noun_metrics.no_noun_rate
    );
    Ok(CategoryReport {
        category: category.to_owned(),
        n_train: models.train.len(),
        n_test: models.test.len(),
        n_targets: gens.record_indices.len(),
        s0,
        s1,
        samples,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let corpus = acquire_corpus(config)?;
    run_experiment_on(config, &corpus)
}

/// Runs every zero-shot category (in parallel) over an already acquired
/// corpus.
pub fn run_experiment_on(config: &ExperimentConfig, corpus: &RefExCorpus) -> Result<ExperimentReport> {
    for z in &config.zero_shot_categories {
        corpus.categories.require(z).map_err(stage("config", Some(z)))?;
    }
    let eval = train_eval_models(config, corpus)?;
    let categories = config
        .zero_shot_categories
        .par_iter()
        .enumerate()
        .map(|(i, c)| run_category(config, corpus, &eval, i, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        seed: config.seed,
        versions: BTreeMap::from([("refgame".to_string(), env!("CARGO_PKG_VERSION").to_string())]),
        categories,
        config: config.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            Self::Json => "report.json",
            Self::Csv => "report.csv",
            Self::Markdown => "report.md",
        }
    }
}

pub const CSV_HEADER: [&str; 6] = [
    "category",
    "speaker",
    "distr_noun_rate",
    "no_noun_rate",
    "acc_ts_image",
    "acc_ts_distractors",
];

fn rows(report: &ExperimentReport) -> impl Iterator<Item = (&str, &str, &SpeakerReport)> {
    report.categories.iter().flat_map(|c| {
        [("S0", &c.s0), ("S1", &c.s1)]
            .into_iter()
            .map(move |(s, r)| (c.category.as_str(), s, r))
    })
}

pub fn render_report(report: &ExperimentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory write");
            for (cat, speaker, r) in rows(report) {
                w.write_record([
                    cat.to_string(),
                    speaker.to_string(),
                    r.noun_metrics.distr_noun_rate.to_string(),
                    r.noun_metrics.no_noun_rate.to_string(),
                    r.acc_ts_image.to_string(),
                    r.acc_ts_distractors.to_string(),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
        }
        ReportFormat::Markdown => {
            let mut s = String::new();
            s.push_str("| Category | Speaker | % distr-noun | % no-noun | TS-image | TS-distractors |\n");
            s.push_str("|---|---|---:|---:|---:|---:|\n");
            for (cat, speaker, r) in rows(report) {
                s.push_str(&format!(
                    "| {cat} | {speaker} | {:.3} | {:.3} | {:.3} | {:.3} |\n",
                    r.noun_metrics.distr_noun_rate,
                    r.noun_metrics.no_noun_rate,
                    r.acc_ts_image,
                    r.acc_ts_distractors
                ));
            }
            s
        }
    }
}

/// Writes the report into `dir` and returns the file path.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format.file_name());
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    f.write_all(render_report(report, format).as_bytes())
        .map_err(io_err(&path))?;
    Ok(path)
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
}

/// A trained split: the literal speaker's counts plus the word/category
/// table, enough to decode S₀ and S₁ without retraining.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub speaker: SpeakerDump,
    pub table: WordCategoryTable,
}

impl ModelBundle {
    pub fn new(speaker: &LiteralSpeaker, table: &WordCategoryTable) -> Self {
        Self {
            speaker: speaker.dump(),
            table: table.clone(),
        }
    }

    pub fn speaker(&self) -> Result<LiteralSpeaker> {
        LiteralSpeaker::from_dump(&self.speaker).map_err(stage("model", None))
    }
}
