//! Seeded synthetic reference-game corpora.
//!
//! All randomness comes from one ChaCha8 stream seeded with
//! [`WorldConfig::seed`] and only integer draws are made, in this order:
//!
//! ```text
//! for category in categories (config order):
//!   for scene in 0..scenes_per_category:
//!     n_referents       gen_range(min..=max)
//!     target_position   gen_range(0..n_referents)
//!     for slot in 0..n_referents:
//!       loop until the referent differs from every earlier one:
//!         category      gen_range(0..n_categories)   (distractor slots only)
//!         attributes    gen_range(0..n_values), one per attribute, name order
//!     template          gen_range(0..total_weight)
//!     per attribute slot of the template
//!                       gen_range(0..1_000_000) < noise * 1e6 drops it
//! ```
//!
//! The target's head noun realizes `{name}`. If every slot of a realization
//! would be dropped, the undropped realization is kept.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, head_noun, AttributeSchema, RawRecord, RawReferent, RefExCorpus};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    Invalid(String),
    #[error("unsatisfiable world config: {0}")]
    Unsatisfiable(String),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
}

const NOISE_SCALE: u32 = 1_000_000;
const MAX_REDRAWS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    /// Visual family, exposed on referents as the group attribute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub synonyms: Vec<String>,
}

impl CategorySpec {
    pub fn new(name: &str, group: &str) -> Self {
        Self {
            name: name.into(),
            group: Some(group.into()),
            synonyms: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub pattern: String,
    #[serde(default = "default_weight")]
    pub weight: u32,
}

fn default_weight() -> u32 {
    1
}

impl Template {
    pub fn new(pattern: &str, weight: u32) -> Self {
        Self {
            pattern: pattern.into(),
            weight,
        }
    }

    fn slots(&self) -> Vec<Slot<'_>> {
        self.pattern
            .split_whitespace()
            .map(|tok| match tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
                Some("name") => Slot::Name,
                Some(attr) => Slot::Attribute(attr),
                None => Slot::Literal(tok),
            })
            .collect()
    }

    pub fn has_name(&self) -> bool {
        self.slots().iter().any(|s| matches!(s, Slot::Name))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot<'a> {
    Name,
    Attribute(&'a str),
    Literal(&'a str),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub categories: Vec<CategorySpec>,
    /// Sampled attributes and their values; drawn in name order.
    pub attributes: BTreeMap<String, Vec<String>>,
    /// Attribute carrying each category's `group`, if any category has one.
    #[serde(default = "default_group_attribute")]
    pub group_attribute: String,
    pub scenes_per_category: usize,
    /// Inclusive range of referents per scene.
    pub referents_per_scene: [usize; 2],
    pub templates: Vec<Template>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_group_attribute() -> String {
    "shape".into()
}

impl WorldConfig {
    /// Thirteen evaluation categories (six zero-shot targets and their
    /// similar categories) plus `person`, with color/size/x_pos attributes.
    pub fn demo(seed: u64) -> Self {
        let categories = [
            ("cat", "animal"),
            ("horse", "animal"),
            ("cup", "container"),
            ("bottle", "container"),
            ("bus", "vehicle"),
            ("train", "vehicle"),
            ("dog", "animal"),
            ("cow", "animal"),
            ("bowl", "container"),
            ("wine glass", "container"),
            ("vase", "container"),
            ("car", "vehicle"),
            ("truck", "vehicle"),
            ("person", "person"),
        ]
        .into_iter()
        .map(|(n, g)| CategorySpec::new(n, g))
        .collect();
        let attributes = BTreeMap::from([
            (
                "color".to_string(),
                ["black", "white", "brown", "red", "blue", "green"]
                    .map(String::from)
                    .to_vec(),
            ),
            ("size".to_string(), ["small", "big"].map(String::from).to_vec()),
            (
                "x_pos".to_string(),
                ["left", "middle", "right"].map(String::from).to_vec(),
            ),
        ]);
        let templates = vec![
            Template::new("{x_pos} {color} {name}", 4),
            Template::new("{color} {name}", 3),
            Template::new("{x_pos} {name}", 3),
            Template::new("{size} {color} {name}", 2),
            Template::new("{x_pos} {size} {name}", 1),
            Template::new("{x_pos} {color}", 2),
        ];
        Self {
            categories,
            attributes,
            group_attribute: default_group_attribute(),
            scenes_per_category: 150,
            referents_per_scene: [2, 4],
            templates,
            noise: 0.02,
            seed,
        }
    }

    /// The attribute schema of generated referents.
    pub fn schema(&self) -> AttributeSchema {
        let mut schema = AttributeSchema(self.attributes.clone());
        let groups: Vec<String> = self
            .categories
            .iter()
            .filter_map(|c| c.group.clone())
            .fold(Vec::new(), |mut acc, g| {
                if !acc.contains(&g) {
                    acc.push(g);
                }
                acc
            });
        if !groups.is_empty() {
            schema.0.insert(self.group_attribute.clone(), groups);
        }
        schema
    }

    pub fn synonyms(&self) -> BTreeMap<String, Vec<String>> {
        self.categories
            .iter()
            .filter(|c| !c.synonyms.is_empty())
            .map(|c| (c.name.clone(), c.synonyms.clone()))
            .collect()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let invalid = |m: String| Err(WorldError::Invalid(m));
        if self.categories.is_empty() {
            return invalid("no categories".into());
        }
        for (i, c) in self.categories.iter().enumerate() {
            if head_noun(&c.name).is_none() {
                return invalid(format!("category {i} has an empty name"));
            }
            if self.categories[..i].iter().any(|o| o.name == c.name) {
                return invalid(format!("duplicate category `{}`", c.name));
            }
        }
        if self.scenes_per_category == 0 {
            return invalid("scenes_per_category must be at least 1".into());
        }
        let [lo, hi] = self.referents_per_scene;
        if lo == 0 || lo > hi {
            return invalid(format!("bad referents_per_scene range [{lo}, {hi}]"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return invalid(format!("noise {} outside [0, 1]", self.noise));
        }
        if let Some((name, _)) = self.attributes.iter().find(|(_, v)| v.is_empty()) {
            return invalid(format!("attribute `{name}` has no values"));
        }
        if self.attributes.contains_key(&self.group_attribute)
            && self.categories.iter().any(|c| c.group.is_some())
        {
            return invalid(format!(
                "`{}` is both sampled and the group attribute",
                self.group_attribute
            ));
        }
        if self.templates.is_empty() || self.templates.iter().all(|t| t.weight == 0) {
            return invalid("no template with positive weight".into());
        }
        let schema = self.schema();
        for t in &self.templates {
            if t.slots().is_empty() {
                return invalid("empty template".into());
            }
            for slot in t.slots() {
                if let Slot::Attribute(a) = slot {
                    if !schema.declares(a) {
                        return invalid(format!(
                            "template `{}` references unknown attribute `{a}`",
                            t.pattern
                        ));
                    }
                }
            }
        }

        let combos = self
            .attributes
            .values()
            .try_fold(self.categories.len(), |acc, v| acc.checked_mul(v.len()))
            .unwrap_or(usize::MAX);
        if hi > combos {
            return Err(WorldError::Unsatisfiable(format!(
                "{hi} referents per scene but only {combos} distinct category/attribute combinations"
            )));
        }
        Ok(())
    }
}

struct Draft {
    category: usize,
    values: Vec<usize>,
}

pub fn generate_world(config: &WorldConfig) -> Result<RefExCorpus, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let attrs: Vec<(&String, &Vec<String>)> = config.attributes.iter().collect();
    let total_weight: u32 = config.templates.iter().map(|t| t.weight).sum();
    let noise_threshold = (config.noise * NOISE_SCALE as f64).round() as u32;
    let [lo, hi] = config.referents_per_scene;
    let n_categories = config.categories.len();

    let mut raw = Vec::with_capacity(n_categories * config.scenes_per_category);
    for (target_category, _) in config.categories.iter().enumerate() {
        for _ in 0..config.scenes_per_category {
            let n = rng.gen_range(lo..=hi);
            let target_pos = rng.gen_range(0..n);
            let mut drafts: Vec<Draft> = Vec::with_capacity(n);
            for slot in 0..n {
                let mut redraws = 0;
                let draft = loop {
                    let category = if slot == target_pos {
                        target_category
                    } else {
                        rng.gen_range(0..n_categories)
                    };
                    let values = attrs
                        .iter()
                        .map(|(_, vals)| rng.gen_range(0..vals.len()))
                        .collect::<Vec<_>>();
                    let clash = drafts
                        .iter()
                        .any(|d| d.category == category && d.values == values);
                    if !clash {
                        break Draft { category, values };
                    }
                    redraws += 1;
                    if redraws > MAX_REDRAWS {
                        return Err(WorldError::Unsatisfiable(format!(
                            "could not draw a distinguishable referent for `{}`",
                            config.categories[target_category].name
                        )));
                    }
                };
                drafts.push(draft);
            }

            let mut pick = rng.gen_range(0..total_weight);
            let template = config
                .templates
                .iter()
                .find(|t| {
                    if pick < t.weight {
                        true
                    } else {
                        pick -= t.weight;
                        false
                    }
                })
                .expect("weighted pick within total");

            let referents: Vec<RawReferent> = drafts
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let spec = &config.categories[d.category];
                    let mut attributes: BTreeMap<String, String> = attrs
                        .iter()
                        .zip(&d.values)
                        .map(|((name, vals), &v)| ((*name).clone(), vals[v].clone()))
                        .collect();
                    if let Some(group) = &spec.group {
                        attributes.insert(config.group_attribute.clone(), group.clone());
                    }
                    RawReferent {
                        id: format!("r{i}"),
                        category: spec.name.clone(),
                        attributes,
                    }
                })
                .collect();

            let target = &referents[target_pos];
            let name = head_noun(&config.categories[target_category].name)
                .expect("validated")
                .to_owned();
            let mut full = Vec::new();
            let mut kept = Vec::new();
            for slot in template.slots() {
                let (token, droppable) = match slot {
                    Slot::Name => (name.clone(), false),
                    Slot::Literal(l) => (l.to_owned(), false),
                    Slot::Attribute(a) => (target.attributes[a].clone(), true),
                };
                let dropped = droppable && rng.gen_range(0..NOISE_SCALE) < noise_threshold;
                if !dropped {
                    kept.push(token.clone());
                }
                full.push(token);
            }
            let expression = if kept.is_empty() { full } else { kept };

            raw.push(RawRecord {
                scene_id: format!("s{:05}", raw.len()),
                target_id: target.id.clone(),
                referents,
                referent_prior: None,
                expression,
            });
        }
    }
    let indexed = raw.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
    Ok(corpus::io_assemble(indexed, Some(&config.schema()))?)
}
