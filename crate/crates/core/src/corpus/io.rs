//! JSONL corpus format, one record per line:
//!
//! ```text
//! {"scene_id": str, "referents": [{"id": str, "category": str,
//!   "attributes": {str: str}}], "target_id": str, "expression": [str]}
//! ```
//!
//! An optional `"referent_prior": [f64]` may follow the referents.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use super::{
    AttributeSchema, Categories, CorpusError, Record, RefExCorpus, Referent, Result, Scene,
    Utterance, Vocabulary,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawReferent {
    pub id: String,
    pub category: String,
    #[serde(default, deserialize_with = "unique_keys")]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub scene_id: String,
    pub referents: Vec<RawReferent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub referent_prior: Option<Vec<f64>>,
    pub target_id: String,
    pub expression: Vec<String>,
}

fn unique_keys<'de, D>(deserializer: D) -> std::result::Result<BTreeMap<String, String>, D::Error>
where
    D: Deserializer<'de>,
{
    struct UniqueMap;

    impl<'de> Visitor<'de> for UniqueMap {
        type Value = BTreeMap<String, String>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map of attribute names to string values")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Self::Value, A::Error> {
            let mut map = BTreeMap::new();
            while let Some((k, v)) = access.next_entry::<String, String>()? {
                if map.contains_key(&k) {
                    return Err(serde::de::Error::custom(format!(
                        "duplicate attribute `{k}`"
                    )));
                }
                map.insert(k, v);
            }
            Ok(map)
        }
    }

    deserializer.deserialize_map(UniqueMap)
}

/// Builds a corpus from raw records, interning categories and words in
/// first-seen order. `line` numbers in errors are 1-based record positions.
pub(crate) fn assemble(
    raw: Vec<(usize, RawRecord)>,
    schema: Option<&AttributeSchema>,
) -> Result<RefExCorpus> {
    let mut categories = Categories::new();
    let mut vocabulary = Vocabulary::new();
    let mut records = Vec::with_capacity(raw.len());
    for (line, rec) in raw {
        let mut referents = Vec::with_capacity(rec.referents.len());
        for r in rec.referents {
            if let Some(schema) = schema {
                for (name, value) in &r.attributes {
                    if !schema.declares(name) {
                        return Err(CorpusError::UnknownAttribute {
                            line,
                            name: name.clone(),
                        });
                    }
                    if !schema.admits(name, value) {
                        return Err(CorpusError::UnknownAttributeValue {
                            line,
                            name: name.clone(),
                            value: value.clone(),
                        });
                    }
                }
            }
            let category = categories.intern(&r.category);
            referents.push(Referent {
                id: r.id,
                category,
                attributes: r.attributes,
            });
        }
        let target_index = referents
            .iter()
            .position(|r| r.id == rec.target_id)
            .ok_or_else(|| CorpusError::MissingTarget {
                line,
                scene_id: rec.scene_id.clone(),
                target_id: rec.target_id.clone(),
            })?;
        let mut scene = Scene::new(rec.scene_id, referents, target_index).map_err(|e| {
            CorpusError::Malformed {
                line,
                message: e.to_string(),
            }
        })?;
        if let Some(prior) = rec.referent_prior {
            scene = scene.with_prior(prior).map_err(|e| CorpusError::Malformed {
                line,
                message: e.to_string(),
            })?;
        }
        let tokens = rec.expression.iter().map(|w| vocabulary.intern(w)).collect();
        records.push(Record {
            scene,
            expression: Utterance::complete(tokens),
        });
    }
    Ok(RefExCorpus {
        records,
        categories,
        vocabulary,
    })
}

/// Parses JSONL from any reader. Blank lines are skipped.
pub fn parse_corpus<R: BufRead>(reader: R, schema: Option<&AttributeSchema>) -> Result<RefExCorpus> {
    let mut raw = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        raw.push((lineno, rec));
    }
    assemble(raw, schema)
}

pub fn load_corpus(path: &Path, schema: Option<&AttributeSchema>) -> Result<RefExCorpus> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(BufReader::new(file), schema)
}

pub fn to_raw(corpus: &RefExCorpus, record: &Record) -> RawRecord {
    RawRecord {
        scene_id: record.scene.id.clone(),
        referents: record
            .scene
            .referents()
            .iter()
            .map(|r| RawReferent {
                id: r.id.clone(),
                category: corpus.categories.name(r.category).to_owned(),
                attributes: r.attributes.clone(),
            })
            .collect(),
        referent_prior: record.scene.referent_prior().map(<[f64]>::to_vec),
        target_id: record.target().id.clone(),
        expression: record
            .expression
            .words(&corpus.vocabulary)
            .into_iter()
            .map(str::to_owned)
            .collect(),
    }
}

pub fn write_corpus<W: Write>(corpus: &RefExCorpus, mut out: W) -> std::io::Result<()> {
    for record in &corpus.records {
        serde_json::to_writer(&mut out, &to_raw(corpus, record))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
