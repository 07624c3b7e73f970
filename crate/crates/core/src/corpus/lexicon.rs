use std::collections::{BTreeMap, BTreeSet};

use super::{Categories, CategoryId, CorpusError, Result};

/// Name tokens per category, used to spot object names in expressions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NounLexicon {
    category_names: Vec<BTreeSet<String>>,
    owners: BTreeMap<String, CategoryId>,
}

/// Head noun of a category name: its last whitespace-separated token, so
/// `"wine glass"` is named by `"glass"`.
pub fn head_noun(category_name: &str) -> Option<&str> {
    category_name.split_whitespace().last()
}

/// Each category is named by its head noun plus any declared synonyms.
pub fn build_noun_lexicon(
    categories: &Categories,
    synonyms: &BTreeMap<String, Vec<String>>,
) -> Result<NounLexicon> {
    for name in synonyms.keys() {
        categories.require(name)?;
    }
    let mut category_names = Vec::with_capacity(categories.len());
    let mut owners: BTreeMap<String, CategoryId> = BTreeMap::new();
    for id in categories.ids() {
        let name = categories.name(id);
        let mut names = BTreeSet::new();
        if let Some(head) = head_noun(name) {
            names.insert(head.to_owned());
        }
        for syn in synonyms.get(name).into_iter().flatten() {
            let syn = syn.trim();
            if !syn.is_empty() {
                names.insert(syn.to_owned());
            }
        }
        if names.is_empty() {
            return Err(CorpusError::EmptyNameSet(name.to_owned()));
        }
        for noun in &names {
            if let Some(&other) = owners.get(noun) {
                return Err(CorpusError::SharedNoun {
                    noun: noun.clone(),
                    first: categories.name(other).to_owned(),
                    second: name.to_owned(),
                });
            }
            owners.insert(noun.clone(), id);
        }
        category_names.push(names);
    }
    Ok(NounLexicon {
        category_names,
        owners,
    })
}

impl NounLexicon {
    pub fn names(&self, category: CategoryId) -> &BTreeSet<String> {
        &self.category_names[category.index()]
    }

    pub fn all_nouns(&self) -> impl Iterator<Item = &str> {
        self.owners.keys().map(String::as_str)
    }

    pub fn owner(&self, token: &str) -> Option<CategoryId> {
        self.owners.get(token).copied()
    }

    pub fn is_noun(&self, token: &str) -> bool {
        self.owners.contains_key(token)
    }

    /// Every noun that names a category other than `category`.
    pub fn distractor_nouns(&self, category: CategoryId) -> BTreeSet<&str> {
        self.owners
            .iter()
            .filter(|(_, &c)| c != category)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn n_categories(&self) -> usize {
        self.category_names.len()
    }
}
