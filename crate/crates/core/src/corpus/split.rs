use super::{CategoryId, RefExCorpus, Result};

/// Scene-level zero-shot split: a record goes to the test side iff its scene
/// holds a referent (target or distractor) of any zero-shot category. Both
/// halves keep the parent's inventories.
pub fn zero_shot_split<I, S>(corpus: &RefExCorpus, zero_shot: I) -> Result<(RefExCorpus, RefExCorpus)>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let held_out = zero_shot
        .into_iter()
        .map(|name| corpus.categories.require(name.as_ref()))
        .collect::<Result<Vec<CategoryId>>>()?;

    let (test, train): (Vec<_>, Vec<_>) = corpus.records.iter().cloned().partition(|rec| {
        held_out
            .iter()
            .any(|&c| rec.scene.contains_category(c))
    });
    Ok((corpus.with_records(train), corpus.with_records(test)))
}
