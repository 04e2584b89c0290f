use crate::dataset::{Catalog, Dataset, Source, TaggedQuery};
use crate::error::{Error, Result};
use crate::label::{EntitySpan, EntityType};

fn max_entry_len(entries: &std::collections::BTreeSet<String>) -> usize {
    entries.iter().map(|e| e.split(' ').count()).max().unwrap_or(0)
}

/// Sequential greedy exact match against the catalog: brands first, then
/// product types; at each position the longest unlabeled matching token run
/// wins. Tokens labeled in an earlier pass are never relabeled.
///
/// This is both the legacy production tagger and the distant labeler for
/// the noisy dataset.
pub fn distant_label(tokens: &[String], catalog: &Catalog, source: Source) -> Result<TaggedQuery> {
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let mut taken = vec![false; tokens.len()];
    let mut spans = Vec::new();
    for ty in [EntityType::Brand, EntityType::Product] {
        let entries = catalog.entries(ty);
        let longest = max_entry_len(entries);
        let mut i = 0;
        while i < tokens.len() {
            let matched = (1..=longest.min(tokens.len() - i))
                .rev()
                .find(|&len| !taken[i..i + len].iter().any(|&t| t) && entries.contains(&tokens[i..i + len].join(" ")));
            match matched {
                Some(len) => {
                    taken[i..i + len].iter_mut().for_each(|t| *t = true);
                    spans.push(EntitySpan::new(ty, i, i + len));
                    i += len;
                }
                None => i += 1,
            }
        }
    }
    spans.sort();
    TaggedQuery::from_spans(tokens.to_vec(), &spans, source)
}

/// Labels every query of `queries` with [`distant_label`].
pub fn distant_label_all<'a, I>(queries: I, catalog: &Catalog) -> Result<Dataset>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let items = queries
        .into_iter()
        .map(|tokens| distant_label(tokens, catalog, Source::Noisy))
        .collect::<Result<_>>()?;
    Ok(Dataset::new(Source::Noisy, items))
}
