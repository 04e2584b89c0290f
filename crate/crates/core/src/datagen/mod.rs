//! Building the three training datasets: distant labeling, synthetic
//! single-entity queries, pattern-stratified sampling, ambiguity balancing,
//! and a seeded mini-world for desk-scale experiments.

mod distant;
mod miniworld;
mod sampling;

pub use distant::{distant_label, distant_label_all};
pub use miniworld::{default_pattern_weights, generate_miniworld, modifier_vocabulary, MiniWorld, MiniWorldConfig};
pub use sampling::{
    balance_ambiguous, proportional_quotas, stratified_sample, stratified_sample_indices, AmbiguousLexicon,
};

use crate::dataset::{Catalog, Dataset, Source, TaggedQuery};
use crate::error::{Error, Result};
use crate::label::{EntitySpan, EntityType};

/// One query per catalog entry, labeled as that entity alone. Brands come
/// first, each set in sorted order.
pub fn generate_synthetic(catalog: &Catalog) -> Result<Dataset> {
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let mut items = Vec::with_capacity(catalog.brands.len() + catalog.product_types.len());
    for ty in EntityType::ALL {
        for entry in catalog.entries(ty) {
            let tokens: Vec<String> = entry.split(' ').map(str::to_string).collect();
            let span = EntitySpan::new(ty, 0, tokens.len());
            items.push(TaggedQuery::from_spans(tokens, &[span], Source::Synthetic)?);
        }
    }
    Ok(Dataset::new(Source::Synthetic, items))
}
