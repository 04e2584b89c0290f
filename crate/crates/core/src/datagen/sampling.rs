use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng as _;

use crate::dataset::{Catalog, Dataset, TaggedQuery};
use crate::error::{Error, Result};
use crate::label::{EntityType, SeqPattern};
use crate::rng;

/// Strings that the catalog lists both as a brand and as a product type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AmbiguousLexicon {
    entries: BTreeSet<String>,
}

impl AmbiguousLexicon {
    pub fn new<I, S>(entries: I, catalog: &Catalog) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries: BTreeSet<String> = entries.into_iter().map(Into::into).collect();
        for e in &entries {
            if !catalog.brands.contains(e) || !catalog.product_types.contains(e) {
                return Err(Error::Config(format!(
                    "lexicon entry {e:?} is not both a brand and a product type"
                )));
            }
        }
        Ok(AmbiguousLexicon { entries })
    }

    pub fn from_catalog(catalog: &Catalog) -> Self {
        AmbiguousLexicon {
            entries: catalog.ambiguous(),
        }
    }

    pub fn entries(&self) -> &BTreeSet<String> {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Largest-remainder apportionment of `n` over groups of the given sizes.
/// Ties in the remainder go to the earlier group.
pub fn proportional_quotas(sizes: &[usize], n: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let n = n.min(total);
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| n * s / total).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&g| std::cmp::Reverse(n * sizes[g] % total));
    let assigned: usize = quotas.iter().sum();
    for &g in order.iter().take(n - assigned) {
        quotas[g] += 1;
    }
    quotas
}

/// Indices of a pattern-stratified sample of `items`, in ascending order.
pub fn stratified_sample_indices(items: &[TaggedQuery], n: usize, seed: u64) -> Vec<usize> {
    if n >= items.len() {
        return (0..items.len()).collect();
    }
    let mut groups: BTreeMap<SeqPattern, Vec<usize>> = BTreeMap::new();
    for (i, q) in items.iter().enumerate() {
        groups.entry(q.pattern()).or_default().push(i);
    }
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let quotas = proportional_quotas(&sizes, n);
    let mut rng = rng::seeded(seed);
    let mut picked = Vec::with_capacity(n);
    for (members, &quota) in groups.values().zip(&quotas) {
        picked.extend(
            index::sample(&mut rng, members.len(), quota)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    picked.sort_unstable();
    picked
}

/// Samples `n` items with per-pattern quotas proportional to group size.
/// Selected items keep their original relative order.
pub fn stratified_sample(data: &Dataset, n: usize, seed: u64) -> Dataset {
    let idx = stratified_sample_indices(&data.items, n, seed);
    Dataset::new(data.role, idx.into_iter().map(|i| data.items[i].clone()).collect())
}

fn reads_as(query: &TaggedQuery, entry: &str, ty: EntityType) -> bool {
    query.entities(ty).iter().any(|e| e == entry)
}

/// Oversamples the minority reading of each ambiguous entry until the number
/// of queries reading it as a brand equals the number reading it as a
/// product type. Entries seen with a single reading are left alone.
/// Duplicates are appended after the original items.
pub fn balance_ambiguous(train: &Dataset, lexicon: &AmbiguousLexicon, seed: u64) -> Dataset {
    let mut items = train.items.clone();
    let mut rng = rng::seeded(seed);
    for entry in lexicon.entries() {
        let brand: Vec<usize> = (0..items.len())
            .filter(|&i| reads_as(&items[i], entry, EntityType::Brand))
            .collect();
        let product: Vec<usize> = (0..items.len())
            .filter(|&i| reads_as(&items[i], entry, EntityType::Product))
            .collect();
        if brand.is_empty() || product.is_empty() || brand.len() == product.len() {
            continue;
        }
        let (minority, deficit) = if brand.len() < product.len() {
            let d = product.len() - brand.len();
            (brand, d)
        } else {
            let d = brand.len() - product.len();
            (product, d)
        };
        for _ in 0..deficit {
            let pick = minority[rng.random_range(0..minority.len())];
            items.push(items[pick].clone());
        }
    }
    Dataset::new(train.role, items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Source;
    use crate::label::LabelTag::{self, *};

    fn q(text: &str, labels: &[LabelTag]) -> TaggedQuery {
        TaggedQuery::new(
            text.split(' ').map(str::to_string).collect(),
            labels.to_vec(),
            Source::Noisy,
        )
        .unwrap()
    }

    #[test]
    fn largest_remainder_quotas() {
        // 4 * (5, 3, 2) / 10 = (2.0, 1.2, 0.8): the leftover seat goes to the 0.8 group.
        assert_eq!(proportional_quotas(&[5, 3, 2], 4), vec![2, 1, 1]);
        assert_eq!(proportional_quotas(&[80, 20], 10), vec![8, 2]);
        assert_eq!(proportional_quotas(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(proportional_quotas(&[], 3), Vec::<usize>::new());
    }

    #[test]
    fn sample_follows_pattern_proportions() {
        let mut items = Vec::new();
        for i in 0..80 {
            items.push(q(&format!("b{i} cheap drill"), &[BBrd, O, BPrd]));
        }
        for i in 0..20 {
            items.push(q(&format!("bronze{i} faucet"), &[O, BPrd]));
        }
        let data = Dataset::new(Source::Noisy, items);
        let s = stratified_sample(&data, 10, 5);
        assert_eq!(s.len(), 10);
        let first = s.iter().filter(|q| q.pattern().to_string() == "BRD+O+PRD").count();
        assert_eq!(first, 8);
        assert_eq!(stratified_sample(&data, 10, 5), s);
        assert_eq!(stratified_sample(&data, 100, 5).len(), 100);
        assert_eq!(stratified_sample(&data, 1000, 5), data);
        assert!(stratified_sample(&data, 0, 5).is_empty());
    }

    #[test]
    fn balance_oversamples_minority() {
        let catalog = Catalog::new(["anchor", "behr"], ["anchor", "paint"]).unwrap();
        let lexicon = AmbiguousLexicon::from_catalog(&catalog);
        let mut items = Vec::new();
        for _ in 0..10 {
            items.push(q("anchor paint", &[BBrd, BPrd]));
        }
        items.push(q("wall anchor", &[O, BPrd]));
        items.push(q("concrete anchor", &[O, BPrd]));
        items.push(q("behr paint", &[BBrd, BPrd]));
        let train = Dataset::new(Source::Golden, items);
        let out = balance_ambiguous(&train, &lexicon, 1);
        assert_eq!(out.len(), 13 + 8);
        assert_eq!(&out.items[..13], &train.items[..]);
        for added in &out.items[13..] {
            assert!(reads_as(added, "anchor", EntityType::Product));
        }
    }

    #[test]
    fn balance_leaves_single_reading_alone() {
        let catalog = Catalog::new(["anchor"], ["anchor"]).unwrap();
        let lexicon = AmbiguousLexicon::from_catalog(&catalog);
        let train = Dataset::new(Source::Golden, vec![q("anchor bolt", &[BBrd, O])]);
        assert_eq!(balance_ambiguous(&train, &lexicon, 1), train);
        assert_eq!(balance_ambiguous(&train, &AmbiguousLexicon::default(), 1), train);
    }

    #[test]
    fn lexicon_entries_must_be_ambiguous() {
        let catalog = Catalog::new(["anchor"], ["anchor", "paint"]).unwrap();
        assert!(AmbiguousLexicon::new(["anchor"], &catalog).is_ok());
        assert!(AmbiguousLexicon::new(["paint"], &catalog).is_err());
    }
}
