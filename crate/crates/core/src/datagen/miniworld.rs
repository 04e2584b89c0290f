//! A seeded stand-in for a product catalog and query logs: template queries
//! over a small catalog, with exact golden labels, distant-labeled noisy
//! labels with controlled corruption, and catalog-derived synthetic queries.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{index, IndexedRandom};
use rand::Rng as _;

use super::{distant_label, generate_synthetic};
use crate::dataset::{Catalog, Dataset, Source, TaggedQuery};
use crate::error::{Error, Result};
use crate::label::{EntitySpan, EntityType, PatternElement, SeqPattern};
use crate::rng::{self, Rng};

const BRANDS: &[&str] = &[
    "lg",
    "samsung",
    "ge",
    "milwaukee",
    "behr",
    "dewalt",
    "makita",
    "ridgid",
    "ryobi",
    "cosco",
    "whirlpool",
    "maytag",
    "frigidaire",
    "bosch",
    "kohler",
    "moen",
    "delta",
    "husky",
    "glacier bay",
    "hampton bay",
    "rust oleum",
    "craftsman",
    "stanley",
    "kobalt",
    "honeywell",
    "philips",
    "cree",
    "lithonia",
    "leviton",
    "gorilla",
    "dap",
    "owens corning",
    "toro",
    "ego",
    "greenworks",
    "husqvarna",
    "weber",
    "char broil",
    "american standard",
    "pfister",
    "rheem",
    "ao smith",
    "kidde",
    "first alert",
    "nest",
    "ecobee",
    "schlage",
    "kwikset",
    "pella",
    "andersen",
    "masonite",
    "hdx",
    "everbilt",
    "lifeproof",
    "trafficmaster",
    "vigoro",
    "scotts",
    "miracle gro",
    "suncast",
    "werner",
    "little giant",
    "gladiator",
    "dyson",
    "bissell",
    "hoover",
];

const PRODUCT_TYPES: &[&str] = &[
    "washer",
    "dryer",
    "drill",
    "paint",
    "faucet",
    "refrigerator",
    "fridge",
    "ice maker",
    "table",
    "chair",
    "microwave",
    "dishwasher",
    "range",
    "oven",
    "toilet",
    "vanity",
    "ceiling fan",
    "light bulb",
    "lawn mower",
    "leaf blower",
    "chainsaw",
    "circular saw",
    "miter saw",
    "impact driver",
    "ladder",
    "shelving",
    "storage cabinet",
    "tool box",
    "water heater",
    "air conditioner",
    "dehumidifier",
    "generator",
    "pressure washer",
    "grill",
    "patio furniture",
    "door",
    "window",
    "blinds",
    "carpet",
    "tile",
    "vinyl flooring",
    "wood stain",
    "caulk",
    "drywall",
    "insulation",
    "plywood",
    "lumber",
    "fence panel",
    "garden hose",
    "sprinkler",
    "mulch",
    "potting soil",
    "planter",
    "shower head",
    "bathtub",
    "sink",
    "garbage disposal",
    "smoke detector",
    "thermostat",
    "doorbell",
    "outlet",
    "light switch",
    "extension cord",
    "flashlight",
    "wheelbarrow",
    "shovel",
    "rake",
    "snow blower",
    "space heater",
    "vacuum",
];

/// Strings used for entries that are both a brand and a product type.
const AMBIGUOUS: &[&str] = &[
    "anchor",
    "cutter",
    "instant pot",
    "weed eater",
    "ring",
    "mixer",
    "hammer",
    "sander",
];

const MODIFIERS: &[&str] = &[
    "cheap",
    "mini",
    "7.4 cu ft",
    "gas",
    "electric",
    "discount",
    "bronze",
    "pull down",
    "cordless",
    "20v",
    "white",
    "black",
    "stainless steel",
    "36 inch",
    "outdoor",
    "indoor",
    "heavy duty",
    "portable",
    "large",
    "small",
    "kit",
    "replacement parts",
    "with light",
    "led",
    "brushed nickel",
    "2 pack",
    "commercial",
    "smart",
    "wifi",
    "front load",
    "top load",
    "compact",
    "energy star",
    "brushless",
    "18v",
    "clearance",
    "sale",
    "near me",
    "red",
    "gray",
    "1/2 in.",
    "10 ft",
];

/// Words that turn a following product type into a modifier ("fridge no ice maker").
const DECOY_PREFIXES: &[&str] = &["no", "without"];

const SYLLABLES: &[&str] = &[
    "ka", "zor", "vin", "tel", "mar", "qui", "dro", "pex", "lum", "sar", "bel", "tor", "nix", "vo", "ran", "gel",
];

const GOLDEN_STREAM: u64 = 1;
const NOISY_STREAM: u64 = 2;
const CORRUPT_STREAM: u64 = 3;
const NAME_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct MiniWorldConfig {
    pub n_brands: usize,
    pub n_product_types: usize,
    pub n_golden: usize,
    pub n_noisy: usize,
    /// Must equal `n_brands + n_product_types`: one query per catalog entry.
    pub n_synthetic: usize,
    /// Fraction of noisy queries (among those with at least one entity)
    /// whose labels get corrupted.
    pub noise_rate: f64,
    /// Fraction of the smaller catalog set that is listed in both sets.
    pub ambiguity_rate: f64,
    /// Probability that an outside slot following a product type is filled
    /// with a negated product type ("no ice maker"), which is outside in
    /// truth but matched by the greedy labeler.
    pub decoy_rate: f64,
    pub pattern_weights: Vec<(SeqPattern, f64)>,
    pub seed: u64,
}

impl Default for MiniWorldConfig {
    fn default() -> Self {
        MiniWorldConfig {
            n_brands: 50,
            n_product_types: 50,
            n_golden: 500,
            n_noisy: 5000,
            n_synthetic: 100,
            noise_rate: 0.15,
            ambiguity_rate: 0.05,
            decoy_rate: 0.15,
            pattern_weights: default_pattern_weights(),
            seed: 42,
        }
    }
}

/// Query templates led by the four most frequent patterns of real logs.
pub fn default_pattern_weights() -> Vec<(SeqPattern, f64)> {
    [
        ("BRD+O+PRD", 3.0),
        ("BRD+O+PRD+O", 2.0),
        ("BRD+PRD+O", 3.0),
        ("O+PRD+O", 2.0),
        ("BRD+PRD", 3.0),
        ("PRD+O", 2.0),
        ("O+PRD", 1.0),
        ("BRD+O", 1.0),
    ]
    .into_iter()
    .map(|(p, w)| (p.parse().expect("static pattern"), w))
    .collect()
}

impl MiniWorldConfig {
    fn ambiguous_count(&self) -> usize {
        (self.ambiguity_rate * self.n_brands.min(self.n_product_types) as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_brands == 0 || self.n_product_types == 0 || self.n_golden == 0 || self.n_noisy == 0 {
            return bad("miniworld counts must be at least 1".into());
        }
        for (name, rate) in [
            ("noise_rate", self.noise_rate),
            ("ambiguity_rate", self.ambiguity_rate),
            ("decoy_rate", self.decoy_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} must be in [0, 1], got {rate}"));
            }
        }
        if self.n_synthetic != self.n_brands + self.n_product_types {
            return bad(format!(
                "n_synthetic ({}) must equal n_brands + n_product_types ({})",
                self.n_synthetic,
                self.n_brands + self.n_product_types
            ));
        }
        let k = self.ambiguous_count();
        if self.ambiguity_rate > 0.0 && self.n_brands.min(self.n_product_types) < 2 {
            return bad("ambiguity needs at least 2 brands and 2 product types".into());
        }
        if k > AMBIGUOUS.len() || k >= self.n_brands || k >= self.n_product_types {
            return bad(format!("cannot make {k} ambiguous entries for this catalog size"));
        }
        if self.pattern_weights.is_empty() || self.pattern_weights.iter().any(|(_, w)| w.is_nan() || *w < 0.0) {
            return bad("pattern weights must be non-empty and non-negative".into());
        }
        if self.pattern_weights.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
            return bad("pattern weights sum to zero".into());
        }
        for (p, _) in &self.pattern_weights {
            let entities = p.elements().iter().filter(|e| **e != PatternElement::Outside).count();
            if entities == 0 {
                return bad(format!("pattern {p} has no entity"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MiniWorld {
    pub catalog: Catalog,
    pub golden: Dataset,
    pub noisy: Dataset,
    pub synthetic: Dataset,
}

fn pseudo_names(count: usize, taken: &HashSet<String>, seed: u64, stream_offset: u64) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    let mut seen = taken.clone();
    let mut i = 0u64;
    while out.len() < count {
        let mut r = rng::item_rng(seed, NAME_STREAM + stream_offset, i);
        i += 1;
        let n = r.random_range(2..=3);
        let name: String = (0..n).map(|_| *SYLLABLES.choose(&mut r).unwrap()).collect();
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    out
}

fn build_catalog(cfg: &MiniWorldConfig) -> Result<Catalog> {
    let k = cfg.ambiguous_count();
    let mut reserved: HashSet<String> = BRANDS
        .iter()
        .chain(PRODUCT_TYPES)
        .chain(AMBIGUOUS)
        .chain(MODIFIERS)
        .chain(DECOY_PREFIXES)
        .flat_map(|s| s.split(' '))
        .map(str::to_string)
        .collect();
    let mut take = |list: &[&str], n: usize, offset: u64| -> Vec<String> {
        let mut v: Vec<String> = list.iter().take(n).map(|s| s.to_string()).collect();
        if v.len() < n {
            let extra = pseudo_names(n - v.len(), &reserved, cfg.seed, offset);
            reserved.extend(extra.iter().cloned());
            v.extend(extra);
        }
        v
    };
    let mut brands = take(BRANDS, cfg.n_brands - k, 0);
    let mut products = take(PRODUCT_TYPES, cfg.n_product_types - k, 1000);
    for a in &AMBIGUOUS[..k] {
        brands.push(a.to_string());
        products.push(a.to_string());
    }
    Catalog::new(brands, products)
}

struct Slots<'a> {
    brands: Vec<&'a str>,
    products: Vec<&'a str>,
}

/// Draws one template query with its true spans.
fn template_query(
    slots: &Slots<'_>,
    patterns: &[(SeqPattern, f64)],
    decoy_rate: f64,
    rng: &mut Rng,
) -> (Vec<String>, Vec<EntitySpan>) {
    let total: f64 = patterns.iter().map(|(_, w)| w).sum();
    let mut x = rng.random::<f64>() * total;
    let mut pattern = &patterns[patterns.len() - 1].0;
    for (p, w) in patterns {
        if x < *w {
            pattern = p;
            break;
        }
        x -= w;
    }

    let mut tokens: Vec<String> = Vec::new();
    let mut spans = Vec::new();
    let mut prev = PatternElement::Outside;
    for &element in pattern.elements() {
        let start = tokens.len();
        let (phrase, ty) = match element {
            PatternElement::Brand => (slots.brands.choose(rng).unwrap().to_string(), Some(EntityType::Brand)),
            PatternElement::Product => (
                slots.products.choose(rng).unwrap().to_string(),
                Some(EntityType::Product),
            ),
            PatternElement::Outside => {
                let phrase = if prev == PatternElement::Product && rng.random::<f64>() < decoy_rate {
                    format!(
                        "{} {}",
                        DECOY_PREFIXES.choose(rng).unwrap(),
                        slots.products.choose(rng).unwrap()
                    )
                } else {
                    MODIFIERS.choose(rng).unwrap().to_string()
                };
                (phrase, None)
            }
        };
        tokens.extend(phrase.split(' ').map(str::to_string));
        if let Some(ty) = ty {
            spans.push(EntitySpan::new(ty, start, tokens.len()));
        }
        prev = element;
    }
    (tokens, spans)
}

/// Applies one corruption to a labeled query: shift a span boundary, flip
/// its type, or drop it, chosen uniformly. Returns the new spans.
fn corrupt(len: usize, spans: &[EntitySpan], rng: &mut Rng) -> Vec<EntitySpan> {
    let mut out = spans.to_vec();
    let target = rng.random_range(0..out.len());
    let free = |pos: usize, out: &[EntitySpan]| out.iter().all(|s| pos < s.start || pos >= s.end);
    match rng.random_range(0..3) {
        0 => {
            let s = out[target];
            let mut shifts = Vec::new();
            if s.end < len && free(s.end, &out) {
                shifts.push(EntitySpan::new(s.entity_type, s.start, s.end + 1));
            }
            if s.start > 0 && free(s.start - 1, &out) {
                shifts.push(EntitySpan::new(s.entity_type, s.start - 1, s.end));
            }
            if s.len() > 1 {
                shifts.push(EntitySpan::new(s.entity_type, s.start, s.end - 1));
                shifts.push(EntitySpan::new(s.entity_type, s.start + 1, s.end));
            }
            match shifts.choose(rng) {
                Some(&shifted) => out[target] = shifted,
                None => out[target].entity_type = s.entity_type.other(),
            }
        }
        1 => out[target].entity_type = out[target].entity_type.other(),
        _ => {
            out.remove(target);
        }
    }
    out.sort();
    out
}

pub fn generate_miniworld(cfg: &MiniWorldConfig) -> Result<MiniWorld> {
    cfg.validate()?;
    let catalog = build_catalog(cfg)?;
    let slots = Slots {
        brands: catalog.brands.iter().map(String::as_str).collect(),
        products: catalog.product_types.iter().map(String::as_str).collect(),
    };

    let mut golden_items = Vec::with_capacity(cfg.n_golden);
    for i in 0..cfg.n_golden {
        let mut r = rng::item_rng(cfg.seed, GOLDEN_STREAM, i as u64);
        let (tokens, spans) = template_query(&slots, &cfg.pattern_weights, cfg.decoy_rate, &mut r);
        golden_items.push(TaggedQuery::from_spans(tokens, &spans, Source::Golden)?);
    }
    let golden_texts: HashSet<Vec<String>> = golden_items.iter().map(|q| q.tokens().to_vec()).collect();

    let mut noisy_items = Vec::with_capacity(cfg.n_noisy);
    for i in 0..cfg.n_noisy {
        let mut r = rng::item_rng(cfg.seed, NOISY_STREAM, i as u64);
        let tokens = loop {
            let (tokens, _) = template_query(&slots, &cfg.pattern_weights, cfg.decoy_rate, &mut r);
            if !golden_texts.contains(&tokens) {
                break tokens;
            }
        };
        noisy_items.push(distant_label(&tokens, &catalog, Source::Noisy)?);
    }

    let with_entities: Vec<usize> = (0..noisy_items.len())
        .filter(|&i| !noisy_items[i].spans().is_empty())
        .collect();
    let n_corrupt = ((cfg.noise_rate * with_entities.len() as f64).round() as usize).min(with_entities.len());
    let mut pick_rng = rng::item_rng(cfg.seed, CORRUPT_STREAM, u64::MAX);
    let mut chosen: Vec<usize> = index::sample(&mut pick_rng, with_entities.len(), n_corrupt)
        .into_iter()
        .map(|j| with_entities[j])
        .collect();
    chosen.sort_unstable();
    for i in chosen {
        let mut r = rng::item_rng(cfg.seed, CORRUPT_STREAM, i as u64);
        let q = &noisy_items[i];
        let spans = corrupt(q.len(), &q.spans(), &mut r);
        noisy_items[i] = TaggedQuery::from_spans(q.tokens().to_vec(), &spans, Source::Noisy)?;
    }

    let synthetic = generate_synthetic(&catalog)?;
    Ok(MiniWorld {
        catalog,
        golden: Dataset::new(Source::Golden, golden_items),
        noisy: Dataset::new(Source::Noisy, noisy_items),
        synthetic,
    })
}

/// All distinct tokens of the mini-world's outside-slot vocabulary.
pub fn modifier_vocabulary() -> BTreeSet<&'static str> {
    MODIFIERS
        .iter()
        .chain(DECOY_PREFIXES)
        .flat_map(|m| m.split(' '))
        .collect()
}
