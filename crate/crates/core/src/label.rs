//! The five-label BIO scheme, span codec and sequence patterns.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Number of labels in the tag set.
pub const NUM_LABELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityType {
    Brand,
    Product,
}

impl EntityType {
    pub const ALL: [EntityType; 2] = [EntityType::Brand, EntityType::Product];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Brand => "BRD",
            EntityType::Product => "PRD",
        }
    }

    pub fn begin(self) -> LabelTag {
        match self {
            EntityType::Brand => LabelTag::BBrd,
            EntityType::Product => LabelTag::BPrd,
        }
    }

    pub fn inside(self) -> LabelTag {
        match self {
            EntityType::Brand => LabelTag::IBrd,
            EntityType::Product => LabelTag::IPrd,
        }
    }

    pub fn other(self) -> EntityType {
        match self {
            EntityType::Brand => EntityType::Product,
            EntityType::Product => EntityType::Brand,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A token label. The discriminants are the label indices used by the CRF
/// and the emission layer; Viterbi tie-breaking prefers lower indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum LabelTag {
    O = 0,
    BBrd = 1,
    IBrd = 2,
    BPrd = 3,
    IPrd = 4,
}

impl LabelTag {
    pub const ALL: [LabelTag; NUM_LABELS] = [
        LabelTag::O,
        LabelTag::BBrd,
        LabelTag::IBrd,
        LabelTag::BPrd,
        LabelTag::IPrd,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> LabelTag {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelTag::O => "O",
            LabelTag::BBrd => "B-BRD",
            LabelTag::IBrd => "I-BRD",
            LabelTag::BPrd => "B-PRD",
            LabelTag::IPrd => "I-PRD",
        }
    }

    pub fn entity(self) -> Option<EntityType> {
        match self {
            LabelTag::O => None,
            LabelTag::BBrd | LabelTag::IBrd => Some(EntityType::Brand),
            LabelTag::BPrd | LabelTag::IPrd => Some(EntityType::Product),
        }
    }

    pub fn is_begin(self) -> bool {
        matches!(self, LabelTag::BBrd | LabelTag::BPrd)
    }

    pub fn is_inside(self) -> bool {
        matches!(self, LabelTag::IBrd | LabelTag::IPrd)
    }

    /// Whether `next` may follow `self` in a BIO sequence.
    pub fn may_precede(self, next: LabelTag) -> bool {
        if !next.is_inside() {
            return true;
        }
        self != LabelTag::O && self.entity() == next.entity()
    }
}

impl fmt::Display for LabelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "O" => LabelTag::O,
            "B-BRD" => LabelTag::BBrd,
            "I-BRD" => LabelTag::IBrd,
            "B-PRD" => LabelTag::BPrd,
            "I-PRD" => LabelTag::IPrd,
            other => return Err(Error::UnknownLabel(other.to_string())),
        })
    }
}

/// A typed entity over the half-open token range `start..end`. Spans order
/// by position first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub entity_type: EntityType,
}

impl EntitySpan {
    pub fn new(entity_type: EntityType, start: usize, end: usize) -> Self {
        EntitySpan {
            entity_type,
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Checks the BIO constraint: every `I-X` follows `B-X` or `I-X`.
pub fn validate_bio(labels: &[LabelTag]) -> Result<()> {
    let mut prev = LabelTag::O;
    for (i, &label) in labels.iter().enumerate() {
        if !prev.may_precede(label) {
            let reason = if prev == LabelTag::O {
                "inside tag without a preceding entity"
            } else {
                "entity type changes inside a run"
            };
            return Err(Error::InvalidBio { index: i, reason });
        }
        prev = label;
    }
    Ok(())
}

/// Promotes every `I-X` that cannot continue the previous label to `B-X`.
/// Valid sequences are returned unchanged.
pub fn repair_bio(labels: &[LabelTag]) -> Vec<LabelTag> {
    let mut out = Vec::with_capacity(labels.len());
    let mut prev = LabelTag::O;
    for &label in labels {
        let fixed = if prev.may_precede(label) {
            label
        } else {
            label.entity().map(EntityType::begin).unwrap_or(label)
        };
        out.push(fixed);
        prev = fixed;
    }
    out
}

/// Decodes maximal `B-X (I-X)*` runs into spans, sorted by start.
pub fn bio_decode(labels: &[LabelTag]) -> Result<Vec<EntitySpan>> {
    validate_bio(labels)?;
    let mut spans = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (i, &label) in labels.iter().enumerate() {
        if label.is_inside() {
            if let Some(span) = open.as_mut() {
                span.end = i + 1;
            }
            continue;
        }
        if let Some(span) = open.take() {
            spans.push(span);
        }
        if let Some(ty) = label.entity() {
            open = Some(EntitySpan::new(ty, i, i + 1));
        }
    }
    spans.extend(open);
    Ok(spans)
}

pub fn bio_encode(spans: &[EntitySpan], length: usize) -> Result<Vec<LabelTag>> {
    let mut labels = vec![LabelTag::O; length];
    let mut cursor = 0;
    for span in spans {
        if span.is_empty() {
            return Err(Error::InvalidSpan {
                start: span.start,
                end: span.end,
                reason: "empty span",
            });
        }
        if span.end > length {
            return Err(Error::InvalidSpan {
                start: span.start,
                end: span.end,
                reason: "span exceeds query length",
            });
        }
        if span.start < cursor {
            return Err(Error::InvalidSpan {
                start: span.start,
                end: span.end,
                reason: "spans overlap or are unsorted",
            });
        }
        labels[span.start] = span.entity_type.begin();
        for label in &mut labels[span.start + 1..span.end] {
            *label = span.entity_type.inside();
        }
        cursor = span.end;
    }
    Ok(labels)
}

/// One element of a collapsed entity sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternElement {
    Brand,
    Product,
    Outside,
}

impl PatternElement {
    fn of(label: LabelTag) -> PatternElement {
        match label.entity() {
            Some(EntityType::Brand) => PatternElement::Brand,
            Some(EntityType::Product) => PatternElement::Product,
            None => PatternElement::Outside,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PatternElement::Brand => "BRD",
            PatternElement::Product => "PRD",
            PatternElement::Outside => "O",
        }
    }
}

/// A query's entity sequence with adjacent duplicates collapsed, e.g. `BRD+O+PRD`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeqPattern(Vec<PatternElement>);

impl SeqPattern {
    pub fn elements(&self) -> &[PatternElement] {
        &self.0
    }
}

impl fmt::Display for SeqPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            f.write_str(e.as_str())?;
        }
        Ok(())
    }
}

impl FromStr for SeqPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut elements: Vec<PatternElement> = Vec::new();
        for part in s.split('+') {
            let e = match part.trim() {
                "BRD" => PatternElement::Brand,
                "PRD" => PatternElement::Product,
                "O" => PatternElement::Outside,
                other => return Err(Error::Config(format!("unknown pattern element {other:?}"))),
            };
            if elements.last() == Some(&e) {
                return Err(Error::Config(format!("pattern {s:?} repeats an element")));
            }
            elements.push(e);
        }
        Ok(SeqPattern(elements))
    }
}

/// Collapses per-token classes. Two adjacent entities of the same type
/// collapse into one element as well.
pub fn pattern_of(labels: &[LabelTag]) -> Result<SeqPattern> {
    validate_bio(labels)?;
    let mut elements: Vec<PatternElement> = Vec::new();
    for &label in labels {
        let e = PatternElement::of(label);
        if elements.last() != Some(&e) {
            elements.push(e);
        }
    }
    Ok(SeqPattern(elements))
}
