//! Tagged queries, datasets, catalogs and their text file formats.
//!
//! Dataset files are UTF-8 with a `# role: GOLDEN|NOISY|SYNTHETIC` header on
//! the first line, then one `token<TAB>label` line per token and a blank line
//! between queries. Catalog files hold one entity per line.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::label::{bio_decode, pattern_of, repair_bio, validate_bio, EntitySpan, EntityType, LabelTag, SeqPattern};
use crate::preprocess::tokenize;
use crate::rng;

/// Where a query's labels came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Golden,
    Noisy,
    Synthetic,
    Predicted,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Golden => "GOLDEN",
            Source::Noisy => "NOISY",
            Source::Synthetic => "SYNTHETIC",
            Source::Predicted => "PREDICTED",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "GOLDEN" => Ok(Source::Golden),
            "NOISY" => Ok(Source::Noisy),
            "SYNTHETIC" => Ok(Source::Synthetic),
            "PREDICTED" => Ok(Source::Predicted),
            other => Err(Error::Config(format!("unknown dataset role {other:?}"))),
        }
    }
}

/// A tokenized query with one BIO label per token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaggedQuery {
    tokens: Vec<String>,
    labels: Vec<LabelTag>,
    source: Source,
}

impl TaggedQuery {
    pub fn new(tokens: Vec<String>, labels: Vec<LabelTag>, source: Source) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyQuery);
        }
        if tokens.len() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "tokens and labels",
                left: tokens.len(),
                right: labels.len(),
            });
        }
        validate_bio(&labels)?;
        Ok(TaggedQuery { tokens, labels, source })
    }

    /// Builds from spans over `tokens`.
    pub fn from_spans(tokens: Vec<String>, spans: &[EntitySpan], source: Source) -> Result<Self> {
        let labels = crate::label::bio_encode(spans, tokens.len())?;
        TaggedQuery::new(tokens, labels, source)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn labels(&self) -> &[LabelTag] {
        &self.labels
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }

    pub fn spans(&self) -> Vec<EntitySpan> {
        bio_decode(&self.labels).expect("labels validated at construction")
    }

    pub fn pattern(&self) -> SeqPattern {
        pattern_of(&self.labels).expect("labels validated at construction")
    }

    /// Surface strings of the entities of one type, in token order.
    pub fn entities(&self, ty: EntityType) -> Vec<String> {
        self.spans()
            .into_iter()
            .filter(|s| s.entity_type == ty)
            .map(|s| self.tokens[s.start..s.end].join(" "))
            .collect()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub role: Source,
    pub items: Vec<TaggedQuery>,
}

impl Dataset {
    pub fn new(role: Source, items: Vec<TaggedQuery>) -> Self {
        Dataset { role, items }
    }

    pub fn empty(role: Source) -> Self {
        Dataset {
            role,
            items: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TaggedQuery> {
        self.items.iter()
    }

    /// Parses the dataset text format. With `lenient`, orphan `I-X` tags are
    /// promoted to `B-X` instead of rejected.
    pub fn parse(text: &str, origin: &Path, lenient: bool) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let role = match lines.next() {
            Some((_, header)) => parse_header(header)
                .ok_or_else(|| Error::parse(origin, 1, "expected `# role: GOLDEN|NOISY|SYNTHETIC` header"))??,
            None => return Err(Error::parse(origin, 1, "empty dataset file")),
        };

        let mut items = Vec::new();
        let mut tokens = Vec::new();
        let mut labels = Vec::new();
        let mut start_line = 2;
        let mut flush = |tokens: &mut Vec<String>, labels: &mut Vec<LabelTag>, line: usize| -> Result<()> {
            if tokens.is_empty() {
                return Ok(());
            }
            let labels_owned = if lenient {
                repair_bio(labels)
            } else {
                std::mem::take(labels)
            };
            let query = TaggedQuery::new(std::mem::take(tokens), labels_owned, role)
                .map_err(|e| Error::parse(origin, line, e.to_string()))?;
            labels.clear();
            items.push(query);
            Ok(())
        };

        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                flush(&mut tokens, &mut labels, start_line)?;
                start_line = lineno + 1;
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let (token, label) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, lineno, "expected `token<TAB>label`"))?;
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::parse(origin, lineno, "token is empty or contains whitespace"));
            }
            let label: LabelTag = label
                .trim()
                .parse()
                .map_err(|e: Error| Error::parse(origin, lineno, e.to_string()))?;
            tokens.push(token.to_string());
            labels.push(label);
        }
        flush(&mut tokens, &mut labels, start_line)?;
        Ok(Dataset { role, items })
    }

    pub fn read(path: impl AsRef<Path>, lenient: bool) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Dataset::parse(&text, path, lenient)
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "# role: {}", self.role)?;
        for (i, q) in self.items.iter().enumerate() {
            if i > 0 {
                writeln!(out)?;
            }
            for (t, l) in q.tokens.iter().zip(&q.labels) {
                writeln!(out, "{t}\t{l}")?;
            }
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

fn parse_header(line: &str) -> Option<Result<Source>> {
    let rest = line.trim().strip_prefix('#')?.trim();
    let role = rest.strip_prefix("role:")?.trim();
    Some(role.parse())
}

/// Golden data split into train/dev/test.
#[derive(Debug, Clone)]
pub struct GoldenSplit {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

pub const MIN_GOLDEN: usize = 20;

/// Holds out 15% (floor) as test, then 10% (floor) of the remainder as dev;
/// everything else is train.
pub fn split_golden(golden: &Dataset, seed: u64) -> Result<GoldenSplit> {
    let n = golden.len();
    if n < MIN_GOLDEN {
        return Err(Error::DatasetTooSmall {
            needed: MIN_GOLDEN,
            got: n,
        });
    }
    let n_test = n * 15 / 100;
    let n_dev = (n - n_test) / 10;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut test_idx = order[..n_test].to_vec();
    let mut dev_idx = order[n_test..n_test + n_dev].to_vec();
    let mut train_idx = order[n_test + n_dev..].to_vec();
    test_idx.sort_unstable();
    dev_idx.sort_unstable();
    train_idx.sort_unstable();

    let pick = |idx: &[usize]| Dataset::new(golden.role, idx.iter().map(|&i| golden.items[i].clone()).collect());
    Ok(GoldenSplit {
        train: pick(&train_idx),
        dev: pick(&dev_idx),
        test: pick(&test_idx),
    })
}

/// Ground-truth brand and product-type strings. Entries are normalized
/// token sequences joined by single spaces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    pub brands: BTreeSet<String>,
    pub product_types: BTreeSet<String>,
}

impl Catalog {
    /// Normalizes every entry with the query preprocessing.
    pub fn new<I, J, S, T>(brands: I, product_types: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let norm = |s: &str| tokenize(s).map(|t| t.join(" "));
        Ok(Catalog {
            brands: brands.into_iter().map(|s| norm(s.as_ref())).collect::<Result<_>>()?,
            product_types: product_types
                .into_iter()
                .map(|s| norm(s.as_ref()))
                .collect::<Result<_>>()?,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.brands.is_empty() && self.product_types.is_empty()
    }

    pub fn entries(&self, ty: EntityType) -> &BTreeSet<String> {
        match ty {
            EntityType::Brand => &self.brands,
            EntityType::Product => &self.product_types,
        }
    }

    /// Strings present in both sets.
    pub fn ambiguous(&self) -> BTreeSet<String> {
        self.brands.intersection(&self.product_types).cloned().collect()
    }

    /// SHA-256 over the sorted entries of both sets.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (name, set) in [("brands", &self.brands), ("product_types", &self.product_types)] {
            h.update(name.as_bytes());
            h.update(b"\n");
            for e in set {
                h.update(e.as_bytes());
                h.update(b"\n");
            }
        }
        h.finalize().into()
    }

    pub fn read(brands: impl AsRef<Path>, product_types: impl AsRef<Path>) -> Result<Self> {
        Ok(Catalog {
            brands: read_entity_file(brands.as_ref())?,
            product_types: read_entity_file(product_types.as_ref())?,
        })
    }

    pub fn write(&self, brands: impl AsRef<Path>, product_types: impl AsRef<Path>) -> Result<()> {
        write_entity_file(brands.as_ref(), &self.brands)?;
        write_entity_file(product_types.as_ref(), &self.product_types)
    }
}

fn read_entity_file(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tokens = tokenize(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.insert(tokens.join(" "));
    }
    Ok(out)
}

fn write_entity_file(path: &Path, entries: &BTreeSet<String>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for e in entries {
        writeln!(out, "{e}")?;
    }
    out.flush()?;
    Ok(())
}
