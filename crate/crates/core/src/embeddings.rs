//! Pretrained word vectors in the common text format:
//! one `<word> <v1> … <vd>` line per word.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::Vocab;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            words: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Adds or replaces a row.
    pub fn insert(&mut self, word: &str, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimension(format!(
                "row for {word:?} has {} values, expected {}",
                row.len(),
                self.dim
            )));
        }
        match self.index.get(word) {
            Some(&i) => self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(row),
            None => {
                self.index.insert(word.to_string(), self.words.len());
                self.words.push(word.to_string());
                self.data.extend_from_slice(row);
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, dim: usize, origin: &Path) -> Result<Self> {
        let mut table = EmbeddingTable::new(dim);
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(origin, line_no, format!("bad number {f:?}")))
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("expected {dim} values, found {}", values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(origin, line_no, "non-finite value"));
            }
            table.insert(word, &values)?;
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Percentage of the vocab's real words (the unknown slot excluded)
    /// that have a row in this table.
    pub fn coverage(&self, vocab: &Vocab) -> f64 {
        let words = &vocab.words()[1..];
        if words.is_empty() {
            return 0.0;
        }
        let hit = words.iter().filter(|w| self.index.contains_key(w.as_str())).count();
        100.0 * hit as f64 / words.len() as f64
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, dim: usize) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    EmbeddingTable::parse(&text, dim, path)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The `k` words most cosine-similar to `word`, excluding `word` itself.
/// Ties are broken lexicographically.
pub fn nearest_neighbors(table: &EmbeddingTable, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let q = table.get(word).ok_or_else(|| Error::UnknownWord(word.to_string()))?;
    let mut scored: Vec<(String, f64)> = table
        .words
        .iter()
        .filter(|w| w.as_str() != word)
        .map(|w| (w.clone(), cosine(q, table.get(w).expect("indexed word"))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
