//! Raw query string to token list.

use crate::error::{Error, Result};

/// Punctuation that survives normalization by default.
pub const DEFAULT_KEPT_PUNCTUATION: &[char] = &['.', '-', '&', '\'', '/'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    pub collapse_whitespace: bool,
    /// Non-alphanumeric characters that are kept. Every other
    /// non-alphanumeric, non-whitespace character is stripped.
    pub kept_punctuation: Vec<char>,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            lowercase: true,
            collapse_whitespace: true,
            kept_punctuation: DEFAULT_KEPT_PUNCTUATION.to_vec(),
        }
    }
}

impl NormalizationConfig {
    fn keeps(&self, c: char) -> bool {
        c.is_alphanumeric() || self.kept_punctuation.contains(&c)
    }
}

/// Lowercases, strips unwanted characters and splits on whitespace.
///
/// With `collapse_whitespace` off, runs of whitespace still separate tokens
/// but each whitespace character is its own boundary, which yields the same
/// tokens since empty tokens are dropped either way.
pub fn normalize_query(raw: &str, config: &NormalizationConfig) -> Result<Vec<String>> {
    let mut filtered = String::with_capacity(raw.len());
    for c in raw.chars() {
        if c.is_whitespace() {
            filtered.push(' ');
        } else if config.lowercase {
            // Filter after lowercasing: some lowercase mappings emit combining marks.
            filtered.extend(c.to_lowercase().filter(|&lc| config.keeps(lc)));
        } else if config.keeps(c) {
            filtered.push(c);
        }
    }
    let tokens: Vec<String> = if config.collapse_whitespace {
        filtered.split_whitespace().map(str::to_string).collect()
    } else {
        filtered
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect()
    };
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    Ok(tokens)
}

/// Normalizes with the default configuration.
pub fn tokenize(raw: &str) -> Result<Vec<String>> {
    normalize_query(raw, &NormalizationConfig::default())
}
