use std::collections::{BTreeSet, HashMap};

use crate::dataset::TaggedQuery;
use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const UNK_TOKEN: &str = "<unk>";

/// Word and character id maps. Id 0 is the unknown entry in both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    word_ids: HashMap<String, usize>,
    chars: Vec<char>,
    char_ids: HashMap<char, usize>,
}

impl Vocab {
    /// Builds from the given words and characters; both lists are
    /// deduplicated and sorted, after the reserved unknown entry.
    pub fn new<W, C>(words: W, chars: C) -> Self
    where
        W: IntoIterator<Item = String>,
        C: IntoIterator<Item = char>,
    {
        let words: BTreeSet<String> = words.into_iter().filter(|w| w != UNK_TOKEN).collect();
        let chars: BTreeSet<char> = chars.into_iter().collect();
        let words: Vec<String> = std::iter::once(UNK_TOKEN.to_string()).chain(words).collect();
        // The char slot 0 placeholder is never looked up.
        let chars: Vec<char> = std::iter::once('\u{0}')
            .chain(chars.into_iter().filter(|&c| c != '\u{0}'))
            .collect();
        Self::from_lists(words, chars)
    }

    fn from_lists(words: Vec<String>, chars: Vec<char>) -> Self {
        let word_ids = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let char_ids = chars.iter().enumerate().skip(1).map(|(i, &c)| (c, i)).collect();
        Vocab {
            words,
            word_ids,
            chars,
            char_ids,
        }
    }

    /// Restores a vocab from its id-ordered lists, including the reserved
    /// entry at index 0.
    pub fn from_id_lists(words: Vec<String>, chars: Vec<char>) -> Result<Self> {
        if words.first().map(String::as_str) != Some(UNK_TOKEN) || chars.is_empty() {
            return Err(Error::CorruptModel("vocab is missing its unknown entry".into()));
        }
        let v = Self::from_lists(words, chars);
        if v.word_ids.len() != v.words.len() || v.char_ids.len() + 1 != v.chars.len() {
            return Err(Error::CorruptModel("duplicate vocab entries".into()));
        }
        Ok(v)
    }

    /// Every token and character of the given queries.
    pub fn from_queries<'a, I>(queries: I) -> Self
    where
        I: IntoIterator<Item = &'a TaggedQuery>,
    {
        let mut words = BTreeSet::new();
        let mut chars = BTreeSet::new();
        for q in queries {
            for t in q.tokens() {
                chars.extend(t.chars());
                words.insert(t.clone());
            }
        }
        Vocab::new(words, chars)
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.word_ids.get(word).copied().unwrap_or(UNK)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_ids.get(&c).copied().unwrap_or(UNK)
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.word_ids.contains_key(word) && word != UNK_TOKEN
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknowns_map_to_zero() {
        let v = Vocab::new(["washer".to_string(), "lg".to_string()], "washerlg".chars());
        assert_eq!(v.word_id("nope"), UNK);
        assert_ne!(v.word_id("lg"), UNK);
        assert_eq!(v.char_id('z'), UNK);
        assert_ne!(v.char_id('w'), UNK);
        assert_eq!(v.num_words(), 3);
        assert_eq!(v.num_chars(), 1 + 8);
        assert!(!v.contains_word(UNK_TOKEN));
    }

    #[test]
    fn id_lists_round_trip() {
        let v = Vocab::new(["b".to_string(), "a".to_string()], "ab".chars());
        let back = Vocab::from_id_lists(v.words().to_vec(), v.chars().to_vec()).unwrap();
        assert_eq!(back, v);
        assert!(Vocab::from_id_lists(vec!["a".into()], vec!['\0']).is_err());
    }
}
