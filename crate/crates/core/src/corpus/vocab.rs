use std::collections::HashMap;

use super::{Dataset, EncodedExample, Example, SynonymLexicon};

pub const PAD_WORD: &str = "<pad>";
pub const UNK_WORD: &str = "<unk>";
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

/// Word-to-index mapping. Index 0 is padding, index 1 the unknown token;
/// every other word gets the next free index in first-occurrence order,
/// which makes construction deterministic for a fixed input order.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn new() -> Self {
        let mut v = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        v.insert(PAD_WORD);
        v.insert(UNK_WORD);
        v
    }

    fn insert(&mut self, word: &str) {
        if !self.index.contains_key(word) {
            self.index.insert(word.to_string(), self.words.len());
            self.words.push(word.to_string());
        }
    }

    /// Vocabulary over the training split only.
    pub fn from_dataset(train: &Dataset) -> Self {
        let mut v = Vocabulary::new();
        for ex in &train.examples {
            for tok in &ex.tokens {
                v.insert(tok);
            }
        }
        v
    }

    /// Vocabulary over the training split plus every word the lexicon can
    /// introduce. Substituted words then keep distinct (randomly
    /// initialized) embedding rows instead of collapsing to `<unk>`, and
    /// every model trained for one experiment shares the same index space.
    pub fn from_sources(train: &Dataset, lexicon: &SynonymLexicon) -> Self {
        let mut v = Vocabulary::from_dataset(train);
        for (word, cands) in lexicon.iter() {
            v.insert(word);
            for c in cands {
                v.insert(c);
            }
        }
        v
    }

    /// Rebuild from a checkpointed word list. The list must start with the
    /// two reserved tokens.
    pub fn from_words(words: Vec<String>) -> crate::error::Result<Self> {
        if words.len() < 2 || words[PAD_INDEX] != PAD_WORD || words[UNK_INDEX] != UNK_WORD {
            return Err(crate::error::Error::Checkpoint(
                "vocabulary list must start with the reserved pad and unk tokens".to_string(),
            ));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(crate::error::Error::Checkpoint(format!(
                    "duplicate vocabulary word {w:?}"
                )));
            }
        }
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the two reserved tokens are always present
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Map tokens to indices, sending out-of-vocabulary words to `<unk>`.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.index_of(t).unwrap_or(UNK_INDEX))
            .collect()
    }

    pub fn encode_example(&self, ex: &Example) -> EncodedExample {
        EncodedExample {
            id: ex.id,
            token_ids: self.encode(&ex.tokens),
            label: ex.label,
        }
    }
}
