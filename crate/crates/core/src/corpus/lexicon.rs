use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Word substitution lexicon: for each word, an ordered list of candidate
/// replacements. Entry order follows the source file and candidate order is
/// preserved, so everything downstream that breaks ties "in lexicon order"
/// is deterministic.
#[derive(Clone, Debug, Default)]
pub struct SynonymLexicon {
    entries: Vec<(String, Vec<String>)>,
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct RawEntry {
    word: String,
    candidates: Vec<String>,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        SynonymLexicon::default()
    }

    /// Test and fixture constructor.
    pub fn from_pairs<W: Into<String>, C: Into<String>>(pairs: Vec<(W, Vec<C>)>) -> Self {
        let mut lex = SynonymLexicon::new();
        for (word, cands) in pairs {
            let cands: Vec<String> = cands.into_iter().map(Into::into).collect();
            lex.add(word.into(), cands);
        }
        lex
    }

    /// Insert or merge one entry. Self-references are dropped, duplicates
    /// keep their first position, and merging appends only unseen words, so
    /// repeated inserts never reorder what is already there.
    pub fn add(&mut self, word: String, candidates: Vec<String>) {
        let slot = match self.index.get(&word) {
            Some(&i) => i,
            None => {
                self.index.insert(word.clone(), self.entries.len());
                self.entries.push((word.clone(), Vec::new()));
                self.entries.len() - 1
            }
        };
        let list = &mut self.entries[slot].1;
        for cand in candidates {
            if cand != word && !list.contains(&cand) {
                list.push(cand);
            }
        }
    }

    /// Candidates for `word`, empty slice when there is no entry.
    pub fn candidates_of(&self, word: &str) -> &[String] {
        match self.index.get(word) {
            Some(&i) => &self.entries[i].1,
            None => &[],
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in file order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(w, c)| (w.as_str(), c.as_slice()))
    }
}

/// Load a JSON-lines lexicon of `{"word": ..., "candidates": [...]}`.
///
/// Duplicate records for one word are merged in order of appearance with a
/// warning; self-references and repeated candidates are dropped.
pub fn load_lexicon(path: &Path) -> Result<SynonymLexicon> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lex = SynonymLexicon::new();
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawEntry = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, lineno, format!("bad lexicon entry: {e}")))?;
        if lex.contains(&rec.word) {
            log::warn!(
                "{}:{lineno}: duplicate lexicon entry for {:?}, merging",
                path.display(),
                rec.word
            );
        }
        lex.add(rec.word, rec.candidates);
    }
    Ok(lex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn load_str(contents: &str) -> SynonymLexicon {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        load_lexicon(f.path()).unwrap()
    }

    #[test]
    fn self_references_and_duplicates_dropped() {
        let lex = load_str(r#"{"word": "good", "candidates": ["good", "fine", "fine", "solid"]}"#);
        assert_eq!(lex.candidates_of("good"), ["fine", "solid"]);
    }

    #[test]
    fn duplicate_records_merge_preserving_order() {
        let lex = load_str(
            r#"{"word": "good", "candidates": ["fine", "solid"]}
{"word": "bad", "candidates": ["poor"]}
{"word": "good", "candidates": ["solid", "okay"]}
"#,
        );
        assert_eq!(lex.candidates_of("good"), ["fine", "solid", "okay"]);
        assert_eq!(lex.candidates_of("bad"), ["poor"]);
        // Entry order still follows first appearance.
        let words: Vec<&str> = lex.iter().map(|(w, _)| w).collect();
        assert_eq!(words, ["good", "bad"]);
    }

    #[test]
    fn missing_word_has_no_candidates() {
        let lex = load_str(r#"{"word": "good", "candidates": ["fine"]}"#);
        assert!(lex.candidates_of("absent").is_empty());
    }

    #[test]
    fn empty_file_is_an_empty_lexicon() {
        let lex = load_str("");
        assert!(lex.is_empty());
    }
}
