use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Pretrained word vectors used only to score substitution candidates.
/// These are independent of the classifier's trained embedding layer and
/// stay at `f64` regardless of the model's scalar type.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingTable {
    vectors: HashMap<String, Vec<f64>>,
    dim: usize,
}

impl EmbeddingTable {
    /// Table with no entries. Usable wherever the similarity filter is
    /// disabled; any lookup misses.
    pub fn empty() -> Self {
        EmbeddingTable::default()
    }

    pub fn from_pairs<W: Into<String>>(pairs: Vec<(W, Vec<f64>)>) -> Result<Self> {
        let mut table = EmbeddingTable::empty();
        for (word, vec) in pairs {
            let word = word.into();
            if table.dim == 0 {
                table.dim = vec.len();
            }
            if vec.len() != table.dim {
                return Err(Error::Validation(format!(
                    "embedding for {word:?} has {} dims, expected {}",
                    vec.len(),
                    table.dim
                )));
            }
            table.vectors.insert(word, vec);
        }
        Ok(table)
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Load whitespace-separated text embeddings: one `word v1 v2 ... vd` line
/// per word. The first line fixes the dimension; later lines must match.
/// Duplicate words keep the last definition.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = EmbeddingTable::empty();
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-blank line has a first field");
        let values: std::result::Result<Vec<f64>, _> =
            parts.map(str::parse::<f64>).collect();
        let values = values
            .map_err(|e| Error::parse(path, lineno, format!("bad embedding value: {e}")))?;
        if values.is_empty() {
            return Err(Error::parse(path, lineno, "embedding line has no values"));
        }
        if table.dim == 0 {
            table.dim = values.len();
        } else if values.len() != table.dim {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "embedding has {} dims, expected {} from the first line",
                    values.len(),
                    table.dim
                ),
            ));
        }
        table.vectors.insert(word.to_string(), values);
    }
    if table.is_empty() {
        return Err(Error::Validation(format!(
            "{}: embedding file has no entries",
            path.display()
        )));
    }
    Ok(table)
}

/// Cosine similarity; zero whenever either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}
