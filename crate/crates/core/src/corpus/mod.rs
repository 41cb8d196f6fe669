//! Text ingestion: tokenization, labeled datasets, the vocabulary, the
//! synonym lexicon that drives word substitution, and pretrained word
//! embeddings used to filter substitution candidates.

mod embeddings;
mod lexicon;
mod vocab;

pub use embeddings::{load_embeddings, EmbeddingTable};
pub use lexicon::{load_lexicon, SynonymLexicon};
pub use vocab::{Vocabulary, PAD_INDEX, PAD_WORD, UNK_INDEX, UNK_WORD};

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase, split on whitespace, strip leading and trailing ASCII
/// punctuation from each piece, drop pieces that end up empty.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|piece| {
            piece
                .trim_matches(|c: char| c.is_ascii_punctuation())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// One labeled example. `id` is the zero-based position in the source file
/// and stays stable through attacks and augmentation so that adversarial
/// examples can point back at their parent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: usize,
    pub tokens: Vec<String>,
    pub label: usize,
}

/// An example after vocabulary lookup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub id: usize,
    pub token_ids: Vec<usize>,
    pub label: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Dev => write!(f, "dev"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Supported on-disk dataset encodings. Only JSON lines for now.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub split: Split,
    pub examples: Vec<Example>,
    /// Number of classes: max label + 1 over the split.
    pub label_count: usize,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    text: String,
    label: i64,
}

/// Load a JSON-lines dataset of `{"text": ..., "label": ...}` records.
///
/// Labels must be non-negative integers; the class count is the largest
/// label plus one and must be at least two. Blank lines are ignored. A
/// record whose text tokenizes to nothing is a parse error, not a silent
/// skip: downstream attackers assume non-empty inputs.
pub fn load_dataset(path: &Path, format: DatasetFormat, split: Split) -> Result<Dataset> {
    let DatasetFormat::Jsonl = format;
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    let mut max_label = 0usize;
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, lineno, format!("bad record: {e}")))?;
        if rec.label < 0 {
            return Err(Error::Schema(format!(
                "{}:{lineno}: label {} is negative",
                path.display(),
                rec.label
            )));
        }
        let label = rec.label as usize;
        let tokens = tokenize(&rec.text);
        if tokens.is_empty() {
            return Err(Error::parse(
                path,
                lineno,
                "text has no tokens after normalization",
            ));
        }
        max_label = max_label.max(label);
        examples.push(Example {
            id: examples.len(),
            tokens,
            label,
        });
    }
    if examples.is_empty() {
        return Err(Error::Validation(format!(
            "{}: empty dataset, class count unknown",
            path.display()
        )));
    }
    let label_count = max_label + 1;
    if label_count < 2 {
        return Err(Error::Validation(format!(
            "{}: only one class present, need at least two",
            path.display()
        )));
    }
    Ok(Dataset {
        split,
        examples,
        label_count,
    })
}

/// Write a dataset back as JSON lines. Tokens are joined with single
/// spaces, so `load(save(d))` reproduces `d` for already-normalized data.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for ex in &dataset.examples {
        let rec = RawRecord {
            text: ex.tokens.join(" "),
            label: ex.label as i64,
        };
        serde_json::to_writer(&mut out, &rec).expect("record serializes");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Candidate substitutions for one word, in ranked order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    pub words: Vec<String>,
    /// False when the target word had no embedding, so the similarity
    /// filter could not run and `words` is the raw lexicon list.
    pub scored: bool,
}

impl CandidateSet {
    fn empty() -> Self {
        CandidateSet {
            words: Vec::new(),
            scored: true,
        }
    }
}

/// Substitution candidates for `word`: the lexicon list filtered by cosine
/// similarity in embedding space and truncated to the `top_k` most similar.
///
/// Rules, in order:
/// - no lexicon entry: empty set;
/// - `sim_threshold <= -1.0` disables the filter: lexicon order, truncated;
/// - `word` missing from the embedding table: the filter cannot score, so
///   the raw lexicon list is returned (truncated) with `scored == false`;
/// - otherwise candidates without embeddings are dropped, survivors with
///   cosine below the threshold are dropped, and the rest are sorted by
///   similarity descending with ties keeping lexicon order.
pub fn candidates(
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    word: &str,
    sim_threshold: f64,
    top_k: usize,
) -> CandidateSet {
    assert!(top_k >= 1, "top_k must be at least 1");
    let list = lexicon.candidates_of(word);
    if list.is_empty() {
        return CandidateSet::empty();
    }
    let truncate = |mut words: Vec<String>| {
        words.truncate(top_k);
        words
    };
    if sim_threshold <= -1.0 {
        return CandidateSet {
            words: truncate(list.to_vec()),
            scored: true,
        };
    }
    let Some(target_vec) = embeddings.get(word) else {
        return CandidateSet {
            words: truncate(list.to_vec()),
            scored: false,
        };
    };
    let mut scored: Vec<(f64, usize, &String)> = Vec::new();
    for (pos, cand) in list.iter().enumerate() {
        let Some(cand_vec) = embeddings.get(cand) else {
            continue;
        };
        let sim = embeddings::cosine(target_vec, cand_vec);
        if sim >= sim_threshold {
            scored.push((sim, pos, cand));
        }
    }
    // Stable sort by similarity descending; equal similarities keep
    // lexicon order via the recorded position.
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    CandidateSet {
        words: truncate(scored.into_iter().map(|(_, _, w)| w.clone()).collect()),
        scored: true,
    }
}
