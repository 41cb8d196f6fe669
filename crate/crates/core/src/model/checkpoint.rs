use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeds;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized model: version tag, scalar width, provenance (config hash
/// and master seed), the vocabulary word list and the row-major parameter
/// arrays. JSON keeps floats exact through Rust's round-trip formatting,
/// so save followed by load is bit-identical.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint<F> {
    pub version: u32,
    pub scalar: String,
    pub config_hash: String,
    pub seed: u64,
    pub vocab: Vec<String>,
    pub params: ModelParams<F>,
}

impl<F: Scalar> Checkpoint<F> {
    pub fn new(
        params: ModelParams<F>,
        vocab: &Vocabulary,
        config_hash: impl Into<String>,
        seed: u64,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            scalar: F::NAME.to_string(),
            config_hash: config_hash.into(),
            seed,
            vocab: vocab.words().to_vec(),
            params,
        }
    }

    /// Content fingerprint, used to tie fixed adversarial sets to the
    /// victim they were generated against.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("checkpoint serializes");
        seeds::fingerprint_hex(&bytes)
    }

    /// Rebuild the vocabulary object from the stored word list.
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_words(self.vocab.clone())
    }
}

pub fn save_checkpoint<F: Scalar>(ckpt: &Checkpoint<F>, path: &Path) -> Result<()> {
    let bytes = serde_json::to_vec(ckpt).expect("checkpoint serializes");
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<Checkpoint<F>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint<F> = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: version {} unsupported, expected {CHECKPOINT_VERSION}",
            path.display(),
            ckpt.version
        )));
    }
    if ckpt.scalar != F::NAME {
        return Err(Error::Checkpoint(format!(
            "{}: stored at {}, loaded as {}",
            path.display(),
            ckpt.scalar,
            F::NAME
        )));
    }
    if ckpt.vocab.len() != ckpt.params.vocab_size() {
        return Err(Error::Checkpoint(format!(
            "{}: {} vocabulary words for {} embedding rows",
            path.display(),
            ckpt.vocab.len(),
            ckpt.params.vocab_size()
        )));
    }
    ckpt.params.validate()?;
    Ok(ckpt)
}
