//! Experiment configuration: one TOML file, dotted-key overrides from the
//! command line, and a content hash that stamps every artifact.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use amda_core::attack::AttackConfig;
use amda_core::augment::{AdaConfig, TrainingConfig};
use amda_core::mixup::MixupConfig;
use amda_core::model::ModelConfig;
use amda_core::seeds::fingerprint_hex;

/// Input files and the output directory. All inputs must exist when the
/// config is validated; the output directory is created on demand.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathsConfig {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub lexicon: PathBuf,
    pub embeddings: PathBuf,
    pub out_dir: PathBuf,
}

/// Training schedule without a seed: the master seed at the top of the
/// config is the single source of randomness for a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

/// Value grids for the `sweep` subcommand, kept in the config so that a
/// sweep artifact is reproducible from (config, seed) alone.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSection {
    pub ratios: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            ratios: vec![0.25, 0.5, 1.0],
            alphas: vec![0.2, 1.0, 8.0],
        }
    }
}

/// Everything one experiment needs. The serialized form doubles as the
/// hash input, so any field change shows up in every downstream artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub mixup: MixupConfig,
    pub ada: AdaConfig,
    pub attack: AttackConfig,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl ExperimentConfig {
    /// Parse a TOML file, apply `key=value` overrides, then validate.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut table: toml::Table = raw
            .parse()
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        for entry in overrides {
            apply_override(&mut table, entry)?;
        }
        if let Ok(out_dir) = std::env::var("AMDA_OUT_DIR") {
            apply_override(&mut table, &format!("paths.out_dir={out_dir:?}"))?;
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .with_context(|| format!("invalid config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    /// Field-level checks beyond what deserialization enforces: inputs
    /// exist on disk and the numeric sections pass their own validation.
    pub fn validate(&self) -> Result<()> {
        let inputs = [
            ("paths.train", &self.paths.train),
            ("paths.dev", &self.paths.dev),
            ("paths.test", &self.paths.test),
            ("paths.lexicon", &self.paths.lexicon),
            ("paths.embeddings", &self.paths.embeddings),
        ];
        for (field, p) in inputs {
            if !p.is_file() {
                bail!("{field}: no such file: {}", p.display());
            }
        }
        self.model.validate().map_err(|e| anyhow!("model: {e}"))?;
        self.training_config()
            .validate()
            .map_err(|e| anyhow!("train: {e}"))?;
        self.mixup
            .validate(self.model.layers)
            .map_err(|e| anyhow!("mixup: {e}"))?;
        self.ada.validate().map_err(|e| anyhow!("ada: {e}"))?;
        self.attack.validate().map_err(|e| anyhow!("attack: {e}"))?;
        Ok(())
    }

    /// The core training config; the master seed seeds training directly.
    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            seed: self.seed,
        }
    }

    /// Hash of the canonical JSON form, minus the output directory: where
    /// artifacts land must not change what they contain.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(paths) = value.get_mut("paths").and_then(|p| p.as_object_mut()) {
            paths.remove("out_dir");
        }
        fingerprint_hex(value.to_string().as_bytes())
    }
}

/// Apply one `dotted.path=value` override to a parsed TOML table. The
/// value is parsed as TOML when possible and falls back to a bare string,
/// so `--set mixup.alpha=0.4` and `--set attack.kind=pwws` both work.
fn apply_override(table: &mut toml::Table, entry: &str) -> Result<()> {
    let (key, raw_value) = entry
        .split_once('=')
        .ok_or_else(|| anyhow!("override {entry:?} is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override {entry:?} has an empty key");
    }
    let value = parse_toml_value(raw_value.trim());

    let mut parts = key.split('.').peekable();
    let mut current = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            current.insert(part.to_string(), value);
            return Ok(());
        }
        current = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {key:?}: {part:?} is not a table"))?;
    }
    unreachable!("split always yields at least one part");
}

fn parse_toml_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key v was just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
