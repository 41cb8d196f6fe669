//! Adversarial data augmentation and the training regimes built on it.
//!
//! The augmented training set unions the original examples with adversarial
//! flips found by the attackers, each entry tagged with its provenance. One
//! trainer covers all four regimes: plain cross entropy, adversarial
//! augmentation, mixup and the combination, selected purely by the data and
//! the mixup config. A per-epoch variant regenerates the adversarial half
//! against the current model, and a sweep driver retrains across a range of
//! one hyper-parameter.

use crate::artifacts::{read_jsonl, write_jsonl, ArtifactHeader, ArtifactMeta};
use crate::attack::{attack_example, AttackConfig, AttackKind, ModelVictim, Predictor};
use crate::corpus::{Dataset, EmbeddingTable, Example, SynonymLexicon, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::evaluate_tae;
use crate::mixup::{sample_mix, MixupConfig};
use crate::model::{train_step, Batch, BatchItem, LossReport, ModelConfig, ModelParams};
use crate::scalar::Scalar;
use crate::seeds::rng_for;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashMap;
use std::path::Path;

/// Where a training entry came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Adversarial {
        /// Id of the original example this flip was derived from.
        parent: usize,
        attacker: AttackKind,
        /// Epoch the flip was generated in, for per-epoch regeneration.
        epoch: Option<usize>,
    },
}

/// One entry of the augmented training set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugEntry {
    pub example: Example,
    pub provenance: Provenance,
}

/// Original examples plus adversarial flips, in a stable order: originals
/// first (dataset order), then flips in generation order with fresh ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentedDataset {
    pub entries: Vec<AugEntry>,
    pub label_count: usize,
    next_id: usize,
}

impl AugmentedDataset {
    pub fn from_originals(dataset: &Dataset) -> Self {
        let entries: Vec<AugEntry> = dataset
            .examples
            .iter()
            .map(|ex| AugEntry {
                example: ex.clone(),
                provenance: Provenance::Original,
            })
            .collect();
        let next_id = entries
            .iter()
            .map(|e| e.example.id + 1)
            .max()
            .unwrap_or(0);
        AugmentedDataset {
            entries,
            label_count: dataset.label_count,
            next_id,
        }
    }

    /// Append an adversarial flip of `parent`, keeping the parent's label.
    /// Returns the id assigned to the new entry.
    pub fn push_adversarial(
        &mut self,
        parent: &Example,
        adv_tokens: Vec<String>,
        attacker: AttackKind,
        epoch: Option<usize>,
    ) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        self.entries.push(AugEntry {
            example: Example {
                id,
                tokens: adv_tokens,
                label: parent.label,
            },
            provenance: Provenance::Adversarial {
                parent: parent.id,
                attacker,
                epoch,
            },
        });
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn original_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.provenance == Provenance::Original)
            .count()
    }

    pub fn adversarial_count(&self) -> usize {
        self.len() - self.original_count()
    }

    pub fn examples(&self) -> impl Iterator<Item = &Example> {
        self.entries.iter().map(|e| &e.example)
    }

    /// Structural checks: labels in range, tokens non-empty, every
    /// adversarial entry has a present parent original with the same label.
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Validation(
                "augmented dataset has no entries".to_string(),
            ));
        }
        let originals: HashMap<usize, usize> = self
            .entries
            .iter()
            .filter(|e| e.provenance == Provenance::Original)
            .map(|e| (e.example.id, e.example.label))
            .collect();
        for entry in &self.entries {
            let ex = &entry.example;
            if ex.tokens.is_empty() {
                return Err(Error::Validation(format!("entry {} has no tokens", ex.id)));
            }
            if ex.label >= self.label_count {
                return Err(Error::Validation(format!(
                    "entry {} label {} out of range (label_count {})",
                    ex.id, ex.label, self.label_count
                )));
            }
            if let Provenance::Adversarial { parent, .. } = &entry.provenance {
                match originals.get(parent) {
                    None => {
                        return Err(Error::Validation(format!(
                            "adversarial entry {} references missing parent {parent}",
                            ex.id
                        )));
                    }
                    Some(&label) if label != ex.label => {
                        return Err(Error::Validation(format!(
                            "adversarial entry {} label {} differs from parent {parent} label {label}",
                            ex.id, ex.label
                        )));
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

pub const AUGMENTED_SCHEMA: &str = "augmented_dataset";
pub const AUGMENTED_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RawAugEntry {
    id: usize,
    text: String,
    label: usize,
    provenance: Provenance,
}

pub fn save_augmented(path: &Path, aug: &AugmentedDataset, meta: &ArtifactMeta) -> Result<()> {
    let rows: Vec<RawAugEntry> = aug
        .entries
        .iter()
        .map(|e| RawAugEntry {
            id: e.example.id,
            text: e.example.tokens.join(" "),
            label: e.example.label,
            provenance: e.provenance.clone(),
        })
        .collect();
    let extra = [("label_count", Value::from(aug.label_count as u64))];
    write_jsonl(path, AUGMENTED_SCHEMA, AUGMENTED_VERSION, meta, &extra, &rows)
}

pub fn load_augmented(path: &Path) -> Result<(ArtifactHeader, AugmentedDataset)> {
    let (header, rows): (_, Vec<RawAugEntry>) =
        read_jsonl(path, AUGMENTED_SCHEMA, AUGMENTED_VERSION)?;
    let label_count = header
        .extra
        .get("label_count")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Schema("header missing label_count".to_string()))?
        as usize;
    let entries: Vec<AugEntry> = rows
        .into_iter()
        .map(|r| AugEntry {
            example: Example {
                id: r.id,
                tokens: r.text.split_whitespace().map(str::to_string).collect(),
                label: r.label,
            },
            provenance: r.provenance,
        })
        .collect();
    let next_id = entries
        .iter()
        .map(|e| e.example.id + 1)
        .max()
        .unwrap_or(0);
    let aug = AugmentedDataset {
        entries,
        label_count,
        next_id,
    };
    aug.validate()?;
    Ok((header, aug))
}

/// When the adversarial half is regenerated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaSchedule {
    /// Attack a fully trained model once, train on the fixed union.
    OneShot,
    /// Re-attack the current model at the start of every epoch.
    Iterative,
}

/// Adversarial-augmentation settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaConfig {
    /// Fraction of the training set sampled for attack, in (0, 1].
    pub ratio: f64,
    /// Attackers run against every sampled example; each flip becomes an
    /// entry, so one example can contribute several.
    pub attackers: Vec<AttackKind>,
    pub schedule: AdaSchedule,
}

impl AdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Config(format!(
                "ada.ratio must be in (0, 1], got {}",
                self.ratio
            )));
        }
        if self.attackers.is_empty() {
            return Err(Error::Config(
                "ada.attackers must name at least one attacker".to_string(),
            ));
        }
        Ok(())
    }
}

/// SGD settings shared by every regime.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Master seed; parameter init, per-epoch shuffles, pair draws and
    /// adversarial sampling all derive named streams from it.
    pub seed: u64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config(
                "train.batch_size must be at least 1".to_string(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "train.learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Counts from one adversarial-generation pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaSummary {
    /// Originals sampled for attack.
    pub sampled: usize,
    /// Attacks run (sampled x attackers).
    pub attacks: usize,
    /// Genuine flips added to the augmented set.
    pub added: usize,
    /// Attacks that did not produce a usable flip.
    pub failed: usize,
    /// Attacks that errored out (counted, skipped, never fabricated).
    pub errors: usize,
}

/// Sample `ceil(ratio * n)` originals without replacement, attack each with
/// every configured attacker, and union the genuine flips (success with at
/// least one substitution) into the training set with provenance tags.
pub fn generate_ada<F: Scalar, R: Rng + ?Sized>(
    victim: &dyn Predictor<F>,
    train: &Dataset,
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    attack_config: &AttackConfig,
    ada_config: &AdaConfig,
    rng: &mut R,
) -> Result<(AugmentedDataset, AdaSummary)> {
    generate_ada_tagged(
        victim,
        train,
        lexicon,
        embeddings,
        attack_config,
        ada_config,
        rng,
        None,
    )
}

#[allow(clippy::too_many_arguments)]
fn generate_ada_tagged<F: Scalar, R: Rng + ?Sized>(
    victim: &dyn Predictor<F>,
    train: &Dataset,
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    attack_config: &AttackConfig,
    ada_config: &AdaConfig,
    rng: &mut R,
    epoch: Option<usize>,
) -> Result<(AugmentedDataset, AdaSummary)> {
    attack_config.validate()?;
    ada_config.validate()?;
    let n = train.examples.len();
    if n == 0 {
        return Err(Error::Validation("cannot augment an empty dataset".to_string()));
    }
    let sample_count = ((ada_config.ratio * n as f64).ceil() as usize).clamp(1, n);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    indices.truncate(sample_count);

    // One task per (sampled example, attacker); attackers are deterministic,
    // so parallel execution preserves the result stream exactly.
    let tasks: Vec<(usize, AttackKind)> = indices
        .iter()
        .flat_map(|&idx| ada_config.attackers.iter().map(move |&kind| (idx, kind)))
        .collect();
    let outcomes: Vec<_> = tasks
        .par_iter()
        .map(|&(idx, kind)| {
            let config = AttackConfig {
                kind,
                ..attack_config.clone()
            };
            attack_example(victim, &train.examples[idx], lexicon, embeddings, &config)
        })
        .collect();

    let mut aug = AugmentedDataset::from_originals(train);
    let mut summary = AdaSummary {
        sampled: sample_count,
        ..AdaSummary::default()
    };
    for (&(idx, kind), outcome) in tasks.iter().zip(outcomes) {
        summary.attacks += 1;
        match outcome {
            Ok(record) if record.success && !record.subs.is_empty() => {
                aug.push_adversarial(&train.examples[idx], record.adv_tokens, kind, epoch);
                summary.added += 1;
            }
            Ok(_) => summary.failed += 1,
            Err(e) => {
                log::warn!("attack on example {} failed: {e}", train.examples[idx].id);
                summary.errors += 1;
            }
        }
    }
    Ok((aug, summary))
}

/// Outcome of a training run. `aborted` carries a diagnostic when a
/// non-finite loss stopped training; `params` is then the last epoch-start
/// snapshot rather than a half-updated state.
#[derive(Clone, Debug)]
pub struct TrainRun<F: Scalar> {
    pub params: ModelParams<F>,
    pub epoch_losses: Vec<LossReport<F>>,
    pub aborted: Option<String>,
}

/// One epoch: a cross-entropy pass over the shuffled entries, then a KL
/// pass over freshly drawn virtual pairs. With `pairs_per_epoch == 0` the
/// second pass vanishes and consumes no randomness at all.
fn run_epoch<F: Scalar>(
    params: &mut ModelParams<F>,
    encoded: &[crate::corpus::EncodedExample],
    label_count: usize,
    mixup: &MixupConfig,
    train: &TrainingConfig,
    epoch: usize,
) -> Result<LossReport<F>> {
    let lr = F::from_f64_cfg(train.learning_rate);
    let mut ce_sum = F::zero();
    let mut kl_sum = F::zero();

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    order.shuffle(&mut rng_for(train.seed, &format!("shuffle:{epoch}")));
    for chunk in order.chunks(train.batch_size) {
        let batch = Batch::new(chunk.iter().map(|&i| BatchItem::plain(&encoded[i])).collect());
        let report = train_step(params, &batch, lr)?;
        ce_sum = ce_sum + report.ce;
        kl_sum = kl_sum + report.kl;
    }

    if mixup.pairs_per_epoch > 0 {
        let mut rng = rng_for(train.seed, &format!("mixup:{epoch}"));
        let mut items = Vec::with_capacity(mixup.pairs_per_epoch);
        for _ in 0..mixup.pairs_per_epoch {
            let i = rng.random_range(0..encoded.len());
            let j = rng.random_range(0..encoded.len());
            let draw = sample_mix(mixup, &mut rng)?;
            items.push(BatchItem::virtual_pair(
                &encoded[i],
                &encoded[j],
                draw,
                mixup.mode,
                label_count,
            ));
        }
        for chunk in items.chunks(train.batch_size) {
            let batch = Batch::new(chunk.to_vec());
            let report = train_step(params, &batch, lr)?;
            ce_sum = ce_sum + report.ce;
            kl_sum = kl_sum + report.kl;
        }
    }

    Ok(LossReport {
        ce: ce_sum,
        kl: kl_sum,
        total: ce_sum + kl_sum,
    })
}

/// Train on an augmented set with the summed cross-entropy plus KL loss.
/// Covers all four regimes: plain training is `from_originals` data with
/// mixup disabled, adversarial augmentation adds flips, mixup adds virtual
/// pairs, and the combination does both.
pub fn train_amda<F: Scalar>(
    augmented: &AugmentedDataset,
    vocab: &Vocabulary,
    model_config: &ModelConfig,
    mixup: &MixupConfig,
    train: &TrainingConfig,
) -> Result<TrainRun<F>> {
    model_config.validate()?;
    mixup.validate(model_config.layers)?;
    train.validate()?;
    augmented.validate()?;

    let encoded: Vec<_> = augmented
        .examples()
        .map(|ex| vocab.encode_example(ex))
        .collect();
    let mut params: ModelParams<F> = ModelParams::init(
        model_config,
        vocab.len(),
        augmented.label_count,
        train.seed,
    )?;
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    for epoch in 0..train.epochs {
        let snapshot = params.clone();
        match run_epoch(
            &mut params,
            &encoded,
            augmented.label_count,
            mixup,
            train,
            epoch,
        ) {
            Ok(report) => epoch_losses.push(report),
            Err(Error::Training(msg)) => {
                log::error!("epoch {epoch} aborted: {msg}");
                return Ok(TrainRun {
                    params: snapshot,
                    epoch_losses,
                    aborted: Some(format!("epoch {epoch}: {msg}")),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainRun {
        params,
        epoch_losses,
        aborted: None,
    })
}

/// Plain cross-entropy training on the original examples.
pub fn train_standard<F: Scalar>(
    dataset: &Dataset,
    vocab: &Vocabulary,
    model_config: &ModelConfig,
    train: &TrainingConfig,
) -> Result<TrainRun<F>> {
    train_amda(
        &AugmentedDataset::from_originals(dataset),
        vocab,
        model_config,
        &MixupConfig::disabled(),
        train,
    )
}

/// Outcome of per-epoch regeneration: the run itself, one generation
/// summary per epoch, and the last epoch's augmented set (its adversarial
/// entries carry that epoch's tag).
#[derive(Clone, Debug)]
pub struct IterativeRun<F: Scalar> {
    pub run: TrainRun<F>,
    pub summaries: Vec<AdaSummary>,
    pub last_augmented: AugmentedDataset,
}

/// Regenerate the adversarial half against the current model at the start
/// of every epoch, then train that epoch on the fresh union.
#[allow(clippy::too_many_arguments)]
pub fn train_iterative_ada<F: Scalar>(
    dataset: &Dataset,
    vocab: &Vocabulary,
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    model_config: &ModelConfig,
    attack_config: &AttackConfig,
    ada_config: &AdaConfig,
    mixup: &MixupConfig,
    train: &TrainingConfig,
) -> Result<IterativeRun<F>> {
    model_config.validate()?;
    mixup.validate(model_config.layers)?;
    train.validate()?;

    let mut params: ModelParams<F> =
        ModelParams::init(model_config, vocab.len(), dataset.label_count, train.seed)?;
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    let mut summaries = Vec::with_capacity(train.epochs);
    let mut last_augmented = AugmentedDataset::from_originals(dataset);
    for epoch in 0..train.epochs {
        let (aug, summary) = {
            let victim = ModelVictim::new(&params, vocab);
            let mut rng = rng_for(train.seed, &format!("ada-sample:{epoch}"));
            generate_ada_tagged(
                &victim,
                dataset,
                lexicon,
                embeddings,
                attack_config,
                ada_config,
                &mut rng,
                Some(epoch),
            )?
        };
        summaries.push(summary);
        let encoded: Vec<_> = aug.examples().map(|ex| vocab.encode_example(ex)).collect();
        let snapshot = params.clone();
        match run_epoch(&mut params, &encoded, aug.label_count, mixup, train, epoch) {
            Ok(report) => epoch_losses.push(report),
            Err(Error::Training(msg)) => {
                log::error!("epoch {epoch} aborted: {msg}");
                return Ok(IterativeRun {
                    run: TrainRun {
                        params: snapshot,
                        epoch_losses,
                        aborted: Some(format!("epoch {epoch}: {msg}")),
                    },
                    summaries,
                    last_augmented: aug,
                });
            }
            Err(e) => return Err(e),
        }
        last_augmented = aug;
    }
    Ok(IterativeRun {
        run: TrainRun {
            params,
            epoch_losses,
            aborted: None,
        },
        summaries,
        last_augmented,
    })
}

/// Hyper-parameter axis swept while everything else is held fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Ratio,
    Alpha,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepAxis::Ratio => write!(f, "ratio"),
            SweepAxis::Alpha => write!(f, "alpha"),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub clean_accuracy: f64,
    pub after_attack_accuracy: f64,
    pub avg_modification_rate: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Values whose run failed, with the error; the sweep continues past
    /// them.
    pub failures: Vec<(f64, String)>,
}

/// Train one model per value of the swept axis and score each under the
/// regenerate-per-model evaluation. The plain victim used for adversarial
/// generation is trained once and shared, since no swept value affects it.
#[allow(clippy::too_many_arguments)]
pub fn sweep<F: Scalar>(
    train_set: &Dataset,
    test_set: &Dataset,
    vocab: &Vocabulary,
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    axis: SweepAxis,
    values: &[f64],
    model_config: &ModelConfig,
    attack_config: &AttackConfig,
    ada_config: &AdaConfig,
    mixup: &MixupConfig,
    train: &TrainingConfig,
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::Validation("sweep needs at least one value".to_string()));
    }
    let victim_run: TrainRun<F> = train_standard(train_set, vocab, model_config, train)?;

    let mut report = SweepReport::default();
    for &value in values {
        let mut ada = ada_config.clone();
        let mut mix = mixup.clone();
        match axis {
            SweepAxis::Ratio => ada.ratio = value,
            SweepAxis::Alpha => mix.alpha = value,
        }
        let outcome = (|| -> Result<SweepRow> {
            let victim = ModelVictim::new(&victim_run.params, vocab);
            let mut rng = rng_for(train.seed, "ada-sample");
            let (aug, _) = generate_ada(
                &victim,
                train_set,
                lexicon,
                embeddings,
                attack_config,
                &ada,
                &mut rng,
            )?;
            let run: TrainRun<F> = train_amda(&aug, vocab, model_config, &mix, train)?;
            if let Some(msg) = &run.aborted {
                return Err(Error::Training(msg.clone()));
            }
            let model = ModelVictim::new(&run.params, vocab);
            let eval = evaluate_tae(
                &model,
                test_set,
                lexicon,
                embeddings,
                attack_config,
                train.seed,
                "sweep",
            )?;
            Ok(SweepRow {
                value,
                clean_accuracy: eval.clean_accuracy,
                after_attack_accuracy: eval.after_attack_accuracy,
                avg_modification_rate: eval.avg_modification_rate,
            })
        })();
        match outcome {
            Ok(row) => report.rows.push(row),
            Err(e) => {
                log::warn!("sweep value {value} failed: {e}");
                report.failures.push((value, e.to_string()));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::test_victims::{example, LinearVictim};
    use crate::attack::AttackKind;
    use crate::corpus::Split;
    use crate::mixup::MixMode;
    use tempfile::tempdir;

    fn toy_dataset() -> Dataset {
        Dataset {
            split: Split::Train,
            examples: vec![
                example(0, &["good", "film"], 1),
                example(1, &["bad", "film"], 0),
                example(2, &["good", "plot"], 1),
                example(3, &["bad", "plot"], 0),
            ],
            label_count: 2,
        }
    }

    fn toy_lexicon() -> SynonymLexicon {
        SynonymLexicon::from_pairs(vec![("good", vec!["fine"]), ("bad", vec!["poor"])])
    }

    fn ada_config() -> AdaConfig {
        AdaConfig {
            ratio: 1.0,
            attackers: vec![AttackKind::Pwws],
            schedule: AdaSchedule::OneShot,
        }
    }

    fn attack_config() -> AttackConfig {
        AttackConfig {
            kind: AttackKind::Pwws,
            sim_threshold: -1.0,
            top_k: 4,
            max_modify_fraction: 1.0,
            query_budget: 10_000,
            search_space_cap: 1_000_000,
        }
    }

    fn train_config(seed: u64) -> TrainingConfig {
        TrainingConfig {
            epochs: 3,
            batch_size: 2,
            learning_rate: 0.1,
            seed,
        }
    }

    #[test]
    fn from_originals_keeps_order_and_labels() {
        let aug = AugmentedDataset::from_originals(&toy_dataset());
        assert_eq!(aug.len(), 4);
        assert_eq!(aug.adversarial_count(), 0);
        assert!(aug.validate().is_ok());
        assert_eq!(aug.entries[2].example.tokens, ["good", "plot"]);
    }

    #[test]
    fn push_adversarial_assigns_fresh_ids_and_validates() {
        let ds = toy_dataset();
        let mut aug = AugmentedDataset::from_originals(&ds);
        let id = aug.push_adversarial(
            &ds.examples[0],
            vec!["fine".to_string(), "film".to_string()],
            AttackKind::Pwws,
            None,
        );
        assert_eq!(id, 4);
        assert_eq!(aug.adversarial_count(), 1);
        assert!(aug.validate().is_ok());
    }

    #[test]
    fn validate_rejects_missing_parent_and_label_mismatch() {
        let ds = toy_dataset();
        let mut aug = AugmentedDataset::from_originals(&ds);
        aug.entries.push(AugEntry {
            example: Example {
                id: 9,
                tokens: vec!["x".to_string()],
                label: 1,
            },
            provenance: Provenance::Adversarial {
                parent: 77,
                attacker: AttackKind::Pwws,
                epoch: None,
            },
        });
        assert!(matches!(aug.validate(), Err(Error::Validation(_))));

        let mut aug = AugmentedDataset::from_originals(&ds);
        aug.entries.push(AugEntry {
            example: Example {
                id: 9,
                tokens: vec!["x".to_string()],
                label: 0,
            },
            provenance: Provenance::Adversarial {
                parent: 0,
                attacker: AttackKind::Pwws,
                epoch: None,
            },
        });
        assert!(matches!(aug.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn augmented_round_trip_preserves_everything() {
        let ds = toy_dataset();
        let mut aug = AugmentedDataset::from_originals(&ds);
        aug.push_adversarial(
            &ds.examples[1],
            vec!["poor".to_string(), "film".to_string()],
            AttackKind::Textfooler,
            Some(2),
        );
        let dir = tempdir().unwrap();
        let path = dir.path().join("augmented.jsonl");
        let meta = ArtifactMeta {
            config_hash: "abc".to_string(),
            seed: 7,
        };
        save_augmented(&path, &aug, &meta).unwrap();
        let (header, loaded) = load_augmented(&path).unwrap();
        assert_eq!(header.meta.seed, 7);
        assert_eq!(loaded, aug);
    }

    #[test]
    fn generate_ada_adds_only_genuine_flips() {
        // The victim weighs each polarity word opposite to its substitute,
        // so every lexicon substitution flips the sign and every sampled
        // example yields exactly one adversarial entry per attacker.
        let victim = LinearVictim::new(
            vec![("good", 1.0), ("fine", -1.0), ("bad", -1.0), ("poor", 1.0)],
            0.0,
        );
        let ds = toy_dataset();
        let lex = toy_lexicon();
        let emb = EmbeddingTable::empty();
        let mut rng = rng_for(5, "ada-sample");
        let (aug, summary) = generate_ada(
            &victim,
            &ds,
            &lex,
            &emb,
            &attack_config(),
            &ada_config(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(summary.sampled, 4);
        assert_eq!(summary.attacks, 4);
        assert_eq!(summary.added, 4);
        assert_eq!(summary.errors, 0);
        assert_eq!(aug.len(), 8);
        assert_eq!(aug.adversarial_count(), 4);
        aug.validate().unwrap();
        // Flip of example 0 keeps label 1 with the substituted token.
        let flip = aug
            .entries
            .iter()
            .find(|e| {
                matches!(
                    e.provenance,
                    Provenance::Adversarial { parent: 0, .. }
                )
            })
            .unwrap();
        assert_eq!(flip.example.label, 1);
        assert_eq!(flip.example.tokens, ["fine", "film"]);
    }

    #[test]
    fn generate_ada_with_hopeless_victim_adds_nothing() {
        // Synonym pairs carry identical weights, so no substitution can move
        // the score and no flip is ever found.
        let victim = LinearVictim::new(
            vec![("good", 1.0), ("fine", 1.0), ("bad", -1.0), ("poor", -1.0), ("film", 0.0)],
            0.0,
        );
        let ds = toy_dataset();
        let lex = SynonymLexicon::from_pairs(vec![("film", vec!["movie"])]);
        let emb = EmbeddingTable::empty();
        let mut rng = rng_for(5, "ada-sample");
        let (aug, summary) = generate_ada(
            &victim,
            &ds,
            &lex,
            &emb,
            &attack_config(),
            &ada_config(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(summary.added, 0);
        assert_eq!(aug.len(), ds.examples.len());
        assert_eq!(aug.adversarial_count(), 0);
    }

    #[test]
    fn generate_ada_ceil_samples_at_least_one() {
        let victim = LinearVictim::new(vec![("good", 1.0)], 0.0);
        let ds = Dataset {
            split: Split::Train,
            examples: vec![example(0, &["good"], 1), example(1, &["bad"], 0)],
            label_count: 2,
        };
        let lex = SynonymLexicon::new();
        let emb = EmbeddingTable::empty();
        let cfg = AdaConfig {
            ratio: 0.01,
            ..ada_config()
        };
        let mut rng = rng_for(5, "ada-sample");
        let (_, summary) =
            generate_ada(&victim, &ds, &lex, &emb, &attack_config(), &cfg, &mut rng).unwrap();
        assert_eq!(summary.sampled, 1);
    }

    fn fit_vocab(ds: &Dataset, lex: &SynonymLexicon) -> Vocabulary {
        Vocabulary::from_sources(ds, lex)
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let ds = toy_dataset();
        let vocab = fit_vocab(&ds, &toy_lexicon());
        let mc = ModelConfig { dim: 4, layers: 2 };
        let mix = MixupConfig {
            alpha: 1.0,
            mode: MixMode::Tmix,
            layers: vec![1, 2],
            pairs_per_epoch: 3,
        };
        let aug = AugmentedDataset::from_originals(&ds);
        let a: TrainRun<f64> =
            train_amda(&aug, &vocab, &mc, &mix, &train_config(11)).unwrap();
        let b: TrainRun<f64> =
            train_amda(&aug, &vocab, &mc, &mix, &train_config(11)).unwrap();
        assert!(a.params.bits_eq(&b.params));
        assert_eq!(a.epoch_losses.len(), 3);
    }

    #[test]
    fn zero_pairs_matches_plain_training_bitwise() {
        let ds = toy_dataset();
        let vocab = fit_vocab(&ds, &toy_lexicon());
        let mc = ModelConfig { dim: 4, layers: 2 };
        let zero_pairs = MixupConfig {
            alpha: 1.0,
            mode: MixMode::Smix,
            layers: vec![2],
            pairs_per_epoch: 0,
        };
        let aug = AugmentedDataset::from_originals(&ds);
        let amda: TrainRun<f64> =
            train_amda(&aug, &vocab, &mc, &zero_pairs, &train_config(11)).unwrap();
        let plain: TrainRun<f64> =
            train_standard(&ds, &vocab, &mc, &train_config(11)).unwrap();
        assert!(amda.params.bits_eq(&plain.params));
    }

    #[test]
    fn epoch_loss_decreases_on_separable_data() {
        let ds = toy_dataset();
        let vocab = fit_vocab(&ds, &toy_lexicon());
        let mc = ModelConfig { dim: 4, layers: 2 };
        let cfg = TrainingConfig {
            epochs: 8,
            batch_size: 4,
            learning_rate: 0.2,
            seed: 3,
        };
        let run: TrainRun<f64> = train_standard(&ds, &vocab, &mc, &cfg).unwrap();
        assert!(run.aborted.is_none());
        let first = run.epoch_losses.first().unwrap().total;
        let last = run.epoch_losses.last().unwrap().total;
        assert!(last < first, "loss failed to decrease: {first} -> {last}");
    }

    #[test]
    fn iterative_ada_tags_epochs_and_completes() {
        let ds = toy_dataset();
        let lex = toy_lexicon();
        let vocab = fit_vocab(&ds, &lex);
        let emb = EmbeddingTable::empty();
        let mc = ModelConfig { dim: 4, layers: 2 };
        let cfg = TrainingConfig {
            epochs: 2,
            batch_size: 2,
            learning_rate: 0.1,
            seed: 9,
        };
        let run: IterativeRun<f64> = train_iterative_ada(
            &ds,
            &vocab,
            &lex,
            &emb,
            &mc,
            &attack_config(),
            &AdaConfig {
                schedule: AdaSchedule::Iterative,
                ..ada_config()
            },
            &MixupConfig::disabled(),
            &cfg,
        )
        .unwrap();
        assert!(run.run.aborted.is_none());
        assert_eq!(run.summaries.len(), 2);
        for entry in &run.last_augmented.entries {
            if let Provenance::Adversarial { epoch, .. } = entry.provenance {
                assert_eq!(epoch, Some(1));
            }
        }
        let again: IterativeRun<f64> = train_iterative_ada(
            &ds,
            &vocab,
            &lex,
            &emb,
            &mc,
            &attack_config(),
            &AdaConfig {
                schedule: AdaSchedule::Iterative,
                ..ada_config()
            },
            &MixupConfig::disabled(),
            &cfg,
        )
        .unwrap();
        assert!(run.run.params.bits_eq(&again.run.params));
    }

    #[test]
    fn sweep_reports_one_row_per_value() {
        let ds = toy_dataset();
        let lex = toy_lexicon();
        let vocab = fit_vocab(&ds, &lex);
        let emb = EmbeddingTable::empty();
        let mc = ModelConfig { dim: 4, layers: 2 };
        let report = sweep::<f64>(
            &ds,
            &ds,
            &vocab,
            &lex,
            &emb,
            SweepAxis::Ratio,
            &[0.25, 1.0],
            &mc,
            &attack_config(),
            &ada_config(),
            &MixupConfig::disabled(),
            &train_config(11),
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.failures.is_empty());
        assert_eq!(report.rows[0].value, 0.25);
        for row in &report.rows {
            assert!(row.after_attack_accuracy <= row.clean_accuracy);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(AdaConfig {
            ratio: 0.0,
            ..ada_config()
        }
        .validate()
        .is_err());
        assert!(AdaConfig {
            ratio: 1.5,
            ..ada_config()
        }
        .validate()
        .is_err());
        assert!(AdaConfig {
            attackers: vec![],
            ..ada_config()
        }
        .validate()
        .is_err());
        assert!(TrainingConfig {
            epochs: 0,
            ..train_config(1)
        }
        .validate()
        .is_err());
        assert!(TrainingConfig {
            learning_rate: f64::NAN,
            ..train_config(1)
        }
        .validate()
        .is_err());
    }
}
