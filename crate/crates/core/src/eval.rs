//! Robustness evaluation protocols. Static evaluation scores a model on a
//! frozen set of adversarial examples generated once against a victim;
//! targeted evaluation re-runs the attacker against the very model being
//! scored. The gap between the two is the point: a fixed set wildly
//! overstates robustness for any model other than its victim.

use crate::artifacts::{read_jsonl, write_jsonl, ArtifactHeader, ArtifactMeta};
use crate::attack::{
    attack_dataset, average_modification_rate, AttackConfig, AttackKind, ModelVictim, Predictor,
};
use crate::augment::{train_standard, TrainingConfig};
use crate::corpus::{Dataset, EmbeddingTable, SynonymLexicon, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, ModelConfig};
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashMap;
use std::path::Path;

/// Which protocol produced a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Static: score stored adversarial sequences, no attack run.
    Sae,
    /// Targeted: regenerate adversarial examples against the scored model.
    Tae,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalMode::Sae => write!(f, "sae"),
            EvalMode::Tae => write!(f, "tae"),
        }
    }
}

/// One frozen adversarial sequence. Failed and trivial attacks store the
/// original tokens, so a fixed set always lines up 1-1 with its test set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaeEntry {
    pub original_id: usize,
    pub adv_tokens: Vec<String>,
    pub gold_label: usize,
}

/// Adversarial examples generated once against a fixed victim, then reused
/// verbatim to score other models.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedAdversarialSet {
    /// Fingerprint of the victim checkpoint the set was built against.
    pub victim_checkpoint: String,
    pub attacker: AttackKind,
    /// Fingerprint of the attack config, so a set cannot be silently reused
    /// under different attacker settings.
    pub attack_fingerprint: String,
    pub entries: Vec<SaeEntry>,
}

pub const SAE_SET_SCHEMA: &str = "sae_set";
pub const SAE_SET_VERSION: u32 = 1;

pub fn save_sae_set(path: &Path, set: &FixedAdversarialSet, meta: &ArtifactMeta) -> Result<()> {
    let extra = [
        ("victim_checkpoint", Value::from(set.victim_checkpoint.clone())),
        ("attacker", Value::from(set.attacker.to_string())),
        ("attack_fingerprint", Value::from(set.attack_fingerprint.clone())),
    ];
    write_jsonl(path, SAE_SET_SCHEMA, SAE_SET_VERSION, meta, &extra, &set.entries)
}

pub fn load_sae_set(path: &Path) -> Result<(ArtifactHeader, FixedAdversarialSet)> {
    let (header, entries): (_, Vec<SaeEntry>) = read_jsonl(path, SAE_SET_SCHEMA, SAE_SET_VERSION)?;
    let set = FixedAdversarialSet {
        victim_checkpoint: header.extra_str("victim_checkpoint")?.to_string(),
        attacker: header.extra_str("attacker")?.parse()?,
        attack_fingerprint: header.extra_str("attack_fingerprint")?.to_string(),
        entries,
    };
    Ok((header, set))
}

/// Fraction of argmax-correct predictions, as a percentage.
pub fn accuracy<F: Scalar>(victim: &dyn Predictor<F>, dataset: &Dataset) -> Result<f64> {
    if dataset.examples.is_empty() {
        return Err(Error::Input("cannot score an empty dataset".to_string()));
    }
    let verdicts: Vec<Result<bool>> = dataset
        .examples
        .par_iter()
        .map(|ex| Ok(victim.predict(&ex.tokens)?.argmax() == ex.label))
        .collect();
    let mut correct = 0usize;
    for v in verdicts {
        if v? {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / dataset.examples.len() as f64)
}

/// Robustness numbers for one (model, attacker, protocol) triple.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// Caller-chosen label naming the scored model.
    pub model: String,
    pub mode: EvalMode,
    pub attacker: AttackKind,
    pub clean_accuracy: f64,
    pub after_attack_accuracy: f64,
    pub avg_modification_rate: f64,
    /// Victim queries spent producing this report; zero for the static
    /// protocol, which never attacks the scored model.
    pub queries_total: u64,
    pub seed: u64,
}

/// Attack every test example against the victim and freeze the outcome.
/// Successful attacks store the flipped sequence; everything else keeps the
/// original tokens. Attack errors are logged and fall back to the original.
pub fn build_sae_set<F: Scalar>(
    victim: &dyn Predictor<F>,
    victim_checkpoint: &str,
    test: &Dataset,
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    config: &AttackConfig,
) -> Result<FixedAdversarialSet> {
    config.validate()?;
    if test.examples.is_empty() {
        return Err(Error::Input("cannot build a fixed set from an empty dataset".to_string()));
    }
    let run = attack_dataset(victim, test, lexicon, embeddings, config);
    for (id, msg) in &run.errors {
        log::warn!("attack on example {id} failed, keeping original tokens: {msg}");
    }
    let by_id: HashMap<usize, &crate::attack::AttackRecord> =
        run.records.iter().map(|r| (r.id, r)).collect();
    let entries = test
        .examples
        .iter()
        .map(|ex| {
            let adv_tokens = match by_id.get(&ex.id) {
                Some(rec) if rec.success => rec.adv_tokens.clone(),
                _ => ex.tokens.clone(),
            };
            SaeEntry {
                original_id: ex.id,
                adv_tokens,
                gold_label: ex.label,
            }
        })
        .collect();
    Ok(FixedAdversarialSet {
        victim_checkpoint: victim_checkpoint.to_string(),
        attacker: config.kind,
        attack_fingerprint: config.fingerprint(),
        entries,
    })
}

/// Score a model on the frozen sequences. No attack runs and no queries are
/// charged; this is offline replay.
pub fn evaluate_sae<F: Scalar>(
    victim: &dyn Predictor<F>,
    set: &FixedAdversarialSet,
    test: &Dataset,
    seed: u64,
    model: &str,
) -> Result<RobustnessReport> {
    if set.entries.len() != test.examples.len() {
        return Err(Error::Schema(format!(
            "fixed set has {} entries but the test set has {} examples",
            set.entries.len(),
            test.examples.len()
        )));
    }
    for (entry, ex) in set.entries.iter().zip(&test.examples) {
        if entry.original_id != ex.id || entry.gold_label != ex.label {
            return Err(Error::Schema(format!(
                "fixed set entry {} does not match test example {}",
                entry.original_id, ex.id
            )));
        }
    }
    let clean_accuracy = accuracy(victim, test)?;
    let verdicts: Vec<Result<bool>> = set
        .entries
        .par_iter()
        .map(|e| Ok(victim.predict(&e.adv_tokens)?.argmax() == e.gold_label))
        .collect();
    let mut correct = 0usize;
    for v in verdicts {
        if v? {
            correct += 1;
        }
    }
    let after_attack_accuracy = 100.0 * correct as f64 / set.entries.len() as f64;

    // Modification rate of the stored perturbations; entries that kept the
    // original tokens (failed or trivial attacks) are excluded, matching the
    // attack module's genuine-success convention.
    let mut rates = Vec::new();
    for (entry, ex) in set.entries.iter().zip(&test.examples) {
        let changed = entry
            .adv_tokens
            .iter()
            .zip(&ex.tokens)
            .filter(|(a, o)| a != o)
            .count();
        if changed > 0 {
            rates.push(changed as f64 / ex.tokens.len() as f64);
        }
    }
    let avg_modification_rate = if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    };
    Ok(RobustnessReport {
        model: model.to_string(),
        mode: EvalMode::Sae,
        attacker: set.attacker,
        clean_accuracy,
        after_attack_accuracy,
        avg_modification_rate,
        queries_total: 0,
        seed,
    })
}

/// Attack the scored model itself and report how much survives. An example
/// counts as robust when the clean prediction was correct and the attacker
/// failed to flip it; attack errors count as failed attacks.
pub fn evaluate_tae<F: Scalar>(
    victim: &dyn Predictor<F>,
    test: &Dataset,
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    config: &AttackConfig,
    seed: u64,
    model: &str,
) -> Result<RobustnessReport> {
    config.validate()?;
    let clean_accuracy = accuracy(victim, test)?;
    let run = attack_dataset(victim, test, lexicon, embeddings, config);
    for (id, msg) in &run.errors {
        log::warn!("attack on example {id} errored, counted as a failed attack: {msg}");
    }
    let survived = run.records.iter().filter(|r| !r.success).count() + run.errors.len();
    let after_attack_accuracy = 100.0 * survived as f64 / test.examples.len() as f64;
    Ok(RobustnessReport {
        model: model.to_string(),
        mode: EvalMode::Tae,
        attacker: config.kind,
        clean_accuracy,
        after_attack_accuracy,
        avg_modification_rate: average_modification_rate(&run.records),
        queries_total: run.records.iter().map(|r| r.queries).sum(),
        seed,
    })
}

/// One line of the seed-sensitivity table: the same architecture retrained
/// with a different seed, scored both ways against the same attacker.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedExperimentRow {
    pub model: String,
    pub seed: u64,
    pub attacker: AttackKind,
    pub clean_accuracy: f64,
    pub sae_after_attack: f64,
    pub tae_after_attack: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SeedExperiment {
    pub rows: Vec<SeedExperimentRow>,
}

/// Train a victim with the first seed, freeze its adversarial examples,
/// retrain with the remaining seeds, and score every model under both
/// protocols. The victim's own static and targeted scores must agree
/// exactly; the retrained models' static scores are expected to inflate.
#[allow(clippy::too_many_arguments)]
pub fn seed_sensitivity_experiment<F: Scalar>(
    train_set: &Dataset,
    test_set: &Dataset,
    vocab: &Vocabulary,
    lexicon: &SynonymLexicon,
    embeddings: &EmbeddingTable,
    model_config: &ModelConfig,
    train: &TrainingConfig,
    seeds: &[u64],
    attack_configs: &[AttackConfig],
) -> Result<SeedExperiment> {
    if seeds.len() < 2 {
        return Err(Error::Validation(
            "seed experiment needs at least two seeds".to_string(),
        ));
    }
    if attack_configs.is_empty() {
        return Err(Error::Validation(
            "seed experiment needs at least one attacker".to_string(),
        ));
    }

    let victim_train = TrainingConfig {
        seed: seeds[0],
        ..train.clone()
    };
    let victim_run = train_standard::<F>(train_set, vocab, model_config, &victim_train)?;
    let victim_fingerprint =
        Checkpoint::new(victim_run.params.clone(), vocab, "seed-exp", seeds[0]).fingerprint();
    let victim = ModelVictim::new(&victim_run.params, vocab);
    let sets: Vec<FixedAdversarialSet> = attack_configs
        .iter()
        .map(|cfg| build_sae_set(&victim, &victim_fingerprint, test_set, lexicon, embeddings, cfg))
        .collect::<Result<_>>()?;

    let mut experiment = SeedExperiment::default();
    for (mi, &seed) in seeds.iter().enumerate() {
        let label = if mi == 0 {
            "victim".to_string()
        } else {
            format!("reseed-{mi}")
        };
        let retrained;
        let params = if mi == 0 {
            &victim_run.params
        } else {
            let cfg = TrainingConfig {
                seed,
                ..train.clone()
            };
            retrained = train_standard::<F>(train_set, vocab, model_config, &cfg)?;
            &retrained.params
        };
        let model = ModelVictim::new(params, vocab);
        for (cfg, set) in attack_configs.iter().zip(&sets) {
            let sae = evaluate_sae(&model, set, test_set, seed, &label)?;
            let tae = evaluate_tae(&model, test_set, lexicon, embeddings, cfg, seed, &label)?;
            experiment.rows.push(SeedExperimentRow {
                model: label.clone(),
                seed,
                attacker: cfg.kind,
                clean_accuracy: tae.clean_accuracy,
                sae_after_attack: sae.after_attack_accuracy,
                tae_after_attack: tae.after_attack_accuracy,
            });
        }
    }
    Ok(experiment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::test_victims::{example, ConstantVictim, LinearVictim};
    use crate::corpus::Split;
    use tempfile::tempdir;

    fn attack_config(kind: AttackKind) -> AttackConfig {
        AttackConfig {
            kind,
            sim_threshold: -1.0,
            top_k: 4,
            max_modify_fraction: 1.0,
            query_budget: 10_000,
            search_space_cap: 1_000_000,
        }
    }

    fn toy_dataset() -> Dataset {
        Dataset {
            split: Split::Test,
            examples: vec![
                example(0, &["good", "film"], 1),
                example(1, &["bad", "film"], 0),
                example(2, &["fine", "plot"], 1),
                example(3, &["poor", "plot"], 0),
            ],
            label_count: 2,
        }
    }

    fn toy_lexicon() -> SynonymLexicon {
        SynonymLexicon::from_pairs(vec![
            ("good", vec!["fine"]),
            ("bad", vec!["poor"]),
            ("fine", vec!["good"]),
            ("poor", vec!["bad"]),
        ])
    }

    fn flip_victim() -> LinearVictim {
        LinearVictim::new(
            vec![("good", 1.0), ("fine", 1.0), ("bad", -1.0), ("poor", -1.0)],
            0.0,
        )
    }

    #[test]
    fn accuracy_counts_argmax_matches() {
        // The victim says positive iff "good" appears, so it gets examples
        // 0, 1 and 3 right: 75 percent.
        let victim = LinearVictim::new(vec![("good", 2.0)], -1.0);
        let acc = accuracy(&victim, &toy_dataset()).unwrap();
        assert_eq!(acc, 75.0);
    }

    #[test]
    fn accuracy_is_permutation_invariant_and_rejects_empty() {
        let victim = flip_victim();
        let ds = toy_dataset();
        let mut reversed = ds.clone();
        reversed.examples.reverse();
        assert_eq!(
            accuracy(&victim, &ds).unwrap(),
            accuracy(&victim, &reversed).unwrap()
        );
        let empty = Dataset {
            split: Split::Test,
            examples: vec![],
            label_count: 2,
        };
        assert!(accuracy(&victim, &empty).is_err());
    }

    #[test]
    fn constant_victim_fixed_set_keeps_every_original() {
        let victim = ConstantVictim(vec![0.3, 0.7]);
        let ds = toy_dataset();
        let lex = toy_lexicon();
        let emb = EmbeddingTable::empty();
        let cfg = attack_config(AttackKind::Pwws);
        let set = build_sae_set(&victim, "ckpt", &ds, &lex, &emb, &cfg).unwrap();
        assert_eq!(set.entries.len(), 4);
        for (entry, ex) in set.entries.iter().zip(&ds.examples) {
            assert_eq!(entry.adv_tokens, ex.tokens);
            assert_eq!(entry.gold_label, ex.label);
        }
        let again = build_sae_set(&victim, "ckpt", &ds, &lex, &emb, &cfg).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn victim_static_and_targeted_scores_agree_exactly() {
        let victim = flip_victim();
        let ds = toy_dataset();
        let lex = toy_lexicon();
        let emb = EmbeddingTable::empty();
        for kind in [AttackKind::Pwws, AttackKind::Textfooler, AttackKind::Brute] {
            let cfg = attack_config(kind);
            let set = build_sae_set(&victim, "ckpt", &ds, &lex, &emb, &cfg).unwrap();
            let sae = evaluate_sae(&victim, &set, &ds, 7, "victim").unwrap();
            let tae = evaluate_tae(&victim, &ds, &lex, &emb, &cfg, 7, "victim").unwrap();
            assert_eq!(sae.after_attack_accuracy, tae.after_attack_accuracy);
            assert_eq!(sae.clean_accuracy, tae.clean_accuracy);
            assert_eq!(sae.avg_modification_rate, tae.avg_modification_rate);
            assert_eq!(sae.queries_total, 0);
            assert!(tae.queries_total > 0);
        }
    }

    #[test]
    fn constant_wrong_model_scores_zero_after_attack() {
        // Every label is 0 but the victim always says class 1: every attack
        // trivially succeeds and nothing survives.
        let victim = ConstantVictim(vec![0.2, 0.8]);
        let ds = Dataset {
            split: Split::Test,
            examples: vec![example(0, &["good"], 0), example(1, &["bad"], 0)],
            label_count: 2,
        };
        let lex = toy_lexicon();
        let emb = EmbeddingTable::empty();
        let cfg = attack_config(AttackKind::Pwws);
        let report = evaluate_tae(&victim, &ds, &lex, &emb, &cfg, 7, "m").unwrap();
        assert_eq!(report.clean_accuracy, 0.0);
        assert_eq!(report.after_attack_accuracy, 0.0);
    }

    #[test]
    fn unattackable_model_keeps_clean_accuracy() {
        let victim = flip_victim();
        let ds = toy_dataset();
        let lex = SynonymLexicon::new();
        let emb = EmbeddingTable::empty();
        let cfg = attack_config(AttackKind::Textfooler);
        let report = evaluate_tae(&victim, &ds, &lex, &emb, &cfg, 7, "m").unwrap();
        assert_eq!(report.after_attack_accuracy, report.clean_accuracy);
        assert_eq!(report.avg_modification_rate, 0.0);
    }

    #[test]
    fn after_attack_never_exceeds_clean() {
        let victim = flip_victim();
        let ds = toy_dataset();
        let lex = toy_lexicon();
        let emb = EmbeddingTable::empty();
        for kind in [AttackKind::Pwws, AttackKind::Textfooler] {
            let cfg = attack_config(kind);
            let report = evaluate_tae(&victim, &ds, &lex, &emb, &cfg, 7, "m").unwrap();
            assert!(report.after_attack_accuracy <= report.clean_accuracy);
        }
    }

    #[test]
    fn sae_set_round_trips_through_disk() {
        let victim = flip_victim();
        let ds = toy_dataset();
        let lex = toy_lexicon();
        let emb = EmbeddingTable::empty();
        let cfg = attack_config(AttackKind::Pwws);
        let set = build_sae_set(&victim, "ckpt-fp", &ds, &lex, &emb, &cfg).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("sae_set.jsonl");
        let meta = ArtifactMeta {
            config_hash: "h".to_string(),
            seed: 7,
        };
        save_sae_set(&path, &set, &meta).unwrap();
        let (header, loaded) = load_sae_set(&path).unwrap();
        assert_eq!(loaded, set);
        assert_eq!(header.extra_str("victim_checkpoint").unwrap(), "ckpt-fp");
    }

    #[test]
    fn evaluate_sae_rejects_mismatched_test_set() {
        let victim = flip_victim();
        let ds = toy_dataset();
        let lex = toy_lexicon();
        let emb = EmbeddingTable::empty();
        let cfg = attack_config(AttackKind::Pwws);
        let set = build_sae_set(&victim, "ckpt", &ds, &lex, &emb, &cfg).unwrap();
        let mut truncated = ds.clone();
        truncated.examples.pop();
        assert!(matches!(
            evaluate_sae(&victim, &set, &truncated, 7, "m"),
            Err(Error::Schema(_))
        ));
    }
}
