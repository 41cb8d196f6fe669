//! Subcommand implementations: each loads what it needs, runs the library,
//! and writes versioned artifacts into the output directory. Artifact
//! content depends only on (config, seed), never on where the run happens.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use amda_core::artifacts::ArtifactMeta;
use amda_core::attack::{attack_dataset, save_attack_records, AttackConfig, AttackKind, ModelVictim};
use amda_core::augment::{
    generate_ada, save_augmented, sweep, train_amda, train_iterative_ada, train_standard,
    AdaSchedule, SweepAxis, SweepReport, TrainRun,
};
use amda_core::corpus::{
    load_dataset, load_embeddings, load_lexicon, Dataset, DatasetFormat, EmbeddingTable, Split,
    SynonymLexicon, Vocabulary,
};
use amda_core::eval::{
    build_sae_set, evaluate_sae, evaluate_tae, load_sae_set, save_sae_set,
    seed_sensitivity_experiment, RobustnessReport, SeedExperiment,
};
use amda_core::model::{load_checkpoint, save_checkpoint, Checkpoint};
use amda_core::seeds::derive_seed;

use crate::config::ExperimentConfig;

/// Checkpoint filenames for the two models a run can produce.
pub const STANDARD_CKPT: &str = "standard.ckpt.json";
pub const AMDA_CKPT: &str = "amda.ckpt.json";
pub const AUGMENTED_FILE: &str = "augmented.jsonl";

/// Which trained model a subcommand should score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelChoice {
    Standard,
    Amda,
}

impl ModelChoice {
    pub fn label(self) -> &'static str {
        match self {
            ModelChoice::Standard => "standard",
            ModelChoice::Amda => "amda",
        }
    }

    pub fn checkpoint_file(self) -> &'static str {
        match self {
            ModelChoice::Standard => STANDARD_CKPT,
            ModelChoice::Amda => AMDA_CKPT,
        }
    }
}

/// Everything loaded from the configured input paths, shared across
/// subcommands. The vocabulary is rebuilt from train + lexicon, so two
/// runs over the same inputs always agree on token ids.
pub struct Workspace {
    pub config: ExperimentConfig,
    pub hash: String,
    pub train_set: Dataset,
    pub dev_set: Dataset,
    pub test_set: Dataset,
    pub lexicon: SynonymLexicon,
    pub embeddings: EmbeddingTable,
    pub vocab: Vocabulary,
}

impl Workspace {
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        let hash = config.hash();
        let train_set = load_dataset(&config.paths.train, DatasetFormat::Jsonl, Split::Train)
            .context("paths.train")?;
        let dev_set = load_dataset(&config.paths.dev, DatasetFormat::Jsonl, Split::Dev)
            .context("paths.dev")?;
        let test_set = load_dataset(&config.paths.test, DatasetFormat::Jsonl, Split::Test)
            .context("paths.test")?;
        for (field, split) in [("paths.dev", &dev_set), ("paths.test", &test_set)] {
            if split.label_count > train_set.label_count {
                bail!(
                    "{field}: {} classes, but the training split has only {}",
                    split.label_count,
                    train_set.label_count
                );
            }
        }
        let lexicon = load_lexicon(&config.paths.lexicon).context("paths.lexicon")?;
        let embeddings = load_embeddings(&config.paths.embeddings).context("paths.embeddings")?;
        let vocab = Vocabulary::from_sources(&train_set, &lexicon);
        Ok(Self {
            config,
            hash,
            train_set,
            dev_set,
            test_set,
            lexicon,
            embeddings,
            vocab,
        })
    }

    pub fn meta(&self) -> ArtifactMeta {
        ArtifactMeta {
            config_hash: self.hash.clone(),
            seed: self.config.seed,
        }
    }

    fn out_path(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.config.paths.out_dir).with_context(|| {
            format!("cannot create {}", self.config.paths.out_dir.display())
        })?;
        Ok(self.config.paths.out_dir.join(name))
    }

    fn load_model(&self, which: ModelChoice) -> Result<(Checkpoint<f64>, Vocabulary)> {
        let path = self.config.paths.out_dir.join(which.checkpoint_file());
        if !path.is_file() {
            bail!(
                "missing checkpoint {}; run `amda {}` first",
                path.display(),
                match which {
                    ModelChoice::Standard => "train",
                    ModelChoice::Amda => "train-amda",
                }
            );
        }
        let ckpt = load_checkpoint::<f64>(&path)
            .map_err(|e| anyhow!("{}: {e}", path.display()))?;
        let vocab = ckpt.vocabulary().map_err(|e| anyhow!("{}: {e}", path.display()))?;
        Ok((ckpt, vocab))
    }

    fn finished_run(&self, run: TrainRun<f64>, what: &str) -> Result<TrainRun<f64>> {
        if let Some(reason) = &run.aborted {
            bail!("{what} aborted, no checkpoint written: {reason}");
        }
        if let (Some(first), Some(last)) = (run.epoch_losses.first(), run.epoch_losses.last()) {
            log::info!(
                "{what}: epoch loss {:.4} -> {:.4} over {} epochs",
                first.total,
                last.total,
                run.epoch_losses.len()
            );
        }
        Ok(run)
    }
}

/// Train the plain classifier and save `standard.ckpt.json`.
pub fn run_train(ws: &Workspace, written: &mut Vec<PathBuf>) -> Result<()> {
    let run = train_standard::<f64>(
        &ws.train_set,
        &ws.vocab,
        &ws.config.model,
        &ws.config.training_config(),
    )?;
    let run = ws.finished_run(run, "training")?;
    let ckpt = Checkpoint::new(run.params, &ws.vocab, ws.hash.clone(), ws.config.seed);
    let victim = ModelVictim::new(&ckpt.params, &ws.vocab);
    println!(
        "standard model: clean accuracy train {:.2} dev {:.2} test {:.2}",
        amda_core::eval::accuracy(&victim, &ws.train_set)?,
        amda_core::eval::accuracy(&victim, &ws.dev_set)?,
        amda_core::eval::accuracy(&victim, &ws.test_set)?,
    );
    let path = ws.out_path(STANDARD_CKPT)?;
    save_checkpoint(&ckpt, &path)?;
    written.push(path);
    Ok(())
}

/// Attack the test split with the configured attacker against a trained
/// model and save the records.
pub fn run_attack(ws: &Workspace, which: ModelChoice, written: &mut Vec<PathBuf>) -> Result<()> {
    let (ckpt, vocab) = ws.load_model(which)?;
    let victim = ModelVictim::new(&ckpt.params, &vocab);
    let run = attack_dataset(
        &victim,
        &ws.test_set,
        &ws.lexicon,
        &ws.embeddings,
        &ws.config.attack,
    );
    for (id, msg) in &run.errors {
        log::warn!("attack on example {id} errored: {msg}");
    }
    println!(
        "{} of {} test examples flipped by {} against the {} model",
        run.successes(),
        ws.test_set.examples.len(),
        ws.config.attack.kind,
        which.label(),
    );
    let name = format!("attack_{}_{}_test.jsonl", ws.config.attack.kind, which.label());
    let path = ws.out_path(&name)?;
    save_attack_records(&path, &run.records, ws.config.attack.kind, &ws.meta())?;
    written.push(path);
    Ok(())
}

/// One-shot adversarial generation against the standard model; writes the
/// augmented training set.
pub fn run_augment(ws: &Workspace, written: &mut Vec<PathBuf>) -> Result<()> {
    let (ckpt, vocab) = ws.load_model(ModelChoice::Standard)?;
    let victim = ModelVictim::new(&ckpt.params, &vocab);
    let mut rng = amda_core::seeds::rng_for(ws.config.seed, "ada-sample");
    let (augmented, summary) = generate_ada(
        &victim,
        &ws.train_set,
        &ws.lexicon,
        &ws.embeddings,
        &ws.config.attack,
        &ws.config.ada,
        &mut rng,
    )?;
    println!(
        "sampled {} originals, ran {} attacks, kept {} adversarial examples ({} failed, {} errors)",
        summary.sampled, summary.attacks, summary.added, summary.failed, summary.errors
    );
    let path = ws.out_path(AUGMENTED_FILE)?;
    save_augmented(&path, &augmented, &ws.meta())?;
    written.push(path);
    Ok(())
}

/// Train on the augmented set with mixup and save `amda.ckpt.json`. The
/// one-shot schedule consumes `augmented.jsonl`; the iterative schedule
/// regenerates adversarial examples each epoch and saves the last set.
pub fn run_train_amda(ws: &Workspace, written: &mut Vec<PathBuf>) -> Result<()> {
    let train_cfg = ws.config.training_config();
    let run = match ws.config.ada.schedule {
        AdaSchedule::OneShot => {
            let path = ws.config.paths.out_dir.join(AUGMENTED_FILE);
            if !path.is_file() {
                bail!("missing {}; run `amda augment` first", path.display());
            }
            let (header, augmented) = amda_core::augment::load_augmented(&path)?;
            if header.meta.config_hash != ws.hash {
                log::warn!(
                    "{} was built from config {} but the current config is {}",
                    path.display(),
                    header.meta.config_hash,
                    ws.hash
                );
            }
            train_amda::<f64>(
                &augmented,
                &ws.vocab,
                &ws.config.model,
                &ws.config.mixup,
                &train_cfg,
            )?
        }
        AdaSchedule::Iterative => {
            let outcome = train_iterative_ada::<f64>(
                &ws.train_set,
                &ws.vocab,
                &ws.lexicon,
                &ws.embeddings,
                &ws.config.model,
                &ws.config.attack,
                &ws.config.ada,
                &ws.config.mixup,
                &train_cfg,
            )?;
            let path = ws.out_path(AUGMENTED_FILE)?;
            save_augmented(&path, &outcome.last_augmented, &ws.meta())?;
            written.push(path);
            outcome.run
        }
    };
    let run = ws.finished_run(run, "amda training")?;
    let ckpt = Checkpoint::new(run.params, &ws.vocab, ws.hash.clone(), ws.config.seed);
    let victim = ModelVictim::new(&ckpt.params, &ws.vocab);
    println!(
        "amda model: clean accuracy train {:.2} dev {:.2} test {:.2}",
        amda_core::eval::accuracy(&victim, &ws.train_set)?,
        amda_core::eval::accuracy(&victim, &ws.dev_set)?,
        amda_core::eval::accuracy(&victim, &ws.test_set)?,
    );
    let path = ws.out_path(AMDA_CKPT)?;
    save_checkpoint(&ckpt, &path)?;
    written.push(path);
    Ok(())
}

/// A robustness report plus the provenance every artifact carries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportArtifact {
    pub schema: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub report: RobustnessReport,
}

pub const REPORT_SCHEMA: &str = "robustness_report";
pub const REPORT_VERSION: u32 = 1;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value).context("serialize artifact")?;
    body.push('\n');
    fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn report_markdown_header() -> String {
    "| Model | Mode | Attacker | Clean % | After-attack % | Avg. mod rate % |\n\
     |---|---|---|---|---|---|\n"
        .to_string()
}

pub fn report_markdown_row(r: &RobustnessReport) -> String {
    format!(
        "| {} | {} | {} | {:.2} | {:.2} | {:.2} |\n",
        r.model,
        r.mode,
        r.attacker,
        r.clean_accuracy,
        r.after_attack_accuracy,
        100.0 * r.avg_modification_rate,
    )
}

fn write_report(ws: &Workspace, report: &RobustnessReport, written: &mut Vec<PathBuf>) -> Result<()> {
    println!(
        "{} {} vs {}: clean {:.2}, after-attack {:.2}, avg mod rate {:.2}%",
        report.model,
        report.mode,
        report.attacker,
        report.clean_accuracy,
        report.after_attack_accuracy,
        100.0 * report.avg_modification_rate,
    );
    let stem = format!("report_{}_{}_{}", report.mode, report.attacker, report.model);
    let artifact = ReportArtifact {
        schema: REPORT_SCHEMA.to_string(),
        version: REPORT_VERSION,
        config_hash: ws.hash.clone(),
        seed: ws.config.seed,
        report: report.clone(),
    };
    let json_path = ws.out_path(&format!("{stem}.json"))?;
    write_json(&json_path, &artifact)?;
    written.push(json_path);
    let md_path = ws.out_path(&format!("{stem}.md"))?;
    fs::write(&md_path, report_markdown_header() + &report_markdown_row(report))
        .with_context(|| format!("cannot write {}", md_path.display()))?;
    written.push(md_path);
    Ok(())
}

/// Build (or rebuild) the fixed adversarial set from the standard model,
/// then score the chosen model against it.
pub fn run_eval_sae(ws: &Workspace, which: ModelChoice, written: &mut Vec<PathBuf>) -> Result<()> {
    let (victim_ckpt, victim_vocab) = ws.load_model(ModelChoice::Standard)?;
    let victim = ModelVictim::new(&victim_ckpt.params, &victim_vocab);
    let set = build_sae_set(
        &victim,
        &victim_ckpt.fingerprint(),
        &ws.test_set,
        &ws.lexicon,
        &ws.embeddings,
        &ws.config.attack,
    )?;
    let set_path = ws.out_path(&format!("sae_set_{}.jsonl", ws.config.attack.kind))?;
    save_sae_set(&set_path, &set, &ws.meta())?;
    written.push(set_path);

    let (scored_ckpt, scored_vocab) = ws.load_model(which)?;
    let scored = ModelVictim::new(&scored_ckpt.params, &scored_vocab);
    let report = evaluate_sae(&scored, &set, &ws.test_set, ws.config.seed, which.label())?;
    write_report(ws, &report, written)
}

/// Score the chosen model under per-model attack regeneration.
pub fn run_eval_tae(ws: &Workspace, which: ModelChoice, written: &mut Vec<PathBuf>) -> Result<()> {
    let (ckpt, vocab) = ws.load_model(which)?;
    let scored = ModelVictim::new(&ckpt.params, &vocab);
    let report = evaluate_tae(
        &scored,
        &ws.test_set,
        &ws.lexicon,
        &ws.embeddings,
        &ws.config.attack,
        ws.config.seed,
        which.label(),
    )?;
    write_report(ws, &report, written)
}

/// Wrapper around the seed experiment rows, stamped like every artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedExperimentArtifact {
    pub schema: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub experiment: SeedExperiment,
}

pub const SEED_EXPERIMENT_SCHEMA: &str = "seed_experiment";
pub const SEED_EXPERIMENT_VERSION: u32 = 1;
pub const SEED_EXPERIMENT_FILE: &str = "seed_experiment.json";

/// Retrain with freshly derived seeds and compare fixed-set scores with
/// per-model attack scores, for both greedy attackers.
pub fn run_seed_exp(ws: &Workspace, reseeds: usize, written: &mut Vec<PathBuf>) -> Result<()> {
    if reseeds == 0 {
        bail!("--reseeds must be at least 1");
    }
    let mut seeds = vec![ws.config.seed];
    seeds.extend((1..=reseeds).map(|i| derive_seed(ws.config.seed, &format!("reseed:{i}"))));
    let attack_configs: Vec<AttackConfig> = [AttackKind::Pwws, AttackKind::Textfooler]
        .into_iter()
        .map(|kind| AttackConfig {
            kind,
            ..ws.config.attack.clone()
        })
        .collect();
    let experiment = seed_sensitivity_experiment::<f64>(
        &ws.train_set,
        &ws.test_set,
        &ws.vocab,
        &ws.lexicon,
        &ws.embeddings,
        &ws.config.model,
        &ws.config.training_config(),
        &seeds,
        &attack_configs,
    )?;
    let artifact = SeedExperimentArtifact {
        schema: SEED_EXPERIMENT_SCHEMA.to_string(),
        version: SEED_EXPERIMENT_VERSION,
        config_hash: ws.hash.clone(),
        seed: ws.config.seed,
        experiment: experiment.clone(),
    };
    let json_path = ws.out_path(SEED_EXPERIMENT_FILE)?;
    write_json(&json_path, &artifact)?;
    written.push(json_path);

    let mut md = String::from(
        "| Model | Seed | Attacker | Clean % | Fixed-set after % | Per-model after % |\n\
         |---|---|---|---|---|---|\n",
    );
    for row in &experiment.rows {
        md.push_str(&format!(
            "| {} | {} | {} | {:.2} | {:.2} | {:.2} |\n",
            row.model,
            row.seed,
            row.attacker,
            row.clean_accuracy,
            row.sae_after_attack,
            row.tae_after_attack,
        ));
        println!(
            "{} (seed {}) vs {}: fixed-set {:.2}, per-model {:.2}",
            row.model, row.seed, row.attacker, row.sae_after_attack, row.tae_after_attack
        );
    }
    let md_path = ws.out_path("seed_experiment.md")?;
    fs::write(&md_path, md).with_context(|| format!("cannot write {}", md_path.display()))?;
    written.push(md_path);
    Ok(())
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut csv = String::from("value,clean_accuracy,after_attack_accuracy,avg_modification_rate\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.value, row.clean_accuracy, row.after_attack_accuracy, row.avg_modification_rate
        ));
    }
    csv
}

/// Retrain and score the augmented-and-mixed model across one axis of the
/// configured value grid; emits a CSV of the curve plus a markdown summary.
pub fn run_sweep(ws: &Workspace, axis: SweepAxis, written: &mut Vec<PathBuf>) -> Result<()> {
    let values: &[f64] = match axis {
        SweepAxis::Ratio => &ws.config.sweep.ratios,
        SweepAxis::Alpha => &ws.config.sweep.alphas,
    };
    let report = sweep::<f64>(
        &ws.train_set,
        &ws.test_set,
        &ws.vocab,
        &ws.lexicon,
        &ws.embeddings,
        axis,
        values,
        &ws.config.model,
        &ws.config.attack,
        &ws.config.ada,
        &ws.config.mixup,
        &ws.config.training_config(),
    )?;
    let csv_path = ws.out_path(&format!("sweep_{axis}.csv"))?;
    fs::write(&csv_path, sweep_csv(&report))
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    written.push(csv_path);

    let mut md = format!(
        "| {axis} | Clean % | After-attack % | Avg. mod rate % |\n|---|---|---|---|\n"
    );
    for row in &report.rows {
        md.push_str(&format!(
            "| {} | {:.2} | {:.2} | {:.2} |\n",
            row.value,
            row.clean_accuracy,
            row.after_attack_accuracy,
            100.0 * row.avg_modification_rate,
        ));
        println!(
            "{axis} {}: clean {:.2}, after-attack {:.2}",
            row.value, row.clean_accuracy, row.after_attack_accuracy
        );
    }
    for (value, msg) in &report.failures {
        md.push_str(&format!("\n`{axis} = {value}` failed: {msg}\n"));
        log::warn!("sweep point {axis} = {value} failed: {msg}");
    }
    let md_path = ws.out_path(&format!("sweep_{axis}.md"))?;
    fs::write(&md_path, md).with_context(|| format!("cannot write {}", md_path.display()))?;
    written.push(md_path);
    Ok(())
}

/// Re-score a saved fixed adversarial set without rebuilding it. Used by
/// tests to prove generation and scoring are separable; the primary entry
/// points rebuild the set so artifacts stay in sync with the config.
pub fn rescore_saved_sae_set(
    ws: &Workspace,
    set_path: &Path,
    which: ModelChoice,
) -> Result<RobustnessReport> {
    let (_, set) = load_sae_set(set_path)?;
    let (ckpt, vocab) = ws.load_model(which)?;
    let scored = ModelVictim::new(&ckpt.params, &vocab);
    Ok(evaluate_sae(&scored, &set, &ws.test_set, ws.config.seed, which.label())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_choice_names_match_checkpoint_files() {
        assert_eq!(ModelChoice::Standard.label(), "standard");
        assert!(ModelChoice::Standard.checkpoint_file().contains("standard"));
        assert!(ModelChoice::Amda.checkpoint_file().contains("amda"));
    }

    #[test]
    fn markdown_row_renders_percentages() {
        let report = RobustnessReport {
            model: "standard".to_string(),
            mode: amda_core::eval::EvalMode::Tae,
            attacker: AttackKind::Pwws,
            clean_accuracy: 95.833333,
            after_attack_accuracy: 12.5,
            avg_modification_rate: 0.1842,
            queries_total: 123,
            seed: 7,
        };
        let row = report_markdown_row(&report);
        assert_eq!(row, "| standard | tae | pwws | 95.83 | 12.50 | 18.42 |\n");
    }
}
