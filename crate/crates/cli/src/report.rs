//! Pure aggregation: collect the JSON reports and sweep curves already in
//! the output directory into one markdown summary and a combined CSV.
//! Nothing here queries a model.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};

use crate::pipeline::{
    report_markdown_header, report_markdown_row, ReportArtifact, SeedExperimentArtifact,
    Workspace, REPORT_SCHEMA, SEED_EXPERIMENT_FILE, SEED_EXPERIMENT_SCHEMA,
};

/// Everything `report` found on disk, in deterministic filename order.
struct Collected {
    reports: Vec<(String, ReportArtifact)>,
    seed_experiment: Option<SeedExperimentArtifact>,
    sweeps: Vec<(String, String)>,
}

fn collect(ws: &Workspace) -> Result<Collected> {
    let dir = &ws.config.paths.out_dir;
    let mut reports = Vec::new();
    let mut sweeps = Vec::new();
    let mut seed_experiment = None;

    let entries = match fs::read_dir(dir) {
        Ok(iter) => iter,
        Err(_) => bail!("no reports found in {}", dir.display()),
    };
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();

    for name in names {
        let path = dir.join(&name);
        if name.starts_with("report_") && name.ends_with(".json") {
            let raw = fs::read_to_string(&path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let artifact: ReportArtifact = serde_json::from_str(&raw)
                .with_context(|| format!("cannot parse {}", path.display()))?;
            if artifact.schema != REPORT_SCHEMA {
                bail!("{}: schema {:?} is not a robustness report", path.display(), artifact.schema);
            }
            reports.push((name, artifact));
        } else if name == SEED_EXPERIMENT_FILE {
            let raw = fs::read_to_string(&path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let artifact: SeedExperimentArtifact = serde_json::from_str(&raw)
                .with_context(|| format!("cannot parse {}", path.display()))?;
            if artifact.schema != SEED_EXPERIMENT_SCHEMA {
                bail!("{}: schema {:?} is not a seed experiment", path.display(), artifact.schema);
            }
            seed_experiment = Some(artifact);
        } else if name.starts_with("sweep_") && name.ends_with(".csv") {
            let axis = name
                .trim_start_matches("sweep_")
                .trim_end_matches(".csv")
                .to_string();
            let body = fs::read_to_string(&path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            sweeps.push((axis, body));
        }
    }

    if reports.is_empty() && seed_experiment.is_none() && sweeps.is_empty() {
        bail!("no reports found in {}", dir.display());
    }
    Ok(Collected {
        reports,
        seed_experiment,
        sweeps,
    })
}

/// Assemble `report.md` (and `sweep_curves.csv` when sweeps exist) from
/// previously written artifacts.
pub fn run_report(ws: &Workspace, written: &mut Vec<PathBuf>) -> Result<()> {
    let collected = collect(ws)?;
    let mut md = String::from("# Robustness report\n");

    if !collected.reports.is_empty() {
        md.push_str("\n## Attack evaluations\n\n");
        md.push_str(&report_markdown_header());
        let mut rows: Vec<_> = collected.reports.iter().map(|(_, a)| &a.report).collect();
        rows.sort_by(|a, b| {
            (a.model.as_str(), a.mode.to_string(), a.attacker.to_string()).cmp(&(
                b.model.as_str(),
                b.mode.to_string(),
                b.attacker.to_string(),
            ))
        });
        for report in rows {
            md.push_str(&report_markdown_row(report));
        }
    }

    if let Some(exp) = &collected.seed_experiment {
        md.push_str("\n## Seed sensitivity\n\n");
        md.push_str(
            "| Model | Seed | Attacker | Clean % | Fixed-set after % | Per-model after % |\n\
             |---|---|---|---|---|---|\n",
        );
        for row in &exp.experiment.rows {
            md.push_str(&format!(
                "| {} | {} | {} | {:.2} | {:.2} | {:.2} |\n",
                row.model,
                row.seed,
                row.attacker,
                row.clean_accuracy,
                row.sae_after_attack,
                row.tae_after_attack,
            ));
        }
    }

    let mut curves = String::from("axis,value,clean_accuracy,after_attack_accuracy,avg_modification_rate\n");
    let mut have_curves = false;
    for (axis, body) in &collected.sweeps {
        md.push_str(&format!("\n## Sweep over {axis}\n\n"));
        md.push_str(&format!("| {axis} | Clean % | After-attack % | Avg. mod rate % |\n|---|---|---|---|\n"));
        for line in body.lines().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                bail!("sweep_{axis}.csv: malformed row {line:?}");
            }
            let pct = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .with_context(|| format!("sweep_{axis}.csv: bad number {s:?}"))
            };
            md.push_str(&format!(
                "| {} | {:.2} | {:.2} | {:.2} |\n",
                fields[0],
                pct(fields[1])?,
                pct(fields[2])?,
                100.0 * pct(fields[3])?,
            ));
            curves.push_str(&format!("{axis},{line}\n"));
            have_curves = true;
        }
    }

    let md_path = ws.config.paths.out_dir.join("report.md");
    fs::write(&md_path, md).with_context(|| format!("cannot write {}", md_path.display()))?;
    println!("aggregated {} reports into {}", collected.reports.len(), md_path.display());
    written.push(md_path);

    if have_curves {
        let csv_path = ws.config.paths.out_dir.join("sweep_curves.csv");
        fs::write(&csv_path, curves)
            .with_context(|| format!("cannot write {}", csv_path.display()))?;
        written.push(csv_path);
    }
    Ok(())
}
