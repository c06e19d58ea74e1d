//! Experiment driver: attack a dataset, verify invariants, and write the
//! report files (per-image CSV, aggregate CSV/JSON, adversarial images,
//! ablation and schedule tables, step/budget sweep).
//!
//! Success-rate bookkeeping: in untargeted mode only samples the model
//! classifies correctly before the attack count toward the aggregate; in
//! targeted mode every sample counts. The per-image CSV always lists every
//! sample.

use std::fs;
use std::path::Path;

use crate::attack::{attack_batch, variant_name, AttackConfig, AttackMode, AttackOutcome};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, pair_metrics, AggregateReport, ImagePairMetrics, SampleResult};
use crate::model::Model;
use crate::netpbm::save_image;
use crate::schedule::ScheduleKind;

pub const PER_IMAGE_CSV_HEADER: &str =
    "filename,label,pred_before,pred_after,success,iterations,stopped_early,linf,l2,psnr,ssim";

#[derive(Debug, Clone, PartialEq)]
pub struct PerImageRecord {
    pub filename: String,
    pub label: usize,
    pub pred_before: usize,
    pub pred_after: usize,
    pub success: bool,
    pub iterations: usize,
    pub stopped_early: bool,
    pub metrics: ImagePairMetrics,
}

impl PerImageRecord {
    pub fn csv_row(&self) -> String {
        let psnr = if self.metrics.psnr.is_finite() {
            format!("{:.6}", self.metrics.psnr)
        } else {
            "inf".to_string()
        };
        format!(
            "{},{},{},{},{},{},{},{:.6},{:.6},{},{:.6}",
            self.filename,
            self.label,
            self.pred_before,
            self.pred_after,
            self.success,
            self.iterations,
            self.stopped_early,
            self.metrics.linf,
            self.metrics.l2,
            psnr,
            self.metrics.ssim
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedRun {
    pub records: Vec<PerImageRecord>,
    pub outcomes: Vec<AttackOutcome>,
}

/// Attack every dataset sample and assemble per-image records. Every
/// adversarial image is re-checked against the budget before anything is
/// reported; a violation is a numeric failure, not an input error.
pub fn evaluate_attack(
    model: &Model,
    dataset: &Dataset,
    config: &AttackConfig,
) -> Result<EvaluatedRun> {
    if dataset.is_empty() {
        return Err(Error::rejected("dataset has no samples"));
    }
    let outcomes = attack_batch(model, &dataset.batch, config)?;
    let mut records = Vec::with_capacity(outcomes.len());
    for (i, (image, label)) in dataset.batch.iter().enumerate() {
        let outcome = &outcomes[i];
        if outcome.x_adv.linf_distance(image) > config.epsilon {
            return Err(Error::Numeric(format!(
                "budget violated on {}: moved {} with epsilon {}",
                dataset.filenames[i],
                outcome.x_adv.linf_distance(image),
                config.epsilon
            )));
        }
        records.push(PerImageRecord {
            filename: dataset.filenames[i].clone(),
            label,
            pred_before: model.predict(image)?,
            pred_after: model.predict(&outcome.x_adv)?,
            success: outcome.success,
            iterations: outcome.iterations_used,
            stopped_early: outcome.stopped_early,
            metrics: pair_metrics(image, &outcome.x_adv)?,
        });
    }
    Ok(EvaluatedRun { records, outcomes })
}

pub fn mode_name(mode: &AttackMode) -> &'static str {
    match mode {
        AttackMode::Untargeted => "untargeted",
        AttackMode::Targeted { .. } => "targeted",
    }
}

/// Indices of records that count toward the aggregate for this mode.
pub fn eligible_indices(records: &[PerImageRecord], mode: &AttackMode) -> Vec<usize> {
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| match mode {
            AttackMode::Untargeted => r.pred_before == r.label,
            AttackMode::Targeted { .. } => true,
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn aggregate_records(records: &[PerImageRecord], mode: &AttackMode) -> Result<AggregateReport> {
    let indices = eligible_indices(records, mode);
    if indices.is_empty() {
        return Err(Error::rejected(
            "no sample is eligible for aggregation; the model misclassifies everything",
        ));
    }
    let results: Vec<SampleResult> = indices
        .iter()
        .map(|&i| SampleResult {
            success: records[i].success,
            iterations: records[i].iterations,
            metrics: records[i].metrics,
        })
        .collect();
    aggregate(&results, mode_name(mode))
}

fn adv_filename(name: &str) -> String {
    match name.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}_adv.{ext}"),
        None => format!("{name}_adv"),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Full single-configuration run: adversarial images with an `_adv` suffix,
/// `per_image.csv`, `aggregate.csv`, and `aggregate.json` in `out_dir`.
pub fn run_attack(
    model: &Model,
    dataset: &Dataset,
    config: &AttackConfig,
    out_dir: &Path,
) -> Result<AggregateReport> {
    let run = evaluate_attack(model, dataset, config)?;
    let report = aggregate_records(&run.records, &config.mode)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (i, outcome) in run.outcomes.iter().enumerate() {
        save_image(
            &outcome.x_adv,
            &out_dir.join(adv_filename(&dataset.filenames[i])),
        )?;
    }
    let mut per_image = String::from(PER_IMAGE_CSV_HEADER);
    per_image.push('\n');
    for record in &run.records {
        per_image.push_str(&record.csv_row());
        per_image.push('\n');
    }
    write_text(&out_dir.join("per_image.csv"), &per_image)?;
    write_text(
        &out_dir.join("aggregate.csv"),
        &format!(
            "{}\n{}\n",
            crate::metrics::AGGREGATE_CSV_HEADER,
            report.csv_row()
        ),
    )?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Numeric(format!("report serialization failed: {e}")))?;
    write_text(&out_dir.join("aggregate.json"), &json)?;
    Ok(report)
}

fn labeled_table(
    model: &Model,
    dataset: &Dataset,
    configs: &[(String, AttackConfig)],
    label: &str,
    out_path: &Path,
) -> Result<Vec<(String, AggregateReport)>> {
    let mut rows = Vec::with_capacity(configs.len());
    let mut csv = format!("{label},{}\n", crate::metrics::AGGREGATE_CSV_HEADER);
    for (name, config) in configs {
        let run = evaluate_attack(model, dataset, config)?;
        let report = aggregate_records(&run.records, &config.mode)?;
        csv.push_str(&format!("{name},{}\n", report.csv_row()));
        rows.push((name.clone(), report));
    }
    if let Some(parent) = out_path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_text(out_path, &csv)?;
    Ok(rows)
}

/// Component ablation: plain PGD, each addition alone, then both together.
/// Writes `ablation.csv` to `out_dir`.
pub fn run_ablation_table(
    model: &Model,
    dataset: &Dataset,
    base: &AttackConfig,
    out_dir: &Path,
) -> Result<Vec<(String, AggregateReport)>> {
    let configs: Vec<(String, AttackConfig)> =
        [(false, false), (true, false), (false, true), (true, true)]
            .iter()
            .map(|&(dss, aes)| {
                let mut config = base.clone().with_variant(dss, aes);
                config.random_init = base.random_init && !dss && !aes;
                (variant_name(dss, aes).to_string(), config)
            })
            .collect();
    labeled_table(
        model,
        dataset,
        &configs,
        "variant",
        &out_dir.join("ablation.csv"),
    )
}

/// Schedule comparison, all rows with both components on. Row order goes
/// from front-loaded to back-loaded budgets. Writes `schedules.csv`.
pub fn run_schedule_table(
    model: &Model,
    dataset: &Dataset,
    base: &AttackConfig,
    out_dir: &Path,
) -> Result<Vec<(String, AggregateReport)>> {
    let order = [
        ScheduleKind::Constant,
        ScheduleKind::CosineReverse,
        ScheduleKind::Cosine,
        ScheduleKind::LinearReverse,
        ScheduleKind::Linear,
    ];
    let configs: Vec<(String, AttackConfig)> = order
        .iter()
        .map(|&kind| {
            let mut config = base.clone().with_variant(true, true);
            config.schedule = kind;
            config.random_init = false;
            (kind.name().to_string(), config)
        })
        .collect();
    labeled_table(
        model,
        dataset,
        &configs,
        "schedule",
        &out_dir.join("schedules.csv"),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub steps: usize,
    pub epsilon: f64,
    pub report: AggregateReport,
}

/// Step-count x budget grid, one aggregate row per cell, steps-major order.
/// Writes `sweep.csv` to `out_dir`.
pub fn run_sweep(
    model: &Model,
    dataset: &Dataset,
    base: &AttackConfig,
    steps_list: &[usize],
    epsilon_list: &[f64],
    out_dir: &Path,
) -> Result<Vec<SweepRow>> {
    if steps_list.is_empty() || epsilon_list.is_empty() {
        return Err(Error::rejected(
            "sweep needs at least one steps and epsilon value",
        ));
    }
    let mut rows = Vec::with_capacity(steps_list.len() * epsilon_list.len());
    let mut csv = format!("steps,epsilon,{}\n", crate::metrics::AGGREGATE_CSV_HEADER);
    for &steps in steps_list {
        for &epsilon in epsilon_list {
            let mut config = base.clone();
            config.steps = steps;
            config.epsilon = epsilon;
            let run = evaluate_attack(model, dataset, &config)?;
            let report = aggregate_records(&run.records, &config.mode)?;
            csv.push_str(&format!("{steps},{epsilon},{}\n", report.csv_row()));
            rows.push(SweepRow {
                steps,
                epsilon,
                report,
            });
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_text(&out_dir.join("sweep.csv"), &csv)?;
    Ok(rows)
}
