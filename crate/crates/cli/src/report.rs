//! Side-by-side metrics of completed inference runs.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use fpuq_posterior::{rms_difference, Batching};
use fpuq_priors::FieldTag;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{io_err, CliError, Result};
use crate::layout::run_summary;
use crate::stages::{curve_rows, read_json, write_csv, write_json, FieldMetrics, Method, RunSummary, StageTiming};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub label: String,
    pub method: Method,
    pub batching: Batching,
    pub seed: u64,
    pub draws: usize,
    pub metrics: Vec<FieldMetrics>,
    pub diagnostics: serde_json::Value,
    pub config: ExperimentConfig,
}

/// Differences between two runs on one field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub field: FieldTag,
    pub nf_vs_hmc: bool,
    /// RMS over the report grid of the difference of posterior means.
    pub mean_rms_delta: f64,
    /// Difference of the grid-averaged predicted stds.
    pub mean_std_delta: f64,
    pub mean_std_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub runs: Vec<RunEntry>,
    pub comparisons: Vec<Comparison>,
    /// Inputs without a completed summary.
    pub skipped: Vec<String>,
}

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run: String,
    pub method: Method,
    pub batch: String,
    pub field: FieldTag,
    pub rmse: f64,
    pub mean_std: f64,
    pub coverage_2sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub experiment: String,
    pub stage: String,
    pub seconds: f64,
}

pub fn batch_label(b: &Batching) -> String {
    match b {
        Batching::Full => "full".into(),
        Batching::PerField(v) => v.iter().map(|(t, m)| format!("{t}={m}")).collect::<Vec<_>>().join(","),
    }
}

fn dir_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Expands experiment directories into their runs, in name order.
pub fn collect_runs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut runs = Vec::new();
    for input in inputs {
        let infer = input.join("infer");
        if infer.is_dir() {
            let mut children: Vec<PathBuf> = fs::read_dir(&infer)
                .map_err(io_err(&infer))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            children.sort();
            runs.extend(children);
        } else {
            runs.push(input.clone());
        }
    }
    Ok(runs)
}

pub fn build_report(inputs: &[PathBuf]) -> Result<(RunReport, Vec<RunSummary>, Vec<TimingRow>)> {
    let mut summaries = Vec::new();
    let mut skipped = Vec::new();
    let mut experiments = Vec::new();
    for run in collect_runs(inputs)? {
        let path = run_summary(&run);
        if !path.exists() {
            log::warn!("skipping incomplete run {}", run.display());
            skipped.push(dir_name(&run));
            continue;
        }
        summaries.push(read_json::<RunSummary>(&path)?);
        if let Some(exp) = run.parent().and_then(Path::parent) {
            experiments.push((exp.to_path_buf(), summaries.last().unwrap().config.id.clone()));
        }
    }
    if summaries.is_empty() {
        return Err(CliError::Missing(
            inputs.first().cloned().unwrap_or_default().join("infer/*/summary.json"),
        ));
    }
    let mut used = BTreeSet::new();
    let runs: Vec<RunEntry> = summaries
        .iter()
        .map(|s| {
            let base = format!("{}/{}", s.config.id, s.run);
            let mut label = base.clone();
            let mut k = 2;
            while !used.insert(label.clone()) {
                label = format!("{base}#{k}");
                k += 1;
            }
            RunEntry {
                label,
                method: s.method,
                batching: s.batching.clone(),
                seed: s.seed,
                draws: s.draws,
                metrics: s.fields.iter().map(|f| f.metrics.clone()).collect(),
                diagnostics: s.diagnostics.clone(),
                config: s.config.clone(),
            }
        })
        .collect();
    let mut comparisons = Vec::new();
    for i in 0..summaries.len() {
        for j in i + 1..summaries.len() {
            let (a, b) = (&summaries[i], &summaries[j]);
            for fa in &a.fields {
                let Some(fb) = b.field(fa.summary.field) else { continue };
                if fa.summary.points != fb.summary.points {
                    continue;
                }
                let (sa, sb) = (fa.metrics.mean_std, fb.metrics.mean_std);
                comparisons.push(Comparison {
                    a: runs[i].label.clone(),
                    b: runs[j].label.clone(),
                    field: fa.summary.field,
                    nf_vs_hmc: a.method != b.method,
                    mean_rms_delta: rms_difference(&fa.summary.mean, &fb.summary.mean),
                    mean_std_delta: sa - sb,
                    mean_std_ratio: if sa == sb { 1.0 } else { sa / sb },
                });
            }
        }
    }
    let mut timings = Vec::new();
    let mut seen = BTreeSet::new();
    for (exp, id) in experiments {
        if !seen.insert(exp.clone()) {
            continue;
        }
        let tdir = exp.join("timings");
        let Ok(entries) = fs::read_dir(&tdir) else { continue };
        let mut files: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        files.sort();
        for f in files {
            let t: StageTiming = read_json(&f)?;
            timings.push(TimingRow {
                experiment: id.clone(),
                stage: t.stage,
                seconds: t.seconds,
            });
        }
    }
    Ok((
        RunReport {
            runs,
            comparisons,
            skipped,
        },
        summaries,
        timings,
    ))
}

pub fn metrics_rows(report: &RunReport) -> Vec<MetricsRow> {
    report
        .runs
        .iter()
        .flat_map(|r| {
            r.metrics.iter().map(move |m| MetricsRow {
                run: r.label.clone(),
                method: r.method,
                batch: batch_label(&r.batching),
                field: m.field,
                rmse: m.rmse,
                mean_std: m.mean_std,
                coverage_2sigma: m.coverage_2sigma,
            })
        })
        .collect()
}

/// Writes `report.json`, `metrics.csv`, `comparisons.csv`, `curves.csv`
/// and the wall-clock sidecar `timings.json`.
pub fn write_report(inputs: &[PathBuf], out: &Path, force: bool) -> Result<RunReport> {
    let target = out.join("report.json");
    if target.exists() && !force {
        return Err(CliError::Exists(target));
    }
    let (report, summaries, timings) = build_report(inputs)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_json(&target, &report)?;
    write_csv(&out.join("metrics.csv"), &metrics_rows(&report))?;
    write_csv(&out.join("comparisons.csv"), &report.comparisons)?;
    let curves: Vec<_> = report
        .runs
        .iter()
        .zip(&summaries)
        .flat_map(|(r, s)| curve_rows(&r.label, &s.fields))
        .collect();
    write_csv(&out.join("curves.csv"), &curves)?;
    write_json(&out.join("timings.json"), &timings)?;
    Ok(report)
}
