use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Baselines, ExperimentConfig, HarnessError, RunOutcome, Stage, StageExt};
use crate::evaluation::{CostReport, Metrics};
use crate::forecaster::{ForecastReport, LinearForecaster};

pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
const REPORT_FILE: &str = "report.json";
const BREAKDOWN_FILE: &str = "metrics_breakdown.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub total_cost: f64,
    pub cost: CostReport,
    pub no_storage: CostReport,
    pub rbc: Metrics,
    pub qp_fallbacks: usize,
    pub qp_inexact: usize,
    pub forecast: Option<ForecastReport>,
    pub config: ExperimentConfig,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let s = serde_json::to_string_pretty(value).stage(Stage::Report)?;
    fs::write(path, s + "\n").stage(Stage::Report)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    csv::Writer::from_path(path).stage(Stage::Report)
}

/// Writes the summary, traces and checkpoints of a finished run, then the
/// manifest.
pub fn write_run_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    out: &RunOutcome,
    baselines: &Baselines,
    forecaster: Option<&LinearForecaster>,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).stage(Stage::Report)?;
    let summary = RunSummary {
        seed: out.seed,
        total_cost: out.cost.total_cost,
        cost: out.cost.clone(),
        no_storage: out.no_storage.clone(),
        rbc: baselines.rbc,
        qp_fallbacks: out.qp_fallbacks,
        qp_inexact: out.qp_inexact,
        forecast: out.forecast.clone(),
        config: cfg.clone(),
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string()).stage(Stage::Report)?;
    write_json(&dir.join("policy.json"), &out.policy)?;
    write_json(&dir.join("controllers.json"), &out.controllers)?;

    let mut w = csv_writer(&dir.join("daily_returns.csv"))?;
    w.write_record(["day", "return"]).stage(Stage::Report)?;
    for (d, f) in out.daily_returns.iter().enumerate() {
        w.write_record([d.to_string(), f.to_string()]).stage(Stage::Report)?;
    }
    w.flush().stage(Stage::Report)?;

    let mut w = csv_writer(&dir.join("kappa_trace.csv"))?;
    w.write_record(["day", "building_id", "device", "a", "delta", "eta", "loss_before", "loss_after"]).stage(Stage::Report)?;
    for r in &out.kappa_trace {
        w.write_record([
            r.day.to_string(),
            r.building_id.to_string(),
            r.device.name().to_string(),
            r.a.to_string(),
            r.delta.to_string(),
            r.eta.to_string(),
            r.loss_before.to_string(),
            r.loss_after.to_string(),
        ])
        .stage(Stage::Report)?;
    }
    w.flush().stage(Stage::Report)?;

    let mut w = csv_writer(&dir.join("nes_trace.csv"))?;
    w.write_record(["update", "day", "sigma_r", "step_norm", "applied", "returns"]).stage(Stage::Report)?;
    for r in &out.nes_trace {
        let returns: Vec<String> = r.returns.iter().map(f64::to_string).collect();
        w.write_record([
            r.update.to_string(),
            r.day.to_string(),
            r.sigma_r.to_string(),
            r.step_norm.to_string(),
            r.applied.to_string(),
            returns.join(";"),
        ])
        .stage(Stage::Report)?;
    }
    w.flush().stage(Stage::Report)?;

    let mut w = csv_writer(&dir.join("district_load.csv"))?;
    w.write_record(["hour", "candidate_kwh", "rbc_kwh", "no_storage_kwh"]).stage(Stage::Report)?;
    for (t, d) in out.district.iter().enumerate() {
        w.write_record([t.to_string(), d.to_string(), baselines.rbc_district[t].to_string(), baselines.no_storage_district[t].to_string()])
            .stage(Stage::Report)?;
    }
    w.flush().stage(Stage::Report)?;

    if let Some(f) = forecaster {
        f.save_json(&dir.join("forecaster.json")).stage(Stage::Report)?;
    }
    if let Some(r) = &out.forecast {
        r.write_csv(&dir.join("forecast_report.csv")).stage(Stage::Report)?;
    }
    write_manifest(dir, "run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    command: String,
    files: Vec<ManifestEntry>,
}

/// Lists every regular file under `dir` (sorted, recursive) in `manifest.json`.
pub fn write_manifest(dir: &Path, command: &str) -> Result<(), HarnessError> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<ManifestEntry>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
                if rel != MANIFEST_FILE {
                    out.push(ManifestEntry { file: rel, bytes: entry.metadata()?.len() });
                }
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files).stage(Stage::Report)?;
    files.sort_by(|a, b| a.file.cmp(&b.file));
    write_json(
        &dir.join(MANIFEST_FILE),
        &Manifest { tool: "tclflex".into(), version: env!("CARGO_PKG_VERSION").into(), command: command.into(), files },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub candidate: f64,
    pub rbc: f64,
    pub ratio: f64,
    pub no_storage_ratio: f64,
}

/// Descriptive observations derived from the numbers; nothing is asserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commentary {
    pub largest_improvement: String,
    pub daily_peak_reduction_pct: f64,
    pub annual_peak_reduction_pct: f64,
    pub ramping_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub metrics: Vec<MetricRow>,
    pub total_cost: f64,
    pub no_storage_total_cost: f64,
    pub commentary: Commentary,
}

/// Consolidates the artifacts of a finished run in `dir` into `report.json`
/// and a per-metric CSV. Depends only on the run's summary, so repeated
/// calls produce identical files.
pub fn report(dir: &Path) -> Result<Report, HarnessError> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::new(Stage::Report, format!("{}: {e}", path.display())))?;
    let s: RunSummary = serde_json::from_str(&text).stage(Stage::Report)?;
    let cand = s.cost.raw.as_array();
    let rbc = s.rbc.as_array();
    let metrics: Vec<MetricRow> = Metrics::NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| MetricRow {
            metric: name.to_string(),
            candidate: cand[k],
            rbc: rbc[k],
            ratio: s.cost.ratios[k],
            no_storage_ratio: s.no_storage.ratios[k],
        })
        .collect();
    let best = metrics.iter().min_by(|a, b| a.ratio.total_cmp(&b.ratio)).expect("five metrics");
    let pct = |k: usize| 100.0 * (1.0 - s.cost.ratios[k]);
    let rep = Report {
        seed: s.seed,
        total_cost: s.cost.total_cost,
        no_storage_total_cost: s.no_storage.total_cost,
        commentary: Commentary {
            largest_improvement: best.metric.clone(),
            daily_peak_reduction_pct: pct(3),
            annual_peak_reduction_pct: pct(4),
            ramping_reduction_pct: pct(2),
        },
        metrics,
    };
    write_json(&dir.join(REPORT_FILE), &rep)?;
    let mut w = csv_writer(&dir.join(BREAKDOWN_FILE))?;
    w.write_record(["metric", "candidate", "rbc", "ratio", "no_storage_ratio"]).stage(Stage::Report)?;
    for m in &rep.metrics {
        w.write_record([m.metric.clone(), m.candidate.to_string(), m.rbc.to_string(), m.ratio.to_string(), m.no_storage_ratio.to_string()])
            .stage(Stage::Report)?;
    }
    w.write_record(["total".to_string(), String::new(), String::new(), rep.total_cost.to_string(), rep.no_storage_total_cost.to_string()])
        .stage(Stage::Report)?;
    w.flush().stage(Stage::Report)?;
    write_manifest(dir, "report")?;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::super::{run_experiment, ExperimentConfig};
    use super::*;

    #[test]
    fn report_is_idempotent_and_complete() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.data.n_buildings = 2;
        cfg.data.n_days = 60;
        cfg.eval.max_days = Some(4);
        cfg.out_dir = Some(dir.path().to_path_buf());
        run_experiment(&cfg).unwrap();
        let a = report(dir.path()).unwrap();
        let first = fs::read(dir.path().join(BREAKDOWN_FILE)).unwrap();
        let b = report(dir.path()).unwrap();
        assert_eq!(a, b);
        assert_eq!(first, fs::read(dir.path().join(BREAKDOWN_FILE)).unwrap());
        assert_eq!(a.metrics.len(), 5);
        let mean: f64 = a.metrics.iter().map(|m| m.ratio).sum::<f64>() / 5.0;
        assert!((mean - a.total_cost).abs() < 1e-12);
        let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        for f in ["summary.json", "kappa_trace.csv", "nes_trace.csv", "policy.json", "report.json"] {
            assert!(manifest.contains(f), "{f} missing from manifest");
        }
    }

    #[test]
    fn missing_artifacts_are_report_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(report(dir.path()).unwrap_err().stage, Stage::Report);
    }
}
