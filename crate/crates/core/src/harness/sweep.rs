use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::write_manifest;
use super::{fit_forecaster, prepare, run_baselines, run_prepared, write_run_artifacts, ExperimentConfig, HarnessError, Stage, StageExt};
use crate::linalg::{mean, std_pop};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub seed: u64,
    pub total_cost: f64,
    pub ratios: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: Vec<SweepCell>,
    pub total_cost_mean: f64,
    /// Population standard deviation across seeds.
    pub total_cost_std: f64,
    pub ratio_mean: [f64; 5],
    pub ratio_std: [f64; 5],
}

/// Runs `cfg` once per seed. Data, forecaster and baselines do not depend
/// on the seed and are computed once; the closed-loop runs execute in
/// parallel. With `out` set each seed writes to `out/seed_<s>`.
pub fn sweep(cfg: &ExperimentConfig, seeds: &[u64], out: Option<&Path>) -> Result<SweepSummary, HarnessError> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(HarnessError::new(Stage::Config, "sweep needs at least one seed"));
    }
    let prep = prepare(cfg)?;
    let forecaster = fit_forecaster(cfg, &prep)?;
    let baselines = run_baselines(cfg, &prep)?;
    let cells: Vec<SweepCell> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            c.out_dir = out.map(|o| o.join(format!("seed_{seed}")));
            let outcome = run_prepared(&c, &prep, &forecaster, &baselines)?;
            if let Some(dir) = &c.out_dir {
                write_run_artifacts(dir, &c, &outcome, &baselines, None)?;
            }
            Ok(SweepCell { seed, total_cost: outcome.cost.total_cost, ratios: outcome.cost.ratios })
        })
        .collect::<Result<_, HarnessError>>()?;
    let totals: Vec<f64> = cells.iter().map(|c| c.total_cost).collect();
    let mut ratio_mean = [0.0; 5];
    let mut ratio_std = [0.0; 5];
    for k in 0..5 {
        let col: Vec<f64> = cells.iter().map(|c| c.ratios[k]).collect();
        ratio_mean[k] = mean(&col);
        ratio_std[k] = std_pop(&col);
    }
    let summary = SweepSummary { total_cost_mean: mean(&totals), total_cost_std: std_pop(&totals), ratio_mean, ratio_std, cells };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).stage(Stage::Report)?;
        let s = serde_json::to_string_pretty(&summary).stage(Stage::Report)?;
        std::fs::write(dir.join("sweep_summary.json"), s + "\n").stage(Stage::Report)?;
        write_manifest(dir, "sweep")?;
    }
    Ok(summary)
}
