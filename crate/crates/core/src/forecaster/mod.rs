//! Net-load forecasting: per-building total load and shared per-unit solar
//! generation, combined as `P_net = P_total − C_sol·P_gen`.
//!
//! The models are direct multi-horizon ridge regressions, one per horizon
//! step, over weather and calendar features at the target hour plus lagged
//! observations at the issue time.

mod features;
mod ridge;
mod score;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::ClusterDataset;
use crate::simenv::EnvConfig;

pub use features::{feature_names, BuildingHistory, BASE_FEATURES};
use features::Target;
pub use ridge::RidgeModel;
pub use score::{persistence_series, score, Score, ScoreAccumulator};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("empty series")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular normal equations (use ridge_lambda > 0)")]
    Singular,
    #[error("need at least {need} hours of history, have {have}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("training data spans {days} days, need at least {needed}")]
    TooShort { days: usize, needed: usize },
    #[error("invalid forecaster config: {0}")]
    Config(String),
    #[error("horizon mismatch: expected {expected} steps, got {got}")]
    HorizonMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecasterConfig {
    pub lags: usize,
    pub ridge_lambda: f64,
    /// Planning horizon `T`; bundles cover `T + 1` hours.
    pub horizon: usize,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self { lags: 24, ridge_lambda: 1.0, horizon: crate::DEFAULT_HORIZON }
    }
}

/// Forecasts for one building over hours `t..=t+T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBundle {
    pub total: Vec<f64>,
    /// Per-unit solar generation, clipped at zero.
    pub gen: Vec<f64>,
    pub cooling_q0: Vec<f64>,
    pub dhw_q0: Option<Vec<f64>>,
    pub solar_kw: f64,
    pub net: Vec<f64>,
}

impl ForecastBundle {
    pub fn new(
        total: Vec<f64>,
        gen: Vec<f64>,
        cooling_q0: Vec<f64>,
        dhw_q0: Option<Vec<f64>>,
        solar_kw: f64,
    ) -> Result<Self, ForecastError> {
        let n = total.len();
        let lens = [gen.len(), cooling_q0.len(), dhw_q0.as_ref().map_or(n, Vec::len)];
        if let Some(&bad) = lens.iter().find(|&&l| l != n) {
            return Err(ForecastError::HorizonMismatch { expected: n, got: bad });
        }
        let gen: Vec<f64> = gen.into_iter().map(|g| g.max(0.0)).collect();
        let net = total.iter().zip(&gen).map(|(p, g)| p - solar_kw * g).collect();
        Ok(Self { total, gen, cooling_q0, dhw_q0, solar_kw, net })
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingModels {
    pub building_id: u32,
    pub solar_capacity_kw: f64,
    /// One model per horizon step for each target.
    pub total: Vec<RidgeModel>,
    pub cooling: Vec<RidgeModel>,
    pub dhw: Option<Vec<RidgeModel>>,
}

/// Fitted forecaster. Serializes to a self-describing JSON coefficient file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearForecaster {
    pub config: ForecasterConfig,
    pub feature_names: Vec<String>,
    /// Shared by all buildings: per-unit generation depends on weather only.
    pub solar: Vec<RidgeModel>,
    pub buildings: Vec<BuildingModels>,
}

/// Histories for every building of a cluster.
#[derive(Debug, Clone)]
pub struct ForecastContext {
    pub buildings: Vec<BuildingHistory>,
}

impl ForecastContext {
    pub fn new(ds: &ClusterDataset, env: &EnvConfig) -> Self {
        Self::with_history(ds, &vec![Vec::new(); ds.n_buildings()], env)
    }

    /// `history[i]` holds observed records preceding the dataset for
    /// building `i`; they feed the lags of the first hours.
    pub fn with_history(ds: &ClusterDataset, history: &[Vec<crate::dataio::HourlyRecord>], env: &EnvConfig) -> Self {
        Self {
            buildings: ds
                .buildings
                .iter()
                .zip(history)
                .map(|(b, h)| BuildingHistory::new(h, &b.records, env))
                .collect(),
        }
    }
}

const MIN_TRAIN_DAYS: usize = 30;

fn fit_target(
    hist: &BuildingHistory,
    target: Target,
    cfg: &ForecasterConfig,
) -> Result<Vec<RidgeModel>, ForecastError> {
    let nf = features::n_features(cfg.lags);
    let y_all = hist.series(target);
    let n = hist.records.len();
    let mut models = Vec::with_capacity(cfg.horizon + 1);
    for h in 0..=cfg.horizon {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for t in cfg.lags..n.saturating_sub(h) {
            // Skip windows that straddle a gap between non-adjacent days.
            if hist.run_start[t + h] + cfg.lags > t {
                continue;
            }
            hist.push_features(&mut rows, target, t, h, cfg.lags);
            y.push(y_all[t + h]);
        }
        if y.is_empty() {
            return Err(ForecastError::Empty);
        }
        models.push(RidgeModel::fit(&rows, &y, nf, cfg.ridge_lambda)?);
    }
    Ok(models)
}

impl LinearForecaster {
    pub fn fit(train: &ClusterDataset, env: &EnvConfig, cfg: ForecasterConfig) -> Result<Self, ForecastError> {
        if cfg.lags == 0 {
            return Err(ForecastError::Config("lags must be at least 1".into()));
        }
        if !(cfg.ridge_lambda >= 0.0) {
            return Err(ForecastError::Config("ridge_lambda must be nonnegative".into()));
        }
        if train.n_days() < MIN_TRAIN_DAYS {
            return Err(ForecastError::TooShort { days: train.n_days(), needed: MIN_TRAIN_DAYS });
        }
        let ctx = ForecastContext::new(train, env);
        let solar = fit_target(&ctx.buildings[0], Target::Gen, &cfg)?;
        let mut buildings = Vec::with_capacity(train.n_buildings());
        for (b, hist) in train.buildings.iter().zip(&ctx.buildings) {
            let attrs = &b.attributes;
            buildings.push(BuildingModels {
                building_id: attrs.building_id,
                solar_capacity_kw: attrs.solar_capacity_kw,
                total: fit_target(hist, Target::Total, &cfg)?,
                cooling: fit_target(hist, Target::Cooling, &cfg)?,
                dhw: if attrs.has_dhw_tank { Some(fit_target(hist, Target::Dhw, &cfg)?) } else { None },
            });
        }
        Ok(Self { feature_names: feature_names(cfg.lags), config: cfg, solar, buildings })
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn run(&self, models: &[RidgeModel], hist: &BuildingHistory, target: Target, t: usize, row: &mut Vec<f64>) -> Vec<f64> {
        models
            .iter()
            .enumerate()
            .map(|(h, m)| {
                row.clear();
                hist.push_features(row, target, t, h, self.config.lags);
                m.predict(row)
            })
            .collect()
    }

    /// Forecast bundle for building `i` issued at the start of hour `t`
    /// (index into the context's non-prefix records).
    pub fn predict_net(&self, ctx: &ForecastContext, i: usize, t: usize) -> Result<ForecastBundle, ForecastError> {
        let (models, hist) = match (self.buildings.get(i), ctx.buildings.get(i)) {
            (Some(m), Some(h)) => (m, h),
            _ => return Err(ForecastError::Shape(format!("no building at index {i}"))),
        };
        if models.total.len() != self.config.horizon + 1 {
            return Err(ForecastError::HorizonMismatch { expected: self.config.horizon + 1, got: models.total.len() });
        }
        let ti = t + hist.offset;
        let mut row = Vec::with_capacity(self.feature_names.len());
        let clip = |v: Vec<f64>| v.into_iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
        let total = self.run(&models.total, hist, Target::Total, ti, &mut row);
        let gen = self.run(&self.solar, hist, Target::Gen, ti, &mut row);
        let cooling = clip(self.run(&models.cooling, hist, Target::Cooling, ti, &mut row));
        let dhw = models.dhw.as_ref().map(|m| clip(self.run(m, hist, Target::Dhw, ti, &mut row)));
        ForecastBundle::new(total, gen, cooling, dhw, models.solar_capacity_kw)
    }

    /// Scores total-load forecasts against the persistence baseline over
    /// every issue hour of `ctx` for which the full horizon is observed.
    pub fn evaluate(&self, ctx: &ForecastContext) -> Result<ForecastReport, ForecastError> {
        let horizon = self.config.horizon;
        let mut per_h = vec![(ScoreAccumulator::default(), ScoreAccumulator::default()); horizon + 1];
        let mut pooled = (ScoreAccumulator::default(), ScoreAccumulator::default());
        let mut row = Vec::new();
        for (i, hist) in ctx.buildings.iter().enumerate() {
            let models = &self.buildings[i];
            let n = hist.len();
            for t in 0..n.saturating_sub(horizon) {
                let ti = t + hist.offset;
                if ti < 24 {
                    continue;
                }
                let pred = self.run(&models.total, hist, Target::Total, ti, &mut row);
                for (h, p) in pred.iter().enumerate() {
                    let truth = hist.total[ti + h];
                    let naive = hist.total[ti + h - 24];
                    per_h[h].0.push(*p, truth);
                    per_h[h].1.push(naive, truth);
                    pooled.0.push(*p, truth);
                    pooled.1.push(naive, truth);
                }
            }
        }
        Ok(ForecastReport {
            per_horizon: per_h
                .iter()
                .enumerate()
                .map(|(h, (l, p))| HorizonScore { horizon: h, linear: l.finish(), persistence: p.finish() })
                .collect(),
            linear: pooled.0.finish(),
            persistence: pooled.1.finish(),
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<(), ForecastError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, ForecastError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

/// Same-hour-yesterday bundle for building `i` at hour `t`.
pub fn persistence_baseline(ctx: &ForecastContext, i: usize, t: usize, horizon: usize) -> Result<ForecastBundle, ForecastError> {
    let hist = ctx.buildings.get(i).ok_or_else(|| ForecastError::Shape(format!("no building at index {i}")))?;
    let ti = t + hist.offset;
    let window = |s: &[f64]| persistence_series(&s[..ti.min(s.len())], horizon + 1);
    let has_dhw = hist.dhw.iter().any(|&d| d > 0.0);
    ForecastBundle::new(
        window(&hist.total)?,
        window(&hist.gen)?,
        window(&hist.cooling)?,
        if has_dhw { Some(window(&hist.dhw)?) } else { None },
        0.0,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonScore {
    pub horizon: usize,
    pub linear: Score,
    pub persistence: Score,
}

/// Total-load accuracy of the fitted model and of persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub per_horizon: Vec<HorizonScore>,
    pub linear: Score,
    pub persistence: Score,
}

impl ForecastReport {
    pub fn write_csv(&self, path: &Path) -> Result<(), ForecastError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["horizon", "rmse_linear", "mape_pct_linear", "rmse_persistence", "mape_pct_persistence"])?;
        for s in &self.per_horizon {
            w.write_record([
                s.horizon.to_string(),
                s.linear.rmse.to_string(),
                s.linear.mape_pct.to_string(),
                s.persistence.rmse.to_string(),
                s.persistence.mape_pct.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
