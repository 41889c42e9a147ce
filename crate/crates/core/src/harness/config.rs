use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Stage};
use crate::aggregator::NesConfig;
use crate::dataio::ZoneProfile;
use crate::simenv::{EnvConfig, RbcSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Learn while being evaluated on the single test epoch.
    TrainWhileEvaluate,
    /// Initial policy and κ are held fixed.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterInit {
    MovingAverage,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaInit {
    /// Each coordinate drawn from `Uniform(0.8θ, 1.2θ)` around the plant value.
    Perturbed,
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory written by `write_csv`; when absent a cluster is generated.
    pub path: Option<PathBuf>,
    pub seed: u64,
    pub n_buildings: usize,
    pub n_days: usize,
    pub zone: ZoneProfile,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { path: None, seed: 7, n_buildings: 9, n_days: 360, zone: ZoneProfile::HotHumid }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSettings {
    pub lags: usize,
    pub ridge_lambda: f64,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self { lags: 24, ridge_lambda: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregatorSettings {
    pub filter: FilterInit,
}

impl Default for AggregatorSettings {
    fn default() -> Self {
        Self { filter: FilterInit::MovingAverage }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSettings {
    pub learning_rate: f64,
    pub kappa_init: KappaInit,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self { learning_rate: 0.01, kappa_init: KappaInit::Perturbed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Truncate the test epoch to this many days.
    pub max_days: Option<usize>,
}

/// Complete description of one experiment. Every field has a default, so
/// an empty TOML file is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds κ initialization and exploration noise.
    pub seed: u64,
    pub horizon: usize,
    pub mode: RunMode,
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub env: EnvConfig,
    pub rbc: RbcSchedule,
    pub forecaster: ForecastSettings,
    pub nes: NesConfig,
    pub aggregator: AggregatorSettings,
    pub controller: ControllerSettings,
    pub eval: EvalSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: crate::DEFAULT_HORIZON,
            mode: RunMode::TrainWhileEvaluate,
            out_dir: None,
            data: DataConfig::default(),
            env: EnvConfig::default(),
            rbc: RbcSchedule::default(),
            forecaster: ForecastSettings::default(),
            nes: NesConfig::default(),
            aggregator: AggregatorSettings::default(),
            controller: ControllerSettings::default(),
            eval: EvalSettings::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::new(Stage::Config, msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(s).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let s = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.horizon == 0 {
            return Err(config_err("horizon must be at least 1"));
        }
        if self.nes.population == 0 {
            return Err(config_err("nes.population must be at least 1"));
        }
        if !(self.nes.alpha >= 0.0) || !(self.nes.sigma >= 0.0) {
            return Err(config_err("nes.alpha and nes.sigma must be nonnegative"));
        }
        if !(self.controller.learning_rate > 0.0) {
            return Err(config_err("controller.learning_rate must be positive"));
        }
        if self.forecaster.lags == 0 || !(self.forecaster.ridge_lambda >= 0.0) {
            return Err(config_err("forecaster.lags must be >= 1 and ridge_lambda >= 0"));
        }
        let e = &self.env;
        if !(e.eta_dhw > 0.0 && e.eta_dhw <= 1.0) {
            return Err(config_err("env.eta_dhw must lie in (0, 1]"));
        }
        for (name, v) in [("cooling_loss_coeff", e.cooling_loss_coeff), ("dhw_loss_coeff", e.dhw_loss_coeff)] {
            if !(0.0..1.0).contains(&v) {
                return Err(config_err(format!("env.{name} must lie in [0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&e.initial_soc_frac) {
            return Err(config_err("env.initial_soc_frac must lie in [0, 1]"));
        }
        if !(e.cop.cop_min > 0.0 && e.cop.cop_min <= e.cop.cop_max) {
            return Err(config_err("env.cop bounds must satisfy 0 < cop_min <= cop_max"));
        }
        match &self.data.path {
            Some(p) if !p.is_dir() => return Err(config_err(format!("data.path {} is not a directory", p.display()))),
            Some(_) => {}
            None => {
                if self.data.n_buildings == 0 {
                    return Err(config_err("data.n_buildings must be at least 1"));
                }
                if self.data.n_days < 60 || self.data.n_days > 365 {
                    return Err(config_err("data.n_days must lie in 60..=365 (two months are needed for the split)"));
                }
            }
        }
        if self.eval.max_days == Some(0) {
            return Err(config_err("eval.max_days must be at least 1"));
        }
        Ok(())
    }
}
