//! Experiment orchestration: data preparation, forecaster fitting, baseline
//! replays, the closed-loop aggregator/controller run over the test epoch,
//! and report artifacts.

mod artifacts;
mod config;
mod sweep;

use std::collections::VecDeque;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregator::{perturb, AggregatorCheckpoint, AggregatorPolicy, NesState, Rollout};
use crate::controller::{BuildingController, ControllerState, DeviceKind, HistoryEntry, Kappa};
use crate::dataio::{generate_synthetic_cluster, read_csv, split_odd_even_months, BuildingSeries, ClusterDataset, HourlyRecord};
use crate::evaluation::{compute_metrics, daily_return, district_load, normalized_cost, CostReport, Metrics};
use crate::forecaster::{ForecastContext, ForecastReport, ForecasterConfig, LinearForecaster};
use crate::simenv::{baseline_net_load, baseline_total_load, no_storage_policy, EnvAction, Environment};

pub use artifacts::{report, write_manifest, write_run_artifacts, MetricRow, Report, MANIFEST_FILE, SUMMARY_FILE};
pub use config::{
    AggregatorSettings, ControllerSettings, DataConfig, EvalSettings, ExperimentConfig, FilterInit, ForecastSettings,
    KappaInit, RunMode,
};
pub use sweep::{sweep, SweepCell, SweepSummary};

/// Pipeline stage an error originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Data,
    Forecaster,
    Baselines,
    Experiment,
    Evaluation,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Forecaster => "forecaster",
            Stage::Baselines => "baselines",
            Stage::Experiment => "experiment",
            Stage::Evaluation => "evaluation",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug)]
pub struct HarnessError {
    pub stage: Stage,
    pub message: String,
}

impl HarnessError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        Self { stage, message: message.into() }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl std::error::Error for HarnessError {}

trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, HarnessError>;
}

impl<T, E: fmt::Display> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, HarnessError> {
        self.map_err(|e| HarnessError::new(stage, e.to_string()))
    }
}

/// Data shared by every run on one cluster.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub full: ClusterDataset,
    pub train: ClusterDataset,
    /// Test epoch (possibly truncated).
    pub test: ClusterDataset,
    /// Up to 24 observed hours preceding the epoch, per building.
    pub history: Vec<Vec<HourlyRecord>>,
    /// Each building's share of training-set demand.
    pub demand_shares: Vec<f64>,
    /// Demand-weighted heat-pump COP over the training set.
    pub nominal_cop: f64,
}

fn truncate_days(ds: &ClusterDataset, days: usize) -> ClusterDataset {
    ClusterDataset {
        climate_zone_id: ds.climate_zone_id,
        buildings: ds
            .buildings
            .iter()
            .map(|b| BuildingSeries { attributes: b.attributes.clone(), records: b.records.iter().take(days * 24).copied().collect() })
            .collect(),
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<ClusterDataset, HarnessError> {
    let ds = match &cfg.data.path {
        Some(p) => read_csv(p).stage(Stage::Data)?,
        None => generate_synthetic_cluster(cfg.data.seed, cfg.data.n_buildings, cfg.data.n_days, cfg.data.zone).stage(Stage::Data)?,
    };
    ds.validate().stage(Stage::Data)?;
    Ok(ds)
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    let full = load_dataset(cfg)?;
    let (train, test) = split_odd_even_months(&full).stage(Stage::Data)?;
    let test = match cfg.eval.max_days {
        Some(d) => truncate_days(&test, d),
        None => test,
    };
    if test.len() < 24 {
        return Err(HarnessError::new(Stage::Data, "test epoch is shorter than one day"));
    }
    let first = test.buildings[0].records[0];
    let start = full.buildings[0]
        .records
        .iter()
        .position(|r| r.day_of_year == first.day_of_year && r.hour_of_day == first.hour_of_day)
        .ok_or_else(|| HarnessError::new(Stage::Data, "test epoch not found in the full dataset"))?;
    let history = full.buildings.iter().map(|b| b.records[start.saturating_sub(24)..start].to_vec()).collect();

    let demand: Vec<f64> = train
        .buildings
        .iter()
        .map(|b| b.records.iter().map(|r| baseline_total_load(r, &cfg.env)).sum())
        .collect();
    let total: f64 = demand.iter().sum();
    let demand_shares = demand.iter().map(|d| d / total).collect();

    let (mut q, mut e) = (0.0, 0.0);
    for r in train.buildings.iter().flat_map(|b| &b.records) {
        q += r.cooling_demand_kwh;
        e += r.cooling_demand_kwh / cfg.env.cop.cop(r.outdoor_temp_c);
    }
    let nominal_cop = if e > 0.0 { q / e } else { cfg.env.cop.cop(first.outdoor_temp_c) };
    Ok(Prepared { full, train, test, history, demand_shares, nominal_cop })
}

pub fn fit_forecaster(cfg: &ExperimentConfig, prep: &Prepared) -> Result<LinearForecaster, HarnessError> {
    let fc = ForecasterConfig { lags: cfg.forecaster.lags, ridge_lambda: cfg.forecaster.ridge_lambda, horizon: cfg.horizon };
    LinearForecaster::fit(&prep.train, &cfg.env, fc).stage(Stage::Forecaster)
}

pub fn forecast_context(cfg: &ExperimentConfig, prep: &Prepared) -> ForecastContext {
    ForecastContext::with_history(&prep.test, &prep.history, &cfg.env)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub rbc: Metrics,
    pub no_storage: Metrics,
    pub rbc_district: Vec<f64>,
    pub no_storage_district: Vec<f64>,
}

fn replay(
    cfg: &ExperimentConfig,
    ds: &ClusterDataset,
    mut policy: impl FnMut(u32, &Environment<'_>) -> EnvAction,
) -> Result<Vec<f64>, HarnessError> {
    let mut env = Environment::new(ds, cfg.env);
    let mut obs = Some(env.reset(0).stage(Stage::Baselines)?);
    let mut district = Vec::with_capacity(ds.len());
    while let Some(o) = obs {
        let hour = o.buildings[0].record.hour_of_day;
        let out = env.step(&policy(hour, &env)).stage(Stage::Baselines)?;
        district.push(district_load(&out.net_kwh));
        obs = out.observation;
    }
    Ok(district)
}

/// Replays the rule-based and no-storage policies over the test epoch.
pub fn run_baselines(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Baselines, HarnessError> {
    let rbc = cfg.rbc;
    let n = prep.test.n_buildings();
    let rbc_district = replay(cfg, &prep.test, |h, env| rbc.action(h, env))?;
    let no_storage_district = replay(cfg, &prep.test, |_, _| no_storage_policy(n))?;
    Ok(Baselines {
        rbc: compute_metrics(&rbc_district).stage(Stage::Baselines)?,
        no_storage: compute_metrics(&no_storage_district).stage(Stage::Baselines)?,
        rbc_district,
        no_storage_district,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaTraceRow {
    pub day: usize,
    pub building_id: u32,
    pub device: DeviceKind,
    pub a: f64,
    pub delta: f64,
    pub eta: f64,
    pub loss_before: f64,
    pub loss_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NesTraceRow {
    pub update: usize,
    pub day: usize,
    pub sigma_r: f64,
    pub step_norm: f64,
    pub applied: bool,
    pub returns: Vec<f64>,
}

/// Everything a run produces; artifacts are written from this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub cost: CostReport,
    pub no_storage: CostReport,
    pub district: Vec<f64>,
    pub daily_returns: Vec<f64>,
    pub kappa_trace: Vec<KappaTraceRow>,
    pub nes_trace: Vec<NesTraceRow>,
    pub policy: AggregatorCheckpoint,
    pub initial_kappa: Vec<Vec<Kappa>>,
    pub controllers: Vec<ControllerState>,
    pub qp_fallbacks: usize,
    pub qp_inexact: usize,
    pub forecast: Option<ForecastReport>,
}

fn initial_kappas(cfg: &ExperimentConfig, prep: &Prepared) -> Vec<Vec<Kappa>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    prep.test
        .buildings
        .iter()
        .map(|b| {
            let mut kinds = vec![DeviceKind::Cooling];
            if b.attributes.has_dhw_tank {
                kinds.push(DeviceKind::Dhw);
            }
            kinds
                .into_iter()
                .map(|kind| {
                    let truth = Kappa::plant_truth(kind, &cfg.env, prep.nominal_cop);
                    match cfg.controller.kappa_init {
                        KappaInit::Truth => truth,
                        KappaInit::Perturbed => truth.perturbed(kind, &mut rng),
                    }
                })
                .collect()
        })
        .collect()
}

/// Aggregate baseline net load over the `horizon` hours preceding the epoch,
/// edge-padded when less history is available.
fn initial_past(cfg: &ExperimentConfig, prep: &Prepared) -> VecDeque<f64> {
    let n_hist = prep.history[0].len();
    let mut past: VecDeque<f64> = (0..n_hist)
        .map(|k| {
            prep.full
                .buildings
                .iter()
                .zip(&prep.history)
                .map(|(b, h)| baseline_net_load(&h[k], &b.attributes, &cfg.env))
                .sum()
        })
        .collect();
    let fill = past.front().copied().unwrap_or_else(|| {
        prep.test.buildings.iter().map(|b| baseline_net_load(&b.records[0], &b.attributes, &cfg.env)).sum()
    });
    while past.len() < cfg.horizon {
        past.push_front(fill);
    }
    while past.len() > cfg.horizon {
        past.pop_front();
    }
    past
}

/// Algorithm 1 over the test epoch: each day the aggregator samples a
/// perturbed policy, the controllers track its hourly commands, the day is
/// scored against the rule-based baseline, and every `N` days the policy is
/// updated. Controllers re-identify κ at the end of each day.
pub fn run_prepared(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    forecaster: &LinearForecaster,
    baselines: &Baselines,
) -> Result<RunOutcome, HarnessError> {
    let t_h = cfg.horizon;
    if forecaster.horizon() != t_h {
        return Err(HarnessError::new(Stage::Config, "forecaster horizon differs from the configured horizon"));
    }
    let learn = cfg.mode == RunMode::TrainWhileEvaluate;
    let ctx = forecast_context(cfg, prep);
    let ds = &prep.test;
    let n = ds.n_buildings();

    let mut policy = match cfg.aggregator.filter {
        FilterInit::MovingAverage => AggregatorPolicy::new(t_h, &prep.demand_shares),
        FilterInit::Identity => AggregatorPolicy::identity(t_h, &prep.demand_shares),
    }
    .stage(Stage::Experiment)?;
    let mut nes = NesState::new(cfg.nes, cfg.seed, 2);
    let initial_kappa = initial_kappas(cfg, prep);
    let mut controllers: Vec<BuildingController> = ds
        .buildings
        .iter()
        .zip(&initial_kappa)
        .map(|(b, k)| BuildingController::new(&b.attributes, k, t_h, cfg.controller.learning_rate))
        .collect();

    let mut env = Environment::new(ds, cfg.env);
    env.reset(0).stage(Stage::Experiment)?;
    let mut past = initial_past(cfg, prep);
    let hours = ds.len();
    let mut district = Vec::with_capacity(hours);
    let mut daily_returns = Vec::with_capacity(hours / 24);
    let mut kappa_trace = Vec::new();
    let mut nes_trace = Vec::new();
    let (mut day_policy, mut day_eps) = (policy.clone(), Vec::new());
    let mut phi = day_policy.phi();

    for t in 0..hours {
        if t % 24 == 0 {
            let (p, e) = if learn { perturb(&policy, cfg.nes.sigma, &mut nes) } else { (policy.clone(), Vec::new()) };
            day_policy = p;
            day_eps = e;
            phi = day_policy.phi();
        }
        let bundles = (0..n).map(|i| forecaster.predict_net(&ctx, i, t)).collect::<Result<Vec<_>, _>>().stage(Stage::Experiment)?;
        let agg: Vec<f64> = (0..=t_h).map(|h| bundles.iter().map(|b| b.net[h]).sum()).collect();
        let past_v: Vec<f64> = past.iter().copied().collect();
        let dp = day_policy.plan(&past_v, &agg).stage(Stage::Experiment)?;

        let socs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut s = vec![env.cooling_tanks()[i].soc_kwh];
                if let Some(d) = env.dhw_tanks()[i] {
                    s.push(d.soc_kwh);
                }
                s
            })
            .collect();
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let cmd: Vec<f64> = dp.iter().map(|d| d * phi[i]).collect();
            let d = controllers[i].act(&cmd, &bundles[i], &socs[i]).stage(Stage::Experiment)?;
            actions.push(d.action);
        }
        let out = env.step(&EnvAction { buildings: actions }).stage(Stage::Experiment)?;
        for i in 0..n {
            let info = &out.info.buildings[i];
            let mut u = vec![info.applied.cooling_charge_kwh];
            let mut after = vec![env.cooling_tanks()[i].soc_kwh];
            if let (Some(a), Some(tank)) = (info.applied.dhw_charge_kwh, env.dhw_tanks()[i]) {
                u.push(a);
                after.push(tank.soc_kwh);
            }
            if learn {
                controllers[i].record(HistoryEntry {
                    p_hat_net: bundles[i].net[0],
                    p_observed: out.net_kwh[i],
                    u,
                    soc_before: socs[i].clone(),
                    soc_after: after,
                });
            }
        }
        district.push(district_load(&out.net_kwh));
        past.pop_front();
        past.push_back(out.info.buildings.iter().map(|b| b.baseline_net_kwh).sum());

        if t % 24 == 23 {
            let day = t / 24;
            let range = day * 24..t + 1;
            let f = daily_return(&district[range.clone()], &baselines.rbc_district[range]).stage(Stage::Evaluation)?;
            daily_returns.push(f);
            if learn {
                let mut theta = policy.theta();
                if let Some(up) = nes.push(&mut theta, Rollout { eps: std::mem::take(&mut day_eps), ret: f }).stage(Stage::Experiment)? {
                    policy.set_theta(&theta).stage(Stage::Experiment)?;
                    nes_trace.push(NesTraceRow {
                        update: nes.updates,
                        day,
                        sigma_r: up.sigma_r,
                        step_norm: up.step_norm,
                        applied: up.applied,
                        returns: up.returns,
                    });
                }
                for c in controllers.iter_mut() {
                    let step = c.pem_update().stage(Stage::Experiment)?;
                    for dev in c.devices() {
                        kappa_trace.push(KappaTraceRow {
                            day,
                            building_id: c.state().building_id,
                            device: dev.kind,
                            a: dev.kappa.a,
                            delta: dev.kappa.delta,
                            eta: dev.kappa.eta,
                            loss_before: step.loss_before,
                            loss_after: step.loss_after,
                        });
                    }
                }
            }
        }
    }

    let metrics = compute_metrics(&district).stage(Stage::Evaluation)?;
    let cost = normalized_cost(&metrics, &baselines.rbc).stage(Stage::Evaluation)?;
    let no_storage = normalized_cost(&baselines.no_storage, &baselines.rbc).stage(Stage::Evaluation)?;
    Ok(RunOutcome {
        seed: cfg.seed,
        cost,
        no_storage,
        district,
        daily_returns,
        kappa_trace,
        nes_trace,
        policy: AggregatorCheckpoint { policy, nes: nes.checkpoint() },
        initial_kappa,
        qp_fallbacks: controllers.iter().map(|c| c.state().fallbacks).sum(),
        qp_inexact: controllers.iter().map(|c| c.state().inexact).sum(),
        controllers: controllers.iter().map(|c| c.state().clone()).collect(),
        forecast: None,
    })
}

/// Full pipeline for one configuration; writes artifacts when `out_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let forecaster = fit_forecaster(cfg, &prep)?;
    let baselines = run_baselines(cfg, &prep)?;
    let mut outcome = run_prepared(cfg, &prep, &forecaster, &baselines)?;
    outcome.forecast = Some(forecaster.evaluate(&forecast_context(cfg, &prep)).stage(Stage::Forecaster)?);
    if let Some(dir) = &cfg.out_dir {
        write_run_artifacts(dir, cfg, &outcome, &baselines, Some(&forecaster))?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.data.n_buildings = 3;
        cfg.data.n_days = 90;
        cfg.eval.max_days = Some(8);
        cfg
    }

    #[test]
    fn deterministic_end_to_end() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.daily_returns.len(), 8);
        assert_eq!(a.nes_trace.len(), 2);
    }

    #[test]
    fn rbc_self_normalizes() {
        let cfg = small();
        let prep = prepare(&cfg).unwrap();
        let base = run_baselines(&cfg, &prep).unwrap();
        let r = normalized_cost(&base.rbc, &base.rbc).unwrap();
        assert_eq!(r.total_cost, 1.0);
        assert!(base.no_storage.ramping_kwh >= 0.0);
    }

    #[test]
    fn identity_without_noise_matches_no_storage() {
        let mut cfg = small();
        cfg.aggregator.filter = FilterInit::Identity;
        cfg.nes.sigma = 0.0;
        let out = run_experiment(&cfg).unwrap();
        assert!((out.cost.total_cost - out.no_storage.total_cost).abs() <= 1e-6, "{} vs {}", out.cost.total_cost, out.no_storage.total_cost);
    }

    #[test]
    fn frozen_mode_keeps_parameters() {
        let mut cfg = small();
        cfg.mode = RunMode::Frozen;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.nes_trace.is_empty() && out.kappa_trace.is_empty());
        for (c, k) in out.controllers.iter().zip(&out.initial_kappa) {
            let now: Vec<Kappa> = c.devices.iter().map(|d| d.kappa).collect();
            assert_eq!(&now, k);
        }
    }

    #[test]
    fn stage_tagged_errors() {
        let mut cfg = small();
        cfg.eval.max_days = Some(1);
        cfg.data.n_days = 61;
        // Test epoch is day 31..=60 truncated to one day: runs fine.
        assert!(run_experiment(&cfg).is_ok());
        let e = HarnessError::new(Stage::Data, "boom");
        assert_eq!(e.to_string(), "[data] boom");
    }
}
