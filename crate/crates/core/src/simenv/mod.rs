//! Closed-loop building-cluster simulator with linear thermal storage tanks,
//! hourly step semantics and the two reference policies.

mod policy;
mod storage;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{BuildingAttributes, ClusterDataset, HourlyRecord};

pub use policy::{no_storage_policy, RbcSchedule};
pub use storage::StorageState;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("reset index {t0} out of range for a series of {len} steps")]
    ResetOutOfRange { t0: usize, len: usize },
    #[error("environment exhausted after {len} steps")]
    Exhausted { len: usize },
    #[error("action covers {got} buildings, environment has {expected}")]
    ActionShape { got: usize, expected: usize },
    #[error("environment has not been reset")]
    NotReset,
}

/// Heat-pump COP as a clipped linear function of outdoor temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CopModel {
    pub c0: f64,
    pub c1: f64,
    pub t_ref_c: f64,
    pub cop_min: f64,
    pub cop_max: f64,
}

impl Default for CopModel {
    fn default() -> Self {
        Self { c0: 3.2, c1: 0.05, t_ref_c: 10.0, cop_min: 1.5, cop_max: 4.5 }
    }
}

impl CopModel {
    /// Temperature-independent COP.
    pub fn constant(cop: f64) -> Self {
        Self { c0: cop, c1: 0.0, t_ref_c: 0.0, cop_min: cop, cop_max: cop }
    }

    pub fn cop(&self, outdoor_temp_c: f64) -> f64 {
        (self.c0 - self.c1 * (outdoor_temp_c - self.t_ref_c).max(0.0)).clamp(self.cop_min, self.cop_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub cop: CopModel,
    /// Electric DHW heater efficiency in (0, 1].
    pub eta_dhw: f64,
    pub cooling_loss_coeff: f64,
    pub dhw_loss_coeff: f64,
    pub initial_soc_frac: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { cop: CopModel::default(), eta_dhw: 0.9, cooling_loss_coeff: 0.006, dhw_loss_coeff: 0.008, initial_soc_frac: 0.5 }
    }
}

/// Electricity a building would draw in this hour with idle storage,
/// before subtracting PV.
pub fn baseline_total_load(rec: &HourlyRecord, cfg: &EnvConfig) -> f64 {
    rec.nonshiftable_kwh + rec.cooling_demand_kwh / cfg.cop.cop(rec.outdoor_temp_c) + rec.dhw_demand_kwh / cfg.eta_dhw
}

/// Net grid consumption with idle storage.
pub fn baseline_net_load(rec: &HourlyRecord, attrs: &BuildingAttributes, cfg: &EnvConfig) -> f64 {
    baseline_total_load(rec, cfg) - attrs.solar_capacity_kw * rec.solar_gen_per_unit
}

/// Signed thermal charge commands for one building (+ charges the tank).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildingAction {
    pub cooling_charge_kwh: f64,
    /// Ignored for buildings without a DHW tank.
    pub dhw_charge_kwh: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvAction {
    pub buildings: Vec<BuildingAction>,
}

impl EnvAction {
    pub fn zeros(n: usize) -> Self {
        Self { buildings: vec![BuildingAction::default(); n] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingSimState {
    pub cooling_tank: StorageState,
    pub dhw_tank: Option<StorageState>,
    pub cop_cooling_t: f64,
    pub eta_dhw: f64,
    pub record: HourlyRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Index of the hour about to be simulated.
    pub t: usize,
    pub buildings: Vec<BuildingSimState>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildingStepInfo {
    pub applied: BuildingAction,
    pub cooling_elec_kwh: f64,
    pub dhw_elec_kwh: f64,
    pub nonshiftable_kwh: f64,
    pub solar_kwh: f64,
    /// Net consumption the building would have had with idle storage.
    pub baseline_net_kwh: f64,
    /// Thermal demand the devices could not serve (zero for well-sized plants).
    pub unmet_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub t: usize,
    pub buildings: Vec<BuildingStepInfo>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// `None` once the series is exhausted.
    pub observation: Option<Observation>,
    /// Net consumption of each building during the simulated hour.
    pub net_kwh: Vec<f64>,
    pub info: StepInfo,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.observation.is_none()
    }
}

/// Sequential simulator over one dataset; construct one per rollout stream.
pub struct Environment<'a> {
    data: &'a ClusterDataset,
    cfg: EnvConfig,
    t: Option<usize>,
    cooling: Vec<StorageState>,
    dhw: Vec<Option<StorageState>>,
}

impl<'a> Environment<'a> {
    pub fn new(data: &'a ClusterDataset, cfg: EnvConfig) -> Self {
        Self { data, cfg, t: None, cooling: Vec::new(), dhw: Vec::new() }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn dataset(&self) -> &'a ClusterDataset {
        self.data
    }

    pub fn n_buildings(&self) -> usize {
        self.data.n_buildings()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Current step index, `None` before the first reset.
    pub fn t(&self) -> Option<usize> {
        self.t
    }

    pub fn reset(&mut self, t0: usize) -> Result<Observation, EnvError> {
        let len = self.data.len();
        if t0 + 1 >= len {
            return Err(EnvError::ResetOutOfRange { t0, len });
        }
        let frac = self.cfg.initial_soc_frac;
        self.cooling = self
            .data
            .buildings
            .iter()
            .map(|b| {
                let cap = b.attributes.cooling_tank_capacity_kwh;
                StorageState::new(cap, frac * cap, self.cfg.cooling_loss_coeff)
            })
            .collect();
        self.dhw = self
            .data
            .buildings
            .iter()
            .map(|b| {
                b.attributes.has_dhw_tank.then(|| {
                    let cap = b.attributes.dhw_tank_capacity_kwh;
                    StorageState::new(cap, frac * cap, self.cfg.dhw_loss_coeff)
                })
            })
            .collect();
        self.t = Some(t0);
        Ok(self.observe(t0))
    }

    pub fn cooling_tanks(&self) -> &[StorageState] {
        &self.cooling
    }

    pub fn dhw_tanks(&self) -> &[Option<StorageState>] {
        &self.dhw
    }

    fn observe(&self, t: usize) -> Observation {
        let buildings = self
            .data
            .buildings
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let record = b.records[t];
                BuildingSimState {
                    cooling_tank: self.cooling[i],
                    dhw_tank: self.dhw[i],
                    cop_cooling_t: self.cfg.cop.cop(record.outdoor_temp_c),
                    eta_dhw: self.cfg.eta_dhw,
                    record,
                }
            })
            .collect();
        Observation { t, buildings }
    }

    /// Simulates the current hour. Requested charges are clipped to device
    /// power, tank state-of-charge bounds and the demand a discharge can serve;
    /// the applied values are reported in the step info.
    pub fn step(&mut self, action: &EnvAction) -> Result<StepOutcome, EnvError> {
        let len = self.data.len();
        let t = self.t.ok_or(EnvError::NotReset)?;
        if t >= len {
            return Err(EnvError::Exhausted { len });
        }
        if action.buildings.len() != self.data.n_buildings() {
            return Err(EnvError::ActionShape { got: action.buildings.len(), expected: self.data.n_buildings() });
        }
        let mut net = Vec::with_capacity(self.data.n_buildings());
        let mut infos = Vec::with_capacity(self.data.n_buildings());
        for (i, (b, act)) in self.data.buildings.iter().zip(&action.buildings).enumerate() {
            let rec = &b.records[t];
            let attrs = &b.attributes;
            let cop = self.cfg.cop.cop(rec.outdoor_temp_c);

            let cool_max_thermal = cop * attrs.heat_pump_rated_kw;
            let cool = self.cooling[i].apply(act.cooling_charge_kwh, rec.cooling_demand_kwh, cool_max_thermal);
            let cooling_elec = cool.served_kwh / cop;

            let (dhw_applied, dhw_elec, dhw_unmet) = match self.dhw[i].as_mut() {
                Some(tank) => {
                    let max_thermal = self.cfg.eta_dhw * attrs.heater_rated_kw;
                    let r = tank.apply(act.dhw_charge_kwh.unwrap_or(0.0), rec.dhw_demand_kwh, max_thermal);
                    (Some(r.applied_kwh), r.served_kwh / self.cfg.eta_dhw, r.unmet_kwh)
                }
                None => (None, rec.dhw_demand_kwh / self.cfg.eta_dhw, 0.0),
            };
            let solar = attrs.solar_capacity_kw * rec.solar_gen_per_unit;
            let p = rec.nonshiftable_kwh + cooling_elec + dhw_elec - solar;
            net.push(p);
            infos.push(BuildingStepInfo {
                applied: BuildingAction { cooling_charge_kwh: cool.applied_kwh, dhw_charge_kwh: dhw_applied },
                cooling_elec_kwh: cooling_elec,
                dhw_elec_kwh: dhw_elec,
                nonshiftable_kwh: rec.nonshiftable_kwh,
                solar_kwh: solar,
                baseline_net_kwh: baseline_net_load(rec, attrs, &self.cfg),
                unmet_kwh: cool.unmet_kwh + dhw_unmet,
            });
        }
        let next = t + 1;
        self.t = Some(next);
        let observation = (next < len).then(|| self.observe(next));
        Ok(StepOutcome { observation, net_kwh: net, info: StepInfo { t, buildings: infos } })
    }
}
