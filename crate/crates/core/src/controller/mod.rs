//! Per-building model-predictive controller. Each storage device is modelled
//! as a virtual battery with parameters κ = (a, δ, η); the controller tracks
//! its share of the district load shift with the tracking QP, applies the
//! first planned step, and re-identifies κ from logged prediction errors.

mod pem;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::BuildingAttributes;
use crate::forecaster::ForecastBundle;
use crate::qpsolver::{shift_blocks, AdmmSettings, DeviceBlock, QpSolver, QpStatus, TrackingProblem};
use crate::simenv::{BuildingAction, EnvConfig};
use crate::vbattery::VirtualBattery;

pub use pem::{pem_loss, predict_consumption, project, sample_gradient, Adagrad, HistoryEntry};

/// Largest primal residual (kWh) at which a `max_iter` iterate is still acted on.
pub const INEXACT_PRIMAL_TOL: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("command covers {got} hours, horizon is {expected}")]
    CommandLength { got: usize, expected: usize },
    #[error("forecast covers {got} hours, need at least {expected}")]
    ForecastLength { got: usize, expected: usize },
    #[error("expected {expected} device states, got {got}")]
    DeviceCount { got: usize, expected: usize },
    #[error("no history recorded since the last update")]
    EmptyHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Cooling,
    Dhw,
}

impl DeviceKind {
    /// Admissible range for the device efficiency η.
    pub fn eta_range(self) -> (f64, f64) {
        match self {
            DeviceKind::Cooling => (1.0, 6.0),
            DeviceKind::Dhw => (0.05, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DeviceKind::Cooling => "cooling",
            DeviceKind::Dhw => "dhw",
        }
    }
}

/// Identified virtual-battery parameters of one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub a: f64,
    pub delta: f64,
    /// Efficiency (COP for the heat pump), held constant over the horizon.
    pub eta: f64,
}

impl Kappa {
    /// Values matching the simulated plant for a device.
    pub fn plant_truth(kind: DeviceKind, env: &EnvConfig, nominal_cop: f64) -> Self {
        match kind {
            DeviceKind::Cooling => Self { a: 1.0 - env.cooling_loss_coeff, delta: 1.0, eta: nominal_cop },
            DeviceKind::Dhw => Self { a: 1.0 - env.dhw_loss_coeff, delta: 1.0, eta: env.eta_dhw },
        }
    }

    /// Independent `Uniform(0.8θ, 1.2θ)` draw per coordinate, then projected.
    pub fn perturbed<R: rand::Rng>(&self, kind: DeviceKind, rng: &mut R) -> Self {
        let mut k = Self {
            a: self.a * rng.gen_range(0.8..1.2),
            delta: self.delta * rng.gen_range(0.8..1.2),
            eta: self.eta * rng.gen_range(0.8..1.2),
        };
        project(&mut k, kind);
        k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub kind: DeviceKind,
    pub kappa: Kappa,
    pub capacity_kwh: f64,
    /// Rated electric input of the supplying device.
    pub p_max_kw: f64,
    pub adagrad: Adagrad,
}

/// Serializable controller state (the checkpoint format).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub building_id: u32,
    pub horizon: usize,
    pub learning_rate: f64,
    pub devices: Vec<DeviceModel>,
    /// Hours logged since the last parameter update.
    pub history: Vec<HistoryEntry>,
    pub updates: usize,
    /// Hours where the storage was idled because the QP gave no usable plan.
    pub fallbacks: usize,
    /// Hours acted on from a feasible iterate that stopped at `max_iter`.
    #[serde(default)]
    pub inexact: usize,
}

/// Result of one control decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: BuildingAction,
    /// First-step thermal charge per device as planned.
    pub planned_u: Vec<f64>,
    /// Eq. 8 prediction of this hour's consumption under the plan.
    pub predicted_kwh: f64,
    pub status: Option<QpStatus>,
}

/// Outcome of a parameter update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PemStep {
    pub loss_before: f64,
    pub loss_after: f64,
    pub samples: usize,
}

pub struct BuildingController {
    state: ControllerState,
    solver: QpSolver,
    warm: Option<(Vec<f64>, Vec<f64>)>,
}

impl BuildingController {
    pub fn new(attrs: &BuildingAttributes, kappas: &[Kappa], horizon: usize, learning_rate: f64) -> Self {
        let mut devices = vec![DeviceModel {
            kind: DeviceKind::Cooling,
            kappa: kappas[0],
            capacity_kwh: attrs.cooling_tank_capacity_kwh,
            p_max_kw: attrs.heat_pump_rated_kw,
            adagrad: Adagrad::default(),
        }];
        if attrs.has_dhw_tank {
            devices.push(DeviceModel {
                kind: DeviceKind::Dhw,
                kappa: kappas[1],
                capacity_kwh: attrs.dhw_tank_capacity_kwh,
                p_max_kw: attrs.heater_rated_kw,
                adagrad: Adagrad::default(),
            });
        }
        Self::from_state(ControllerState {
            building_id: attrs.building_id,
            horizon,
            learning_rate,
            devices,
            history: Vec::new(),
            updates: 0,
            fallbacks: 0,
            inexact: 0,
        })
    }

    pub fn from_state(state: ControllerState) -> Self {
        Self { state, solver: QpSolver::new(AdmmSettings::default()), warm: None }
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn devices(&self) -> &[DeviceModel] {
        &self.state.devices
    }

    pub fn etas(&self) -> Vec<f64> {
        self.state.devices.iter().map(|d| d.kappa.eta).collect()
    }

    /// Builds the tracking problem for `cmd` (electric kWh per hour over the
    /// horizon) from the current device states and the demand forecasts.
    pub fn build_problem(&self, cmd: &[f64], fc: &ForecastBundle, soc: &[f64]) -> Result<TrackingProblem, ControlError> {
        let t = self.state.horizon;
        if cmd.len() != t {
            return Err(ControlError::CommandLength { got: cmd.len(), expected: t });
        }
        if fc.len() < t {
            return Err(ControlError::ForecastLength { got: fc.len(), expected: t });
        }
        if soc.len() != self.state.devices.len() {
            return Err(ControlError::DeviceCount { got: soc.len(), expected: self.state.devices.len() });
        }
        let mut devices = Vec::with_capacity(soc.len());
        for (dev, &x) in self.state.devices.iter().zip(soc) {
            let q0: Vec<f64> = match dev.kind {
                DeviceKind::Cooling => fc.cooling_q0[..t].to_vec(),
                DeviceKind::Dhw => fc.dhw_q0.as_ref().map_or_else(|| vec![0.0; t], |q| q[..t].to_vec()),
            };
            let k = dev.kappa;
            // Forecast demand beyond what the device can supply would make
            // the box empty; cap it so U = 0 stays feasible.
            let q0: Vec<f64> = q0.into_iter().map(|q| q.min(k.eta * dev.p_max_kw)).collect();
            let vb = VirtualBattery {
                a: k.a,
                delta: k.delta,
                eta: vec![k.eta; t],
                p_max_kw: dev.p_max_kw,
                q0,
                x_min: 0.0,
                x_max: dev.capacity_kwh,
                x: x.clamp(0.0, dev.capacity_kwh),
            };
            let bounds = vb.bounds(t).expect("q0 capped to device output");
            devices.push(DeviceBlock { inv_eta: vec![1.0 / k.eta; t], traj: vb.condense(t), bounds });
        }
        Ok(TrackingProblem { target: cmd.to_vec(), devices })
    }

    /// Plans over the horizon and returns the first-step action. Solver
    /// failures fall back to idling the storage.
    pub fn act(&mut self, cmd: &[f64], fc: &ForecastBundle, soc: &[f64]) -> Result<Decision, ControlError> {
        let problem = self.build_problem(cmd, fc, soc)?;
        let t = self.state.horizon;
        let warm = self.warm.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice()));
        let (planned, status) = match self.solver.solve(&problem, warm) {
            Ok(sol) if sol.status == QpStatus::Optimal => {
                let first: Vec<f64> = sol.u.chunks(t).map(|c| c[0]).collect();
                self.warm = Some((shift_blocks(&sol.u, t), shift_blocks(&sol.y, t)));
                (first, Some(sol.status))
            }
            // Degenerate problems (flat directions of the tracking cost, states
            // pinned at a bound) can stall the dual residual while the iterate
            // is already feasible and near-optimal; use it rather than idling.
            Ok(sol) if sol.status == QpStatus::MaxIter && sol.primal_residual <= INEXACT_PRIMAL_TOL => {
                self.state.inexact += 1;
                let first: Vec<f64> = problem
                    .devices
                    .iter()
                    .zip(sol.u.chunks(t))
                    .map(|(d, c)| c[0].clamp(d.bounds.u_lo[0], d.bounds.u_hi[0]))
                    .collect();
                self.warm = Some((shift_blocks(&sol.u, t), shift_blocks(&sol.y, t)));
                (first, Some(sol.status))
            }
            other => {
                self.state.fallbacks += 1;
                self.warm = None;
                match other {
                    Ok(sol) => {
                        warn!("building {}: QP ended with {:?}, idling storage", self.state.building_id, sol.status);
                        (vec![0.0; soc.len()], Some(sol.status))
                    }
                    Err(e) => {
                        warn!("building {}: QP failed ({e}), idling storage", self.state.building_id);
                        (vec![0.0; soc.len()], None)
                    }
                }
            }
        };
        let action = BuildingAction {
            cooling_charge_kwh: planned[0],
            dhw_charge_kwh: self.state.devices.iter().position(|d| d.kind == DeviceKind::Dhw).map(|j| planned[j]),
        };
        let predicted_kwh = predict_consumption(fc.net[0], &planned, &self.etas());
        Ok(Decision { action, planned_u: planned, predicted_kwh, status })
    }

    pub fn record(&mut self, entry: HistoryEntry) {
        self.state.history.push(entry);
    }

    /// One pass of per-sample Adagrad over the hours logged since the last
    /// update, then clears the log.
    pub fn pem_update(&mut self) -> Result<PemStep, ControlError> {
        if self.state.history.is_empty() {
            return Err(ControlError::EmptyHistory);
        }
        let history = std::mem::take(&mut self.state.history);
        let loss_before = pem_loss(&history, &self.etas());
        let lr = self.state.learning_rate;
        for entry in &history {
            let eta = self.etas();
            for (j, dev) in self.state.devices.iter_mut().enumerate() {
                let g = sample_gradient(entry, &eta, j, &dev.kappa);
                if g.iter().all(|v| *v == 0.0) {
                    continue;
                }
                dev.adagrad.step(&mut dev.kappa, g, lr);
                project(&mut dev.kappa, dev.kind);
            }
        }
        self.state.updates += 1;
        // Model changed: the cached plan is no longer a good warm start.
        self.warm = None;
        Ok(PemStep { loss_before, loss_after: pem_loss(&history, &self.etas()), samples: history.len() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::BuildingType;

    fn attrs(dhw: bool) -> BuildingAttributes {
        BuildingAttributes {
            building_id: 1,
            building_type: BuildingType::Office,
            solar_capacity_kw: 0.0,
            has_dhw_tank: dhw,
            cooling_tank_capacity_kwh: 100.0,
            dhw_tank_capacity_kwh: if dhw { 20.0 } else { 0.0 },
            heat_pump_rated_kw: 10.0,
            heater_rated_kw: if dhw { 5.0 } else { 0.0 },
            annual_cooling_kwh: 1.0,
            annual_dhw_kwh: if dhw { 1.0 } else { 0.0 },
            annual_electric_kwh: 1.0,
        }
    }

    fn bundle(t: usize, q0: f64) -> ForecastBundle {
        ForecastBundle::new(vec![4.0; t + 1], vec![0.0; t + 1], vec![q0; t + 1], Some(vec![1.0; t + 1]), 0.0).unwrap()
    }

    const K: Kappa = Kappa { a: 1.0, delta: 1.0, eta: 2.5 };

    #[test]
    fn zero_command_zero_action() {
        let mut c = BuildingController::new(&attrs(false), &[K], 4, 0.01);
        let d = c.act(&[0.0; 4], &bundle(4, 3.0), &[50.0]).unwrap();
        assert!(d.action.cooling_charge_kwh.abs() < 1e-9);
        assert_eq!(d.action.dhw_charge_kwh, None);
    }

    #[test]
    fn unit_command_charges_eta() {
        let mut c = BuildingController::new(&attrs(false), &[K], 1, 0.01);
        let d = c.act(&[1.0], &bundle(1, 3.0), &[50.0]).unwrap();
        assert!((d.action.cooling_charge_kwh - 2.5).abs() < 1e-6);
    }

    #[test]
    fn large_command_saturates() {
        let mut c = BuildingController::new(&attrs(false), &[K], 3, 0.01);
        let d = c.act(&[1000.0, 0.0, 0.0], &bundle(3, 3.0), &[50.0]).unwrap();
        // U_hi = η·P_m − Q0 = 25 − 3.
        assert!((d.action.cooling_charge_kwh - 22.0).abs() < 1e-6);
    }

    #[test]
    fn dhw_device_is_controlled() {
        let k2 = Kappa { a: 1.0, delta: 1.0, eta: 0.9 };
        let mut c = BuildingController::new(&attrs(true), &[K, k2], 2, 0.01);
        let d = c.act(&[-2.0, -2.0], &bundle(2, 0.0), &[50.0, 10.0]).unwrap();
        // Cooling cannot shed with zero demand; the heater sheds all it can.
        assert!(d.action.cooling_charge_kwh.abs() < 1e-6);
        assert!((d.action.dhw_charge_kwh.unwrap() + 1.0).abs() < 1e-6);
    }

    #[test]
    fn eq8_examples() {
        assert_eq!(predict_consumption(4.0, &[0.0], &[2.5]), 4.0);
        assert_eq!(predict_consumption(4.0, &[2.5], &[2.5]), 5.0);
        assert_eq!(predict_consumption(4.0, &[-2.5], &[2.5]), 3.0);
    }

    fn entry(p_hat_net: f64, u: f64, eta_true: f64, x: f64) -> HistoryEntry {
        HistoryEntry {
            p_hat_net,
            p_observed: p_hat_net + u / eta_true,
            u: vec![u],
            soc_before: vec![x],
            soc_after: vec![x + u],
        }
    }

    #[test]
    fn zero_residual_leaves_kappa() {
        let mut c = BuildingController::new(&attrs(false), &[K], 2, 0.01);
        for i in 0..24 {
            c.record(entry(3.0, (i as f64).sin(), 2.5, 40.0));
        }
        c.pem_update().unwrap();
        assert_eq!(c.devices()[0].kappa, K);
    }

    #[test]
    fn pem_moves_eta_toward_truth() {
        let mut c = BuildingController::new(&attrs(false), &[Kappa { eta: 2.4, ..K }], 2, 0.01);
        for i in 0..48 {
            c.record(entry(3.0, 3.0 * (i as f64 * 0.7).sin(), 3.0, 40.0));
        }
        let s = c.pem_update().unwrap();
        assert!(s.loss_after < s.loss_before);
        assert!(c.devices()[0].kappa.eta > 2.4);
        assert!(matches!(c.pem_update(), Err(ControlError::EmptyHistory)));
    }

    #[test]
    fn adagrad_steps_shrink() {
        let mut k = K;
        let mut a = Adagrad::default();
        let mut last = [f64::INFINITY; 3];
        for _ in 0..20 {
            let eff = a.step(&mut k, [0.5, -0.5, 0.5], 0.01);
            for j in 0..3 {
                assert!(eff[j] <= last[j]);
            }
            last = eff;
        }
    }

    #[test]
    fn projection_ranges() {
        let mut k = Kappa { a: 1.3, delta: -1.0, eta: 9.0 };
        project(&mut k, DeviceKind::Cooling);
        assert_eq!((k.a, k.eta), (1.0, 6.0));
        assert!(k.delta > 0.0);
        let mut k = Kappa { a: 0.9, delta: 1.0, eta: 1.1 };
        project(&mut k, DeviceKind::Dhw);
        assert_eq!(k.eta, 1.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let c = BuildingController::new(&attrs(true), &[K, K], 12, 0.01);
        let s = serde_json::to_string(c.state()).unwrap();
        let back: ControllerState = serde_json::from_str(&s).unwrap();
        assert_eq!(&back, c.state());
    }
}
