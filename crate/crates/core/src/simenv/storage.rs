use serde::{Deserialize, Serialize};

/// Linear thermal storage tank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageState {
    pub soc_kwh: f64,
    pub capacity_kwh: f64,
    /// Fraction of the stored energy lost per hour.
    pub loss_coeff: f64,
    pub max_charge_kw: f64,
    pub max_discharge_kw: f64,
}

pub(super) struct ApplyResult {
    pub applied_kwh: f64,
    /// Thermal energy the device delivered (demand plus charge, capped).
    pub served_kwh: f64,
    pub unmet_kwh: f64,
}

impl StorageState {
    /// Rate limits default to a full charge or discharge per hour.
    pub fn new(capacity_kwh: f64, soc_kwh: f64, loss_coeff: f64) -> Self {
        Self { soc_kwh, capacity_kwh, loss_coeff, max_charge_kw: capacity_kwh, max_discharge_kw: capacity_kwh }
    }

    pub fn fraction(&self) -> f64 {
        self.soc_kwh / self.capacity_kwh
    }

    /// Feasible charge interval for one hour given the end-use demand and
    /// the thermal output limit of the supplying device.
    pub fn feasible_charge(&self, demand_kwh: f64, device_max_kwh: f64) -> (f64, f64) {
        let decayed = (1.0 - self.loss_coeff) * self.soc_kwh;
        let lo = (-self.max_discharge_kw).max(-decayed).max(-demand_kwh);
        let hi = self.max_charge_kw.min(self.capacity_kwh - decayed).min(device_max_kwh - demand_kwh);
        // An undersized device cannot charge; discharge as far as possible.
        (lo, hi.max(lo))
    }

    pub(super) fn apply(&mut self, request_kwh: f64, demand_kwh: f64, device_max_kwh: f64) -> ApplyResult {
        let request = if request_kwh.is_finite() { request_kwh } else { 0.0 };
        let (lo, hi) = self.feasible_charge(demand_kwh, device_max_kwh);
        let applied = request.clamp(lo, hi);
        let decayed = (1.0 - self.loss_coeff) * self.soc_kwh;
        self.soc_kwh = (decayed + applied).clamp(0.0, self.capacity_kwh);
        let output = demand_kwh + applied;
        let served = output.min(device_max_kwh).max(0.0);
        ApplyResult { applied_kwh: applied, served_kwh: served, unmet_kwh: (output - served).max(0.0) }
    }
}
