use serde::{Deserialize, Serialize};

use super::{BuildingAction, EnvAction, Environment};

/// Fixed time-of-day charge/discharge schedule, expressed as fractions of
/// tank capacity per hour. Windows are inclusive and may wrap midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RbcSchedule {
    pub charge_rate: f64,
    pub charge_start_hour: u32,
    pub charge_end_hour: u32,
    pub discharge_rate: f64,
    pub discharge_start_hour: u32,
    pub discharge_end_hour: u32,
}

impl Default for RbcSchedule {
    fn default() -> Self {
        Self {
            charge_rate: 0.10,
            charge_start_hour: 22,
            charge_end_hour: 6,
            discharge_rate: 0.08,
            discharge_start_hour: 9,
            discharge_end_hour: 20,
        }
    }
}

fn in_window(hour: u32, start: u32, end: u32) -> bool {
    if start <= end {
        (start..=end).contains(&hour)
    } else {
        hour >= start || hour <= end
    }
}

impl RbcSchedule {
    /// Signed command as a fraction of capacity.
    pub fn fraction(&self, hour_of_day: u32) -> f64 {
        if in_window(hour_of_day, self.charge_start_hour, self.charge_end_hour) {
            self.charge_rate
        } else if in_window(hour_of_day, self.discharge_start_hour, self.discharge_end_hour) {
            -self.discharge_rate
        } else {
            0.0
        }
    }

    pub fn action(&self, hour_of_day: u32, env: &Environment<'_>) -> EnvAction {
        let f = self.fraction(hour_of_day);
        EnvAction {
            buildings: env
                .dataset()
                .buildings
                .iter()
                .map(|b| BuildingAction {
                    cooling_charge_kwh: f * b.attributes.cooling_tank_capacity_kwh,
                    dhw_charge_kwh: b.attributes.has_dhw_tank.then(|| f * b.attributes.dhw_tank_capacity_kwh),
                })
                .collect(),
        }
    }
}

pub fn no_storage_policy(n_buildings: usize) -> EnvAction {
    EnvAction::zeros(n_buildings)
}
