use std::f64::consts::TAU;

use crate::dataio::HourlyRecord;
use crate::simenv::{baseline_total_load, EnvConfig};

/// Calendar and weather columns, in order, preceding the lag block.
pub const BASE_FEATURES: [&str; 9] = [
    "outdoor_temp_c",
    "outdoor_rh_pct",
    "diffuse_solar_wm2",
    "direct_solar_wm2",
    "hour_sin",
    "hour_cos",
    "day_sin",
    "day_cos",
    "weekend",
];

/// Column names for a model with `lags` lagged targets.
pub fn feature_names(lags: usize) -> Vec<String> {
    let mut names: Vec<String> = BASE_FEATURES.iter().map(|s| s.to_string()).collect();
    names.extend((1..=lags).map(|l| format!("target_lag_{l}")));
    names.push("nonshiftable_lag_1".into());
    names.push("solar_gen_lag_1".into());
    names
}

pub fn n_features(lags: usize) -> usize {
    BASE_FEATURES.len() + lags + 2
}

/// Hourly series of one building as seen by the forecaster: an optional
/// history prefix followed by the records being forecast. Index 0 of the
/// public API refers to the first non-prefix record.
#[derive(Debug, Clone)]
pub struct BuildingHistory {
    pub(crate) records: Vec<HourlyRecord>,
    pub(crate) total: Vec<f64>,
    pub(crate) cooling: Vec<f64>,
    pub(crate) dhw: Vec<f64>,
    pub(crate) gen: Vec<f64>,
    pub(crate) nonshiftable: Vec<f64>,
    /// First index of the contiguous (gap-free) run containing each index.
    pub(crate) run_start: Vec<usize>,
    pub(crate) offset: usize,
}

#[derive(Clone, Copy)]
pub(crate) enum Target {
    Total,
    Cooling,
    Dhw,
    Gen,
}

impl BuildingHistory {
    pub fn new(prefix: &[HourlyRecord], records: &[HourlyRecord], env: &EnvConfig) -> Self {
        let all: Vec<HourlyRecord> = prefix.iter().chain(records).copied().collect();
        let mut run_start = Vec::with_capacity(all.len());
        for (i, r) in all.iter().enumerate() {
            let contiguous = i > 0 && {
                let p = &all[i - 1];
                (r.day_of_year == p.day_of_year && r.hour_of_day == p.hour_of_day + 1)
                    || (r.day_of_year == p.day_of_year + 1 && r.hour_of_day == 0 && p.hour_of_day == 23)
            };
            run_start.push(if contiguous { run_start[i - 1] } else { i });
        }
        Self {
            total: all.iter().map(|r| baseline_total_load(r, env)).collect(),
            cooling: all.iter().map(|r| r.cooling_demand_kwh).collect(),
            dhw: all.iter().map(|r| r.dhw_demand_kwh).collect(),
            gen: all.iter().map(|r| r.solar_gen_per_unit).collect(),
            nonshiftable: all.iter().map(|r| r.nonshiftable_kwh).collect(),
            records: all,
            run_start,
            offset: prefix.len(),
        }
    }

    /// Number of forecastable (non-prefix) hours.
    pub fn len(&self) -> usize {
        self.records.len() - self.offset
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn series(&self, target: Target) -> &[f64] {
        match target {
            Target::Total => &self.total,
            Target::Cooling => &self.cooling,
            Target::Dhw => &self.dhw,
            Target::Gen => &self.gen,
        }
    }

    /// Observed baseline total load at public index `t`.
    pub fn total_at(&self, t: usize) -> f64 {
        self.total[self.clamp(t as isize + self.offset as isize)]
    }

    pub(crate) fn clamp(&self, i: isize) -> usize {
        i.clamp(0, self.records.len() as isize - 1) as usize
    }

    /// Appends the feature row for predicting `target` at internal index
    /// `t + h` from information available at the start of hour `t`.
    /// Weather at the target hour is treated as a known forecast.
    pub(crate) fn push_features(&self, out: &mut Vec<f64>, target: Target, t: usize, h: usize, lags: usize) {
        let r = &self.records[self.clamp((t + h) as isize)];
        let hour = TAU * r.hour_of_day as f64 / 24.0;
        let day = TAU * (r.day_of_year as f64 - 1.0) / 365.0;
        out.extend([
            r.outdoor_temp_c,
            r.outdoor_rh_pct,
            r.diffuse_solar_wm2,
            r.direct_solar_wm2,
            hour.sin(),
            hour.cos(),
            day.sin(),
            day.cos(),
            if r.day_type >= 6 { 1.0 } else { 0.0 },
        ]);
        let y = self.series(target);
        for l in 1..=lags {
            out.push(y[self.clamp(t as isize - l as isize)]);
        }
        let prev = self.clamp(t as isize - 1);
        out.push(self.nonshiftable[prev]);
        out.push(self.gen[prev]);
    }
}
