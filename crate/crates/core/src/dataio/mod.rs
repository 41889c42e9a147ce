//! Cluster datasets: schema, synthetic generation, CSV storage and the
//! odd/even-month train/test split.

mod csvio;
mod generate;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csvio::{read_csv, write_csv, ATTRIBUTES_FILE, CSV_COLUMNS};
pub use generate::generate_synthetic_cluster;
pub use split::{month_index, split_odd_even_months, DAYS_PER_MONTH};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("dataset too short for split: {days} days, need at least {needed}")]
    TooShort { days: usize, needed: usize },
    #[error("{file}: row {row}: schema error: {msg}")]
    Schema { file: String, row: usize, msg: String },
    #[error("{file}: row {row}: timestamps not consecutive: {msg}")]
    NonMonotone { file: String, row: usize, msg: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildingType {
    Office,
    Retail,
    Restaurant,
    Residential,
}

impl BuildingType {
    pub const ALL: [BuildingType; 4] = [
        BuildingType::Office,
        BuildingType::Retail,
        BuildingType::Restaurant,
        BuildingType::Residential,
    ];

    /// Integer code used as a model feature.
    pub fn code(self) -> u8 {
        match self {
            BuildingType::Office => 1,
            BuildingType::Retail => 2,
            BuildingType::Restaurant => 3,
            BuildingType::Residential => 4,
        }
    }
}

/// Climate archetype of a synthetic cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneProfile {
    HotHumid,
    HotDry,
    Mixed,
    Marine,
}

impl ZoneProfile {
    pub const ALL: [ZoneProfile; 4] = [
        ZoneProfile::HotHumid,
        ZoneProfile::HotDry,
        ZoneProfile::Mixed,
        ZoneProfile::Marine,
    ];

    pub fn zone_id(self) -> u32 {
        match self {
            ZoneProfile::HotHumid => 1,
            ZoneProfile::HotDry => 2,
            ZoneProfile::Mixed => 3,
            ZoneProfile::Marine => 4,
        }
    }
}

impl std::str::FromStr for ZoneProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hot_humid" | "1" => Ok(ZoneProfile::HotHumid),
            "hot_dry" | "2" => Ok(ZoneProfile::HotDry),
            "mixed" | "3" => Ok(ZoneProfile::Mixed),
            "marine" | "4" => Ok(ZoneProfile::Marine),
            other => Err(format!("unknown zone profile `{other}`")),
        }
    }
}

/// Static description of one building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingAttributes {
    pub building_id: u32,
    pub building_type: BuildingType,
    /// Installed PV capacity in kW.
    pub solar_capacity_kw: f64,
    pub has_dhw_tank: bool,
    pub cooling_tank_capacity_kwh: f64,
    /// Zero when the building has no DHW tank.
    pub dhw_tank_capacity_kwh: f64,
    /// Rated electric power of the heat pump feeding the chilled water tank.
    pub heat_pump_rated_kw: f64,
    /// Rated electric power of the DHW heater; zero without a DHW tank.
    pub heater_rated_kw: f64,
    pub annual_cooling_kwh: f64,
    pub annual_dhw_kwh: f64,
    pub annual_electric_kwh: f64,
}

impl BuildingAttributes {
    pub fn validate(&self) -> Result<(), String> {
        let nonneg = [
            ("solar_capacity_kw", self.solar_capacity_kw),
            ("dhw_tank_capacity_kwh", self.dhw_tank_capacity_kwh),
            ("heater_rated_kw", self.heater_rated_kw),
            ("annual_cooling_kwh", self.annual_cooling_kwh),
            ("annual_dhw_kwh", self.annual_dhw_kwh),
            ("annual_electric_kwh", self.annual_electric_kwh),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("building {}: {name} must be >= 0, got {v}", self.building_id));
            }
        }
        if !(self.cooling_tank_capacity_kwh > 0.0) || !(self.heat_pump_rated_kw > 0.0) {
            return Err(format!(
                "building {}: cooling tank capacity and heat pump rating must be positive",
                self.building_id
            ));
        }
        let dhw_fields_zero = self.dhw_tank_capacity_kwh == 0.0 && self.heater_rated_kw == 0.0;
        if self.has_dhw_tank {
            if !(self.dhw_tank_capacity_kwh > 0.0 && self.heater_rated_kw > 0.0) {
                return Err(format!(
                    "building {}: DHW tank present but capacity/heater rating not positive",
                    self.building_id
                ));
            }
        } else if !dhw_fields_zero {
            return Err(format!(
                "building {}: DHW fields must be zero without a DHW tank",
                self.building_id
            ));
        }
        Ok(())
    }
}

/// One hour of exogenous data for one building.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlyRecord {
    pub day_of_year: u32,
    pub hour_of_day: u32,
    /// 1..=7 weekday (Monday = 1), 8 = holiday.
    pub day_type: u32,
    pub outdoor_temp_c: f64,
    pub outdoor_rh_pct: f64,
    pub diffuse_solar_wm2: f64,
    pub direct_solar_wm2: f64,
    pub nonshiftable_kwh: f64,
    pub cooling_demand_kwh: f64,
    pub dhw_demand_kwh: f64,
    /// PV output per installed kW during this hour (kWh/kW).
    pub solar_gen_per_unit: f64,
}

impl HourlyRecord {
    /// Returns the offending field name when an invariant is broken.
    pub fn check(&self) -> Result<(), String> {
        if !(1..=365).contains(&self.day_of_year) {
            return Err(format!("day_of_year {} outside 1..=365", self.day_of_year));
        }
        if self.hour_of_day > 23 {
            return Err(format!("hour_of_day {} outside 0..=23", self.hour_of_day));
        }
        if !(1..=8).contains(&self.day_type) {
            return Err(format!("day_type {} outside 1..=8", self.day_type));
        }
        if !(0.0..=100.0).contains(&self.outdoor_rh_pct) {
            return Err(format!("outdoor_rh_pct {} outside 0..=100", self.outdoor_rh_pct));
        }
        if !self.outdoor_temp_c.is_finite() {
            return Err("outdoor_temp_c is not finite".into());
        }
        let energy = [
            ("diffuse_solar_wm2", self.diffuse_solar_wm2),
            ("direct_solar_wm2", self.direct_solar_wm2),
            ("nonshiftable_kwh", self.nonshiftable_kwh),
            ("cooling_demand_kwh", self.cooling_demand_kwh),
            ("dhw_demand_kwh", self.dhw_demand_kwh),
            ("solar_gen_per_unit", self.solar_gen_per_unit),
        ];
        for (name, v) in energy {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Absolute hour index within the year.
    pub fn hour_index(&self) -> u32 {
        (self.day_of_year - 1) * 24 + self.hour_of_day
    }
}

/// A building together with its hour-aligned time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingSeries {
    pub attributes: BuildingAttributes,
    pub records: Vec<HourlyRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDataset {
    pub climate_zone_id: u32,
    pub buildings: Vec<BuildingSeries>,
}

impl ClusterDataset {
    pub fn n_buildings(&self) -> usize {
        self.buildings.len()
    }

    /// Number of hourly steps (identical across buildings).
    pub fn len(&self) -> usize {
        self.buildings.first().map_or(0, |b| b.records.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_days(&self) -> usize {
        self.len() / 24
    }

    /// Checks the structural invariants: at least one building, uniform
    /// length, whole days, hour alignment and per-record validity.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.buildings.is_empty() {
            return Err(DataError::Invalid("dataset has no buildings".into()));
        }
        let n = self.len();
        if n == 0 || n % 24 != 0 {
            return Err(DataError::Invalid(format!("series length {n} is not a positive multiple of 24")));
        }
        let reference = &self.buildings[0].records;
        for b in &self.buildings {
            b.attributes.validate().map_err(DataError::Invalid)?;
            if b.records.len() != n {
                return Err(DataError::Invalid(format!(
                    "building {} has {} records, expected {n}",
                    b.attributes.building_id,
                    b.records.len()
                )));
            }
            for (row, (r, r0)) in b.records.iter().zip(reference).enumerate() {
                r.check().map_err(|msg| DataError::Invalid(format!("building {} row {row}: {msg}", b.attributes.building_id)))?;
                if (r.day_of_year, r.hour_of_day) != (r0.day_of_year, r0.hour_of_day) {
                    return Err(DataError::Invalid(format!(
                        "building {} row {row} not hour-aligned with building {}",
                        b.attributes.building_id, self.buildings[0].attributes.building_id
                    )));
                }
            }
            check_consecutive(&b.records).map_err(|(row, msg)| DataError::NonMonotone {
                file: format!("building {}", b.attributes.building_id),
                row,
                msg,
            })?;
        }
        Ok(())
    }
}

/// Hours must run 0..=23 within a day and days must strictly increase.
/// Whole-day gaps are allowed so that split partitions stay valid datasets.
pub(crate) fn check_consecutive(records: &[HourlyRecord]) -> Result<(), (usize, String)> {
    let Some(first) = records.first() else {
        return Ok(());
    };
    if first.hour_of_day != 0 {
        return Err((0, format!("series starts at hour {} instead of 0", first.hour_of_day)));
    }
    for (row, pair) in records.windows(2).enumerate() {
        let (prev, cur) = (&pair[0], &pair[1]);
        let ok = if prev.hour_of_day == 23 {
            cur.hour_of_day == 0 && cur.day_of_year > prev.day_of_year
        } else {
            cur.day_of_year == prev.day_of_year && cur.hour_of_day == prev.hour_of_day + 1
        };
        if !ok {
            return Err((
                row + 1,
                format!(
                    "(day {}, hour {}) follows (day {}, hour {})",
                    cur.day_of_year, cur.hour_of_day, prev.day_of_year, prev.hour_of_day
                ),
            ));
        }
    }
    if records.last().map(|r| r.hour_of_day) != Some(23) {
        return Err((records.len() - 1, "series does not end at hour 23".into()));
    }
    Ok(())
}
