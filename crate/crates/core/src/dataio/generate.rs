use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    BuildingAttributes, BuildingSeries, BuildingType, ClusterDataset, DataError, HourlyRecord, ZoneProfile,
};

/// Conservative COP used only to size heat pumps so they can always cover the
/// hottest hour with margin.
const SIZING_COP: f64 = 1.5;
/// Storage capacity in hours of peak demand.
const TANK_HOURS_OF_PEAK: f64 = 3.0;

struct Climate {
    mean_temp: f64,
    seasonal_amp: f64,
    diurnal_amp: f64,
    rh_base: f64,
    cloud_mean: f64,
}

impl ZoneProfile {
    fn climate(self) -> Climate {
        match self {
            ZoneProfile::HotHumid => Climate { mean_temp: 24.0, seasonal_amp: 5.0, diurnal_amp: 4.0, rh_base: 75.0, cloud_mean: 0.35 },
            ZoneProfile::HotDry => Climate { mean_temp: 22.0, seasonal_amp: 9.0, diurnal_amp: 8.0, rh_base: 30.0, cloud_mean: 0.1 },
            ZoneProfile::Mixed => Climate { mean_temp: 16.0, seasonal_amp: 10.0, diurnal_amp: 5.0, rh_base: 60.0, cloud_mean: 0.35 },
            ZoneProfile::Marine => Climate { mean_temp: 15.0, seasonal_amp: 6.0, diurnal_amp: 4.0, rh_base: 78.0, cloud_mean: 0.5 },
        }
    }
}

struct WeatherHour {
    temp: f64,
    rh: f64,
    diffuse: f64,
    direct: f64,
    gen_per_unit: f64,
}

fn weather_series(seed: u64, zone: ZoneProfile, n_days: usize) -> Vec<WeatherHour> {
    let c = zone.climate();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(zone.zone_id()));
    let daily = Normal::new(0.0, 2.0).unwrap();
    let hourly = Normal::new(0.0, 0.4).unwrap();
    let rh_noise = Normal::new(0.0, 3.0).unwrap();

    let mut out = Vec::with_capacity(n_days * 24);
    let mut anomaly = 0.0;
    for d in 0..n_days {
        let doy = (d + 1) as f64;
        anomaly = 0.7 * anomaly + daily.sample(&mut rng);
        let cloud: f64 = rng.gen_range(0.0..(2.0 * c.cloud_mean)).min(1.0);
        let season = -(2.0 * PI * (doy - 20.0) / 365.0).cos();
        let day_mean = c.mean_temp + c.seasonal_amp * season + anomaly;
        let solar_season = 0.8 + 0.2 * season;
        for h in 0..24 {
            let hf = h as f64;
            let temp = day_mean + c.diurnal_amp * (2.0 * PI * (hf - 9.0) / 24.0).sin() + hourly.sample(&mut rng);
            let rh = (c.rh_base - 1.5 * (temp - day_mean) + rh_noise.sample(&mut rng)).clamp(5.0, 100.0);
            let clear = if h > 6 && h < 18 { (PI * (hf - 6.0) / 12.0).sin() } else { 0.0 };
            let direct = 750.0 * solar_season * clear * (1.0 - cloud);
            let diffuse = 150.0 * solar_season * clear * (0.4 + 0.6 * cloud);
            let derate = 1.0 - 0.004 * (temp - 25.0).max(0.0);
            let gen_per_unit = 0.8 * (direct + diffuse) / 1000.0 * derate;
            out.push(WeatherHour { temp, rh, diffuse, direct, gen_per_unit });
        }
    }
    out
}

struct LoadShape {
    base_kwh: f64,
    diurnal_amp: f64,
    peak_hour: f64,
    weekend_factor: f64,
    cooling_gain: f64,
    balance_temp: f64,
    dhw_base: f64,
}

fn draw_shape(rng: &mut ChaCha8Rng, kind: BuildingType) -> LoadShape {
    let (peak_hour, weekend_factor, balance) = match kind {
        BuildingType::Office => (13.0, 0.6, rng.gen_range(12.0..16.0)),
        BuildingType::Retail => (15.0, 1.1, rng.gen_range(14.0..18.0)),
        BuildingType::Restaurant => (17.0, 1.2, rng.gen_range(14.0..18.0)),
        BuildingType::Residential => (19.0, 1.15, rng.gen_range(17.0..21.0)),
    };
    LoadShape {
        base_kwh: rng.gen_range(6.0..25.0),
        diurnal_amp: rng.gen_range(0.3..0.6),
        peak_hour,
        weekend_factor,
        cooling_gain: rng.gen_range(1.5..5.0),
        balance_temp: balance,
        dhw_base: rng.gen_range(1.5..6.0),
    }
}

fn day_type_of(day_index: usize) -> u32 {
    (day_index % 7) as u32 + 1
}

/// Generates a deterministic synthetic cluster with diurnal and seasonal
/// structure, temperature-driven cooling demand and PV output that is zero
/// whenever there is no irradiance.
pub fn generate_synthetic_cluster(
    seed: u64,
    n_buildings: usize,
    n_days: usize,
    zone: ZoneProfile,
) -> Result<ClusterDataset, DataError> {
    if n_buildings == 0 {
        return Err(DataError::InvalidRequest("n_buildings must be >= 1".into()));
    }
    if n_days < 2 {
        return Err(DataError::InvalidRequest(format!("n_days must be >= 2, got {n_days}")));
    }
    if n_days > 365 {
        return Err(DataError::InvalidRequest(format!("n_days must be <= 365, got {n_days}")));
    }

    let weather = weather_series(seed, zone, n_days);
    let annualize = 365.0 / n_days as f64;
    let mut buildings = Vec::with_capacity(n_buildings);
    for b in 0..n_buildings {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1000 * u64::from(zone.zone_id()) + b as u64 + 1);

        let kind = BuildingType::ALL[rng.gen_range(0..BuildingType::ALL.len())];
        let shape = draw_shape(&mut rng, kind);
        let has_dhw = match kind {
            BuildingType::Residential | BuildingType::Restaurant => true,
            _ => rng.gen_bool(0.3),
        };
        let solar_capacity_kw = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(5.0..30.0) };

        let load_noise = Normal::new(0.0, 0.05 * shape.base_kwh).unwrap();
        let cool_noise = Normal::new(0.0, 0.08 * shape.cooling_gain).unwrap();
        let dhw_noise = Normal::new(0.0, 0.08 * shape.dhw_base).unwrap();

        let mut records = Vec::with_capacity(n_days * 24);
        for d in 0..n_days {
            let day_type = day_type_of(d);
            let weekly = if day_type >= 6 { shape.weekend_factor } else { 1.0 };
            for h in 0..24 {
                let w = &weather[d * 24 + h];
                let hf = h as f64;
                let diurnal = 1.0 + shape.diurnal_amp * (2.0 * PI * (hf - shape.peak_hour + 6.0) / 24.0).sin();
                let nonshiftable = (shape.base_kwh * diurnal * weekly + load_noise.sample(&mut rng)).max(0.0);
                let cooling =
                    ((shape.cooling_gain * (w.temp - shape.balance_temp)).max(0.0) + cool_noise.sample(&mut rng)).max(0.0);
                let dhw = if has_dhw {
                    let profile = 0.3 + (-(hf - 7.0).powi(2) / 2.0).exp() + 0.8 * (-(hf - 19.0).powi(2) / 4.0).exp();
                    (shape.dhw_base * profile + dhw_noise.sample(&mut rng)).max(0.0)
                } else {
                    0.0
                };
                records.push(HourlyRecord {
                    day_of_year: d as u32 + 1,
                    hour_of_day: h as u32,
                    day_type,
                    outdoor_temp_c: w.temp,
                    outdoor_rh_pct: w.rh,
                    diffuse_solar_wm2: w.diffuse,
                    direct_solar_wm2: w.direct,
                    nonshiftable_kwh: nonshiftable,
                    cooling_demand_kwh: cooling,
                    dhw_demand_kwh: dhw,
                    solar_gen_per_unit: w.gen_per_unit,
                });
            }
        }

        let max_cooling = records.iter().map(|r| r.cooling_demand_kwh).fold(0.0_f64, f64::max).max(1.0);
        let max_dhw = records.iter().map(|r| r.dhw_demand_kwh).fold(0.0_f64, f64::max);
        let total = |f: fn(&HourlyRecord) -> f64| records.iter().map(f).sum::<f64>() * annualize;
        let attributes = BuildingAttributes {
            building_id: b as u32 + 1,
            building_type: kind,
            solar_capacity_kw,
            has_dhw_tank: has_dhw,
            cooling_tank_capacity_kwh: TANK_HOURS_OF_PEAK * max_cooling,
            dhw_tank_capacity_kwh: if has_dhw { TANK_HOURS_OF_PEAK * max_dhw.max(0.5) } else { 0.0 },
            heat_pump_rated_kw: 1.2 * max_cooling / SIZING_COP,
            heater_rated_kw: if has_dhw { 1.5 * max_dhw.max(0.5) } else { 0.0 },
            annual_cooling_kwh: total(|r| r.cooling_demand_kwh),
            annual_dhw_kwh: total(|r| r.dhw_demand_kwh),
            annual_electric_kwh: total(|r| r.nonshiftable_kwh),
        };
        buildings.push(BuildingSeries { attributes, records });
    }

    Ok(ClusterDataset { climate_zone_id: zone.zone_id(), buildings })
}
