//! On-disk layout: `attributes.json` holds the climate zone and every
//! building's attributes keyed by building id; `building_<id>.csv` holds the
//! time series with the exact column order in [`CSV_COLUMNS`].

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_consecutive, BuildingAttributes, BuildingSeries, ClusterDataset, DataError, HourlyRecord};

pub const ATTRIBUTES_FILE: &str = "attributes.json";

pub const CSV_COLUMNS: [&str; 11] = [
    "day_of_year",
    "hour_of_day",
    "day_type",
    "outdoor_temp_c",
    "outdoor_rh_pct",
    "diffuse_solar_wm2",
    "direct_solar_wm2",
    "nonshiftable_kwh",
    "cooling_demand_kwh",
    "dhw_demand_kwh",
    "solar_gen_per_unit",
];

#[derive(Serialize, Deserialize)]
struct AttributesDoc {
    climate_zone_id: u32,
    buildings: BTreeMap<String, BuildingAttributes>,
}

fn series_file(id: u32) -> String {
    format!("building_{id}.csv")
}

pub fn write_csv(ds: &ClusterDataset, dir: &Path) -> Result<(), DataError> {
    ds.validate()?;
    fs::create_dir_all(dir)?;
    let doc = AttributesDoc {
        climate_zone_id: ds.climate_zone_id,
        buildings: ds
            .buildings
            .iter()
            .map(|b| (b.attributes.building_id.to_string(), b.attributes.clone()))
            .collect(),
    };
    fs::write(dir.join(ATTRIBUTES_FILE), serde_json::to_string_pretty(&doc)?)?;
    for b in &ds.buildings {
        let path = dir.join(series_file(b.attributes.building_id));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_io(e, &path))?;
        w.write_record(CSV_COLUMNS).map_err(|e| csv_io(e, &path))?;
        for r in &b.records {
            // f64 Display is the shortest representation that round-trips.
            w.write_record([
                r.day_of_year.to_string(),
                r.hour_of_day.to_string(),
                r.day_type.to_string(),
                r.outdoor_temp_c.to_string(),
                r.outdoor_rh_pct.to_string(),
                r.diffuse_solar_wm2.to_string(),
                r.direct_solar_wm2.to_string(),
                r.nonshiftable_kwh.to_string(),
                r.cooling_demand_kwh.to_string(),
                r.dhw_demand_kwh.to_string(),
                r.solar_gen_per_unit.to_string(),
            ])
            .map_err(|e| csv_io(e, &path))?;
        }
        w.flush()?;
    }
    Ok(())
}

fn csv_io(e: csv::Error, path: &Path) -> DataError {
    DataError::Io(std::io::Error::new(std::io::ErrorKind::Other, format!("{}: {e}", path.display())))
}

pub fn read_csv(dir: &Path) -> Result<ClusterDataset, DataError> {
    let doc: AttributesDoc = serde_json::from_str(&fs::read_to_string(dir.join(ATTRIBUTES_FILE))?)?;
    let mut attrs: Vec<BuildingAttributes> = doc.buildings.into_values().collect();
    attrs.sort_by_key(|a| a.building_id);
    let mut buildings = Vec::with_capacity(attrs.len());
    for a in attrs {
        let name = series_file(a.building_id);
        let records = read_series(&dir.join(&name), &name)?;
        buildings.push(BuildingSeries { attributes: a, records });
    }
    let ds = ClusterDataset { climate_zone_id: doc.climate_zone_id, buildings };
    ds.validate()?;
    Ok(ds)
}

fn read_series(path: &Path, name: &str) -> Result<Vec<HourlyRecord>, DataError> {
    let schema = |row: usize, msg: String| DataError::Schema { file: name.to_string(), row, msg };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_io(e, path))?;
    let mut rows = rdr.records();
    let header = rows
        .next()
        .ok_or_else(|| schema(0, "empty file".into()))?
        .map_err(|e| schema(0, e.to_string()))?;
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(schema(0, format!("header {:?} does not match expected columns", header.iter().collect::<Vec<_>>())));
    }
    let mut records = Vec::new();
    // Row numbers count data rows from 1 (the header is row 0).
    for (i, row) in rows.enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| schema(row_no, e.to_string()))?;
        if row.len() != CSV_COLUMNS.len() {
            return Err(schema(row_no, format!("expected {} fields, found {}", CSV_COLUMNS.len(), row.len())));
        }
        let int = |k: usize| -> Result<u32, DataError> {
            row[k].trim().parse::<u32>().map_err(|e| schema(row_no, format!("{}: {e}", CSV_COLUMNS[k])))
        };
        let real = |k: usize| -> Result<f64, DataError> {
            row[k].trim().parse::<f64>().map_err(|e| schema(row_no, format!("{}: {e}", CSV_COLUMNS[k])))
        };
        let rec = HourlyRecord {
            day_of_year: int(0)?,
            hour_of_day: int(1)?,
            day_type: int(2)?,
            outdoor_temp_c: real(3)?,
            outdoor_rh_pct: real(4)?,
            diffuse_solar_wm2: real(5)?,
            direct_solar_wm2: real(6)?,
            nonshiftable_kwh: real(7)?,
            cooling_demand_kwh: real(8)?,
            dhw_demand_kwh: real(9)?,
            solar_gen_per_unit: real(10)?,
        };
        rec.check().map_err(|msg| schema(row_no, msg))?;
        records.push(rec);
    }
    check_consecutive(&records).map_err(|(idx, msg)| DataError::NonMonotone {
        file: name.to_string(),
        row: idx + 1,
        msg,
    })?;
    Ok(records)
}
