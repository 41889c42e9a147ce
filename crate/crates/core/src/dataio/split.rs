use super::{BuildingSeries, ClusterDataset, DataError, HourlyRecord};

/// Months are fixed 30-day blocks of the day of year.
pub const DAYS_PER_MONTH: u32 = 30;

/// 1-based month index of a day of year.
pub fn month_index(day_of_year: u32) -> u32 {
    (day_of_year - 1) / DAYS_PER_MONTH + 1
}

/// Sends odd months to the training (historical) partition and even months
/// to the test (learning) partition. Order within each part is preserved.
pub fn split_odd_even_months(ds: &ClusterDataset) -> Result<(ClusterDataset, ClusterDataset), DataError> {
    let days = ds.n_days();
    let needed = 2 * DAYS_PER_MONTH as usize;
    if days < needed {
        return Err(DataError::TooShort { days, needed });
    }
    let mut train = Vec::with_capacity(ds.buildings.len());
    let mut test = Vec::with_capacity(ds.buildings.len());
    for b in &ds.buildings {
        let (odd, even): (Vec<HourlyRecord>, Vec<HourlyRecord>) =
            b.records.iter().partition(|r| month_index(r.day_of_year) % 2 == 1);
        train.push(BuildingSeries { attributes: b.attributes.clone(), records: odd });
        test.push(BuildingSeries { attributes: b.attributes.clone(), records: even });
    }
    Ok((
        ClusterDataset { climate_zone_id: ds.climate_zone_id, buildings: train },
        ClusterDataset { climate_zone_id: ds.climate_zone_id, buildings: test },
    ))
}
