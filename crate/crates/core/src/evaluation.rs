//! Grid-level cost metrics, normalization against the rule-based baseline
//! and the per-day return that drives the aggregator's learning.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::DAYS_PER_MONTH;

pub const HOURS_PER_DAY: usize = 24;
/// Load-factor window: one 30-day block.
pub const LOAD_FACTOR_WINDOW_HOURS: usize = DAYS_PER_MONTH as usize * HOURS_PER_DAY;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty series")]
    Empty,
    #[error("series length {0} is not a multiple of 24")]
    PartialDay(usize),
    #[error("baseline metric `{name}` is {value}, must be > 0")]
    NonPositiveBaseline { name: &'static str, value: f64 },
    #[error("day series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// The five raw environment metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub net_consumption_kwh: f64,
    pub one_minus_load_factor: f64,
    pub ramping_kwh: f64,
    pub avg_daily_peak_kw: f64,
    pub annual_peak_kw: f64,
    /// Load-factor blocks skipped because their load was identically zero.
    pub skipped_lf_blocks: usize,
}

impl Metrics {
    pub const NAMES: [&'static str; 5] =
        ["net_consumption", "one_minus_load_factor", "ramping", "avg_daily_peak", "annual_peak"];

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.net_consumption_kwh,
            self.one_minus_load_factor,
            self.ramping_kwh,
            self.avg_daily_peak_kw,
            self.annual_peak_kw,
        ]
    }
}

/// District load: building sum clipped at zero (no export credit).
pub fn district_load(per_building: &[f64]) -> f64 {
    per_building.iter().sum::<f64>().max(0.0)
}

fn ramping(d: &[f64]) -> f64 {
    d.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

fn max_of(d: &[f64]) -> f64 {
    d.iter().copied().fold(0.0_f64, f64::max)
}

fn one_minus_lf(block: &[f64]) -> Option<f64> {
    let peak = max_of(block);
    if peak <= 0.0 {
        return None;
    }
    let mean = block.iter().sum::<f64>() / block.len() as f64;
    Some(1.0 - mean / peak)
}

/// Computes the five metrics over an hourly district series. Values are
/// clipped at zero before any metric is evaluated.
pub fn compute_metrics(district: &[f64]) -> Result<Metrics, EvalError> {
    if district.is_empty() {
        return Err(EvalError::Empty);
    }
    if district.len() % HOURS_PER_DAY != 0 {
        return Err(EvalError::PartialDay(district.len()));
    }
    let d: Vec<f64> = district.iter().map(|x| x.max(0.0)).collect();

    let mut lf_sum = 0.0;
    let mut lf_count = 0usize;
    let mut skipped = 0usize;
    for block in d.chunks(LOAD_FACTOR_WINDOW_HOURS) {
        match one_minus_lf(block) {
            Some(v) => {
                lf_sum += v;
                lf_count += 1;
            }
            None => skipped += 1,
        }
    }
    let days = d.len() / HOURS_PER_DAY;
    let daily_peaks: f64 = d.chunks(HOURS_PER_DAY).map(max_of).sum();

    Ok(Metrics {
        net_consumption_kwh: d.iter().sum(),
        one_minus_load_factor: if lf_count > 0 { lf_sum / lf_count as f64 } else { 0.0 },
        ramping_kwh: ramping(&d),
        avg_daily_peak_kw: daily_peaks / days as f64,
        annual_peak_kw: max_of(&d),
        skipped_lf_blocks: skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub raw: Metrics,
    pub baseline: Metrics,
    /// Candidate / baseline, in [`Metrics::NAMES`] order.
    pub ratios: [f64; 5],
    /// Arithmetic mean of the five ratios.
    pub total_cost: f64,
}

impl CostReport {
    pub fn named_ratios(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        Metrics::NAMES.iter().copied().zip(self.ratios.iter().copied())
    }
}

pub fn normalized_cost(candidate: &Metrics, rbc: &Metrics) -> Result<CostReport, EvalError> {
    let c = candidate.as_array();
    let b = rbc.as_array();
    let mut ratios = [0.0; 5];
    for k in 0..5 {
        if !(b[k] > 0.0) {
            return Err(EvalError::NonPositiveBaseline { name: Metrics::NAMES[k], value: b[k] });
        }
        ratios[k] = c[k] / b[k];
    }
    let total_cost = ratios.iter().sum::<f64>() / 5.0;
    Ok(CostReport { raw: *candidate, baseline: *rbc, ratios, total_cost })
}

/// Daily proxy return: the negative mean of the net, ramping, peak and
/// 1-load-factor ratios against the baseline's same day. Ratios whose
/// baseline value is zero are skipped; a day with no usable ratio scores as
/// the baseline (-1).
pub fn daily_return(candidate_day: &[f64], rbc_day: &[f64]) -> Result<f64, EvalError> {
    if candidate_day.len() != rbc_day.len() {
        return Err(EvalError::LengthMismatch(candidate_day.len(), rbc_day.len()));
    }
    if candidate_day.is_empty() {
        return Err(EvalError::Empty);
    }
    let day_metrics = |d: &[f64]| -> [f64; 4] {
        let d: Vec<f64> = d.iter().map(|x| x.max(0.0)).collect();
        [d.iter().sum(), ramping(&d), max_of(&d), one_minus_lf(&d).unwrap_or(0.0)]
    };
    let c = day_metrics(candidate_day);
    let b = day_metrics(rbc_day);
    let ratios: Vec<f64> = c.iter().zip(&b).filter(|(_, b)| **b > 0.0).map(|(c, b)| c / b).collect();
    if ratios.is_empty() {
        return Ok(-1.0);
    }
    Ok(-ratios.iter().sum::<f64>() / ratios.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day_shape() -> Vec<f64> {
        (0..24).map(|h| 10.0 + 5.0 * ((h as f64) / 24.0 * std::f64::consts::TAU).sin()).collect()
    }

    #[test]
    fn constant_load() {
        let m = compute_metrics(&[5.0; 48]).unwrap();
        assert_eq!(m.ramping_kwh, 0.0);
        assert_eq!(m.one_minus_load_factor, 0.0);
        assert_eq!(m.avg_daily_peak_kw, 5.0);
        assert_eq!(m.annual_peak_kw, 5.0);
        assert_eq!(m.net_consumption_kwh, 240.0);
    }

    #[test]
    fn impulse_ramping() {
        let mut d = [0.0; 24];
        d[7] = 1.0;
        assert_eq!(compute_metrics(&d).unwrap().ramping_kwh, 2.0);
    }

    #[test]
    fn zero_block_skipped() {
        let mut d = vec![0.0; LOAD_FACTOR_WINDOW_HOURS];
        d.extend(day_shape());
        let m = compute_metrics(&d).unwrap();
        assert_eq!(m.skipped_lf_blocks, 1);
        assert!(m.one_minus_load_factor > 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(compute_metrics(&[]), Err(EvalError::Empty));
        assert_eq!(compute_metrics(&[1.0; 25]), Err(EvalError::PartialDay(25)));
        let m = compute_metrics(&[0.0; 24]).unwrap();
        assert!(normalized_cost(&m, &m).is_err());
    }

    #[test]
    fn self_normalization_and_halving() {
        let d: Vec<f64> = (0..10).flat_map(|_| day_shape()).collect();
        let m = compute_metrics(&d).unwrap();
        let r = normalized_cost(&m, &m).unwrap();
        assert_eq!(r.ratios, [1.0; 5]);
        assert_eq!(r.total_cost, 1.0);
        let half = Metrics {
            net_consumption_kwh: m.net_consumption_kwh / 2.0,
            one_minus_load_factor: m.one_minus_load_factor / 2.0,
            ramping_kwh: m.ramping_kwh / 2.0,
            avg_daily_peak_kw: m.avg_daily_peak_kw / 2.0,
            annual_peak_kw: m.annual_peak_kw / 2.0,
            skipped_lf_blocks: 0,
        };
        assert!((normalized_cost(&half, &m).unwrap().total_cost - 0.5).abs() < 1e-15);
    }

    #[test]
    fn daily_return_examples() {
        let rbc = day_shape();
        assert_eq!(daily_return(&rbc, &rbc).unwrap(), -1.0);
        let half: Vec<f64> = rbc.iter().map(|x| x / 2.0).collect();
        assert!((daily_return(&half, &rbc).unwrap() + 0.625).abs() < 1e-12);
    }

    #[test]
    fn improvement_increases_return() {
        let rbc = day_shape();
        let mut better = rbc.clone();
        // Lower the peak only: net, peak and ramping all drop.
        let (imax, _) = better.iter().enumerate().fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        better[imax] -= 0.5;
        assert!(daily_return(&better, &rbc).unwrap() > daily_return(&rbc, &rbc).unwrap());
    }

    proptest! {
        #[test]
        fn permutation_within_day(mut day in proptest::collection::vec(0.0f64..50.0, 24), seed in 0u64..1000) {
            let m0 = compute_metrics(&day).unwrap();
            // Deterministic shuffle.
            let n = day.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                day.swap(i, (s >> 33) as usize % (i + 1));
            }
            let m1 = compute_metrics(&day).unwrap();
            prop_assert!((m0.net_consumption_kwh - m1.net_consumption_kwh).abs() < 1e-9);
            prop_assert!((m0.one_minus_load_factor - m1.one_minus_load_factor).abs() < 1e-12);
            prop_assert_eq!(m0.avg_daily_peak_kw, m1.avg_daily_peak_kw);
            prop_assert_eq!(m0.annual_peak_kw, m1.annual_peak_kw);
        }

        #[test]
        fn scaling_candidate_scales_ratios(c in 0.1f64..5.0) {
            let rbc = day_shape();
            let scaled: Vec<f64> = rbc.iter().map(|x| c * x).collect();
            // net, ramping and peak scale by c; 1-LF is scale invariant.
            let expected = -(3.0 * c + 1.0) / 4.0;
            prop_assert!((daily_return(&scaled, &rbc).unwrap() - expected).abs() < 1e-9);
        }
    }
}
