use serde::{Deserialize, Serialize};

use super::ForecastError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub rmse: f64,
    /// Mean absolute percentage error in percent.
    pub mape_pct: f64,
    /// Points left out of the MAPE because `|true| < 1e-6`.
    pub mape_skipped: usize,
}

pub fn score(pred: &[f64], truth: &[f64]) -> Result<Score, ForecastError> {
    if pred.is_empty() {
        return Err(ForecastError::Empty);
    }
    if pred.len() != truth.len() {
        return Err(ForecastError::Shape(format!("{} predictions for {} observations", pred.len(), truth.len())));
    }
    let mut acc = ScoreAccumulator::default();
    for (p, t) in pred.iter().zip(truth) {
        acc.push(*p, *t);
    }
    Ok(acc.finish())
}

/// Streaming version of [`score`] for pooled evaluation.
#[derive(Debug, Clone, Default)]
pub struct ScoreAccumulator {
    n: usize,
    sq: f64,
    ape: f64,
    n_ape: usize,
    skipped: usize,
}

impl ScoreAccumulator {
    pub fn push(&mut self, pred: f64, truth: f64) {
        let e = pred - truth;
        self.n += 1;
        self.sq += e * e;
        if truth.abs() < 1e-6 {
            self.skipped += 1;
        } else {
            self.ape += (e / truth).abs();
            self.n_ape += 1;
        }
    }

    pub fn finish(&self) -> Score {
        Score {
            rmse: if self.n == 0 { f64::NAN } else { (self.sq / self.n as f64).sqrt() },
            mape_pct: if self.n_ape == 0 { f64::NAN } else { 100.0 * self.ape / self.n_ape as f64 },
            mape_skipped: self.skipped,
        }
    }
}

/// Same-hour-yesterday forecast for the `len` hours following `history`.
pub fn persistence_series(history: &[f64], len: usize) -> Result<Vec<f64>, ForecastError> {
    if history.len() < 24 {
        return Err(ForecastError::InsufficientHistory { have: history.len(), need: 24 });
    }
    let base = history.len() - 24;
    Ok((0..len).map(|h| history[base + h % 24]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let s = score(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((s.rmse, s.mape_pct), (0.0, 0.0));
    }

    #[test]
    fn unit_offset_rmse() {
        let t = [3.0, -1.0, 7.5];
        let p: Vec<f64> = t.iter().map(|v| v + 1.0).collect();
        assert!((score(&p, &t).unwrap().rmse - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_example() {
        let s = score(&[1.0, 6.0], &[2.0, 4.0]).unwrap();
        assert!((s.rmse - (2.5f64).sqrt()).abs() < 1e-15);
        assert!((s.mape_pct - 50.0).abs() < 1e-12);
    }

    #[test]
    fn zero_truth_skipped_in_mape() {
        let s = score(&[1.0, 2.0], &[0.0, 1.0]).unwrap();
        assert_eq!(s.mape_skipped, 1);
        assert!((s.mape_pct - 100.0).abs() < 1e-12);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(score(&[], &[]), Err(ForecastError::Empty)));
    }

    #[test]
    fn periodic_series_is_a_fixed_point() {
        let day: Vec<f64> = (0..24).map(|h| (h as f64).sin() + 2.0).collect();
        let hist: Vec<f64> = day.iter().chain(&day).copied().collect();
        assert_eq!(persistence_series(&hist, 24).unwrap(), day);
        assert_eq!(persistence_series(&[4.0; 30], 13).unwrap(), vec![4.0; 13]);
        assert!(persistence_series(&[1.0; 23], 1).is_err());
    }
}
