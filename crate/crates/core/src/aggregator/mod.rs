//! Central load aggregator: a learnable convolutional filter turns the
//! aggregate net-load window into a target load, the difference to the
//! forecast is the district load shift, and a simplex weight vector splits
//! that shift among buildings. Both are trained with natural evolution
//! strategies on daily returns.

mod nes;
mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use nes::{nes_update, NesCheckpoint, NesConfig, NesState, NesUpdate, Rollout};
pub use simplex::project_simplex;

#[derive(Debug, Error, PartialEq)]
pub enum AggError {
    #[error("window has {got} entries, filter has {expected}")]
    Window { got: usize, expected: usize },
    #[error("expected {expected} rollouts, got {got}")]
    RolloutCount { got: usize, expected: usize },
    #[error("parameter vector has {got} entries, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("demand shares must be nonnegative with a positive sum")]
    Shares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorPolicy {
    pub horizon: usize,
    /// Filter weights over offsets `−T..=T`.
    pub omega: Vec<f64>,
    /// Unconstrained apportionment parameters; `Φ` is their simplex projection.
    pub phi_logits: Vec<f64>,
}

impl AggregatorPolicy {
    /// Moving-average filter and apportionment proportional to `shares`.
    pub fn new(horizon: usize, shares: &[f64]) -> Result<Self, AggError> {
        let total: f64 = shares.iter().sum();
        if shares.is_empty() || shares.iter().any(|s| !(*s >= 0.0)) || !(total > 0.0) {
            return Err(AggError::Shares);
        }
        let w = 2 * horizon + 1;
        Ok(Self { horizon, omega: vec![1.0 / w as f64; w], phi_logits: shares.iter().map(|s| s / total).collect() })
    }

    /// Filter that reproduces the current forecast, commanding no shift.
    pub fn identity(horizon: usize, shares: &[f64]) -> Result<Self, AggError> {
        let mut p = Self::new(horizon, shares)?;
        p.omega.fill(0.0);
        p.omega[horizon] = 1.0;
        Ok(p)
    }

    pub fn n_buildings(&self) -> usize {
        self.phi_logits.len()
    }

    pub fn dim(&self) -> usize {
        self.omega.len() + self.phi_logits.len()
    }

    pub fn phi(&self) -> Vec<f64> {
        project_simplex(&self.phi_logits)
    }

    /// Flat parameter vector `θ = (ω, logits)`.
    pub fn theta(&self) -> Vec<f64> {
        self.omega.iter().chain(&self.phi_logits).copied().collect()
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<(), AggError> {
        if theta.len() != self.dim() {
            return Err(AggError::Dimension { got: theta.len(), expected: self.dim() });
        }
        let w = self.omega.len();
        self.omega.copy_from_slice(&theta[..w]);
        self.phi_logits.copy_from_slice(&theta[w..]);
        Ok(())
    }

    /// District load shift for hours `t..t+T`, from the `T` realized
    /// aggregate net loads before `t` and the `T+1` aggregate forecasts for
    /// `t..=t+T`. Windows reaching past `t+T` repeat the last forecast.
    pub fn plan(&self, past_actual: &[f64], forecast: &[f64]) -> Result<Vec<f64>, AggError> {
        let t = self.horizon;
        if past_actual.len() != t {
            return Err(AggError::Window { got: past_actual.len(), expected: t });
        }
        if forecast.len() != t + 1 {
            return Err(AggError::Window { got: forecast.len(), expected: t + 1 });
        }
        let series: Vec<f64> = past_actual
            .iter()
            .chain(forecast)
            .chain(std::iter::repeat(&forecast[t]).take(t))
            .copied()
            .collect();
        (0..t)
            .map(|l| {
                let target = target_load(&self.omega, &series[l..l + 2 * t + 1])?;
                Ok(load_shift(target, forecast[l]))
            })
            .collect()
    }
}

/// `P̃ = ⟨ω, window⟩`.
pub fn target_load(omega: &[f64], window: &[f64]) -> Result<f64, AggError> {
    if window.len() != omega.len() {
        return Err(AggError::Window { got: window.len(), expected: omega.len() });
    }
    Ok(omega.iter().zip(window).map(|(w, x)| w * x).sum())
}

pub fn load_shift(target: f64, aggregate_forecast: f64) -> f64 {
    target - aggregate_forecast
}

pub fn apportion(delta_p: f64, phi: &[f64]) -> Vec<f64> {
    phi.iter().map(|p| p * delta_p).collect()
}

/// Draws `ε ~ N(0, I)` and returns the policy at `θ + σε` together with `ε`.
pub fn perturb(policy: &AggregatorPolicy, sigma: f64, state: &mut NesState) -> (AggregatorPolicy, Vec<f64>) {
    let eps = state.sample(policy.dim());
    let theta: Vec<f64> = policy.theta().iter().zip(&eps).map(|(t, e)| t + sigma * e).collect();
    let mut p = policy.clone();
    p.set_theta(&theta).expect("same dimension");
    (p, eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorCheckpoint {
    pub policy: AggregatorPolicy,
    pub nes: NesCheckpoint,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_filter_gives_zero_shift() {
        let p = AggregatorPolicy::identity(3, &[1.0, 1.0]).unwrap();
        let dp = p.plan(&[9.0, 8.0, 7.0], &[5.0, 6.0, 1.0, 2.0]).unwrap();
        assert_eq!(dp, vec![0.0; 3]);
    }

    #[test]
    fn uniform_filter_preserves_constants() {
        let p = AggregatorPolicy::new(12, &[1.0]).unwrap();
        let t = target_load(&p.omega, &[4.2; 25]).unwrap();
        assert!((t - 4.2).abs() < 1e-12);
    }

    #[test]
    fn uniform_filter_on_ramp() {
        let p = AggregatorPolicy::new(12, &[1.0]).unwrap();
        let ramp: Vec<f64> = (0..25).map(|v| v as f64).collect();
        assert!((target_load(&p.omega, &ramp).unwrap() - 12.0).abs() < 1e-12);
        assert!(target_load(&p.omega, &ramp[..24]).is_err());
    }

    #[test]
    fn shift_and_apportion() {
        assert_eq!(load_shift(10.0, 12.0), -2.0);
        assert_eq!(load_shift(12.0, 10.0), 2.0);
        assert_eq!(apportion(8.0, &[0.25; 4]), vec![2.0; 4]);
        assert_eq!(apportion(5.0, &[1.0, 0.0, 0.0]), vec![5.0, 0.0, 0.0]);
        let a = apportion(10.0, &[0.5, 0.3, 0.2]);
        for (x, y) in a.iter().zip([5.0, 3.0, 2.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shares_initialize_phi() {
        let p = AggregatorPolicy::new(12, &[30.0, 50.0, 20.0]).unwrap();
        let phi = p.phi();
        for (x, y) in phi.iter().zip([0.3, 0.5, 0.2]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(AggregatorPolicy::new(12, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_sigma_perturbation_is_identity() {
        let p = AggregatorPolicy::new(2, &[1.0, 3.0]).unwrap();
        let mut s = NesState::new(NesConfig::default(), 4, 0);
        let (q, eps) = perturb(&p, 0.0, &mut s);
        assert_eq!(q, p);
        assert_eq!(eps.len(), p.dim());
        assert!(eps.iter().any(|e| *e != 0.0));
    }

    #[test]
    fn perturbed_phi_on_simplex() {
        let p = AggregatorPolicy::new(2, &[1.0, 3.0, 0.0]).unwrap();
        let mut s = NesState::new(NesConfig::default(), 4, 0);
        for _ in 0..50 {
            let (q, _) = perturb(&p, 0.5, &mut s);
            let phi = q.phi();
            assert!(phi.iter().all(|x| *x >= 0.0));
            assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
