use serde::{Deserialize, Serialize};

use super::{DeviceKind, Kappa};

/// Eq. 8 style consumption prediction: baseline net forecast plus the
/// electricity drawn (or saved) by each device's thermal shift.
pub fn predict_consumption(p_hat_net: f64, u: &[f64], eta: &[f64]) -> f64 {
    p_hat_net + u.iter().zip(eta).map(|(u, e)| u / e).sum::<f64>()
}

/// One logged control hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub p_hat_net: f64,
    pub p_observed: f64,
    /// Applied (post-clip) thermal charge per device.
    pub u: Vec<f64>,
    pub soc_before: Vec<f64>,
    pub soc_after: Vec<f64>,
}

/// Prediction-error loss `Σ (P̂_t − P_t)²` for the given per-device COPs.
pub fn pem_loss(history: &[HistoryEntry], eta: &[f64]) -> f64 {
    history
        .iter()
        .map(|h| {
            let r = predict_consumption(h.p_hat_net, &h.u, eta) - h.p_observed;
            r * r
        })
        .sum()
}

/// Per-coordinate Adagrad state for `(a, δ, η)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Adagrad {
    pub sum_sq: [f64; 3],
}

pub(crate) const ADAGRAD_EPS: f64 = 1e-8;

impl Adagrad {
    /// Applies one step and returns the per-coordinate effective step sizes.
    pub fn step(&mut self, kappa: &mut Kappa, grad: [f64; 3], lr: f64) -> [f64; 3] {
        let mut eff = [0.0; 3];
        let mut params = [kappa.a, kappa.delta, kappa.eta];
        for k in 0..3 {
            self.sum_sq[k] += grad[k] * grad[k];
            eff[k] = lr / (self.sum_sq[k].sqrt() + ADAGRAD_EPS);
            params[k] -= eff[k] * grad[k];
        }
        kappa.a = params[0];
        kappa.delta = params[1];
        kappa.eta = params[2];
        eff
    }
}

/// Physical ranges enforced after every update.
pub fn project(kappa: &mut Kappa, kind: DeviceKind) {
    kappa.a = kappa.a.clamp(1e-6, 1.0);
    kappa.delta = kappa.delta.max(1e-6);
    let (lo, hi) = kind.eta_range();
    kappa.eta = kappa.eta.clamp(lo, hi);
}

/// Gradients of the prediction loss w.r.t. `η_j` (with `u` fixed) and of
/// the state-of-charge loss `(a·x_t + δ·u_t − x_{t+1})²` w.r.t. `(a, δ)`,
/// for one logged hour and device `j`.
pub fn sample_gradient(entry: &HistoryEntry, eta: &[f64], j: usize, kappa: &Kappa) -> [f64; 3] {
    let r = predict_consumption(entry.p_hat_net, &entry.u, eta) - entry.p_observed;
    let g_eta = 2.0 * r * (-entry.u[j] / (eta[j] * eta[j]));
    let (x, x_next, u) = (entry.soc_before[j], entry.soc_after[j], entry.u[j]);
    let e = kappa.a * x + kappa.delta * u - x_next;
    [2.0 * e * x, 2.0 * e * u, g_eta]
}
