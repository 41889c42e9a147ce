//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

pub mod qp_oracle;

use rand::Rng;
use tclflex_core::qpsolver::{DeviceBlock, TrackingProblem};
use tclflex_core::vbattery::VirtualBattery;

/// Random tracking problem mixing tank and deadband devices; `U = 0` is
/// always feasible.
pub fn random_tracking_problem<R: Rng>(rng: &mut R, horizon: usize, n_devices: usize) -> TrackingProblem {
    let devices = (0..n_devices)
        .map(|_| {
            let eta: Vec<f64> = (0..horizon).map(|_| rng.gen_range(1.0..6.0)).collect();
            let q0: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.0..5.0)).collect();
            let need = q0.iter().zip(&eta).map(|(q, e)| q / e).fold(0.0, f64::max);
            let pmax = need * rng.gen_range(1.0..3.0) + 0.05;
            let vb = if rng.gen_bool(0.7) {
                let cap = rng.gen_range(1.0..20.0);
                let x0 = if rng.gen_bool(0.2) { cap * rng.gen_range(0.0..=1.0f64).round() } else { rng.gen_range(0.0..cap) };
                VirtualBattery::from_tank(rng.gen_range(0.0..0.05), cap, x0, pmax, eta.clone(), q0)
            } else {
                let c = rng.gen_range(0.5..4.0);
                let band = rng.gen_range(0.5..2.0);
                let x0 = rng.gen_range(-1.0..1.0) * c * band;
                // The decay pulls toward zero, so any start inside the band stays inside.
                VirtualBattery::from_tcl(rng.gen_range(0.5..4.0), c, 1.0, band, pmax, eta.clone(), q0, x0).unwrap()
            };
            DeviceBlock { inv_eta: eta.iter().map(|e| 1.0 / e).collect(), traj: vb.condense(horizon), bounds: vb.bounds(horizon).unwrap() }
        })
        .collect();
    let scale = rng.gen_range(0.5..12.0);
    let target = (0..horizon).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
    TrackingProblem { target, devices }
}
