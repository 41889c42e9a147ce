//! Virtual-battery abstraction of a thermostatically controlled load or a
//! thermal storage tank.
//!
//! The state of charge evolves as `x' = a·x + δ·u`, where `u` is the thermal
//! charge above the device's nominal flux `Q0`. Over a horizon of `T` steps
//! the dynamics condense to `A·X = B·U + C`, so `X = Λ(B·U + C)` with
//! `Λ = A⁻¹` available in closed form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VbError {
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("horizon {horizon} exceeds the {len} steps of `{name}`")]
    ShortSequence { name: &'static str, horizon: usize, len: usize },
    #[error("infeasible device: lower charge bound {lo} exceeds upper bound {hi} at step {step}")]
    InfeasibleBounds { step: usize, lo: f64, hi: f64 },
}

/// First-order TCL parameters from thermal resistance (°C/kW),
/// capacitance (kWh/°C), time step (h) and COP.
///
/// Returns `(a, b, delta)` with `a = exp(-dt/(RC))`, `b = eta·R` and
/// `delta = (1 - a)·R·C`.
pub fn tcl_params(r: f64, c: f64, dt_hours: f64, eta: f64) -> Result<(f64, f64, f64), VbError> {
    for (name, value) in [("R", r), ("C", c), ("dt_hours", dt_hours), ("eta", eta)] {
        if !(value > 0.0) {
            return Err(VbError::NonPositive { name, value });
        }
    }
    let a = (-dt_hours / (r * c)).exp();
    Ok((a, eta * r, (1.0 - a) * r * c))
}

/// One step of the virtual battery model (no clipping).
pub fn vb_step(x: f64, u: f64, a: f64, delta: f64) -> f64 {
    a * x + delta * u
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualBattery {
    pub a: f64,
    pub delta: f64,
    /// COP per horizon step.
    pub eta: Vec<f64>,
    /// Rated electric power of the device.
    pub p_max_kw: f64,
    /// Nominal thermal flux per horizon step.
    pub q0: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub x: f64,
}

impl VirtualBattery {
    /// Tank mapping: `a = 1 - loss`, `δ = 1`, state in `[0, capacity]`.
    pub fn from_tank(loss_coeff: f64, capacity_kwh: f64, soc_kwh: f64, p_max_kw: f64, eta: Vec<f64>, q0: Vec<f64>) -> Self {
        Self { a: 1.0 - loss_coeff, delta: 1.0, eta, p_max_kw, q0, x_min: 0.0, x_max: capacity_kwh, x: soc_kwh }
    }

    /// TCL mapping with a temperature deadband of `±deadband_c` around the
    /// setpoint: state in `[-C·Δ, C·Δ]`.
    pub fn from_tcl(
        r: f64,
        c: f64,
        dt_hours: f64,
        deadband_c: f64,
        p_max_kw: f64,
        eta: Vec<f64>,
        q0: Vec<f64>,
        x: f64,
    ) -> Result<Self, VbError> {
        let (a, _, delta) = tcl_params(r, c, dt_hours, 1.0)?;
        Ok(Self { a, delta, eta, p_max_kw, q0, x_min: -c * deadband_c, x_max: c * deadband_c, x })
    }

    pub fn condense(&self, horizon: usize) -> TrajectoryMatrices {
        TrajectoryMatrices::new(self.a, self.delta, self.x, horizon)
    }

    /// Box bounds on charge `U` and state `X` over the horizon.
    pub fn bounds(&self, horizon: usize) -> Result<HorizonBounds, VbError> {
        for (name, seq) in [("eta", &self.eta), ("q0", &self.q0)] {
            if seq.len() < horizon {
                return Err(VbError::ShortSequence { name, horizon, len: seq.len() });
            }
        }
        let mut u_lo = Vec::with_capacity(horizon);
        let mut u_hi = Vec::with_capacity(horizon);
        for step in 0..horizon {
            let lo = -self.q0[step];
            let hi = self.eta[step] * self.p_max_kw - self.q0[step];
            if lo > hi {
                return Err(VbError::InfeasibleBounds { step, lo, hi });
            }
            u_lo.push(lo);
            u_hi.push(hi);
        }
        Ok(HorizonBounds { u_lo, u_hi, x_lo: vec![self.x_min; horizon], x_hi: vec![self.x_max; horizon] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonBounds {
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
}

/// Condensed horizon matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMatrices {
    /// Lower-bidiagonal: ones on the diagonal, `-a` below it.
    pub a_mat: DMatrix<f64>,
    /// `δ·I`.
    pub b_mat: DMatrix<f64>,
    /// `(a·x_t, 0, …, 0)`: the initial state propagated one step.
    pub c_vec: DVector<f64>,
    /// `A⁻¹` with entries `a^(i-j)` on and below the diagonal.
    pub lambda: DMatrix<f64>,
    pub decay: f64,
    pub delta: f64,
}

impl TrajectoryMatrices {
    pub fn new(a: f64, delta: f64, x0: f64, horizon: usize) -> Self {
        let t = horizon;
        let a_mat = DMatrix::from_fn(t, t, |i, j| {
            if i == j {
                1.0
            } else if i == j + 1 {
                -a
            } else {
                0.0
            }
        });
        let b_mat = DMatrix::from_diagonal_element(t, t, delta);
        let mut c_vec = DVector::zeros(t);
        if t > 0 {
            c_vec[0] = a * x0;
        }
        let mut powers = Vec::with_capacity(t);
        let mut p = 1.0;
        for _ in 0..t {
            powers.push(p);
            p *= a;
        }
        let lambda = DMatrix::from_fn(t, t, |i, j| if i >= j { powers[i - j] } else { 0.0 });
        Self { a_mat, b_mat, c_vec, lambda, decay: a, delta }
    }

    pub fn horizon(&self) -> usize {
        self.c_vec.len()
    }

    /// State trajectory `x_{t+1..t+T}` for a charge sequence.
    pub fn states(&self, u: &[f64]) -> Vec<f64> {
        let u = DVector::from_column_slice(u);
        (&self.lambda * (&self.b_mat * u + &self.c_vec)).iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tcl_parameter_examples() {
        let (a, b, delta) = tcl_params(2.0, 2.0, 1.0, 2.5).unwrap();
        assert!((a - (-0.25f64).exp()).abs() < 1e-15);
        assert!((a - 0.778801).abs() < 1e-6);
        assert_eq!(b, 5.0);
        assert!((delta - (1.0 - a) * 4.0).abs() < 1e-15);
        let (a_small, _, _) = tcl_params(2.0, 2.0, 1e-9, 1.0).unwrap();
        assert!((a_small - 1.0).abs() < 1e-9);
        assert!(tcl_params(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(tcl_params(1.0, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn step_examples() {
        assert_eq!(vb_step(0.0, 0.0, 0.7, 1.3), 0.0);
        assert_eq!(vb_step(1.0, 0.0, 0.9, 1.0), 0.9);
        assert!((vb_step(1.0, 2.0, 0.9, 0.5) - 1.9).abs() < 1e-15);
    }

    #[test]
    fn horizon_one_structure() {
        let m = TrajectoryMatrices::new(1.0, 0.7, 3.0, 1);
        assert_eq!(m.a_mat, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(m.b_mat, DMatrix::from_element(1, 1, 0.7));
        assert_eq!(m.c_vec[0], 3.0);
    }

    #[test]
    fn lambda_for_half_decay() {
        let m = TrajectoryMatrices::new(0.5, 1.0, 0.0, 3);
        for i in 1..3 {
            assert_eq!(m.a_mat[(i, i - 1)], -0.5);
        }
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.25, 0.5, 1.0]);
        assert_eq!(m.lambda, expected);
        assert_eq!(&m.a_mat * &m.lambda, DMatrix::identity(3, 3));
    }

    #[test]
    fn bounds_examples() {
        let vb = VirtualBattery::from_tank(0.0, 10.0, 5.0, 3.0, vec![2.5; 2], vec![2.0, 0.0]);
        let b = vb.bounds(2).unwrap();
        assert_eq!(b.u_hi[0], 5.5);
        assert_eq!(b.u_lo[0], -2.0);
        assert_eq!(b.u_lo[1], 0.0);
        let tcl = VirtualBattery::from_tcl(2.0, 2.0, 1.0, 1.0, 3.0, vec![2.5], vec![0.0], 0.0).unwrap();
        let tb = tcl.bounds(1).unwrap();
        assert_eq!((tb.x_lo[0], tb.x_hi[0]), (-2.0, 2.0));
        assert!(matches!(vb.bounds(3), Err(VbError::ShortSequence { .. })));
        let bad = VirtualBattery { p_max_kw: -1.0, ..vb };
        assert!(matches!(bad.bounds(1), Err(VbError::InfeasibleBounds { .. })));
    }

    #[test]
    fn free_decay_goes_to_zero() {
        let mut x = 10.0;
        for _ in 0..500 {
            x = vb_step(x, 0.0, 0.95, 1.0);
        }
        assert!(x.abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn matrices_match_recursion(
            a in 0.01f64..=1.0,
            delta in 0.01f64..5.0,
            x0 in -50.0f64..50.0,
            u in proptest::collection::vec(-20.0f64..20.0, 1..=8),
        ) {
            let m = TrajectoryMatrices::new(a, delta, x0, u.len());
            let xs = m.states(&u);
            let mut x = x0;
            for (k, uk) in u.iter().enumerate() {
                x = vb_step(x, *uk, a, delta);
                prop_assert!((xs[k] - x).abs() <= 1e-12 * (1.0 + x.abs()));
            }
            let prod = &m.a_mat * &m.lambda;
            prop_assert!((prod - DMatrix::identity(u.len(), u.len())).amax() <= 1e-12);
        }

        #[test]
        fn bounds_are_ordered(eta in proptest::collection::vec(0.0f64..6.0, 4), q0 in proptest::collection::vec(-5.0f64..20.0, 4), pm in 0.0f64..10.0) {
            let vb = VirtualBattery::from_tank(0.01, 10.0, 1.0, pm, eta, q0);
            let b = vb.bounds(4).unwrap();
            for k in 0..4 {
                prop_assert!(b.u_lo[k] <= b.u_hi[k]);
            }
        }
    }
}
