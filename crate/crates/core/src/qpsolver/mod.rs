//! The building-level tracking QP:
//!
//! ```text
//! min_U  Σ_l ( ΔP_l − Σ_j u_{j,l} / η_{j,l} )²
//! s.t.   U_lo ≤ U ≤ U_hi,   X_lo ≤ Λ(B·U + C) ≤ X_hi   (per device)
//! ```
//!
//! Decision variables are stacked device-major: `[u_0(0..T), u_1(0..T), …]`.

mod admm;
mod kkt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vbattery::{HorizonBounds, TrajectoryMatrices};

pub use admm::{shift_blocks, AdmmSettings, QpSolver};
pub use kkt::{kkt_check, nnls, KktReport};

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("bounds crossed at {what} index {index}: {lo} > {hi}")]
    CrossedBounds { what: &'static str, index: usize, lo: f64, hi: f64 },
    #[error("linear system factorization failed")]
    Factorization,
}

/// One storage device inside a tracking problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceBlock {
    pub inv_eta: Vec<f64>,
    pub traj: TrajectoryMatrices,
    pub bounds: HorizonBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingProblem {
    /// Electric load-shift command per horizon step (kWh).
    pub target: Vec<f64>,
    pub devices: Vec<DeviceBlock>,
}

/// Problem in the generic form `min ½xᵀPx + qᵀx + r  s.t.  l ≤ Ax ≤ u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardForm {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: f64,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl StandardForm {
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x) + self.r
    }
}

impl TrackingProblem {
    pub fn horizon(&self) -> usize {
        self.target.len()
    }

    pub fn n_vars(&self) -> usize {
        self.horizon() * self.devices.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let t = self.horizon();
        if t == 0 || self.devices.is_empty() {
            return Err(QpError::Dimension("empty horizon or no devices".into()));
        }
        for (j, d) in self.devices.iter().enumerate() {
            let lens = [d.inv_eta.len(), d.traj.horizon(), d.bounds.u_lo.len(), d.bounds.u_hi.len(), d.bounds.x_lo.len(), d.bounds.x_hi.len()];
            if lens.iter().any(|&l| l != t) {
                return Err(QpError::Dimension(format!("device {j} has block lengths {lens:?}, horizon {t}")));
            }
            for k in 0..t {
                if d.bounds.u_lo[k] > d.bounds.u_hi[k] {
                    return Err(QpError::CrossedBounds { what: "U", index: j * t + k, lo: d.bounds.u_lo[k], hi: d.bounds.u_hi[k] });
                }
                if d.bounds.x_lo[k] > d.bounds.x_hi[k] {
                    return Err(QpError::CrossedBounds { what: "X", index: j * t + k, lo: d.bounds.x_lo[k], hi: d.bounds.x_hi[k] });
                }
            }
        }
        Ok(())
    }

    /// Tracking matrix `M` with `(M·U)_l = Σ_j u_{j,l}/η_{j,l}`.
    pub fn shift_matrix(&self) -> DMatrix<f64> {
        let t = self.horizon();
        let mut m = DMatrix::zeros(t, self.n_vars());
        for (j, d) in self.devices.iter().enumerate() {
            for k in 0..t {
                m[(k, j * t + k)] = d.inv_eta[k];
            }
        }
        m
    }

    /// Electric shift delivered per horizon step.
    pub fn delivered(&self, u: &[f64]) -> Vec<f64> {
        let t = self.horizon();
        (0..t)
            .map(|k| self.devices.iter().enumerate().map(|(j, d)| u[j * t + k] * d.inv_eta[k]).sum())
            .collect()
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        self.delivered(u).iter().zip(&self.target).map(|(s, p)| (p - s) * (p - s)).sum()
    }

    /// Constraint rows: first all `U` rows, then the state rows of every device.
    pub fn to_standard_form(&self) -> StandardForm {
        let t = self.horizon();
        let n = self.n_vars();
        let mmat = self.shift_matrix();
        let target = DVector::from_column_slice(&self.target);
        let p = 2.0 * mmat.transpose() * &mmat;
        let q = -2.0 * mmat.transpose() * &target;
        let r = target.dot(&target);

        let mut a = DMatrix::zeros(2 * n, n);
        let mut l = DVector::zeros(2 * n);
        let mut u = DVector::zeros(2 * n);
        for (j, d) in self.devices.iter().enumerate() {
            let off = j * t;
            let lambda_c = &d.traj.lambda * &d.traj.c_vec;
            for k in 0..t {
                a[(off + k, off + k)] = 1.0;
                l[off + k] = d.bounds.u_lo[k];
                u[off + k] = d.bounds.u_hi[k];
                let row = n + off + k;
                for c in 0..=k {
                    a[(row, off + c)] = d.traj.lambda[(k, c)] * d.traj.delta;
                }
                l[row] = d.bounds.x_lo[k] - lambda_c[k];
                u[row] = d.bounds.x_hi[k] - lambda_c[k];
            }
        }
        StandardForm { p, q, r, a, l, u }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub u: Vec<f64>,
    /// Constraint multipliers in standard-form row order.
    pub y: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub polished: bool,
}

/// JSON dump of a problem for offline inspection of failed solves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemDump {
    pub target: Vec<f64>,
    pub devices: Vec<DeviceDump>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceDump {
    pub inv_eta: Vec<f64>,
    pub decay: f64,
    pub delta: f64,
    pub x0_propagated: f64,
    pub bounds: HorizonBounds,
}

impl From<&TrackingProblem> for ProblemDump {
    fn from(p: &TrackingProblem) -> Self {
        Self {
            target: p.target.clone(),
            devices: p
                .devices
                .iter()
                .map(|d| DeviceDump {
                    inv_eta: d.inv_eta.clone(),
                    decay: d.traj.decay,
                    delta: d.traj.delta,
                    x0_propagated: d.traj.c_vec.get(0).copied().unwrap_or(0.0),
                    bounds: d.bounds.clone(),
                })
                .collect(),
        }
    }
}

/// Solves with default settings and a cold start.
pub fn solve(p: &TrackingProblem, tol: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    QpSolver::new(AdmmSettings { tol, max_iter, ..AdmmSettings::default() }).solve(p, None)
}
