//! First-order optimality check for tracking-problem solutions, independent
//! of the multipliers the solver reports.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::TrackingProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖∇f + Σ y_i a_i‖∞` with multipliers fitted by nonnegative least squares.
    pub stationarity: f64,
    /// Largest bound violation.
    pub primal: f64,
    /// Largest `y_i · slack_i` over the constraints treated as active.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

/// Evaluates the KKT residuals of `u`. Constraints within a small relative
/// distance of a bound (or beyond it) are treated as active and receive
/// sign-constrained multipliers.
pub fn kkt_check(p: &TrackingProblem, u: &[f64]) -> KktReport {
    let sf = p.to_standard_form();
    let x = DVector::from_column_slice(u);
    let ax = &sf.a * &x;
    let grad = &sf.p * &x + &sf.q;

    let mut primal = 0.0_f64;
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut slacks: Vec<f64> = Vec::new();
    for i in 0..sf.m() {
        let (lo, hi, v) = (sf.l[i], sf.u[i], ax[i]);
        primal = primal.max(lo - v).max(v - hi);
        let row = sf.a.row(i).transpose();
        if v - lo <= 1e-7 * (1.0 + lo.abs()) {
            cols.push(-&row);
            slacks.push((v - lo).abs());
        }
        if hi - v <= 1e-7 * (1.0 + hi.abs()) {
            cols.push(row);
            slacks.push((hi - v).abs());
        }
    }

    let (stationarity, complementarity) = if cols.is_empty() {
        (grad.amax(), 0.0)
    } else {
        let g = DMatrix::from_columns(&cols);
        let mult = nnls(&g, &(-&grad));
        let resid = &grad + &g * &mult;
        let comp = mult.iter().zip(&slacks).map(|(y, s)| y * s).fold(0.0, f64::max);
        (resid.amax(), comp)
    };
    KktReport { stationarity, primal: primal.max(0.0), complementarity }
}

/// Minimum-norm least squares via SVD, refined on the residual: nalgebra's
/// SVD alone can leave errors around 1e-4 on well-conditioned systems.
fn lstsq(e: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
    let svd = e.clone().svd(true, true);
    let mut y = match svd.solve(f, 1e-12) {
        Ok(y) => y,
        Err(_) => return DVector::zeros(e.ncols()),
    };
    for _ in 0..3 {
        let r = f - e * &y;
        match svd.solve(&r, 1e-12) {
            Ok(dy) => y += dy,
            Err(_) => break,
        }
    }
    y
}

/// Lawson–Hanson nonnegative least squares: `min ‖E·y − f‖₂` s.t. `y ≥ 0`.
pub fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
    let k = e.ncols();
    let mut y = DVector::zeros(k);
    let mut passive = vec![false; k];
    // Columns whose least-squares coefficient came out nonpositive right after
    // entering; skipped until `y` moves, otherwise degenerate sets cycle.
    let mut blocked = vec![false; k];
    let tol = 1e-12 * (1.0 + e.amax() * f.amax());
    for _ in 0..10 * k + 10 {
        let w = e.transpose() * (f - e * &y);
        let candidate = (0..k).filter(|&j| !passive[j] && !blocked[j]).max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let entering = match candidate {
            Some(j) if w[j] > tol => j,
            _ => break,
        };
        passive[entering] = true;
        let mut first = true;
        for _ in 0..3 * k + 10 {
            let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let sub = e.select_columns(&idx);
            let s_p = lstsq(&sub, f);
            if first {
                first = false;
                let pos = idx.iter().position(|&j| j == entering).unwrap();
                if s_p[pos] <= 0.0 {
                    passive[entering] = false;
                    blocked[entering] = true;
                    break;
                }
                blocked.fill(false);
            }
            if s_p.iter().all(|&v| v > 0.0) {
                y.fill(0.0);
                for (pos, &j) in idx.iter().enumerate() {
                    y[j] = s_p[pos];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (pos, &j) in idx.iter().enumerate() {
                if s_p[pos] <= 0.0 {
                    alpha = alpha.min(y[j] / (y[j] - s_p[pos]));
                }
            }
            for (pos, &j) in idx.iter().enumerate() {
                y[j] += alpha * (s_p[pos] - y[j]);
                if y[j] <= 1e-15 {
                    y[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::super::{solve, DeviceBlock, TrackingProblem};
    use super::*;
    use crate::vbattery::VirtualBattery;

    fn problem() -> TrackingProblem {
        let vb = VirtualBattery::from_tank(0.0, 10.0, 5.0, 2.0, vec![2.5; 3], vec![1.0; 3]);
        TrackingProblem {
            target: vec![10.0, -0.2, 0.4],
            devices: vec![DeviceBlock { inv_eta: vec![0.4; 3], traj: vb.condense(3), bounds: vb.bounds(3).unwrap() }],
        }
    }

    #[test]
    fn nnls_matches_hand_solution() {
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let f = DVector::from_column_slice(&[2.0, -3.0]);
        let y = nnls(&e, &f);
        assert_eq!(y.as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn solver_optimum_passes() {
        let p = problem();
        let s = solve(&p, 1e-9, 20000).unwrap();
        let r = kkt_check(&p, &s.u);
        assert!(r.max() <= 1e-8, "{r:?}");
    }

    #[test]
    fn box_violation_reported() {
        let p = problem();
        let s = solve(&p, 1e-9, 20000).unwrap();
        let mut u = s.u.clone();
        // Upper bound on u_0 is 2.5*2 - 1 = 4.
        u[0] = 4.1;
        assert!(kkt_check(&p, &u).primal >= 0.1 - 1e-12);
    }

    #[test]
    fn interior_nonoptimal_point_is_not_stationary() {
        let p = problem();
        let r = kkt_check(&p, &[0.5, 0.1, 0.0]);
        assert!(r.stationarity > 1e-3);
        assert_eq!(r.primal, 0.0);
    }
}
