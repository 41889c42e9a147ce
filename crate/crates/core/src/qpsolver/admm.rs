//! Operator-splitting (ADMM) solver in the style of OSQP: fixed step `ρ`,
//! over-relaxation, a cached Cholesky factor of `P + σI + ρAᵀA`, a primal
//! infeasibility certificate and an active-set polishing step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{QpError, QpSolution, QpStatus, StandardForm, TrackingProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Absolute and relative residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub polish: bool,
    /// Residual / certificate check period in iterations.
    pub check_every: usize,
    pub eps_primal_infeasible: f64,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            rho: 1.0,
            sigma: 1e-6,
            alpha: 1.6,
            tol: 1e-6,
            max_iter: 20_000,
            polish: true,
            check_every: 10,
            eps_primal_infeasible: 1e-6,
        }
    }
}

struct Factor {
    p: DMatrix<f64>,
    a: DMatrix<f64>,
    at: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// Reusable solver; the factorization is kept while `P` and `A` are unchanged,
/// which is the common case across hours of a receding-horizon day.
pub struct QpSolver {
    settings: AdmmSettings,
    factor: Option<Factor>,
}

impl QpSolver {
    pub fn new(settings: AdmmSettings) -> Self {
        Self { settings, factor: None }
    }

    pub fn settings(&self) -> &AdmmSettings {
        &self.settings
    }

    /// Solves the tracking problem, optionally warm-started from a primal
    /// guess and standard-form multipliers.
    pub fn solve(&mut self, prob: &TrackingProblem, warm: Option<(&[f64], &[f64])>) -> Result<QpSolution, QpError> {
        prob.validate()?;
        let sf = prob.to_standard_form();
        let mut sol = self.solve_standard(&sf, warm)?;
        sol.objective = prob.objective(&sol.u);
        Ok(sol)
    }

    fn factor_for(&mut self, sf: &StandardForm) -> Result<&Factor, QpError> {
        let reuse = matches!(&self.factor, Some(f) if f.p == sf.p && f.a == sf.a);
        if !reuse {
            let s = &self.settings;
            let at = sf.a.transpose();
            let n = sf.n();
            let k = &sf.p + DMatrix::identity(n, n) * s.sigma + (&at * &sf.a) * s.rho;
            let chol = Cholesky::new(k).ok_or(QpError::Factorization)?;
            self.factor = Some(Factor { p: sf.p.clone(), a: sf.a.clone(), at, chol });
        }
        Ok(self.factor.as_ref().unwrap())
    }

    pub fn solve_standard(&mut self, sf: &StandardForm, warm: Option<(&[f64], &[f64])>) -> Result<QpSolution, QpError> {
        let s = self.settings;
        let (n, m) = (sf.n(), sf.m());
        let factor = self.factor_for(sf)?;

        let mut x = DVector::zeros(n);
        let mut y = DVector::zeros(m);
        if let Some((x0, y0)) = warm {
            if x0.len() == n {
                x.copy_from_slice(x0);
            }
            if y0.len() == m {
                y.copy_from_slice(y0);
            }
        }
        let mut z = clamp(&(&factor.a * &x), &sf.l, &sf.u);

        let mut status = QpStatus::MaxIter;
        let mut iter = 0;
        let mut polished = None;
        let mut tried_loose_polish = false;
        let (mut rp, mut rd) = (f64::INFINITY, f64::INFINITY);
        while iter < s.max_iter {
            iter += 1;
            let rhs = &x * s.sigma - &sf.q + &factor.at * (&z * s.rho - &y);
            let x_tilde = factor.chol.solve(&rhs);
            let z_tilde = &factor.a * &x_tilde;
            let x_new = &x_tilde * s.alpha + &x * (1.0 - s.alpha);
            let z_relax = &z_tilde * s.alpha + &z * (1.0 - s.alpha);
            let z_new = clamp(&(&z_relax + &y / s.rho), &sf.l, &sf.u);
            let dy = (&z_relax - &z_new) * s.rho;
            y += &dy;
            x = x_new;
            z = z_new;

            if iter % s.check_every != 0 && iter != s.max_iter {
                continue;
            }
            let (p_res, d_res, p_eps, d_eps) = residuals(sf, factor, &x, &z, &y, s.tol);
            rp = p_res;
            rd = d_res;
            if p_res <= p_eps && d_res <= d_eps {
                status = QpStatus::Optimal;
                break;
            }
            if primal_infeasible(sf, factor, &dy, s.eps_primal_infeasible) {
                status = QpStatus::Infeasible;
                break;
            }
            // Polishing from a moderately accurate iterate usually lands on
            // the exact active set long before ADMM reaches full accuracy.
            if s.polish && !tried_loose_polish && p_res <= 1e3 * p_eps && d_res <= 1e3 * d_eps {
                tried_loose_polish = true;
                if let Some(p) = polish(sf, factor, &x, &z, &y, s.tol) {
                    polished = Some(p);
                    status = QpStatus::Optimal;
                    break;
                }
            }
        }

        if s.polish && status != QpStatus::Infeasible && polished.is_none() {
            polished = polish(sf, factor, &x, &z, &y, s.tol);
            if polished.is_some() {
                status = QpStatus::Optimal;
            }
        }
        let did_polish = polished.is_some();
        if let Some(p) = polished {
            x = p.x;
            y = p.y;
            rp = p.primal;
            rd = p.dual;
        }
        Ok(QpSolution {
            objective: sf.objective(&x),
            u: x.iter().copied().collect(),
            y: y.iter().copied().collect(),
            status,
            primal_residual: rp,
            dual_residual: rd,
            iterations: iter,
            polished: did_polish,
        })
    }
}

fn clamp(v: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().zip(l.iter().zip(u.iter())).map(|(x, (lo, hi))| x.max(*lo).min(*hi)))
}

fn residuals(
    sf: &StandardForm,
    f: &Factor,
    x: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
    tol: f64,
) -> (f64, f64, f64, f64) {
    let ax = &f.a * x;
    let px = &f.p * x;
    let aty = &f.at * y;
    let p_res = (&ax - z).amax();
    let d_res = (&px + &sf.q + &aty).amax();
    let p_eps = tol + tol * ax.amax().max(z.amax());
    let d_eps = tol + tol * px.amax().max(aty.amax()).max(sf.q.amax());
    (p_res, d_res, p_eps, d_eps)
}

fn primal_infeasible(sf: &StandardForm, f: &Factor, dy: &DVector<f64>, eps: f64) -> bool {
    let norm_dy = dy.amax();
    if norm_dy <= 1e-12 {
        return false;
    }
    let at_dy = (&f.at * dy).amax();
    let support: f64 = dy
        .iter()
        .zip(sf.u.iter().zip(sf.l.iter()))
        .map(|(d, (hi, lo))| if *d > 0.0 { hi * d } else { lo * d })
        .sum();
    at_dy <= eps * norm_dy && support < -eps * norm_dy
}

struct Polished {
    x: DVector<f64>,
    y: DVector<f64>,
    primal: f64,
    dual: f64,
}

const POLISH_PROX_ITERS: usize = 25;

/// Guesses the active set from the ADMM iterate, solves the resulting
/// equality-constrained QP and accepts the result only if it satisfies the
/// KKT conditions to `tol`.
fn polish(sf: &StandardForm, f: &Factor, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>, tol: f64) -> Option<Polished> {
    let n = sf.n();
    let m = sf.m();
    let mut active: Vec<(usize, f64, i8)> = Vec::new();
    for i in 0..m {
        if sf.l[i] == sf.u[i] {
            active.push((i, sf.l[i], 0));
        } else if z[i] - sf.l[i] < -y[i] {
            active.push((i, sf.l[i], -1));
        } else if sf.u[i] - z[i] < y[i] {
            active.push((i, sf.u[i], 1));
        }
    }
    let k = active.len();
    let dim = n + k;
    let reg = 1e-7;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&sf.p);
    for (r, (i, _, _)) in active.iter().enumerate() {
        for c in 0..n {
            kkt[(n + r, c)] = sf.a[(*i, c)];
            kkt[(c, n + r)] = sf.a[(*i, c)];
        }
    }
    for d in 0..n {
        kkt[(d, d)] += reg;
    }
    for d in n..dim {
        kkt[(d, d)] -= reg;
    }
    // Proximal refinement anchored at the ADMM iterate: every fixed point is
    // an exact KKT point of the reduced problem, and directions the cost
    // does not see (P is singular with several devices) stay where ADMM
    // left them instead of drifting to a far minimum-norm solution.
    let lu = kkt.lu();
    let mut sol = DVector::zeros(dim);
    sol.rows_mut(0, n).copy_from(x);
    for (r, (i, _, _)) in active.iter().enumerate() {
        sol[n + r] = y[*i];
    }
    let scale = 1.0 + sol.amax();
    for _ in 0..POLISH_PROX_ITERS {
        let mut rhs = DVector::zeros(dim);
        for d in 0..n {
            rhs[d] = -sf.q[d] + reg * sol[d];
        }
        for (r, (_, b, _)) in active.iter().enumerate() {
            rhs[n + r] = *b - reg * sol[n + r];
        }
        let next = lu.solve(&rhs)?;
        let step = (&next - &sol).amax();
        sol = next;
        if step <= 1e-13 * scale {
            break;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let x = sol.rows(0, n).into_owned();
    let mut y_full = DVector::zeros(m);
    for (r, (i, _, side)) in active.iter().enumerate() {
        let yi = sol[n + r];
        // Sign convention: y < 0 on active lower bounds, y > 0 on upper.
        let scale = tol * (1.0 + yi.abs());
        match side {
            -1 if yi > scale => return None,
            1 if yi < -scale => return None,
            _ => {}
        }
        y_full[*i] = match side {
            -1 => yi.min(0.0),
            1 => yi.max(0.0),
            _ => yi,
        };
    }
    let ax = &f.a * &x;
    let primal = ax
        .iter()
        .zip(sf.l.iter().zip(sf.u.iter()))
        .map(|(v, (lo, hi))| (lo - v).max(v - hi).max(0.0))
        .fold(0.0, f64::max);
    let px = &f.p * &x;
    let aty = &f.at * &y_full;
    let dual = (&px + &sf.q + &aty).amax();
    let p_eps = tol + tol * ax.amax();
    let d_eps = tol + tol * px.amax().max(aty.amax()).max(sf.q.amax());
    if primal <= p_eps && dual <= d_eps {
        Some(Polished { x, y: y_full, primal, dual })
    } else {
        None
    }
}

/// Shifts a stacked device-major vector forward by one step per block,
/// repeating each block's last entry; used to warm-start the next hour.
pub fn shift_blocks(v: &[f64], block: usize) -> Vec<f64> {
    if block == 0 {
        return v.to_vec();
    }
    v.chunks(block)
        .flat_map(|c| c.iter().skip(1).copied().chain(c.last().copied()))
        .collect()
}
