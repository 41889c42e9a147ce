//! Reference solvers for the tracking QP. The constraint rows are rebuilt
//! here from step-by-step rollouts, not from the library's condensed form.

use nalgebra::{DMatrix, DVector};
use tclflex_core::qpsolver::TrackingProblem;
use tclflex_core::vbattery::vb_step;

/// `min ½xᵀHx + gᵀx + r` subject to `lo ≤ Gx ≤ hi`.
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub r: f64,
    pub rows: DMatrix<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl DenseQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x) + self.r
    }
}

/// Builds the tracking objective `‖ΔP − Σ u/η‖²` and the box rows on `U`
/// and on the rolled-out states `x_{t+1..t+T}`.
pub fn build(p: &TrackingProblem) -> DenseQp {
    let t = p.target.len();
    let nd = p.devices.len();
    let n = t * nd;
    let mut m = DMatrix::zeros(t, n);
    for (d, dev) in p.devices.iter().enumerate() {
        for k in 0..t {
            m[(k, d * t + k)] = dev.inv_eta[k];
        }
    }
    let target = DVector::from_column_slice(&p.target);
    let h = m.transpose() * &m * 2.0;
    let g = -(m.transpose() * &target) * 2.0;
    let r = target.dot(&target);

    let mut rows = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for (d, dev) in p.devices.iter().enumerate() {
        for k in 0..t {
            let mut row = vec![0.0; n];
            row[d * t + k] = 1.0;
            rows.push(row);
            lo.push(dev.bounds.u_lo[k]);
            hi.push(dev.bounds.u_hi[k]);
        }
        let (a, delta) = (dev.traj.decay, dev.traj.delta);
        let x0 = free_rollout_start(dev);
        // Response of each state to a unit charge at each step.
        let mut free = Vec::with_capacity(t);
        let mut x = x0;
        for _ in 0..t {
            x = vb_step(x, 0.0, a, delta);
            free.push(x);
        }
        for k in 0..t {
            let mut row = vec![0.0; n];
            for j in 0..=k {
                let mut s = 0.0;
                for step in 0..=k {
                    s = vb_step(s, if step == j { 1.0 } else { 0.0 }, a, delta);
                }
                row[d * t + j] = s;
            }
            rows.push(row);
            lo.push(dev.bounds.x_lo[k] - free[k]);
            hi.push(dev.bounds.x_hi[k] - free[k]);
        }
    }
    let nr = rows.len();
    DenseQp {
        h,
        g,
        r,
        rows: DMatrix::from_fn(nr, n, |i, j| rows[i][j]),
        lo: DVector::from_vec(lo),
        hi: DVector::from_vec(hi),
    }
}

/// Initial state recovered from the problem: the first free-response entry
/// is `a·x0`.
fn free_rollout_start(dev: &tclflex_core::qpsolver::DeviceBlock) -> f64 {
    dev.traj.c_vec[0] / dev.traj.decay
}

fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let eps = 1e-11 * (1.0 + a.amax());
    let svd = a.clone().svd(true, true);
    let mut x = svd.solve(b, eps).expect("svd solve");
    // nalgebra's SVD can be loose; refine on the residual.
    for _ in 0..3 {
        x += svd.solve(&(b - a * &x), eps).expect("svd solve");
    }
    x
}

/// Orthonormal basis of the null space of `a` (columns).
fn null_space(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to a square matrix so the SVD exposes all right singular vectors.
    let mut sq = DMatrix::zeros(n.max(a.nrows()), n);
    sq.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.unwrap();
    let tol = 1e-10 * (1.0 + a.amax());
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Primal active-set method from the feasible point `x = 0`. Handles the
/// rank-deficient Hessian by moving along zero-curvature descent
/// directions until a constraint blocks.
pub fn active_set(qp: &DenseQp) -> DVector<f64> {
    let n = qp.h.nrows();
    let m = qp.rows.nrows();
    let mut x = DVector::zeros(n);
    // (row, sign): sign +1 means `row·x ≥ lo`, -1 means `row·x ≤ hi`.
    let mut work: Vec<(usize, f64)> = Vec::new();
    let feas_tol = 1e-10;
    for _ in 0..5000 {
        let grad = &qp.h * &x + &qp.g;
        let aw = DMatrix::from_fn(work.len(), n, |i, j| qp.rows[(work[i].0, j)]);
        let z = null_space(&aw, n);
        let mut dir = DVector::zeros(n);
        let mut full_step = true;
        if z.ncols() > 0 {
            let hr = z.transpose() * &qp.h * &z;
            let gr = z.transpose() * &grad;
            let pr = -pinv_solve(&hr, &gr);
            let resid = &hr * &pr + &gr;
            if resid.amax() > 1e-9 * (1.0 + gr.amax()) {
                // Gradient has a component in the zero-curvature subspace.
                let proj = &hr * pinv_solve(&hr, &gr);
                let flat = &gr - proj;
                dir = -(&z * flat);
                full_step = false;
            } else {
                dir = &z * pr;
            }
        }
        if dir.amax() <= 1e-13 * (1.0 + x.amax()) {
            if work.is_empty() {
                return x;
            }
            // Multipliers: grad = Σ μ_i s_i a_i with μ ≥ 0 at the optimum.
            let signed = DMatrix::from_fn(n, work.len(), |j, i| work[i].1 * qp.rows[(work[i].0, j)]);
            let mu = pinv_solve(&signed, &grad);
            let (worst, val) = mu.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
            if val >= -1e-10 * (1.0 + grad.amax()) {
                return x;
            }
            work.remove(worst);
            continue;
        }
        let mut step = if full_step { 1.0 } else { f64::INFINITY };
        let mut block = None;
        for i in 0..m {
            if work.iter().any(|(w, _)| *w == i) {
                continue;
            }
            let ad = qp.rows.row(i).dot(&dir.transpose());
            let ax = qp.rows.row(i).dot(&x.transpose());
            if ad < -1e-14 {
                let s = ((qp.lo[i] - ax) / ad).max(0.0);
                if s < step {
                    step = s;
                    block = Some((i, 1.0));
                }
            } else if ad > 1e-14 {
                let s = ((qp.hi[i] - ax) / ad).max(0.0);
                if s < step {
                    step = s;
                    block = Some((i, -1.0));
                }
            }
        }
        assert!(step.is_finite(), "unbounded direction in a bounded problem");
        x += &dir * step;
        if let Some(b) = block {
            work.push(b);
        }
        let viol = (&qp.rows * &x - &qp.hi).max().max((&qp.lo - &qp.rows * &x).max());
        assert!(viol <= feas_tol * (1.0 + qp.hi.amax().max(qp.lo.amax())) * 1e3, "oracle lost feasibility: {viol}");
    }
    panic!("active-set oracle did not terminate");
}

/// Exhaustive search over all assignments of {free, lower, upper} to the
/// constraint rows. Only usable for a handful of rows.
pub fn enumerate(qp: &DenseQp) -> f64 {
    let n = qp.h.nrows();
    let m = qp.rows.nrows();
    assert!(m <= 10, "enumeration is exponential in the number of rows");
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(m as u32) {
        let mut c = code;
        let mut eq_rows = Vec::new();
        let mut eq_rhs = Vec::new();
        for i in 0..m {
            match c % 3 {
                1 => {
                    eq_rows.push(i);
                    eq_rhs.push(qp.lo[i]);
                }
                2 => {
                    eq_rows.push(i);
                    eq_rhs.push(qp.hi[i]);
                }
                _ => {}
            }
            c /= 3;
        }
        let k = eq_rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&qp.g));
        for (r, &i) in eq_rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = qp.rows[(i, j)];
                kkt[(j, n + r)] = qp.rows[(i, j)];
            }
            rhs[n + r] = eq_rhs[r];
        }
        let sol = pinv_solve(&kkt, &rhs);
        if (&kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let ax = &qp.rows * &x;
        let ok = (0..m).all(|i| ax[i] >= qp.lo[i] - 1e-9 * (1.0 + qp.lo[i].abs()) && ax[i] <= qp.hi[i] + 1e-9 * (1.0 + qp.hi[i].abs()));
        if ok {
            best = best.min(qp.objective(&x));
        }
    }
    best
}
