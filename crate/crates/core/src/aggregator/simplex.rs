/// Euclidean projection onto the probability simplex by sorting and
/// thresholding.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = v.iter().map(|x| if x.is_finite() { *x } else { 0.0 }).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|x| if x.is_finite() { (x - tau).max(0.0) } else { 0.0 }).collect();
    // Remove rounding drift so the weights sum to one to machine precision.
    let sum: f64 = out.iter().sum();
    if sum > 0.0 {
        out.iter_mut().for_each(|x| *x /= sum);
    } else {
        let n = out.len() as f64;
        out.iter_mut().for_each(|x| *x = 1.0 / n);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_point_and_vertex() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn uniform_shift_is_removed() {
        let p = project_simplex(&[3.0, 3.0, 3.0, 3.0]);
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn output_on_simplex(v in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
            let p = project_simplex(&v);
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn projection_is_optimal(v in proptest::collection::vec(-5.0f64..5.0, 2..8), w in proptest::collection::vec(0.0f64..1.0, 8)) {
            // Any other simplex point is no closer to v.
            let p = project_simplex(&v);
            let s: f64 = w[..v.len()].iter().sum::<f64>() + 1e-12;
            let q: Vec<f64> = w[..v.len()].iter().map(|x| x / s).collect();
            let d = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            prop_assert!(d(&p) <= d(&q) + 1e-9);
        }
    }
}
