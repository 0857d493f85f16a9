//! Adaptive one-dimensional quadrature built on the 15-point Gauss–Kronrod
//! rule: the embedded 7-point Gauss result supplies the error estimate, and
//! intervals bisect until the summed estimate meets the tolerance.

/// Kronrod abscissae for the interval [-1, 1], odd entries are the embedded
/// Gauss-7 nodes (QUADPACK dqk15 constants).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One GK15 panel: returns (kronrod, |kronrod − gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).abs())
}

/// Integrate `f` over `[a, b]` (signed: swapped limits negate the result)
/// to absolute tolerance `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate(f, b, a, abs_tol);
    }
    // worklist of (lo, hi, estimate, error, depth)
    let (v, e) = gk15(f, a, b);
    let mut panels = vec![(a, b, v, e, 0usize)];
    let mut total_err: f64 = e;
    while total_err > abs_tol {
        // split the panel with the largest error
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .expect("panel list is never empty");
        let (lo, hi, _, err, depth) = panels.swap_remove(worst);
        if depth >= 60 || (hi - lo) < f64::EPSILON * (b - a) {
            // cannot subdivide further; accept the panel as-is
            panels.push((lo, hi, gk15(f, lo, hi).0, 0.0, depth));
            total_err -= err;
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        total_err += e1 + e2 - err;
        panels.push((lo, mid, v1, e1, depth + 1));
        panels.push((mid, hi, v2, e2, depth + 1));
    }
    panels.iter().map(|p| p.2).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_is_exact() {
        // well inside the exactness degree of both embedded rules
        let f = |x: f64| 3.0 * x.powi(5) - x.powi(3) + 2.0 * x + 1.0;
        assert_abs_diff_eq!(integrate(&f, -1.0, 2.0, 1e-12), 33.75, epsilon = 1e-10);
    }

    #[test]
    fn oscillatory_integrand_converges() {
        let f = |x: f64| (10.0 * x).sin();
        let exact = (1.0 - (10.0f64).cos()) / 10.0;
        assert_abs_diff_eq!(integrate(&f, 0.0, 1.0, 1e-12), exact, epsilon = 1e-10);
    }

    #[test]
    fn gaussian_tail() {
        let f = |x: f64| (-0.5 * x * x).exp();
        let full = (2.0 * std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(integrate(&f, -10.0, 10.0, 1e-12), full, epsilon = 1e-9);
    }

    #[test]
    fn orientation_flips_sign() {
        let f = |x: f64| x * x;
        let fwd = integrate(&f, 0.0, 2.0, 1e-12);
        let bwd = integrate(&f, 2.0, 0.0, 1e-12);
        assert_abs_diff_eq!(fwd, -bwd, epsilon = 1e-12);
        assert_abs_diff_eq!(fwd, 8.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_length_interval() {
        let f = |x: f64| x.exp();
        assert_eq!(integrate(&f, 1.5, 1.5, 1e-12), 0.0);
    }
}
