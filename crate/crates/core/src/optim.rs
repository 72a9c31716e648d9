//! Derivative-free minimizers: Nelder–Mead and golden-section search.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Golden-section search on `[a, b]`. Returns the best point evaluated, which
/// includes both endpoints, so a minimum on the boundary is found exactly.
pub fn golden_section(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64, max_iters: usize) -> Minimum {
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut best = Minimum { x: lo, value: f(lo), evaluations: 1 };
    let consider = |x: f64, v: f64, best: &mut Minimum| {
        best.evaluations += 1;
        if v < best.value || best.value.is_nan() {
            best.x = x;
            best.value = v;
        }
    };
    let fh = f(hi);
    consider(hi, fh, &mut best);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    consider(x1, f1, &mut best);
    let mut f2 = f(x2);
    consider(x2, f2, &mut best);
    for _ in 0..max_iters {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
            consider(x1, f1, &mut best);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
            consider(x2, f2, &mut best);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub history: Vec<f64>,
    /// Simplex diameter (max-norm) after each iteration.
    pub sizes: Vec<f64>,
    /// Spread of simplex values after each iteration.
    pub spreads: Vec<f64>,
}

/// Nelder–Mead with standard coefficients. `f` may return `+∞` for
/// inadmissible points; such vertices are simply never preferred.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    start: &[f64],
    initial_step: f64,
    ftol: f64,
    xtol: f64,
    max_iters: usize,
) -> NelderMeadResult {
    let n = start.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64], evaluations: &mut usize| {
        *evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += if v[i].abs() > 1e-12 { initial_step * v[i].abs().max(1.0) } else { initial_step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evaluations)).collect();
    let mut history = Vec::new();
    let mut sizes = Vec::new();
    let mut spreads = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        history.push(values[0]);

        let spread = values[n] - values[0];
        let size = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        sizes.push(size);
        spreads.push(spread);
        if (spread.is_finite() && spread <= ftol * (1.0 + values[0].abs())) && size <= xtol {
            converged = true;
            break;
        }
        if size <= 1e-15 {
            converged = spread.is_finite();
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |c: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + c * (simplex[n][j] - centroid[j])).collect() };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evaluations);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evaluations);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc.min(f64::INFINITY))
        } else {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let v: Vec<f64> = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
            values[i] = eval(&v, &mut evaluations);
            simplex[i] = v;
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b))).unwrap();
    NelderMeadResult {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        evaluations,
        converged,
        history,
        sizes,
        spreads,
    }
}

/// Bisection for a sign change of `f` on `[a, b]`; `None` if the endpoint
/// values do not bracket a root.
pub fn bisect(f: &mut dyn FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() && !fb.is_finite() {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a <= tol || m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_interior_and_boundary_minima() {
        let m = golden_section(&mut |x| (x - 1.3).powi(2), 0.0, 4.0, 1e-10, 200);
        assert!((m.x - 1.3).abs() < 1e-6);
        let m = golden_section(&mut |x| x, 2.0, 5.0, 1e-10, 200);
        assert_eq!(m.x, 2.0);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let mut rosen = |v: &[f64]| (1.0 - v[0]).powi(2) + 100.0 * (v[1] - v[0] * v[0]).powi(2);
        let r = nelder_mead(&mut rosen, &[-1.2, 1.0], 0.5, 1e-14, 1e-9, 5000);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn nelder_mead_avoids_infinite_region() {
        let mut f = |v: &[f64]| if v[0] < 0.0 { f64::INFINITY } else { (v[0] - 0.5).powi(2) };
        let r = nelder_mead(&mut f, &[2.0], 1.0, 1e-14, 1e-10, 500);
        assert!((r.x[0] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn bisect_brackets() {
        let r = bisect(&mut |x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(bisect(&mut |x| x * x + 1.0, -1.0, 1.0, 1e-10).is_none());
    }
}
