//! Dormand–Prince 5(4) integrator with dense output, restarts at breakpoints and
//! escape (blow-up) detection.
//!
//! The right-hand side is only ever evaluated at times strictly inside the current
//! sub-interval between two breakpoints, so one-sided limits of discontinuous
//! coefficients (indicators, piecewise-constant controls) are picked up correctly.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Disables error control and steps with (at most) this size.
    pub fixed_step: Option<f64>,
    /// Integration stops once the Euclidean norm of the state exceeds this.
    pub escape_radius: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 2_000_000, fixed_step: None, escape_radius: 1e9 }
    }
}

#[derive(Debug, Clone)]
struct DenseStep {
    t0: f64,
    h: f64,
    // r1..r5 of the continuous extension, each of length n
    coeffs: Vec<f64>,
}

/// Piecewise polynomial solution of an initial-value problem.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    dim: usize,
    t_start: f64,
    y_start: Vec<f64>,
    t_reached: f64,
    y_reached: Vec<f64>,
    steps: Vec<DenseStep>,
    blow_up: Option<f64>,
    rejected: usize,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_reached
    }

    pub fn final_state(&self) -> &[f64] {
        &self.y_reached
    }

    pub fn blow_up_time(&self) -> Option<f64> {
        self.blow_up
    }

    pub fn accepted_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    /// Step boundaries, strictly increasing.
    pub fn nodes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        out.push(self.t_start);
        for s in &self.steps {
            let end = s.t0 + s.h;
            if end > *out.last().unwrap() {
                out.push(end);
            }
        }
        out
    }

    /// Dense value at `t`, clamped to the covered interval.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.steps.is_empty() || t <= self.t_start {
            out.copy_from_slice(&self.y_start);
            return;
        }
        if t >= self.t_reached {
            out.copy_from_slice(&self.y_reached);
            return;
        }
        let idx = self.steps.partition_point(|s| s.t0 <= t).saturating_sub(1);
        let s = &self.steps[idx];
        let theta = ((t - s.t0) / s.h).clamp(0.0, 1.0);
        let one = 1.0 - theta;
        let n = self.dim;
        let c = &s.coeffs;
        for i in 0..n {
            out[i] = c[i] + theta * (c[n + i] + one * (c[2 * n + i] + theta * (c[3 * n + i] + one * c[4 * n + i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Moves `t` into the open interval `(lo, hi)` by a few ulps so that the
/// right-hand side sees the one-sided limit belonging to this sub-interval.
fn nudge(t: f64, lo: f64, hi: f64) -> f64 {
    let dl = 64.0 * f64::EPSILON * lo.abs().max(1.0);
    let dh = 64.0 * f64::EPSILON * hi.abs().max(1.0);
    if hi - lo <= dl + dh {
        return 0.5 * (lo + hi);
    }
    t.clamp(lo + dl, hi - dh)
}

/// Right-hand side `f(t, y, dy)` of `y' = f(t, y)`.
pub type Rhs<'a> = dyn FnMut(f64, &[f64], &mut [f64]) + 'a;

struct Stepper<'a> {
    n: usize,
    rhs: &'a mut Rhs<'a>,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    err: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl<'a> Stepper<'a> {
    fn new(n: usize, rhs: &'a mut Rhs<'a>) -> Self {
        Self {
            n,
            rhs,
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            err: vec![0.0; n],
            lo: 0.0,
            hi: 0.0,
        }
    }

    fn f(&mut self, t: f64, stage: usize, from_tmp: bool, y: &[f64]) -> bool {
        let te = nudge(t, self.lo, self.hi);
        let (src, k) = if from_tmp { (&self.ytmp[..], &mut self.k[stage]) } else { (y, &mut self.k[stage]) };
        (self.rhs)(te, src, k);
        k.iter().all(|v| v.is_finite())
    }

    #[allow(clippy::needless_range_loop)]
    fn combo(&mut self, y: &[f64], h: f64, coeffs: &[(usize, f64)]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for &(s, a) in coeffs {
                acc += a * self.k[s][i];
            }
            self.ytmp[i] = y[i] + h * acc;
        }
    }

    /// One trial step assuming `k[0] = f(t, y)`. Returns the scaled error norm
    /// (infinite on a non-finite stage) and leaves the new state in `ynew`.
    #[allow(clippy::needless_range_loop)]
    fn step(&mut self, t: f64, y: &[f64], h: f64, opts: &OdeOptions) -> f64 {
        self.combo(y, h, &[(0, A21)]);
        if !self.f(t + C2 * h, 1, true, y) {
            return f64::INFINITY;
        }
        self.combo(y, h, &[(0, A31), (1, A32)]);
        if !self.f(t + C3 * h, 2, true, y) {
            return f64::INFINITY;
        }
        self.combo(y, h, &[(0, A41), (1, A42), (2, A43)]);
        if !self.f(t + C4 * h, 3, true, y) {
            return f64::INFINITY;
        }
        self.combo(y, h, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        if !self.f(t + C5 * h, 4, true, y) {
            return f64::INFINITY;
        }
        self.combo(y, h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        if !self.f(t + h, 5, true, y) {
            return f64::INFINITY;
        }
        self.combo(y, h, &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)]);
        self.ynew.copy_from_slice(&self.ytmp);
        if !self.ynew.iter().all(|v| v.is_finite()) {
            return f64::INFINITY;
        }
        let ynew = self.ynew.clone();
        if !self.f(t + h, 6, false, &ynew) {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for i in 0..self.n {
            let e = h
                * (E1 * self.k[0][i]
                    + E3 * self.k[2][i]
                    + E4 * self.k[3][i]
                    + E5 * self.k[4][i]
                    + E6 * self.k[5][i]
                    + E7 * self.k[6][i]);
            self.err[i] = e;
            let sk = opts.atol + opts.rtol * y[i].abs().max(self.ynew[i].abs());
            acc += (e / sk).powi(2);
        }
        (acc / self.n as f64).sqrt()
    }

    fn dense(&self, t: f64, y: &[f64], h: f64) -> DenseStep {
        let n = self.n;
        let mut c = vec![0.0; 5 * n];
        for i in 0..n {
            let ydiff = self.ynew[i] - y[i];
            let bspl = h * self.k[0][i] - ydiff;
            c[i] = y[i];
            c[n + i] = ydiff;
            c[2 * n + i] = bspl;
            c[3 * n + i] = ydiff - h * self.k[6][i] - bspl;
            c[4 * n + i] = h
                * (D1 * self.k[0][i]
                    + D3 * self.k[2][i]
                    + D4 * self.k[3][i]
                    + D5 * self.k[4][i]
                    + D6 * self.k[5][i]
                    + D7 * self.k[6][i]);
        }
        DenseStep { t0: t, h, coeffs: c }
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`, restarting at every
/// breakpoint in `(t0, t1)`.
///
/// Stops early (without error) when the state norm crosses `escape_radius`;
/// the crossing time is bracketed by bisection over accepted step lengths and
/// reported through [`DenseSolution::blow_up_time`].
pub fn solve(
    rhs: &mut Rhs<'_>,
    t0: f64,
    y0: &[f64],
    t1: f64,
    breakpoints: &[f64],
    opts: &OdeOptions,
) -> Result<DenseSolution> {
    if !(t0.is_finite() && t1.is_finite()) || t1 < t0 {
        return Err(Error::InvalidArgument(format!("invalid integration span [{t0}, {t1}]")));
    }
    if !(opts.rtol > 0.0 && opts.atol >= 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    let n = y0.len();
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|b| *b > t0 && *b < t1).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    cuts.insert(0, t0);
    cuts.push(t1);

    let mut sol = DenseSolution {
        dim: n,
        t_start: t0,
        y_start: y0.to_vec(),
        t_reached: t0,
        y_reached: y0.to_vec(),
        steps: Vec::new(),
        blow_up: None,
        rejected: 0,
    };
    if n == 0 {
        sol.t_reached = t1;
        return Ok(sol);
    }
    if norm(y0) > opts.escape_radius {
        sol.blow_up = Some(t0);
        return Ok(sol);
    }

    let mut stepper = Stepper::new(n, rhs);
    let mut y = y0.to_vec();
    let mut h_prev: Option<f64> = None;
    let mut total_steps = 0usize;

    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let min_len = 256.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0);
        if hi - lo <= min_len {
            continue;
        }
        stepper.lo = lo;
        stepper.hi = hi;
        let mut t = lo;
        if !stepper.f(t, 0, false, &y) {
            return Err(Error::NonFinite { t });
        }
        let mut h = match (opts.fixed_step, h_prev) {
            (Some(hf), _) => {
                let count = ((hi - lo) / hf).ceil().max(1.0);
                (hi - lo) / count
            }
            (None, Some(hp)) => hp.min(hi - lo),
            (None, None) => initial_step(&mut stepper, t, &y, hi - lo, opts),
        };
        let mut reject_streak = false;
        while t < hi {
            total_steps += 1;
            if total_steps > opts.max_steps {
                return Err(Error::TooManySteps { t });
            }
            let last = t + h >= hi - min_len;
            let h_try = if last { hi - t } else { h };
            let err = stepper.step(t, &y, h_try, opts);
            let accept = opts.fixed_step.is_some() || err <= 1.0;
            if opts.fixed_step.is_some() && !err.is_finite() {
                return Err(Error::NonFinite { t });
            }
            if accept {
                if norm(&stepper.ynew) > opts.escape_radius {
                    let (reach, step, crossing) = bracket_escape(&mut stepper, t, &y, h_try, opts);
                    if let Some(step) = step {
                        sol.steps.push(step);
                        y.copy_from_slice(&stepper.ynew);
                    }
                    sol.t_reached = reach;
                    sol.y_reached = y;
                    sol.blow_up = Some(crossing);
                    return Ok(sol);
                }
                sol.steps.push(stepper.dense(t, &y, h_try));
                y.copy_from_slice(&stepper.ynew);
                t = if last { hi } else { t + h_try };
                stepper.k.swap(0, 6);
                if opts.fixed_step.is_none() {
                    let mut fac = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 10.0 };
                    fac = fac.clamp(0.2, if reject_streak { 1.0 } else { 10.0 });
                    if !last {
                        h = h_try * fac;
                        h_prev = Some(h);
                    } else {
                        h_prev = Some(h.max(h_try * fac));
                    }
                }
                reject_streak = false;
            } else {
                sol.rejected += 1;
                reject_streak = true;
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                h = h_try * fac;
                if h < 1e-15 * t.abs().max(1.0) {
                    return Err(Error::StepSizeUnderflow { t });
                }
            }
        }
    }
    sol.t_reached = t1;
    sol.y_reached = y;
    Ok(sol)
}

fn initial_step(stepper: &mut Stepper<'_>, t: f64, y: &[f64], span: f64, opts: &OdeOptions) -> f64 {
    let n = y.len();
    let sk: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let scaled = |v: &[f64]| (v.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d0 = scaled(y);
    let f0 = stepper.k[0].clone();
    let d1 = scaled(&f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    for i in 0..n {
        stepper.ytmp[i] = y[i] + h0 * f0[i];
    }
    let ok = stepper.f(t + h0, 1, true, y);
    let d2 = if ok {
        let diff: Vec<f64> = stepper.k[1].iter().zip(&f0).map(|(a, b)| a - b).collect();
        scaled(&diff) / h0
    } else {
        f64::INFINITY
    };
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
    (100.0 * h0).min(h1).min(span).max(1e-12 * span)
}

/// Bisection over the step length from an accepted state inside the escape ball.
/// Returns (time reached, last dense step inside the ball, crossing time).
fn bracket_escape(
    stepper: &mut Stepper<'_>,
    t: f64,
    y: &[f64],
    h: f64,
    opts: &OdeOptions,
) -> (f64, Option<DenseStep>, f64) {
    let k0 = stepper.k[0].clone();
    let tol = (opts.rtol * t.abs().max(1.0)).max(1e-13 * t.abs().max(1.0));
    let (mut lo, mut hi) = (0.0, h);
    let mut best: Option<(DenseStep, Vec<f64>, Vec<f64>)> = None;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        stepper.k[0].copy_from_slice(&k0);
        let err = stepper.step(t, y, mid, opts);
        let ok = (opts.fixed_step.is_some() || err <= 1.0) && err.is_finite();
        if ok && norm(&stepper.ynew) <= opts.escape_radius {
            lo = mid;
            best = Some((stepper.dense(t, y, mid), stepper.ynew.clone(), stepper.k[6].clone()));
        } else {
            hi = mid;
        }
    }
    match best {
        Some((step, ynew, k6)) => {
            stepper.ynew = ynew;
            stepper.k[6] = k6;
            (t + lo, Some(step), t + 0.5 * (lo + hi))
        }
        None => (t, None, t + 0.5 * (lo + hi)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_adaptive() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let sol = solve(&mut f, 0.0, &[1.0], 1.0, &[], &OdeOptions::default()).unwrap();
        assert!((sol.final_state()[0] - (-1.0f64).exp()).abs() < 1e-10);
        for t in [0.1, 0.37, 0.5, 0.99] {
            assert!((sol.eval(t)[0] - (-t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn fifth_order_convergence_fixed_step() {
        let err = |h: f64| {
            let opts = OdeOptions { fixed_step: Some(h), ..OdeOptions::default() };
            let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
            let sol = solve(&mut f, 0.0, &[1.0], 1.0, &[], &opts).unwrap();
            (sol.final_state()[0] - (-1.0f64).exp()).abs()
        };
        let (e1, e2, e3) = (err(0.2), err(0.1), err(0.05));
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!(o1 > 4.6 && o2 > 4.6, "observed orders {o1} {o2}");
    }

    #[test]
    fn error_decreases_with_tolerance() {
        let mut prev = f64::INFINITY;
        for rtol in [1e-4, 1e-6, 1e-8, 1e-10] {
            let opts = OdeOptions { rtol, atol: rtol * 1e-2, ..OdeOptions::default() };
            let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
            let sol = solve(&mut f, 0.0, &[1.0], 1.0, &[], &opts).unwrap();
            let e = (sol.final_state()[0] - (-1.0f64).exp()).abs();
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn breakpoint_sees_one_sided_values() {
        // y' = 1 on [0,1), 0 afterwards; a step must not straddle t = 1
        let mut f = |t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = if t < 1.0 { 1.0 } else { 0.0 };
        let sol = solve(&mut f, 0.0, &[0.0], 3.0, &[1.0], &OdeOptions::default()).unwrap();
        assert!((sol.final_state()[0] - 1.0).abs() < 1e-13);
        assert!((sol.eval(0.5)[0] - 0.5).abs() < 1e-13);
        assert!(sol.nodes().contains(&1.0));
    }

    #[test]
    fn escape_is_bracketed() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        let opts = OdeOptions { escape_radius: 1e6, ..OdeOptions::default() };
        let sol = solve(&mut f, 0.0, &[1.0], 2.0, &[], &opts).unwrap();
        let tb = sol.blow_up_time().unwrap();
        assert!((tb - (1.0 - 1e-6)).abs() < 1e-8, "blow-up time {tb}");
        assert!(sol.t_end() < 1.0);
        assert!(sol.final_state()[0] <= 1e6);
    }

    #[test]
    fn nonfinite_start_is_an_error() {
        let mut f = |_t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = f64::NAN;
        assert!(matches!(solve(&mut f, 0.0, &[1.0], 1.0, &[], &OdeOptions::default()), Err(Error::NonFinite { .. })));
    }
}
