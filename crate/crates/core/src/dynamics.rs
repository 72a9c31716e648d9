//! Control-affine dynamics `x' = a(t,x) + b(t,x) u`, their integration, and the
//! exponential tail used to extend finite-horizon states to `[0, ∞)`.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ode::{self, DenseSolution, OdeOptions};
use crate::signals::ControlSignal;

pub type DriftFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// Returns the `n × m` input matrix in row-major order.
pub type InputFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// `(t, x, u) ↦ ∂(a + b u)/∂x`, row-major `n × n`.
pub type JacobianFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct ControlAffineSystem {
    state_dim: usize,
    control_dim: usize,
    drift: DriftFn,
    input: InputFn,
    jacobian: Option<JacobianFn>,
    coefficient_breakpoints: Vec<f64>,
}

impl std::fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("coefficient_breakpoints", &self.coefficient_breakpoints)
            .finish()
    }
}

impl ControlAffineSystem {
    pub fn new(state_dim: usize, control_dim: usize, drift: DriftFn, input: InputFn) -> Self {
        Self { state_dim, control_dim, drift, input, jacobian: None, coefficient_breakpoints: Vec::new() }
    }

    /// `a ≡ 0`, `b ≡ 0`.
    pub fn frozen(state_dim: usize, control_dim: usize) -> Self {
        Self::new(
            state_dim,
            control_dim,
            Arc::new(move |_, _| vec![0.0; state_dim]),
            Arc::new(move |_, _| vec![0.0; state_dim * control_dim]),
        )
    }

    /// `x' = A x + B u` with row-major `A` (`n × n`) and `B` (`n × m`).
    pub fn linear(state_dim: usize, control_dim: usize, a: Vec<f64>, b: Vec<f64>) -> Self {
        let a = Arc::new(a);
        let a2 = Arc::clone(&a);
        let b = Arc::new(b);
        Self::new(
            state_dim,
            control_dim,
            Arc::new(move |_, x| {
                (0..state_dim).map(|i| (0..state_dim).map(|j| a[i * state_dim + j] * x[j]).sum()).collect()
            }),
            Arc::new(move |_, _| b.as_ref().clone()),
        )
        .with_jacobian(Arc::new(move |_, _, _| a2.as_ref().clone()))
    }

    pub fn with_jacobian(mut self, jacobian: JacobianFn) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    /// Times where `a` or `b` are discontinuous in `t`; integration restarts there.
    pub fn with_breakpoints(mut self, mut breakpoints: Vec<f64>) -> Self {
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breakpoints.dedup();
        self.coefficient_breakpoints = breakpoints;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn coefficient_breakpoints(&self) -> &[f64] {
        &self.coefficient_breakpoints
    }

    pub fn drift(&self, t: f64, x: &[f64]) -> Vec<f64> {
        (self.drift)(t, x)
    }

    pub fn input_matrix(&self, t: f64, x: &[f64]) -> Vec<f64> {
        (self.input)(t, x)
    }

    /// `a(t,x) + b(t,x) u`
    pub fn rate(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        self.rate_into(t, x, u, &mut out);
        out
    }

    pub fn rate_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let a = (self.drift)(t, x);
        let b = (self.input)(t, x);
        let m = self.control_dim;
        for i in 0..self.state_dim {
            let mut v = a[i];
            for k in 0..m {
                v += b[i * m + k] * u[k];
            }
            out[i] = v;
        }
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// `∂(a + b u)/∂x` at `(t, x, u)`, row-major. Falls back to central
    /// differences with step `ε^{1/3} (1 + |x_j|)`.
    pub fn state_jacobian(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        if let Some(j) = &self.jacobian {
            return j(t, x, u);
        }
        let n = self.state_dim;
        let mut jac = vec![0.0; n * n];
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        let cbrt_eps = f64::EPSILON.cbrt();
        for j in 0..n {
            let h = cbrt_eps * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            self.rate_into(t, &xp, u, &mut fp);
            xp[j] = x[j] - h;
            self.rate_into(t, &xp, u, &mut fm);
            xp[j] = x[j];
            for i in 0..n {
                jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub escape_radius: f64,
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        let o = OdeOptions::default();
        Self { rtol: o.rtol, atol: o.atol, escape_radius: o.escape_radius, fixed_step: None, max_steps: o.max_steps }
    }
}

impl IntegrateOptions {
    pub fn ode(&self) -> OdeOptions {
        OdeOptions {
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
            fixed_step: self.fixed_step,
            escape_radius: self.escape_radius,
        }
    }
}

#[derive(Debug, Clone)]
struct ExponentialTail {
    start: f64,
    state: Vec<f64>,
}

/// State trajectory with dense output, optionally continued by `x(T) e^{-(t-T)}`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dense: DenseSolution,
    dense_end: f64,
    tail: Option<ExponentialTail>,
    end: f64,
}

impl Trajectory {
    fn from_dense(dense: DenseSolution) -> Self {
        let end = dense.t_end();
        Self { dense_end: end, dense, tail: None, end }
    }

    pub fn state_dim(&self) -> usize {
        self.dense.dim()
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.dense.eval(self.dense.t_start())
    }

    pub fn start_time(&self) -> f64 {
        self.dense.t_start()
    }

    pub fn end_time(&self) -> f64 {
        self.end
    }

    pub fn blew_up(&self) -> bool {
        self.dense.blow_up_time().is_some()
    }

    pub fn blow_up_time(&self) -> Option<f64> {
        self.dense.blow_up_time()
    }

    pub fn covers(&self, t: f64) -> bool {
        t <= self.end
    }

    pub fn state_into(&self, t: f64, out: &mut [f64]) {
        match &self.tail {
            Some(tail) if t > tail.start => {
                let f = (-(t - tail.start)).exp();
                for (o, x) in out.iter_mut().zip(&tail.state) {
                    *o = x * f;
                }
            }
            _ => self.dense.eval_into(t, out),
        }
    }

    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim()];
        self.state_into(t, &mut out);
        out
    }

    /// Integrator nodes (plus the tail end point when extended).
    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.dense.nodes().into_iter().filter(|t| *t <= self.dense_end).collect();
        if self.tail.is_some() && self.end > *g.last().unwrap() {
            g.push(self.end);
        }
        g
    }

    /// Samples `(t, x(t))` every `step` from the start to the end time (inclusive).
    pub fn sample(&self, step: f64) -> Vec<(f64, Vec<f64>)> {
        let t0 = self.start_time();
        let count = ((self.end - t0) / step).floor() as usize;
        let mut out: Vec<(f64, Vec<f64>)> =
            (0..=count).map(|k| t0 + k as f64 * step).map(|t| (t, self.state_at(t))).collect();
        if out.last().map(|(t, _)| *t < self.end - 1e-12).unwrap_or(true) {
            out.push((self.end, self.state_at(self.end)));
        }
        out
    }

    pub fn sup_norm(&self, samples: usize) -> f64 {
        let t0 = self.start_time();
        let mut grid = self.grid();
        let n = samples.max(2);
        grid.extend((0..=n).map(|k| t0 + (self.end - t0) * k as f64 / n as f64));
        grid.iter().map(|t| self.state_at(*t).iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    /// CSV rows `t,x1,…,xn` with a header.
    pub fn to_csv(&self, step: f64) -> String {
        let mut s = String::from("t");
        for i in 1..=self.state_dim() {
            let _ = write!(s, ",x{i}");
        }
        s.push('\n');
        for (t, x) in self.sample(step) {
            let _ = write!(s, "{t}");
            for v in x {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Integrates the system under `u` from `x0` over `[0, span_end]`.
///
/// Restarts at every control breakpoint and coefficient breakpoint. If the
/// state leaves the ball of radius `escape_radius` the trajectory stops there
/// and records the bracketed escape time.
pub fn integrate(
    system: &ControlAffineSystem,
    u: &ControlSignal,
    x0: &[f64],
    span_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if x0.len() != system.state_dim() {
        return Err(Error::DimensionMismatch { expected: system.state_dim(), got: x0.len() });
    }
    if u.control_dim() != system.control_dim() {
        return Err(Error::DimensionMismatch { expected: system.control_dim(), got: u.control_dim() });
    }
    if !span_end.is_finite() || span_end <= 0.0 {
        return Err(Error::InvalidArgument(format!("span end must be finite and positive, got {span_end}")));
    }
    let x0_norm = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if opts.escape_radius <= x0_norm {
        return Err(Error::InvalidArgument("escape radius must exceed |x0|".into()));
    }
    let mut breaks = u.switch_times();
    breaks.extend_from_slice(system.coefficient_breakpoints());
    let mut rhs = |t: f64, x: &[f64], dx: &mut [f64]| system.rate_into(t, x, u.evaluate(t), dx);
    let dense = ode::solve(&mut rhs, 0.0, x0, span_end, &breaks, &opts.ode())?;
    Ok(Trajectory::from_dense(dense))
}

/// Continues `traj` beyond `t_final` with `x(t) = x(T) e^{-(t-T)}` up to `span_end`.
pub fn extend_tail(traj: &Trajectory, t_final: f64, span_end: f64) -> Result<Trajectory> {
    if let Some(tb) = traj.blow_up_time() {
        if tb <= t_final || traj.dense_end < t_final {
            return Err(Error::BlowUp { at: tb, required: t_final });
        }
    }
    if traj.dense_end < t_final - 1e-12 * t_final.abs().max(1.0) {
        return Err(Error::TrajectoryTooShort { end: traj.dense_end, required: t_final });
    }
    if span_end <= t_final {
        return Err(Error::InvalidArgument(format!("span end {span_end} must exceed T = {t_final}")));
    }
    let state = traj.dense.eval(t_final);
    Ok(Trajectory {
        dense: traj.dense.clone(),
        dense_end: t_final,
        tail: Some(ExponentialTail { start: t_final, state }),
        end: span_end,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    /// `(t, x₁, x₂)` attaining the ratio.
    pub witness: Option<(f64, Vec<f64>, Vec<f64>)>,
    pub pairs: usize,
}

/// Empirical Lipschitz constant of `x ↦ a(t,x) + b(t,x) u` on a box.
///
/// A diagnostic only: the supremum over sampled pairs under-approximates the
/// true constant.
pub fn lipschitz_probe(
    system: &ControlAffineSystem,
    u: &[f64],
    lower: &[f64],
    upper: &[f64],
    time_window: (f64, f64),
    samples: usize,
) -> Result<LipschitzReport> {
    let n = system.state_dim();
    if lower.len() != n || upper.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: lower.len() });
    }
    if samples < 2 || lower.iter().zip(upper).any(|(l, h)| l > h) {
        return Err(Error::InvalidArgument("need samples ≥ 2 and a nonempty box".into()));
    }
    let per_axis = if n == 1 { samples } else { ((4096f64).powf(1.0 / n as f64) as usize).clamp(2, samples) };
    let points = tensor_grid(lower, upper, per_axis);
    let times: Vec<f64> = if time_window.1 > time_window.0 {
        (0..5).map(|k| time_window.0 + (time_window.1 - time_window.0) * k as f64 / 4.0).collect()
    } else {
        vec![time_window.0]
    };
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if points.len() <= 512 {
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                pairs.push((i, j));
            }
        }
    } else {
        for i in 0..points.len() - 1 {
            pairs.push((i, i + 1));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..20_000 {
            let i = rng.gen_range(0..points.len());
            let j = rng.gen_range(0..points.len());
            if i != j {
                pairs.push((i, j));
            }
        }
    }
    let mut best = LipschitzReport { max_ratio: 0.0, witness: None, pairs: 0 };
    for &t in &times {
        let values: Vec<Vec<f64>> = points.iter().map(|x| system.rate(t, x, u)).collect();
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        for &(i, j) in &pairs {
            let dx = dist(&points[i], &points[j]);
            if dx == 0.0 {
                continue;
            }
            let ratio = dist(&values[i], &values[j]) / dx;
            best.pairs += 1;
            if ratio > best.max_ratio {
                best.max_ratio = ratio;
                best.witness = Some((t, points[i].clone(), points[j].clone()));
            }
        }
    }
    Ok(best)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Tensor grid with `per_axis` points per component (endpoints included).
pub fn tensor_grid(lower: &[f64], upper: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lower.iter().zip(upper).map(|(l, h)| linspace(*l, *h, per_axis)).collect();
    cartesian(&axes)
}

pub fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count <= 1 || a == b {
        return vec![a];
    }
    (0..count).map(|k| a + (b - a) * k as f64 / (count - 1) as f64).collect()
}

pub fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for v in axis {
                let mut p = prefix.clone();
                p.push(*v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counterexample_system() -> ControlAffineSystem {
        ControlAffineSystem::new(
            1,
            1,
            Arc::new(|_, _| vec![0.0]),
            Arc::new(|t, x| vec![if (0.0..=1.0).contains(&t) { x[0] * x[0] } else { 0.0 }]),
        )
        .with_breakpoints(vec![1.0])
    }

    fn ex41_system() -> ControlAffineSystem {
        ControlAffineSystem::new(1, 1, Arc::new(|_, x| vec![x[0]]), Arc::new(|_, x| vec![-x[0]]))
    }

    #[test]
    fn counterexample_reaches_tk() {
        let sys = counterexample_system();
        let tk = 10.0;
        let u = ControlSignal::new(vec![0.0, 1.0, tk], vec![vec![1.0 - 1.0 / tk], vec![0.0]], vec![0.0]).unwrap();
        let traj = integrate(&sys, &u, &[1.0], tk, &IntegrateOptions::default()).unwrap();
        assert!(!traj.blew_up());
        assert!((traj.state_at(1.0)[0] - tk).abs() / tk < 1e-6);
        // frozen after t = 1
        assert!((traj.state_at(7.0)[0] - tk).abs() / tk < 1e-9);
    }

    #[test]
    fn frozen_dynamics_keep_state() {
        let sys = ControlAffineSystem::frozen(2, 1);
        let u = ControlSignal::constant(vec![3.0], 5.0, vec![0.0]).unwrap();
        let traj = integrate(&sys, &u, &[1.0, -2.0], 5.0, &IntegrateOptions::default()).unwrap();
        for t in [0.0, 1.3, 5.0] {
            assert_eq!(traj.state_at(t), vec![1.0, -2.0]);
        }
    }

    #[test]
    fn bang_decay() {
        let u = ControlSignal::constant(vec![2.0], 1.0, vec![0.0]).unwrap();
        let traj = integrate(&ex41_system(), &u, &[1.0], 1.0, &IntegrateOptions::default()).unwrap();
        assert!((traj.state_at(1.0)[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn blow_up_bracketed_near_one() {
        let u = ControlSignal::constant(vec![1.0], 2.0, vec![0.0]).unwrap();
        let opts = IntegrateOptions { escape_radius: 1e6, ..Default::default() };
        let traj = integrate(&counterexample_system(), &u, &[1.0], 2.0, &opts).unwrap();
        let tb = traj.blow_up_time().expect("blow-up");
        assert!(tb < 1.0 && tb > 1.0 - 1e-4, "tb = {tb}");
        // states grow monotonically towards the escape radius
        let g = traj.grid();
        let tail: Vec<f64> = g[g.len() - 5..].iter().map(|t| traj.state_at(*t)[0]).collect();
        assert!(tail.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn escape_radius_must_exceed_initial_state() {
        let u = ControlSignal::constant(vec![1.0], 2.0, vec![0.0]).unwrap();
        let opts = IntegrateOptions { escape_radius: 0.5, ..Default::default() };
        assert!(integrate(&ex41_system(), &u, &[1.0], 1.0, &opts).is_err());
    }

    #[test]
    fn tail_extension() {
        let sys = ControlAffineSystem::new(1, 1, Arc::new(|_, _| vec![2.5]), Arc::new(|_, _| vec![0.0]));
        let u = ControlSignal::constant(vec![0.0], 2.0, vec![0.0]).unwrap();
        let traj = integrate(&sys, &u, &[0.0], 2.0, &IntegrateOptions::default()).unwrap();
        let ext = extend_tail(&traj, 2.0, 5.0).unwrap();
        assert!((ext.state_at(2.0)[0] - 5.0).abs() < 1e-12);
        assert!((ext.state_at(3.0)[0] - 5.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(ext.end_time(), 5.0);
        // continuity at T and x' = -x on the tail
        let h = 1e-6;
        assert!((ext.state_at(2.0 + h)[0] - ext.state_at(2.0)[0]).abs() < 1e-5);
        let d = (ext.state_at(3.0 + h)[0] - ext.state_at(3.0 - h)[0]) / (2.0 * h);
        assert!((d + ext.state_at(3.0)[0]).abs() < 1e-6);
    }

    #[test]
    fn zero_state_tail_is_zero() {
        let sys = ControlAffineSystem::frozen(1, 1);
        let u = ControlSignal::constant(vec![0.0], 1.0, vec![0.0]).unwrap();
        let traj = integrate(&sys, &u, &[0.0], 1.0, &IntegrateOptions::default()).unwrap();
        let ext = extend_tail(&traj, 1.0, 10.0).unwrap();
        assert_eq!(ext.state_at(7.0), vec![0.0]);
    }

    #[test]
    fn counterexample_tail_returns_to_one() {
        let sys = counterexample_system();
        let tk: f64 = 10.0;
        let u = ControlSignal::new(vec![0.0, 1.0, tk], vec![vec![1.0 - 1.0 / tk], vec![0.0]], vec![0.0]).unwrap();
        let traj = integrate(&sys, &u, &[1.0], tk, &IntegrateOptions::default()).unwrap();
        let ext = extend_tail(&traj, tk, 20.0).unwrap();
        assert!((ext.state_at(tk + tk.ln())[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tail_refuses_blown_up_trajectory() {
        let u = ControlSignal::constant(vec![1.0], 2.0, vec![0.0]).unwrap();
        let traj = integrate(&counterexample_system(), &u, &[1.0], 2.0, &IntegrateOptions::default()).unwrap();
        assert!(matches!(extend_tail(&traj, 2.0, 3.0), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn lipschitz_examples() {
        let lin = ControlAffineSystem::new(1, 1, Arc::new(|_, x| vec![x[0]]), Arc::new(|_, _| vec![0.0]));
        let r = lipschitz_probe(&lin, &[0.0], &[-1.0], &[1.0], (0.0, 1.0), 41).unwrap();
        assert!((r.max_ratio - 1.0).abs() < 1e-9);

        let quad = ControlAffineSystem::new(1, 1, Arc::new(|_, x| vec![x[0] * x[0]]), Arc::new(|_, _| vec![0.0]));
        let r = lipschitz_probe(&quad, &[0.0], &[0.0], &[10.0], (0.0, 0.0), 201).unwrap();
        // brute-force sup of |x1 + x2| over distinct grid pairs: 10 + 9.95
        assert!((r.max_ratio - 19.95).abs() < 1e-9, "{}", r.max_ratio);

        for u in [0.0, 0.5, 1.0, 2.0] {
            let r = lipschitz_probe(&ex41_system(), &[u], &[-5.0], &[5.0], (0.0, 1.0), 21).unwrap();
            assert!(r.max_ratio <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn finite_difference_jacobian() {
        let sys = ex41_system();
        let j = sys.state_jacobian(0.0, &[3.0], &[2.0]);
        assert!((j[0] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn csv_export() {
        let sys = ControlAffineSystem::frozen(1, 1);
        let u = ControlSignal::constant(vec![0.0], 1.0, vec![0.0]).unwrap();
        let traj = integrate(&sys, &u, &[2.0], 1.0, &IntegrateOptions::default()).unwrap();
        assert_eq!(traj.to_csv(0.5), "t,x1\n0,2\n0.5,2\n1,2\n");
    }
}
