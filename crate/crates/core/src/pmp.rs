//! Pontryagin analysis for control-affine problems: costates, switching
//! functions and extremal verification.
//!
//! The Hamiltonian is `H = ℓ(t,x,u) + pᵀ(a(t,x) + b(t,x)u)`. Absolute values in
//! `ℓ` are differentiated by central differences, which is the subgradient
//! `sign(x)` away from the kink and `0` at it.

use std::fmt;

use crate::defaults;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::ode::{self, DenseSolution, OdeOptions};
use crate::optim::bisect;
use crate::problem::Problem;
use crate::signals::ControlSignal;

/// Costate `p` on `[0, T]` with `p(T) = 0`.
#[derive(Debug, Clone)]
pub struct CostateTrajectory {
    horizon: f64,
    /// Solution in reversed time `s = T − t`.
    reversed: DenseSolution,
}

impl CostateTrajectory {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.reversed.dim()
    }

    pub fn costate_into(&self, t: f64, out: &mut [f64]) {
        self.reversed.eval_into(self.horizon - t, out);
    }

    pub fn costate_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.costate_into(t, &mut out);
        out
    }

    /// Integrator nodes mapped back to forward time, increasing.
    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.reversed.nodes().into_iter().map(|s| self.horizon - s).collect();
        g.reverse();
        g
    }
}

/// Integrates `p' = −∂ℓ/∂x − (∂(a+bu)/∂x)ᵀ p` backward from `p(T) = 0`,
/// restarting at control and coefficient breakpoints.
pub fn costate_integrate(
    problem: &Problem,
    traj: &Trajectory,
    u: &ControlSignal,
    horizon: f64,
) -> Result<CostateTrajectory> {
    if !traj.covers(horizon) || traj.blow_up_time().is_some_and(|tb| tb <= horizon) {
        return Err(Error::TrajectoryTooShort { end: traj.end_time(), required: horizon });
    }
    let n = problem.state_dim();
    let mut x = vec![0.0; n];
    let mut rhs = |s: f64, q: &[f64], dq: &mut [f64]| {
        let t = horizon - s;
        traj.state_into(t, &mut x);
        let uv = u.evaluate(t);
        let grad = problem.cost.state_gradient(t, &x, uv);
        let jac = problem.system.state_jacobian(t, &x, uv);
        // q(s) = p(T − s), so q' = ∂ℓ/∂x + Jᵀ q
        for i in 0..n {
            let mut acc = grad[i];
            for k in 0..n {
                acc += jac[k * n + i] * q[k];
            }
            dq[i] = acc;
        }
    };
    let mut breaks: Vec<f64> = u
        .switch_times()
        .into_iter()
        .chain(problem.system.coefficient_breakpoints().iter().copied())
        .filter(|b| *b < horizon && *b > 0.0)
        .map(|b| horizon - b)
        .collect();
    breaks.sort_by(f64::total_cmp);
    let opts = OdeOptions {
        rtol: problem.tolerances.rtol,
        atol: defaults::COSTATE_ATOL,
        escape_radius: f64::INFINITY,
        ..OdeOptions::default()
    };
    let reversed = ode::solve(&mut rhs, 0.0, &vec![0.0; n], horizon, &breaks, &opts)?;
    if reversed.blow_up_time().is_some() || reversed.t_end() < horizon {
        return Err(Error::BlowUp { at: horizon - reversed.t_end(), required: 0.0 });
    }
    Ok(CostateTrajectory { horizon, reversed })
}

#[derive(Debug, Clone, Copy)]
pub struct SwitchingOptions {
    pub samples: usize,
    /// Relative to `|∂ℓ/∂u| + |bᵀp|` at the same time.
    pub singular_tol: f64,
    pub singular_window: usize,
    pub root_tol: f64,
}

impl Default for SwitchingOptions {
    fn default() -> Self {
        Self {
            samples: defaults::SWITCH_SAMPLES,
            singular_tol: defaults::SINGULAR_TOL,
            singular_window: defaults::SINGULAR_WINDOW,
            root_tol: defaults::ROOT_TOL,
        }
    }
}

/// `φ(t) = ∂H/∂u` sampled on a uniform grid, per control component.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingFunction {
    pub times: Vec<f64>,
    /// `values[k][i]` is component `k` at `times[i]`.
    pub values: Vec<Vec<f64>>,
    /// `|∂ℓ/∂u_k| + |(bᵀp)_k|`, the natural size of `φ_k`.
    pub scales: Vec<Vec<f64>>,
    /// `(component, t)` of sign changes, bracketed to the root tolerance.
    pub zero_crossings: Vec<(usize, f64)>,
    /// `(component, start, end)` where `|φ| ≤ tol·scale` persisted.
    pub singular_intervals: Vec<(usize, f64, f64)>,
}

impl SwitchingFunction {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for k in 1..=self.values.len() {
            s.push_str(&format!(",phi{k}"));
        }
        s.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            s.push_str(&t.to_string());
            for v in &self.values {
                s.push(',');
                s.push_str(&v[i].to_string());
            }
            s.push('\n');
        }
        s
    }
}

/// Evaluates `φ(t)` and its scale for all components.
struct PhiEval<'a> {
    problem: &'a Problem,
    traj: &'a Trajectory,
    costate: &'a CostateTrajectory,
}

impl PhiEval<'_> {
    fn eval(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.problem.state_dim();
        let m = self.problem.control_dim();
        let x = self.traj.state_at(t);
        let p = self.costate.costate_at(t);
        let c = self.problem.cost.affine_control_coefficient(t, &x, &self.problem.control_set)?;
        let b = self.problem.system.input_matrix(t, &x);
        let mut phi = Vec::with_capacity(m);
        let mut scale = Vec::with_capacity(m);
        for k in 0..m {
            let btp: f64 = (0..n).map(|i| b[i * m + k] * p[i]).sum();
            phi.push(c[k] + btp);
            scale.push(c[k].abs() + btp.abs());
        }
        Ok((phi, scale))
    }
}

fn ensure_affine(problem: &Problem, traj: &Trajectory, horizon: f64) -> Result<()> {
    if !problem.control_set.is_compact() {
        return Err(Error::Inapplicable("switching analysis needs a box control set".into()));
    }
    let samples: Vec<(f64, Vec<f64>)> =
        [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|f| (f * horizon, traj.state_at(f * horizon))).collect();
    if !problem.cost.is_affine_in_control(&problem.control_set, &samples) {
        return Err(Error::Inapplicable("cost is not affine in u; use the direct solver".into()));
    }
    Ok(())
}

/// Samples `φ`, brackets its sign changes and flags stretches where it stays
/// negligible relative to its own scale.
pub fn switching_function(
    problem: &Problem,
    traj: &Trajectory,
    costate: &CostateTrajectory,
    opts: &SwitchingOptions,
) -> Result<SwitchingFunction> {
    let horizon = costate.horizon();
    ensure_affine(problem, traj, horizon)?;
    let m = problem.control_dim();
    let ev = PhiEval { problem, traj, costate };
    let count = opts.samples.max(3);
    let times = crate::dynamics::linspace(0.0, horizon, count);
    let mut values = vec![Vec::with_capacity(count); m];
    let mut scales = vec![Vec::with_capacity(count); m];
    for &t in &times {
        let (phi, scale) = ev.eval(t)?;
        for k in 0..m {
            values[k].push(phi[k]);
            scales[k].push(scale[k]);
        }
    }

    let mut zero_crossings = Vec::new();
    let mut singular_intervals = Vec::new();
    for k in 0..m {
        let small: Vec<bool> =
            (0..count).map(|i| values[k][i].abs() <= opts.singular_tol * scales[k][i].max(f64::MIN_POSITIVE)).collect();
        let mut i = 0;
        while i < count {
            if small[i] {
                let start = i;
                while i < count && small[i] {
                    i += 1;
                }
                if i - start >= opts.singular_window {
                    singular_intervals.push((k, times[start], times[i - 1]));
                }
            } else {
                i += 1;
            }
        }
        // sign changes between consecutive non-negligible samples, bridging
        // short negligible runs (an isolated sample on the root itself)
        let mut prev: Option<usize> = None;
        for i in 0..count {
            if small[i] {
                continue;
            }
            if let Some(j) = prev {
                let bridged = i - j - 1;
                if bridged < opts.singular_window && values[k][j].signum() != values[k][i].signum() {
                    let mut f = |t: f64| ev.eval(t).map(|(phi, _)| phi[k]).unwrap_or(f64::NAN);
                    if let Some(root) = bisect(&mut f, times[j], times[i], opts.root_tol) {
                        zero_crossings.push((k, root));
                    }
                }
            }
            prev = Some(i);
        }
    }
    zero_crossings.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(SwitchingFunction { times, values, scales, zero_crossings, singular_intervals })
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Allowed sign violation of `φ`, relative to its scale.
    pub sign_tol: f64,
    /// Allowed `|φ|` on declared singular pieces, relative to its scale.
    pub singular_tol: f64,
    /// Allowed singular-arc state residual.
    pub residual_tol: f64,
    pub samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { sign_tol: 1e-6, singular_tol: 1e-6, residual_tol: 1e-6, samples: defaults::SWITCH_SAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalReport {
    pub consistent: bool,
    /// Largest wrong-sign magnitude of `φ` (absolute).
    pub max_sign_violation: f64,
    /// Same, divided by the local scale of `φ`.
    pub max_relative_violation: f64,
    /// Total time during which `φ` has the wrong sign beyond tolerance.
    pub violation_measure: f64,
    /// Per singular piece: `(start, end, max |φ|/scale, max state residual)`.
    pub singular_arc_residuals: Vec<(f64, f64, f64, f64)>,
    pub switching: SwitchingFunction,
}

impl fmt::Display for ExtremalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "consistent={}", self.consistent)?;
        writeln!(f, "max_sign_violation={}", self.max_sign_violation)?;
        writeln!(f, "max_relative_violation={}", self.max_relative_violation)?;
        writeln!(f, "violation_measure={}", self.violation_measure)?;
        for (i, (a, b, phi, res)) in self.singular_arc_residuals.iter().enumerate() {
            writeln!(f, "singular_arc_{i}=[{a},{b}]")?;
            writeln!(f, "singular_arc_{i}_phi={phi}")?;
            writeln!(f, "singular_arc_{i}_residual={res}")?;
        }
        write!(
            f,
            "zero_crossings={}",
            self.switching.zero_crossings.iter().map(|(_, t)| t.to_string()).collect::<Vec<_>>().join(";")
        )
    }
}

enum PieceRole {
    Lower,
    Upper,
    Singular,
}

/// Integrates state and costate under `u` and checks the minimum condition:
/// `φ ≥ 0` where `u` sits at the lower face, `φ ≤ 0` at the upper face, and
/// `φ ≈ 0` plus the singular-arc state condition on declared singular pieces.
pub fn verify_extremal(
    problem: &Problem,
    u: &ControlSignal,
    horizon: f64,
    opts: &VerifyOptions,
) -> Result<ExtremalReport> {
    let (lower, upper) = problem
        .control_set
        .bounds()
        .ok_or_else(|| Error::Inapplicable("extremal verification needs a box control set".into()))?;
    let m = problem.control_dim();
    let traj = problem.simulate(u, horizon)?;
    if traj.blew_up() {
        return Err(Error::BlowUp { at: traj.blow_up_time().unwrap_or(f64::NAN), required: horizon });
    }
    let costate = costate_integrate(problem, &traj, u, horizon)?;
    let sw_opts = SwitchingOptions { samples: opts.samples, ..Default::default() };
    let switching = switching_function(problem, &traj, &costate, &sw_opts)?;

    let role = |value: &[f64], k: usize| -> Result<PieceRole> {
        let v = value[k];
        let tol = 1e-12 * (1.0 + v.abs());
        if (v - lower[k]).abs() <= tol {
            Ok(PieceRole::Lower)
        } else if (v - upper[k]).abs() <= tol {
            Ok(PieceRole::Upper)
        } else if problem.is_singular_value(value) {
            Ok(PieceRole::Singular)
        } else {
            Err(Error::InvalidArgument(format!(
                "piece value {value:?} is neither a vertex of U nor a declared singular value"
            )))
        }
    };

    let bps = u.breakpoints();
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut measure = 0.0;
    let mut residuals = Vec::new();
    let dt = horizon / (switching.times.len() - 1) as f64;
    let ev = PhiEval { problem, traj: &traj, costate: &costate };

    for (j, value) in u.pieces().iter().enumerate() {
        let (a, b) = (bps[j], bps[j + 1].min(horizon));
        if b <= a {
            continue;
        }
        let inside: Vec<usize> =
            (0..switching.times.len()).filter(|&i| switching.times[i] >= a && switching.times[i] < b).collect();
        let mut singular_phi: f64 = 0.0;
        let mut singular_res: f64 = 0.0;
        let mut any_singular = false;
        for k in 0..m {
            let r = role(value, k)?;
            for &i in &inside {
                let phi = switching.values[k][i];
                let scale = switching.scales[k][i].max(f64::MIN_POSITIVE);
                match r {
                    PieceRole::Lower | PieceRole::Upper => {
                        let wrong = if matches!(r, PieceRole::Lower) { (-phi).max(0.0) } else { phi.max(0.0) };
                        max_abs = max_abs.max(wrong);
                        max_rel = max_rel.max(wrong / scale);
                        if wrong > opts.sign_tol * scale {
                            measure += dt;
                        }
                    }
                    PieceRole::Singular => {
                        any_singular = true;
                        singular_phi = singular_phi.max(phi.abs() / scale);
                    }
                }
            }
        }
        if any_singular {
            for &i in &inside {
                let t = switching.times[i];
                let res = match &problem.singular_residual {
                    Some(f) => f(t, &traj.state_at(t)).abs(),
                    None => {
                        // without a declared condition, use the scaled slope of φ
                        let h = 1e-5 * horizon.max(1.0);
                        let (lo, hi) = ((t - h).max(a), (t + h).min(b));
                        let (p1, s1) = ev.eval(hi)?;
                        let (p0, _) = ev.eval(lo)?;
                        (0..m)
                            .map(|k| ((p1[k] - p0[k]) / (hi - lo)).abs() / s1[k].max(f64::MIN_POSITIVE))
                            .fold(0.0, f64::max)
                    }
                };
                singular_res = singular_res.max(res);
            }
            residuals.push((a, b, singular_phi, singular_res));
        }
    }
    let singular_ok = residuals.iter().all(|(_, _, phi, res)| *phi <= opts.singular_tol && *res <= opts.residual_tol);
    Ok(ExtremalReport {
        consistent: max_rel <= opts.sign_tol && singular_ok,
        max_sign_violation: max_abs,
        max_relative_violation: max_rel,
        violation_measure: measure,
        singular_arc_residuals: residuals,
        switching,
    })
}

/// `dJ/dτ_j = H(τ_j, x, p, u_j) − H(τ_j, x, p, u_{j+1})` for every interior
/// breakpoint, from one forward and one backward pass.
pub fn breakpoint_sensitivities(problem: &Problem, u: &ControlSignal, horizon: f64) -> Result<Vec<f64>> {
    let traj = problem.simulate(u, horizon)?;
    if traj.blew_up() {
        return Err(Error::BlowUp { at: traj.blow_up_time().unwrap_or(f64::NAN), required: horizon });
    }
    let costate = costate_integrate(problem, &traj, u, horizon)?;
    let bps = u.breakpoints();
    let pieces = u.pieces();
    let hamiltonian = |t: f64, x: &[f64], p: &[f64], v: &[f64]| -> f64 {
        let f = problem.system.rate(t, x, v);
        problem.cost.eval(t, x, v) + f.iter().zip(p).map(|(a, b)| a * b).sum::<f64>()
    };
    Ok((1..pieces.len())
        .map(|j| {
            let t = bps[j];
            let x = traj.state_at(t);
            let p = costate.costate_at(t);
            hamiltonian(t, &x, &p, &pieces[j - 1]) - hamiltonian(t, &x, &p, &pieces[j])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::RunningCost;
    use crate::dynamics::ControlAffineSystem;
    use crate::signals::ControlValueSet;
    use std::sync::Arc;

    fn ex42() -> Problem {
        let sys = ControlAffineSystem::new(1, 1, Arc::new(|_, x| vec![x[0]]), Arc::new(|_, x| vec![-x[0]]));
        let cost = RunningCost::new(
            Arc::new(|t, x| x[0].abs() * (-2.0 * t).exp()),
            Arc::new(|t, _, u| u[0].abs() / 3.0 * (-2.0 * t).exp()),
        );
        let mut p = Problem::new("ex42", sys, cost, vec![1.0], ControlValueSet::interval(0.0, 2.0).unwrap(), vec![0.0])
            .unwrap();
        p.singular_values = vec![vec![1.0]];
        p.singular_residual = Some(Arc::new(|_, x| x[0] - 2.0 / 3.0));
        p
    }

    fn ex41() -> Problem {
        let sys = ControlAffineSystem::new(1, 1, Arc::new(|_, x| vec![x[0]]), Arc::new(|_, x| vec![-x[0]]));
        let cost = RunningCost::new(Arc::new(|_, x| x[0].abs()), Arc::new(|_, _, u| 4.0 * u[0].abs()));
        Problem::new("ex41", sys, cost, vec![1.0], ControlValueSet::interval(0.0, 2.0).unwrap(), vec![0.0]).unwrap()
    }

    fn singular_control(t_final: f64) -> ControlSignal {
        ControlSignal::new(
            vec![0.0, 1.5f64.ln(), t_final - 2f64.ln(), t_final],
            vec![vec![2.0], vec![1.0], vec![0.0]],
            vec![0.0],
        )
        .unwrap()
    }

    #[test]
    fn ex42_costate_closed_forms() {
        let p = ex42();
        let u = singular_control(10.0);
        let traj = p.simulate(&u, 10.0).unwrap();
        let cs = costate_integrate(&p, &traj, &u, 10.0).unwrap();
        // on the final u = 0 piece, p = e^{−2t} − e^{−t−T}
        let exact_tail = (-19.0f64).exp() - (-19.5f64).exp();
        assert!((cs.costate_at(9.5)[0] - exact_tail).abs() < 1e-8 * exact_tail);
        for t in [1.0f64, 3.0, 5.0, 8.0] {
            let exact = 0.5 * (-2.0 * t).exp();
            assert!((cs.costate_at(t)[0] - exact).abs() < 1e-8 * exact, "t={t}");
        }
        assert_eq!(cs.costate_at(10.0)[0], 0.0);
    }

    #[test]
    fn zero_adjoint_source() {
        let sys = ControlAffineSystem::new(1, 1, Arc::new(|_, _| vec![0.0]), Arc::new(|_, _| vec![1.0]));
        let cost = RunningCost::new(Arc::new(|_, _| 0.0), Arc::new(|_, _, u| u[0]));
        let p = Problem::new("free", sys, cost, vec![0.0], ControlValueSet::interval(-1.0, 1.0).unwrap(), vec![0.0])
            .unwrap();
        let u = p.constant_control(vec![0.5], 3.0).unwrap();
        let traj = p.simulate(&u, 3.0).unwrap();
        let cs = costate_integrate(&p, &traj, &u, 3.0).unwrap();
        for t in [0.0, 1.0, 2.9] {
            assert_eq!(cs.costate_at(t)[0], 0.0);
        }
    }

    #[test]
    fn ex42_singular_interval_detected() {
        let p = ex42();
        let u = singular_control(10.0);
        let traj = p.simulate(&u, 10.0).unwrap();
        let cs = costate_integrate(&p, &traj, &u, 10.0).unwrap();
        let sw = switching_function(&p, &traj, &cs, &SwitchingOptions::default()).unwrap();
        assert_eq!(sw.singular_intervals.len(), 1);
        let (_, a, b) = sw.singular_intervals[0];
        assert!((a - 1.5f64.ln()).abs() < 0.01, "{a}");
        assert!((b - (10.0 - 2f64.ln())).abs() < 0.01, "{b}");
        // φ' = e^{−2t}(x − 2/3) checked by differencing samples
        let dt = sw.times[1] - sw.times[0];
        for i in [100usize, 500, 3900] {
            let t = sw.times[i];
            let num = (sw.values[0][i + 1] - sw.values[0][i - 1]) / (2.0 * dt);
            let x = traj.state_at(t)[0];
            let exact = (-2.0 * t).exp() * (x - 2.0 / 3.0);
            assert!((num - exact).abs() < 1e-5, "t={t}: {num} vs {exact}");
        }
        assert!(*sw.values[0].last().unwrap() > 0.0);
    }

    #[test]
    fn ex42_singular_extremal_verifies() {
        let p = ex42();
        let rep = verify_extremal(&p, &singular_control(10.0), 10.0, &VerifyOptions::default()).unwrap();
        assert!(rep.consistent, "{rep}");
        assert_eq!(rep.singular_arc_residuals.len(), 1);
        assert!(rep.singular_arc_residuals[0].3 < 1e-6);
    }

    /// Closed-form switch for `ex41` under the pattern (2, 0): the root of
    /// `e^{T−2τ} − e^{−τ} = 4`, found here by bisection.
    fn ex41_switch(t_final: f64) -> f64 {
        bisect(&mut |s| (t_final - 2.0 * s).exp() - (-s).exp() - 4.0, 0.0, t_final, 1e-14).unwrap()
    }

    #[test]
    fn ex41_switching_function_has_single_root() {
        let p = ex41();
        let tau = ex41_switch(10.0);
        let u = ControlSignal::new(vec![0.0, tau, 10.0], vec![vec![2.0], vec![0.0]], vec![0.0]).unwrap();
        let traj = p.simulate(&u, 10.0).unwrap();
        let cs = costate_integrate(&p, &traj, &u, 10.0).unwrap();
        let sw = switching_function(&p, &traj, &cs, &SwitchingOptions::default()).unwrap();
        assert_eq!(sw.zero_crossings.len(), 1);
        assert!((sw.zero_crossings[0].1 - tau).abs() < 1e-7, "{:?} vs {tau}", sw.zero_crossings);
        assert!(sw.singular_intervals.is_empty());
        assert!((sw.values[0].last().unwrap() - 4.0).abs() < 1e-12);
        let rep = verify_extremal(&p, &u, 10.0, &VerifyOptions::default()).unwrap();
        assert!(rep.consistent, "{rep}");
        let sens = breakpoint_sensitivities(&p, &u, 10.0).unwrap();
        assert!(sens[0].abs() < 1e-6);
    }

    #[test]
    fn ex41_zero_control_is_not_extremal() {
        let p = ex41();
        let u = p.constant_control(vec![0.0], 10.0).unwrap();
        let rep = verify_extremal(&p, &u, 10.0, &VerifyOptions::default()).unwrap();
        assert!(!rep.consistent);
        // under u ≡ 0: x = e^t, p = e^{T−t} − 1, φ = 4 − e^T + e^t < 0 until ln(e^T − 4)
        let expected = (10f64.exp() - 4.0).ln();
        assert!((rep.violation_measure - expected).abs() < 0.01, "{}", rep.violation_measure);
        assert!((rep.max_sign_violation - (10f64.exp() - 5.0)).abs() < 1e-3 * 10f64.exp());
    }

    #[test]
    fn evans_switch_at_t_minus_one() {
        let sys = ControlAffineSystem::new(1, 1, Arc::new(|_, _| vec![0.0]), Arc::new(|_, x| vec![x[0]]));
        let cost = RunningCost::new(Arc::new(|_, x| -x[0]), Arc::new(|_, x, u| u[0] * x[0])).sign_indefinite();
        let p = Problem::new("ex24", sys, cost, vec![1.0], ControlValueSet::interval(0.0, 1.0).unwrap(), vec![0.0])
            .unwrap();
        for t_final in [3.0, 5.0] {
            let u =
                ControlSignal::new(vec![0.0, t_final - 1.0, t_final], vec![vec![1.0], vec![0.0]], vec![0.0]).unwrap();
            let traj = p.simulate(&u, t_final).unwrap();
            let cs = costate_integrate(&p, &traj, &u, t_final).unwrap();
            let sw = switching_function(&p, &traj, &cs, &SwitchingOptions::default()).unwrap();
            assert_eq!(sw.zero_crossings.len(), 1);
            assert!((sw.zero_crossings[0].1 - (t_final - 1.0)).abs() < 1e-7);
            assert!(verify_extremal(&p, &u, t_final, &VerifyOptions::default()).unwrap().consistent);
        }
    }

    #[test]
    fn non_affine_cost_is_rejected() {
        let sys = ControlAffineSystem::new(1, 1, Arc::new(|_, _| vec![0.0]), Arc::new(|_, _| vec![1.0]));
        let cost = RunningCost::new(Arc::new(|_, x| x[0] * x[0]), Arc::new(|_, _, u| u[0] * u[0]));
        let p =
            Problem::new("q", sys, cost, vec![1.0], ControlValueSet::interval(-1.0, 1.0).unwrap(), vec![0.0]).unwrap();
        let u = p.constant_control(vec![0.0], 1.0).unwrap();
        let traj = p.simulate(&u, 1.0).unwrap();
        let cs = costate_integrate(&p, &traj, &u, 1.0).unwrap();
        assert!(matches!(
            switching_function(&p, &traj, &cs, &SwitchingOptions::default()),
            Err(Error::Inapplicable(_))
        ));
    }
}
