//! Running costs `ℓ = ℓ₁(t,x) + ℓ₂(t,x,u)` and their integrals along trajectories.
//!
//! Values live in the extended reals: `ℓ₁ = +∞` encodes a state constraint, and
//! `+∞` is absorbing in every sum computed here.

use std::cell::Cell;
use std::sync::Arc;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::quadrature;
use crate::signals::{ControlSignal, ControlValueSet};

pub type StateCostFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type ControlCostFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Lower growth bound `ℓ₂(t,x,u) ≥ α|u|^p − γ(t)`.
#[derive(Clone)]
pub struct GrowthBound {
    pub alpha: f64,
    pub gamma: TimeFn,
    /// `‖γ‖₁` over `[0, ∞)` when known.
    pub gamma_l1: Option<f64>,
}

/// Integrable bound `ℓ₂(t, x, u★) ≤ m_K(t)` valid for `x` in the box `K`.
#[derive(Clone)]
pub struct Dominator {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bound: TimeFn,
}

#[derive(Clone)]
pub struct RunningCost {
    ell1: StateCostFn,
    ell2: ControlCostFn,
    pub growth: Option<GrowthBound>,
    pub dominator: Option<Dominator>,
    /// Admitted by the evaluator but outside the nonnegative class.
    pub sign_indefinite: bool,
}

impl std::fmt::Debug for RunningCost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunningCost")
            .field("growth", &self.growth.as_ref().map(|g| g.alpha))
            .field("dominator", &self.dominator.is_some())
            .field("sign_indefinite", &self.sign_indefinite)
            .finish()
    }
}

impl RunningCost {
    pub fn new(ell1: StateCostFn, ell2: ControlCostFn) -> Self {
        Self { ell1, ell2, growth: None, dominator: None, sign_indefinite: false }
    }

    pub fn zero() -> Self {
        Self::new(Arc::new(|_, _| 0.0), Arc::new(|_, _, _| 0.0))
    }

    pub fn with_growth(mut self, growth: GrowthBound) -> Self {
        self.growth = Some(growth);
        self
    }

    pub fn with_dominator(mut self, dominator: Dominator) -> Self {
        self.dominator = Some(dominator);
        self
    }

    pub fn sign_indefinite(mut self) -> Self {
        self.sign_indefinite = true;
        self
    }

    pub fn ell1(&self, t: f64, x: &[f64]) -> f64 {
        (self.ell1)(t, x)
    }

    pub fn ell2(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        (self.ell2)(t, x, u)
    }

    /// `ℓ₁ + ℓ₂` with `+∞` absorbing.
    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        let a = (self.ell1)(t, x);
        if a == f64::INFINITY {
            return a;
        }
        let b = (self.ell2)(t, x, u);
        if b == f64::INFINITY {
            return b;
        }
        a + b
    }

    /// Central-difference gradient in `x`; at a kink of `|·|` this yields the
    /// zero subgradient.
    pub fn state_gradient(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut xp = x.to_vec();
        let cbrt_eps = f64::EPSILON.cbrt();
        (0..x.len())
            .map(|j| {
                let h = cbrt_eps * (1.0 + x[j].abs());
                xp[j] = x[j] + h;
                let fp = self.eval(t, &xp, u);
                xp[j] = x[j] - h;
                let fm = self.eval(t, &xp, u);
                xp[j] = x[j];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    /// Derivative of `ℓ₂` in `u`, one-sided at the faces of a box so that the
    /// slope seen from inside `U` is used at kinks on the boundary.
    pub fn control_gradient(&self, t: f64, x: &[f64], u: &[f64], set: &ControlValueSet) -> Vec<f64> {
        let mut up = u.to_vec();
        let cbrt_eps = f64::EPSILON.cbrt();
        let bounds = set.bounds();
        (0..u.len())
            .map(|k| {
                let h = cbrt_eps * (1.0 + u[k].abs());
                let (lo, hi) = match bounds {
                    Some((l, h)) => (l[k], h[k]),
                    None => (f64::NEG_INFINITY, f64::INFINITY),
                };
                let at_lower = u[k] - h < lo;
                let at_upper = u[k] + h > hi;
                let f0 = self.ell2(t, x, u);
                let val = if at_lower && !at_upper {
                    up[k] = u[k] + h;
                    (self.ell2(t, x, &up) - f0) / h
                } else if at_upper && !at_lower {
                    up[k] = u[k] - h;
                    (f0 - self.ell2(t, x, &up)) / h
                } else {
                    up[k] = u[k] + h;
                    let fp = self.ell2(t, x, &up);
                    up[k] = u[k] - h;
                    let fm = self.ell2(t, x, &up);
                    (fp - fm) / (2.0 * h)
                };
                up[k] = u[k];
                val
            })
            .collect()
    }

    /// Slope of `ℓ₂` in each control component between the lower and upper
    /// faces of a box. This is `∂ℓ/∂u` whenever `ℓ₂` is affine in `u` on `U`.
    pub fn affine_control_coefficient(&self, t: f64, x: &[f64], set: &ControlValueSet) -> Result<Vec<f64>> {
        let (lo, hi) =
            set.bounds().ok_or_else(|| Error::Inapplicable("affine control coefficient needs a box U".into()))?;
        let base = lo.to_vec();
        let f0 = self.ell2(t, x, &base);
        Ok((0..lo.len())
            .map(|k| {
                if hi[k] == lo[k] {
                    return 0.0;
                }
                let mut v = base.clone();
                v[k] = hi[k];
                (self.ell2(t, x, &v) - f0) / (hi[k] - lo[k])
            })
            .collect())
    }

    /// True when `ℓ₂` is affine in `u` over the box, spot-checked at the sampled
    /// `(t, x)` along the box edges through the lower vertex and at the center.
    pub fn is_affine_in_control(&self, set: &ControlValueSet, samples: &[(f64, Vec<f64>)]) -> bool {
        let Some((lo, hi)) = set.bounds() else {
            return false;
        };
        let m = lo.len();
        for (t, x) in samples {
            let Ok(c) = self.affine_control_coefficient(*t, x, set) else {
                return false;
            };
            let f0 = self.ell2(*t, x, lo);
            let mut probes: Vec<Vec<f64>> = vec![set.center()];
            for k in 0..m {
                for frac in [0.25, 0.5, 0.75] {
                    let mut v = lo.to_vec();
                    v[k] = lo[k] + frac * (hi[k] - lo[k]);
                    probes.push(v);
                }
            }
            for v in probes {
                let pred = f0 + (0..m).map(|k| c[k] * (v[k] - lo[k])).sum::<f64>();
                let actual = self.ell2(*t, x, &v);
                if (pred - actual).abs() > 1e-9 * (1.0 + actual.abs()) {
                    return false;
                }
            }
        }
        true
    }

    /// Midpoint-convexity spot check of `ℓ₂` in `u` on sampled points.
    /// Returns the worst excess `ℓ₂(λu+(1−λ)v) − λℓ₂(u) − (1−λ)ℓ₂(v)`.
    pub fn convexity_defect(&self, samples: &[(f64, Vec<f64>)], controls: &[Vec<f64>]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (t, x) in samples {
            for (i, u) in controls.iter().enumerate() {
                for v in &controls[i + 1..] {
                    for lambda in [0.25, 0.5, 0.75] {
                        let w: Vec<f64> = u.iter().zip(v).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
                        let lhs = self.ell2(*t, x, &w);
                        let rhs = lambda * self.ell2(*t, x, u) + (1.0 - lambda) * self.ell2(*t, x, v);
                        if rhs.is_finite() {
                            worst = worst.max(lhs - rhs);
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Integral of `ℓ(t, x(t), u(t))` over `[0, T]`.
///
/// The interval is split at control breakpoints and integrator nodes and
/// each piece is integrated adaptively. A `+∞` sample is confirmed against
/// eight neighbouring samples; two or more further hits mean the constraint
/// is violated on a set of positive measure and the cost is `+∞`.
pub fn evaluate_cost(
    cost: &RunningCost,
    traj: &Trajectory,
    u: &ControlSignal,
    horizon: f64,
    quad_tol: f64,
) -> Result<f64> {
    if horizon <= 0.0 {
        return Ok(0.0);
    }
    if traj.blow_up_time().is_some_and(|tb| tb <= horizon) || !traj.covers(horizon) {
        return Err(Error::TrajectoryTooShort { end: traj.end_time(), required: horizon });
    }
    let mut cuts: Vec<f64> = traj.grid().into_iter().filter(|t| *t > 0.0 && *t < horizon).collect();
    cuts.extend(u.switch_times().into_iter().filter(|t| *t < horizon));
    cuts.push(0.0);
    cuts.push(horizon);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();

    let n = traj.state_dim();
    let infinite = Cell::new(false);
    let nonfinite = Cell::new(None::<f64>);
    let mut x = vec![0.0; n];
    let mut integrand = |t: f64| -> f64 {
        traj.state_into(t, &mut x);
        let v = cost.eval(t, &x, u.evaluate(t));
        if v.is_nan() {
            nonfinite.set(Some(t));
            return 0.0;
        }
        if v == f64::INFINITY {
            let delta = 1e-7 * horizon.max(1.0);
            let mut hits = 0;
            let mut finite_sum = 0.0;
            let mut finite_count = 0;
            let mut y = vec![0.0; n];
            for k in [-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0] {
                let s = (t + k * delta).clamp(0.0, horizon);
                traj.state_into(s, &mut y);
                let w = cost.eval(s, &y, u.evaluate(s));
                if w.is_finite() {
                    finite_sum += w;
                    finite_count += 1;
                } else {
                    hits += 1;
                }
            }
            if hits >= 2 {
                infinite.set(true);
                return 0.0;
            }
            return if finite_count > 0 { finite_sum / finite_count as f64 } else { 0.0 };
        }
        if v == f64::NEG_INFINITY {
            nonfinite.set(Some(t));
            return 0.0;
        }
        v
    };

    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let local_tol = quad_tol * (b - a) / horizon;
        let r = quadrature::integrate(&mut integrand, a, b, local_tol);
        if infinite.get() {
            return Ok(f64::INFINITY);
        }
        if let Some(t) = nonfinite.get() {
            return Err(Error::NonFinite { t });
        }
        total += r.value;
    }
    Ok(total)
}

/// Points `(t, x, u)` over which pointwise inequalities are checked.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

impl SampleGrid {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>, controls: Vec<Vec<f64>>) -> Self {
        Self { times, states, controls }
    }

    /// Uniform tensor grids over a time interval, a state box and a control box.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        t_range: (f64, f64),
        nt: usize,
        x_lower: &[f64],
        x_upper: &[f64],
        nx: usize,
        u_lower: &[f64],
        u_upper: &[f64],
        nu: usize,
    ) -> Self {
        Self {
            times: crate::dynamics::linspace(t_range.0, t_range.1, nt),
            states: crate::dynamics::tensor_grid(x_lower, x_upper, nx),
            controls: crate::dynamics::tensor_grid(u_lower, u_upper, nu),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty() || self.states.is_empty() || self.controls.is_empty()
    }

    pub fn describe(&self) -> String {
        format!(
            "t:{}pts[{},{}] x:{}pts u:{}pts",
            self.times.len(),
            self.times.first().copied().unwrap_or(f64::NAN),
            self.times.last().copied().unwrap_or(f64::NAN),
            self.states.len(),
            self.controls.len()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub ok: bool,
    pub worst_margin: f64,
    /// `(t, x, u)` attaining the worst margin.
    pub witness: (f64, Vec<f64>, Vec<f64>),
}

/// Checks `ℓ₂(t,x,u) ≥ α|u|^p − γ(t)` on a grid (margin ≥ −1e-9).
pub fn check_c1_growth(cost: &RunningCost, set: &ControlValueSet, grid: &SampleGrid) -> Result<GrowthReport> {
    let p = set.exponent();
    if !p.is_finite() {
        return Err(Error::Inapplicable("growth condition applies only for p < ∞; compact U covers p = ∞".into()));
    }
    let growth = cost.growth.as_ref().ok_or_else(|| Error::Missing("growth constants (alpha, gamma)".into()))?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let mut worst = f64::INFINITY;
    let mut witness = (0.0, Vec::new(), Vec::new());
    for &t in &grid.times {
        let g = (growth.gamma)(t);
        for x in &grid.states {
            for u in &grid.controls {
                let norm_u = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                let margin = cost.ell2(t, x, u) - (growth.alpha * norm_u.powf(p) - g);
                if margin < worst {
                    worst = margin;
                    witness = (t, x.clone(), u.clone());
                }
            }
        }
    }
    Ok(GrowthReport { ok: worst >= -1e-9, worst_margin: worst, witness })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub ok: bool,
    pub pointwise_ok: bool,
    pub worst_excess: f64,
    /// `(T, ∫_T^∞ m_K)` for increasing `T`; `+∞` marks a non-integrable bound.
    pub tail_integrals: Vec<(f64, f64)>,
}

/// Checks `ℓ₂(t, x, u★) ≤ m_K(t)` on `K × t_grid` and that the tails of `m_K`
/// vanish as `T` grows.
pub fn check_mk_domination(
    cost: &RunningCost,
    u_star: &[f64],
    t_grid: &[f64],
    states_per_axis: usize,
) -> Result<DominationReport> {
    let dom = cost.dominator.as_ref().ok_or_else(|| Error::Missing("m_K dominator".into()))?;
    let states = crate::dynamics::tensor_grid(&dom.lower, &dom.upper, states_per_axis.max(2));
    let mut worst = f64::NEG_INFINITY;
    for &t in t_grid {
        let m = (dom.bound)(t);
        for x in &states {
            worst = worst.max(cost.ell2(t, x, u_star) - m);
        }
    }
    let pointwise_ok = worst <= 1e-12;
    let t_max = t_grid.iter().copied().fold(1.0, f64::max);
    let tails: Vec<(f64, f64)> = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|f| {
            let start = f * t_max;
            (start, tail_integral(dom.bound.as_ref(), start))
        })
        .collect();
    let first = tails[0].1;
    let last = tails[tails.len() - 1].1;
    let vanishing = first.is_finite()
        && last.is_finite()
        && tails.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12)
        && (first == 0.0 || last <= 0.5 * first);
    Ok(DominationReport { ok: pointwise_ok && vanishing, pointwise_ok, worst_excess: worst, tail_integrals: tails })
}

/// `∫_T^∞ f` by doubling chunks; `+∞` when the chunks stop shrinking.
pub fn tail_integral(f: &(dyn Fn(f64) -> f64 + Send + Sync), start: f64) -> f64 {
    let mut total = 0.0;
    let mut a = start;
    let mut len = 1.0;
    let mut prev_chunk = f64::INFINITY;
    let mut non_shrinking = 0;
    for _ in 0..80 {
        let b = a + len;
        let chunk = quadrature::integrate(&mut |t| f(t), a, b, 1e-13 * len.max(1.0)).value;
        if !chunk.is_finite() {
            return f64::INFINITY;
        }
        total += chunk;
        if chunk.abs() <= 1e-14 * total.abs().max(1e-300) || chunk == 0.0 && total == 0.0 {
            return total;
        }
        if chunk.abs() >= 0.5 * prev_chunk.abs() {
            non_shrinking += 1;
            if non_shrinking >= 6 {
                return f64::INFINITY;
            }
        } else {
            non_shrinking = 0;
        }
        prev_chunk = chunk;
        a = b;
        len *= 2.0;
    }
    total
}
