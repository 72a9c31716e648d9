//! Quadratic regulators: `ℓ = ℓ₁(t,x) + uᵀRu` over unbounded controls, with
//! Riccati equations as an independent oracle for linear instances.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::costs::GrowthBound;
use crate::dynamics::{linspace, tensor_grid};
use crate::error::{Error, Result};
use crate::horizon::{infinite_cost_estimate, CostLimit};
use crate::ode::{self, DenseSolution, OdeOptions};
use crate::problem::Problem;
use crate::signals::ControlSignal;
use crate::solvers::{solve_direct, DirectOptions, DirectSolution};

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::InvalidArgument(format!(
            "inconsistent shapes A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    Ok(())
}

fn symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Checks symmetry and returns the smallest eigenvalue.
fn min_eigenvalue(m: &DMatrix<f64>, name: &str) -> Result<f64> {
    let scale = m.norm().max(1.0);
    if (m - m.transpose()).norm() > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!("{name} must be symmetric")));
    }
    Ok(m.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

fn r_inverse(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lambda = min_eigenvalue(r, "R")?;
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!("R must be positive definite, smallest eigenvalue {lambda}")));
    }
    r.clone().try_inverse().ok_or_else(|| Error::InvalidArgument("R is singular".into()))
}

/// `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let s = b * r_inverse(r)? * b.transpose();
    Ok(a.transpose() * p + p * a - p * s * p + q)
}

/// Solution path of `−P′ = AᵀP + PA − PBR⁻¹BᵀP + Q`, `P(T) = 0`.
#[derive(Debug, Clone)]
pub struct RiccatiPath {
    horizon: f64,
    n: usize,
    gain_factor: DMatrix<f64>,
    /// `vec(P)` in reversed time `s = T − t`.
    reversed: DenseSolution,
}

impl RiccatiPath {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn p_at(&self, t: f64) -> DMatrix<f64> {
        let v = self.reversed.eval(self.horizon - t.clamp(0.0, self.horizon));
        symmetric(&DMatrix::from_column_slice(self.n, self.n, &v))
    }

    /// Feedback gain `K(t) = R⁻¹BᵀP(t)`, so that `u = −K(t)x`.
    pub fn gain_at(&self, t: f64) -> DMatrix<f64> {
        &self.gain_factor * self.p_at(t)
    }

    /// `t, P11, P12, …` in column-major order.
    pub fn to_csv(&self, samples: usize) -> String {
        let mut s = String::from("t");
        for j in 0..self.n {
            for i in 0..self.n {
                s.push_str(&format!(",P{}{}", i + 1, j + 1));
            }
        }
        s.push('\n');
        for t in linspace(0.0, self.horizon, samples.max(2)) {
            s.push_str(&t.to_string());
            for v in self.p_at(t).iter() {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Integrates the matrix Riccati equation backward from `P(T) = 0`; the
/// right-hand side is evaluated at the symmetric part of `P`.
pub fn riccati_finite(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: f64,
    tol: f64,
) -> Result<RiccatiPath> {
    check_dims(a, b, q, r)?;
    if min_eigenvalue(q, "Q")? < -1e-12 {
        return Err(Error::InvalidArgument("Q must be positive semidefinite".into()));
    }
    let r_inv = r_inverse(r)?;
    let n = a.nrows();
    let s_mat = b * &r_inv * b.transpose();
    let at = a.transpose();
    let mut rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        let p = symmetric(&DMatrix::from_column_slice(n, n, y));
        let d = &at * &p + &p * a - &p * &s_mat * &p + q;
        dy.copy_from_slice(d.as_slice());
    };
    let opts = OdeOptions { rtol: tol, atol: tol * 1e-2, escape_radius: 1e12, ..OdeOptions::default() };
    let reversed = ode::solve(&mut rhs, 0.0, &vec![0.0; n * n], horizon, &[], &opts)?;
    if let Some(at_s) = reversed.blow_up_time() {
        return Err(Error::BlowUp { at: horizon - at_s, required: 0.0 });
    }
    Ok(RiccatiPath { horizon, n, gain_factor: r_inv * b.transpose(), reversed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraicRiccati {
    pub p: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    m.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Solves `(A−BK)ᵀP + P(A−BK) = −(Q + KᵀRK)` through `vec` and Kronecker products.
fn lyapunov(closed: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = closed.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let ct = closed.transpose();
    let big = id.kronecker(&ct) + ct.kronecker(&id);
    let v = DVector::from_column_slice((-rhs).as_slice());
    let sol = big.lu().solve(&v).ok_or_else(|| Error::NotConverged("singular Lyapunov operator".into()))?;
    Ok(symmetric(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

/// Newton–Kleinman iteration seeded with the finite-horizon solution at a
/// long horizon; fails when that seed does not stabilize `A − BK`.
pub fn riccati_algebraic(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
) -> Result<AlgebraicRiccati> {
    check_dims(a, b, q, r)?;
    let r_inv = r_inverse(r)?;
    let n = a.nrows();
    let seed = if is_hurwitz(a) {
        DMatrix::zeros(n, n)
    } else {
        let path = riccati_finite(a, b, q, r, 40.0, 1e-10).map_err(|e| {
            Error::NotConverged(format!("no stabilizing seed ({e}); (A, B) is likely not stabilizable"))
        })?;
        path.p_at(0.0)
    };
    let mut p = seed;
    let mut k = &r_inv * b.transpose() * &p;
    for iteration in 1..=100 {
        let closed = a - b * &k;
        if !is_hurwitz(&closed) {
            return Err(Error::NotConverged("A − BK is not Hurwitz; (A, B) is likely not stabilizable".into()));
        }
        let next = lyapunov(&closed, &(q + k.transpose() * r * &k))?;
        let step = (&next - &p).norm();
        p = next;
        k = &r_inv * b.transpose() * &p;
        let residual = riccati_residual(a, b, q, r, &p)?.norm();
        if residual < tol || step < 1e-15 * p.norm().max(1.0) {
            return Ok(AlgebraicRiccati { p, residual, iterations: iteration });
        }
    }
    let residual = riccati_residual(a, b, q, r, &p)?.norm();
    Err(Error::NotConverged(format!("Newton-Kleinman stalled at residual {residual}")))
}

/// Linear data `(A, B, Q)` attached to a quadratic regulator.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearData {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// A regulator with `ℓ = ℓ₁(t,x) + uᵀRu` and `U = ℝᵐ`, `p = 2`.
#[derive(Clone)]
pub struct QRProblem {
    pub problem: Problem,
    pub r: DMatrix<f64>,
    /// Declared constant in `|a(x)| + |b(x)| ≤ K(1 + |x|)`.
    pub growth_constant: f64,
    pub linear: Option<LinearData>,
}

impl fmt::Debug for QRProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QRProblem")
            .field("problem", &self.problem.name)
            .field("r", &self.r)
            .field("growth_constant", &self.growth_constant)
            .field("linear", &self.linear)
            .finish()
    }
}

impl QRProblem {
    /// Validates `R` and the declared growth constant (on `[−10, 10]ⁿ`), and
    /// attaches the growth bound `α = λ_min(R)`, `γ ≡ 0` to the cost.
    pub fn new(
        mut problem: Problem,
        r: DMatrix<f64>,
        growth_constant: f64,
        linear: Option<LinearData>,
    ) -> Result<Self> {
        let m = problem.control_dim();
        let n = problem.state_dim();
        if r.shape() != (m, m) {
            return Err(Error::DimensionMismatch { expected: m, got: r.nrows() });
        }
        let lambda = min_eigenvalue(&r, "R")?;
        if lambda <= 0.0 {
            return Err(Error::InvalidArgument(format!("R must be positive definite, smallest eigenvalue {lambda}")));
        }
        if problem.control_set.is_compact() || problem.control_set.exponent() != 2.0 {
            return Err(Error::InvalidArgument("a quadratic regulator needs U = R^m with p = 2".into()));
        }
        let points = if n <= 2 { 41 } else { 7 };
        for x in tensor_grid(&vec![-10.0; n], &vec![10.0; n], points) {
            let drift = problem.system.drift(0.0, &x);
            let input = problem.system.input_matrix(0.0, &x);
            let norm = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
            let xn = norm(&x);
            let excess = norm(&drift) + norm(&input) - growth_constant * (1.0 + xn);
            if excess > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "declared growth constant {growth_constant} fails at x = {x:?} by {excess}"
                )));
            }
        }
        problem.cost.growth = Some(GrowthBound { alpha: lambda, gamma: Arc::new(|_| 0.0), gamma_l1: Some(0.0) });
        Ok(Self { problem, r, growth_constant, linear })
    }

    /// Reads `R` off `ℓ₂` by second differences, takes the smallest growth
    /// constant that holds on the validation grid, and attaches `(A, B, Q)`
    /// when the data are linear-quadratic and time-invariant.
    pub fn from_problem(problem: Problem) -> Result<Self> {
        let n = problem.state_dim();
        let m = problem.control_dim();
        let x0 = problem.x0.clone();
        let l2 = |u: &[f64]| problem.cost.ell2(0.0, &x0, u);
        let r = second_difference_form(m, &l2);
        let quadratic = sample_points(m, 3).iter().all(|u| {
            let expect = quadratic_form(&r, u);
            (l2(u) - expect).abs() <= 1e-9 * (1.0 + expect.abs())
        });
        if !quadratic {
            return Err(Error::InvalidArgument("the control cost is not of the form u'Ru".into()));
        }
        let points = if n <= 2 { 41 } else { 7 };
        let mut k: f64 = 0.0;
        for x in tensor_grid(&vec![-10.0; n], &vec![10.0; n], points) {
            let norm = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
            let lhs = norm(&problem.system.drift(0.0, &x)) + norm(&problem.system.input_matrix(0.0, &x));
            k = k.max(lhs / (1.0 + norm(&x)));
        }
        let linear = detect_linear(&problem);
        Self::new(problem, r, k * (1.0 + 1e-9) + 1e-12, linear)
    }
}

fn quadratic_form(r: &DMatrix<f64>, v: &[f64]) -> f64 {
    let v = DVector::from_column_slice(v);
    (v.transpose() * r * &v)[(0, 0)]
}

/// Symmetric `M` with `f(v) = vᵀMv` when `f` is a quadratic form.
fn second_difference_form(dim: usize, f: &dyn Fn(&[f64]) -> f64) -> DMatrix<f64> {
    let unit = |i: usize| {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        e
    };
    let f0 = f(&vec![0.0; dim]);
    DMatrix::from_fn(dim, dim, |i, j| {
        let mut both = unit(i);
        both[j] += 1.0;
        (f(&both) - f(&unit(i)) - f(&unit(j)) + f0) / 2.0
    })
}

/// Deterministic probe points in `[−2, 2]^dim`.
fn sample_points(dim: usize, per_axis: usize) -> Vec<Vec<f64>> {
    tensor_grid(&vec![-2.0; dim], &vec![2.0; dim], per_axis)
        .into_iter()
        .map(|v| v.iter().enumerate().map(|(i, c)| c + 0.37 * (i + 1) as f64).collect())
        .collect()
}

fn detect_linear(problem: &Problem) -> Option<LinearData> {
    let n = problem.state_dim();
    let m = problem.control_dim();
    let sys = &problem.system;
    let zero = vec![0.0; n];
    let a0 = sys.drift(0.0, &zero);
    if a0.iter().any(|v| v.abs() > 1e-12) {
        return None;
    }
    let a = DMatrix::from_fn(n, n, |i, j| {
        let mut e = zero.clone();
        e[j] = 1.0;
        sys.drift(0.0, &e)[i]
    });
    let b = DMatrix::from_row_slice(n, m, &sys.input_matrix(0.0, &zero));
    let q = second_difference_form(n, &|x: &[f64]| problem.cost.ell1(0.0, x));
    let close = |u: f64, v: f64| (u - v).abs() <= 1e-9 * (1.0 + v.abs());
    for t in [0.0, 0.7, 3.1] {
        for x in sample_points(n, 3) {
            let ax = &a * DVector::from_column_slice(&x);
            if !sys.drift(t, &x).iter().zip(ax.iter()).all(|(u, v)| close(*u, *v)) {
                return None;
            }
            if !sys.input_matrix(t, &x).iter().zip(b.transpose().iter()).all(|(u, v)| close(*u, *v)) {
                return None;
            }
            if !close(problem.cost.ell1(t, &x), quadratic_form(&q, &x)) {
                return None;
            }
        }
    }
    if min_eigenvalue(&q, "Q").ok()? < -1e-12 {
        return None;
    }
    Some(LinearData { a, b, q })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QRVerdict {
    /// Evidence that every control has infinite cost.
    AlternativeA,
    /// Optimal controls settle on the observation window.
    AlternativeB,
    Inconclusive,
}

impl fmt::Display for QRVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QRVerdict::AlternativeA => "alternative-A-infinite-cost-evidence",
            QRVerdict::AlternativeB => "alternative-B-window-convergence",
            QRVerdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone)]
pub struct QRRow {
    pub horizon: f64,
    pub cost: f64,
    pub kkt_residual: f64,
    /// `x₀ᵀP(0;T)x₀` for linear instances.
    pub riccati_cost: Option<f64>,
    /// `L²(0,W)` distance to the previous horizon's control.
    pub window_distance: Option<f64>,
    /// `L²(0,W)` distance to the Riccati feedback rollout.
    pub riccati_distance: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct QRReport {
    pub rows: Vec<QRRow>,
    pub window: f64,
    /// Cost of a feasible infinite-horizon control, when one was found.
    pub feasible_cost: Option<f64>,
    pub verdict: QRVerdict,
    /// The last solved control on the window.
    pub control: Option<DirectSolution>,
}

impl QRReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut s = String::from("T,cost,kkt_residual,riccati_cost,window_distance,riccati_distance,error\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.horizon,
                r.cost,
                r.kkt_residual,
                opt(r.riccati_cost),
                opt(r.window_distance),
                opt(r.riccati_distance),
                r.error.as_deref().unwrap_or("").replace(',', ";")
            ));
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "window={}\nfeasible_infinite_cost={}\nverdict={}\nnote=convergence is observed along the tested horizons only; a subsequence cannot be told apart from the full sequence\n",
            self.window,
            self.feasible_cost.map_or("none".to_string(), |c| c.to_string()),
            self.verdict
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QROptions {
    /// Control cells per unit time, so every horizon shares one cell width.
    pub cells_per_unit: f64,
    pub window: f64,
    pub direct: DirectOptions,
    /// Window distance below which successive controls count as settled.
    pub conv_tol: f64,
}

impl Default for QROptions {
    fn default() -> Self {
        Self {
            cells_per_unit: 20.0,
            window: 1.0,
            direct: DirectOptions::default(),
            conv_tol: crate::defaults::CONV_TOL,
        }
    }
}

fn window_samples(window: f64) -> Vec<f64> {
    // midpoints of a fine uniform partition
    let k = 4000;
    (0..k).map(|i| (i as f64 + 0.5) * window / k as f64).collect()
}

fn l2_window(window: f64, f: impl Fn(f64) -> f64) -> f64 {
    let ts = window_samples(window);
    let h = window / ts.len() as f64;
    (ts.iter().map(|&t| f(t).powi(2)).sum::<f64>() * h).sqrt()
}

/// Closed-loop feedback `u = −K(t)x` sampled along its own trajectory.
fn riccati_rollout(path: &RiccatiPath, lin: &LinearData, x0: &[f64]) -> Result<DenseSolution> {
    let n = x0.len();
    let mut rhs = |t: f64, x: &[f64], dx: &mut [f64]| {
        let xv = DVector::from_column_slice(x);
        let u = -path.gain_at(t) * &xv;
        let d = &lin.a * &xv + &lin.b * u;
        dx[..n].copy_from_slice(d.as_slice());
    };
    ode::solve(&mut rhs, 0.0, x0, path.horizon(), &[], &OdeOptions::default())
}

/// Solves the direct problem on each horizon, measures how much the control
/// moves on `[0, W]` between horizons, and compares with Riccati feedback on
/// linear instances.
///
/// The verdict is (B) when the final window distance is below `conv_tol`, (A)
/// when no feasible infinite-horizon control is found and the optimal costs
/// keep growing, and inconclusive otherwise.
pub fn qr_horizon_experiment(qr: &QRProblem, horizons: &[f64], opts: &QROptions) -> Result<QRReport> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("horizons must be strictly increasing".into()));
    }
    if !(opts.cells_per_unit.is_finite() && opts.cells_per_unit > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cells per unit time must be positive, got {}",
            opts.cells_per_unit
        )));
    }
    let problem = &qr.problem;
    let window = opts.window.min(horizons[0]);
    let m = problem.control_dim();
    let mut rows: Vec<QRRow> = Vec::with_capacity(horizons.len());
    let mut previous: Option<DirectSolution> = None;
    let mut last_ok: Option<DirectSolution> = None;
    for &t in horizons {
        let mut row = QRRow {
            horizon: t,
            cost: f64::NAN,
            kkt_residual: f64::NAN,
            riccati_cost: None,
            window_distance: None,
            riccati_distance: None,
            error: None,
        };
        let cells = (opts.cells_per_unit * t).ceil().max(1.0) as usize;
        match solve_direct(problem, t, cells, &opts.direct) {
            Ok(sol) => {
                row.cost = sol.cost;
                row.kkt_residual = sol.kkt_residual;
                let value = |s: &DirectSolution, tt: f64, k: usize| {
                    let h = s.control.cell_width();
                    let i = ((tt / h) as usize).min(s.control.mesh_size() - 1);
                    s.control.cells[i][k]
                };
                if let Some(prev) = &previous {
                    let d: f64 = (0..m)
                        .map(|k| l2_window(window, |tt| value(&sol, tt, k) - value(prev, tt, k)).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    row.window_distance = Some(d);
                }
                if let Some(lin) = &qr.linear {
                    match riccati_finite(&lin.a, &lin.b, &lin.q, &qr.r, t, 1e-12) {
                        Ok(path) => {
                            let x0 = DVector::from_column_slice(&problem.x0);
                            row.riccati_cost = Some((x0.transpose() * path.p_at(0.0) * &x0)[(0, 0)]);
                            if let Ok(traj) = riccati_rollout(&path, lin, &problem.x0) {
                                let d: f64 = (0..m)
                                    .map(|k| {
                                        l2_window(window, |tt| {
                                            let u = -path.gain_at(tt) * DVector::from_vec(traj.eval(tt));
                                            value(&sol, tt, k) - u[k]
                                        })
                                        .powi(2)
                                    })
                                    .sum::<f64>()
                                    .sqrt();
                                row.riccati_distance = Some(d);
                            }
                        }
                        Err(e) => row.error = Some(format!("riccati: {e}")),
                    }
                }
                previous = Some(sol.clone());
                last_ok = Some(sol);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }

    let feasible_cost = feasible_infinite_cost(qr, horizons);
    let settled = rows.last().and_then(|r| r.window_distance).is_some_and(|d| d < opts.conv_tol);
    let costs: Vec<(f64, f64)> = rows.iter().filter(|r| r.cost.is_finite()).map(|r| (r.horizon, r.cost)).collect();
    let growing = costs.len() >= 3 && {
        let k = costs.len();
        let r1 = (costs[k - 2].1 - costs[k - 3].1) / (costs[k - 2].0 - costs[k - 3].0);
        let r2 = (costs[k - 1].1 - costs[k - 2].1) / (costs[k - 1].0 - costs[k - 2].0);
        r2 > 0.0 && r2 >= 0.5 * r1
    };
    let diverged = rows.iter().any(|r| r.error.is_some() && r.cost.is_nan());
    let verdict = if feasible_cost.is_none() && (growing || diverged) {
        QRVerdict::AlternativeA
    } else if settled && feasible_cost.is_some() {
        QRVerdict::AlternativeB
    } else {
        QRVerdict::Inconclusive
    };
    Ok(QRReport { rows, window, feasible_cost, verdict, control: last_ok })
}

/// Looks for a feasible infinite-horizon control: `u ≡ u★`, then (for linear
/// instances) the stationary Riccati feedback, whose cost is `x₀ᵀP∞x₀`.
fn feasible_infinite_cost(qr: &QRProblem, horizons: &[f64]) -> Option<f64> {
    let problem = &qr.problem;
    let t_max = horizons.last().copied().unwrap_or(10.0).max(10.0);
    let truncations = [t_max, 2.0 * t_max, 3.0 * t_max];
    if let Ok(u) = ControlSignal::infinite(Vec::new(), vec![problem.u_star.clone()]) {
        if let Ok(est) = infinite_cost_estimate(problem, &u, &truncations, problem.tolerances.quad) {
            if let CostLimit::Finite { value, .. } = est.limit {
                return Some(value);
            }
        }
    }
    let lin = qr.linear.as_ref()?;
    let are = riccati_algebraic(&lin.a, &lin.b, &lin.q, &qr.r, 1e-10).ok()?;
    let x0 = DVector::from_column_slice(&problem.x0);
    Some((x0.transpose() * are.p * &x0)[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_riccati_closed_forms() {
        let path = riccati_finite(&s(0.0), &s(1.0), &s(1.0), &s(1.0), 5.0, 1e-12).unwrap();
        for t in [0.0f64, 1.0, 2.5, 4.9] {
            assert!((path.p_at(t)[(0, 0)] - (5.0 - t).tanh()).abs() < 1e-8, "t={t}");
        }
        assert_eq!(path.p_at(5.0)[(0, 0)], 0.0);
        let path = riccati_finite(&s(-1.0), &s(0.0), &s(1.0), &s(1.0), 3.0, 1e-12).unwrap();
        assert!((path.p_at(0.0)[(0, 0)] - (1.0 - (-6.0f64).exp()) / 2.0).abs() < 1e-9);
        let path = riccati_finite(&s(2.0), &s(1.0), &s(0.0), &s(1.0), 3.0, 1e-12).unwrap();
        assert_eq!(path.p_at(0.0)[(0, 0)], 0.0);
    }

    #[test]
    fn algebraic_riccati_roots() {
        let p = riccati_algebraic(&s(0.0), &s(1.0), &s(1.0), &s(1.0), 1e-12).unwrap();
        assert!((p.p[(0, 0)] - 1.0).abs() < 1e-10);
        let p = riccati_algebraic(&s(1.0), &s(1.0), &s(1.0), &s(1.0), 1e-12).unwrap();
        assert!((p.p[(0, 0)] - (1.0 + 2f64.sqrt())).abs() < 1e-10);
        let p = riccati_algebraic(&s(-1.0), &s(1.0), &s(0.0), &s(1.0), 1e-12).unwrap();
        assert!(p.p[(0, 0)].abs() < 1e-12);
        assert!(riccati_algebraic(&s(1.0), &s(0.0), &s(1.0), &s(1.0), 1e-10).is_err());
    }

    #[test]
    fn matrix_riccati_is_monotone_and_converges() {
        // double integrator
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = s(1.0);
        let are = riccati_algebraic(&a, &b, &q, &r, 1e-12).unwrap();
        assert!(are.residual < 1e-10);
        let mut prev = DMatrix::zeros(2, 2);
        for t in [1.0, 2.0, 5.0, 20.0] {
            let p0 = riccati_finite(&a, &b, &q, &r, t, 1e-12).unwrap().p_at(0.0);
            let diff = &p0 - &prev;
            assert!(diff.symmetric_eigen().eigenvalues.iter().all(|l| *l >= -1e-9));
            prev = p0;
        }
        assert!((&prev - &are.p).norm() < 1e-6);
    }

    #[test]
    fn rejects_indefinite_weights() {
        assert!(riccati_finite(&s(0.0), &s(1.0), &s(1.0), &s(-1.0), 1.0, 1e-10).is_err());
        assert!(riccati_finite(&s(0.0), &s(1.0), &s(-1.0), &s(1.0), 1.0, 1e-10).is_err());
    }
}
