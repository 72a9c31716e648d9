//! Sampling checks for storage-function certificates.
//!
//! Every verdict here is evidence gathered on finite samples, not a proof.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::costs::RunningCost;
use crate::defaults;
use crate::dynamics::{integrate, linspace, tensor_grid, ControlAffineSystem, IntegrateOptions};
use crate::error::{Error, Result};
use crate::optim::golden_section;
use crate::quadrature;
use crate::signals::{ControlSignal, ControlValueSet};

pub type StorageFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type StorageGradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct StorageCertificate {
    storage: StorageFn,
    gradient: Option<StorageGradFn>,
    /// Source text of `S`, when it came from an expression.
    pub label: String,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub radii: Vec<f64>,
}

impl fmt::Debug for StorageCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StorageCertificate")
            .field("label", &self.label)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("domain_lower", &self.domain_lower)
            .field("domain_upper", &self.domain_upper)
            .finish()
    }
}

impl StorageCertificate {
    pub fn new(label: impl Into<String>, storage: StorageFn, domain_lower: Vec<f64>, domain_upper: Vec<f64>) -> Self {
        Self {
            storage,
            gradient: None,
            label: label.into(),
            domain_lower,
            domain_upper,
            radii: defaults::COERCIVITY_RADII.to_vec(),
        }
    }

    pub fn with_gradient(mut self, gradient: StorageGradFn) -> Self {
        self.gradient = Some(gradient);
        self
    }

    pub fn with_radii(mut self, radii: Vec<f64>) -> Self {
        self.radii = radii;
        self
    }

    pub fn with_domain(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.domain_lower = lower;
        self.domain_upper = upper;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.domain_lower.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.storage)(x)
    }

    /// Analytic gradient if supplied, else central differences (which give
    /// the zero subgradient at a symmetric kink).
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => self.fd_gradient(x),
        }
    }

    fn fd_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut xp = x.to_vec();
        (0..x.len())
            .map(|j| {
                let h = f64::EPSILON.cbrt() * (1.0 + x[j].abs());
                xp[j] = x[j] + h;
                let fp = self.value(&xp);
                xp[j] = x[j] - h;
                let fm = self.value(&xp);
                xp[j] = x[j];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    /// Largest relative mismatch between the analytic gradient and central
    /// differences on the given points; `0` without an analytic gradient.
    pub fn gradient_consistency(&self, points: &[Vec<f64>]) -> f64 {
        let Some(g) = &self.gradient else {
            return 0.0;
        };
        points
            .iter()
            .map(|x| {
                let a = g(x);
                let b = self.fd_gradient(x);
                a.iter().zip(&b).map(|(p, q)| (p - q).abs() / (1.0 + p.abs().max(q.abs()))).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// The `(t, x, u)` samples of a differential check.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationGrid {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub t_range: (f64, f64),
    pub x_box: (Vec<f64>, Vec<f64>),
    pub u_box: (Vec<f64>, Vec<f64>),
}

impl DissipationGrid {
    /// Uniform grid with `points` per axis on `[0, t_max] × box(x) × box(u)`,
    /// plus the box vertices of `U` and one time just past every coefficient
    /// breakpoint.
    pub fn uniform(
        t_max: f64,
        time_breakpoints: &[f64],
        x_lower: &[f64],
        x_upper: &[f64],
        u_lower: &[f64],
        u_upper: &[f64],
        points: usize,
    ) -> Self {
        let mut times = if t_max > 0.0 { linspace(0.0, t_max, points) } else { vec![0.0] };
        for &b in time_breakpoints {
            if b >= 0.0 && b <= t_max {
                times.push(b);
                let after = b + 1e-9 * b.abs().max(1.0);
                if after <= t_max {
                    times.push(after);
                }
            }
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let x_per_axis = per_axis_budget(points, x_lower.len());
        let u_per_axis = per_axis_budget(points, u_lower.len());
        Self {
            times,
            states: tensor_grid(x_lower, x_upper, x_per_axis),
            controls: tensor_grid(u_lower, u_upper, u_per_axis),
            t_range: (0.0, t_max),
            x_box: (x_lower.to_vec(), x_upper.to_vec()),
            u_box: (u_lower.to_vec(), u_upper.to_vec()),
        }
    }

    /// Grid for a control set: its box for compact `U`, else `[-radius, radius]^m`.
    pub fn for_problem(
        t_max: f64,
        time_breakpoints: &[f64],
        x_lower: &[f64],
        x_upper: &[f64],
        set: &ControlValueSet,
        unbounded_radius: f64,
        points: usize,
    ) -> Self {
        let (ul, uh) = match set.bounds() {
            Some((l, h)) => (l.to_vec(), h.to_vec()),
            None => (vec![-unbounded_radius; set.dim()], vec![unbounded_radius; set.dim()]),
        };
        Self::uniform(t_max, time_breakpoints, x_lower, x_upper, &ul, &uh, points)
    }

    pub fn describe(&self) -> String {
        format!(
            "t=[{},{}]x{};x=[{:?},{:?}]x{};u=[{:?},{:?}]x{}",
            self.t_range.0,
            self.t_range.1,
            self.times.len(),
            self.x_box.0,
            self.x_box.1,
            self.states.len(),
            self.u_box.0,
            self.u_box.1,
            self.controls.len()
        )
    }
}

fn per_axis_budget(points: usize, dim: usize) -> usize {
    match dim {
        0 | 1 => points,
        2 => points.min(33),
        _ => ((20_000f64).powf(1.0 / dim as f64) as usize).clamp(3, points),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialReport {
    pub ok: bool,
    /// Worst `r − ⟨∇S, a + b u⟩` after refinement.
    pub worst_margin: f64,
    pub grid_worst_margin: f64,
    pub witness: Witness,
    /// Largest `⟨∇S, a + b u⟩ / r` over samples with `0 < r < ∞`.
    pub worst_ratio: Option<(f64, Witness)>,
    pub nonnegative: bool,
    pub min_storage: f64,
    pub skipped_infinite: usize,
    pub grid_spec: String,
}

impl fmt::Display for DifferentialReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ok={}", self.ok)?;
        writeln!(f, "worst_margin={}", self.worst_margin)?;
        writeln!(f, "grid_worst_margin={}", self.grid_worst_margin)?;
        writeln!(f, "witness_t={}", self.witness.t)?;
        writeln!(f, "witness_x={}", join(&self.witness.x))?;
        writeln!(f, "witness_u={}", join(&self.witness.u))?;
        if let Some((ratio, w)) = &self.worst_ratio {
            writeln!(f, "worst_ratio={ratio}")?;
            writeln!(f, "worst_ratio_t={}", w.t)?;
            writeln!(f, "worst_ratio_x={}", join(&w.x))?;
        }
        writeln!(f, "storage_nonnegative={}", self.nonnegative)?;
        writeln!(f, "skipped_infinite={}", self.skipped_infinite)?;
        write!(f, "grid_spec={}", self.grid_spec)
    }
}

pub(crate) fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    pub rounds: usize,
    pub margin_tol: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { rounds: defaults::REFINE_ROUNDS, margin_tol: defaults::MARGIN_TOL }
    }
}

struct Evaluator<'a> {
    cert: &'a StorageCertificate,
    system: &'a ControlAffineSystem,
    supply: &'a RunningCost,
    n: usize,
}

impl Evaluator<'_> {
    /// `(r, ⟨∇S, f⟩)` at a packed point `[t, x.., u..]`.
    fn terms(&self, z: &[f64]) -> (f64, f64) {
        let t = z[0];
        let x = &z[1..1 + self.n];
        let u = &z[1 + self.n..];
        let grad = self.cert.gradient(x);
        let rate = self.system.rate(t, x, u);
        let flow: f64 = grad.iter().zip(&rate).map(|(g, r)| g * r).sum();
        (self.supply.eval(t, x, u), flow)
    }

    fn margin(&self, z: &[f64]) -> f64 {
        let (r, flow) = self.terms(z);
        if r == f64::INFINITY {
            f64::INFINITY
        } else {
            r - flow
        }
    }

    fn ratio(&self, z: &[f64]) -> f64 {
        let (r, flow) = self.terms(z);
        if r > 0.0 && r.is_finite() {
            flow / r
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Minimizes `f` near `start` inside the box: `rounds` rounds of a local
/// 5-point-per-axis grid with halving radius, then one pass of coordinate-wise
/// golden-section search.
fn refine_local(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    spacing: &[f64],
    rounds: usize,
) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut best = start.to_vec();
    let mut best_value = f(start);
    let mut radius = spacing.to_vec();
    for _ in 0..rounds {
        let axes: Vec<Vec<f64>> = (0..dim)
            .map(|k| {
                if radius[k] == 0.0 {
                    return vec![best[k]];
                }
                let mut a: Vec<f64> =
                    (-2..=2).map(|j| (best[k] + j as f64 * 0.5 * radius[k]).clamp(lower[k], upper[k])).collect();
                a.dedup();
                a
            })
            .collect();
        for z in crate::dynamics::cartesian(&axes) {
            let v = f(&z);
            if v < best_value {
                best_value = v;
                best = z;
            }
        }
        radius.iter_mut().for_each(|r| *r *= 0.5);
    }
    for _ in 0..2 {
        for k in 0..dim {
            if radius[k] == 0.0 {
                continue;
            }
            let lo = (best[k] - 2.0 * radius[k]).max(lower[k]);
            let hi = (best[k] + 2.0 * radius[k]).min(upper[k]);
            let mut probe = best.clone();
            let m = golden_section(
                &mut |s| {
                    probe[k] = s;
                    f(&probe)
                },
                lo,
                hi,
                1e-12 * (1.0 + best[k].abs()),
                200,
            );
            if m.value < best_value {
                best_value = m.value;
                best[k] = m.x;
            }
        }
    }
    (best, best_value)
}

/// Checks `⟨∇S(x), a(t,x) + b(t,x)u⟩ ≤ r(t,x,u)` on the grid, then refines
/// around the worst sample. Grid points with `r = +∞` are skipped.
pub fn check_differential(
    cert: &StorageCertificate,
    system: &ControlAffineSystem,
    supply: &RunningCost,
    grid: &DissipationGrid,
    opts: RefineOptions,
) -> Result<DifferentialReport> {
    let n = system.state_dim();
    let m = system.control_dim();
    if grid.times.is_empty() || grid.states.is_empty() || grid.controls.is_empty() {
        return Err(Error::InvalidArgument("dissipation grid must be nonempty".into()));
    }
    if cert.state_dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cert.state_dim() });
    }
    let mut min_storage = f64::INFINITY;
    for x in &grid.states {
        let s = cert.value(x);
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!("storage is not finite at x = {x:?}")));
        }
        min_storage = min_storage.min(s);
    }
    let ev = Evaluator { cert, system, supply, n };

    struct Cell {
        margin: f64,
        margin_at: Vec<f64>,
        ratio: f64,
        ratio_at: Vec<f64>,
        skipped: usize,
        nonfinite: Option<f64>,
    }
    let cells: Vec<Cell> = grid
        .times
        .par_iter()
        .map(|&t| {
            let mut cell = Cell {
                margin: f64::INFINITY,
                margin_at: Vec::new(),
                ratio: f64::NEG_INFINITY,
                ratio_at: Vec::new(),
                skipped: 0,
                nonfinite: None,
            };
            let mut z = vec![0.0; 1 + n + m];
            z[0] = t;
            for x in &grid.states {
                z[1..1 + n].copy_from_slice(x);
                for u in &grid.controls {
                    z[1 + n..].copy_from_slice(u);
                    let (r, flow) = ev.terms(&z);
                    if !flow.is_finite() || r.is_nan() {
                        cell.nonfinite.get_or_insert(t);
                        continue;
                    }
                    if r == f64::INFINITY {
                        cell.skipped += 1;
                        continue;
                    }
                    let margin = r - flow;
                    if margin < cell.margin {
                        cell.margin = margin;
                        cell.margin_at = z.clone();
                    }
                    if r > 0.0 && flow / r > cell.ratio {
                        cell.ratio = flow / r;
                        cell.ratio_at = z.clone();
                    }
                }
            }
            cell
        })
        .collect();
    if let Some(t) = cells.iter().find_map(|c| c.nonfinite) {
        return Err(Error::NonFinite { t });
    }
    let skipped_infinite = cells.iter().map(|c| c.skipped).sum();
    // first minimum in grid order keeps the witness deterministic
    let worst_cell = cells.iter().filter(|c| !c.margin_at.is_empty()).fold(None::<&Cell>, |acc, c| match acc {
        Some(a) if a.margin <= c.margin => Some(a),
        _ => Some(c),
    });
    let Some(worst_cell) = worst_cell else {
        return Err(Error::Inapplicable("supply is +∞ at every grid point".into()));
    };

    let mut lower = vec![grid.t_range.0];
    lower.extend(&grid.x_box.0);
    lower.extend(&grid.u_box.0);
    let mut upper = vec![grid.t_range.1];
    upper.extend(&grid.x_box.1);
    upper.extend(&grid.u_box.1);
    let spacing = grid_spacing(grid);

    let grid_worst = worst_cell.margin;
    let (z, refined) = refine_local(&|z| ev.margin(z), &worst_cell.margin_at, &lower, &upper, &spacing, opts.rounds);
    let worst_margin = refined.min(grid_worst);
    let unpack = |z: &[f64]| Witness { t: z[0], x: z[1..1 + n].to_vec(), u: z[1 + n..].to_vec() };

    let worst_ratio = cells
        .iter()
        .filter(|c| !c.ratio_at.is_empty())
        .fold(None::<&Cell>, |acc, c| match acc {
            Some(a) if a.ratio >= c.ratio => Some(a),
            _ => Some(c),
        })
        .map(|c| {
            let (zr, neg) = refine_local(&|z| -ev.ratio(z), &c.ratio_at, &lower, &upper, &spacing, opts.rounds);
            (-neg, unpack(&zr))
        });

    let nonnegative = min_storage >= 0.0;
    Ok(DifferentialReport {
        ok: worst_margin >= -opts.margin_tol && nonnegative,
        worst_margin,
        grid_worst_margin: grid_worst,
        witness: unpack(&z),
        worst_ratio,
        nonnegative,
        min_storage,
        skipped_infinite,
        grid_spec: grid.describe(),
    })
}

fn grid_spacing(grid: &DissipationGrid) -> Vec<f64> {
    let axis_step = |values: Vec<f64>| -> f64 {
        let mut v = values;
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    };
    let mut out = vec![axis_step(grid.times.clone())];
    let n = grid.x_box.0.len();
    for k in 0..n {
        out.push(axis_step(grid.states.iter().map(|x| x[k]).collect()));
    }
    for k in 0..grid.u_box.0.len() {
        out.push(axis_step(grid.controls.iter().map(|u| u[k]).collect()));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralReport {
    pub ok: bool,
    /// Largest `S(x(t)) − S(x₀) − ∫₀ᵗ r` over all checked nodes.
    pub worst_violation: f64,
    /// `(x₀ index, control index, t)` of the worst violation.
    pub witness: (usize, usize, f64),
    /// Earliest time at which any pair violated the inequality beyond `tol`.
    pub first_violation_time: Option<f64>,
    /// Pairs whose check window was cut short by blow-up, with the window end.
    pub truncated: Vec<(usize, usize, f64)>,
}

/// Checks `S(x(t)) − S(x₀) ≤ ∫₀ᵗ r + tol` at the nodes of a shared grid for
/// every initial state and control.
pub fn check_integral(
    cert: &StorageCertificate,
    system: &ControlAffineSystem,
    supply: &RunningCost,
    x0_samples: &[Vec<f64>],
    controls: &[ControlSignal],
    horizon: f64,
    tol: f64,
) -> Result<IntegralReport> {
    let opts = IntegrateOptions::default();
    let mut report = IntegralReport {
        ok: true,
        worst_violation: f64::NEG_INFINITY,
        witness: (0, 0, 0.0),
        first_violation_time: None,
        truncated: Vec::new(),
    };
    for (i, x0) in x0_samples.iter().enumerate() {
        let s0 = cert.value(x0);
        for (j, u) in controls.iter().enumerate() {
            let traj = integrate(system, u, x0, horizon, &opts)?;
            let window_end = match traj.blow_up_time() {
                Some(tb) => {
                    let end = traj.end_time().min(tb) * (1.0 - 1e-9);
                    report.truncated.push((i, j, end));
                    end
                }
                None => horizon,
            };
            let mut nodes: Vec<f64> = linspace(0.0, window_end, 401);
            nodes.extend(traj.grid().into_iter().filter(|t| *t < window_end));
            nodes.extend(u.switch_times().into_iter().filter(|t| *t < window_end));
            nodes.sort_by(f64::total_cmp);
            nodes.dedup();
            let mut supplied = 0.0;
            let mut x = vec![0.0; x0.len()];
            for w in nodes.windows(2) {
                if supplied < f64::INFINITY {
                    let piece = quadrature::integrate(
                        &mut |s| {
                            traj.state_into(s, &mut x);
                            supply.eval(s, &x, u.evaluate(s))
                        },
                        w[0],
                        w[1],
                        1e-12 * (w[1] - w[0]).max(1e-3),
                    );
                    supplied += piece.value;
                }
                let t = w[1];
                let violation = cert.value(&traj.state_at(t)) - s0 - supplied;
                if violation.is_nan() {
                    return Err(Error::NonFinite { t });
                }
                if violation > report.worst_violation {
                    report.worst_violation = violation;
                    report.witness = (i, j, t);
                }
                if violation > tol {
                    report.ok = false;
                    if report.first_violation_time.is_none_or(|f| t < f) {
                        report.first_violation_time = Some(t);
                    }
                    break;
                }
            }
        }
    }
    if report.worst_violation == f64::NEG_INFINITY {
        report.worst_violation = 0.0;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoercivityVerdict {
    CoerciveEvidence,
    NonCoerciveEvidence,
    Inconclusive,
}

impl fmt::Display for CoercivityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoercivityVerdict::CoerciveEvidence => "coercive-evidence",
            CoercivityVerdict::NonCoerciveEvidence => "non-coercive-evidence",
            CoercivityVerdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoercivityReport {
    pub verdict: CoercivityVerdict,
    /// `(R, min_{|x|=R} S(x))`.
    pub growth_table: Vec<(f64, f64)>,
}

/// Unit directions covering the sphere in `ℝⁿ`.
fn sphere_directions(n: usize) -> Vec<Vec<f64>> {
    match n {
        0 => vec![Vec::new()],
        1 => vec![vec![-1.0], vec![1.0]],
        2 => (0..720)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 720.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let per_axis = ((20_000f64).powf(1.0 / (n - 1) as f64) as usize).clamp(3, 41);
            tensor_grid(&vec![-1.0; n], &vec![1.0; n], per_axis)
                .into_iter()
                .filter(|v| v.iter().any(|c| c.abs() == 1.0))
                .map(|v| {
                    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    v.into_iter().map(|c| c / norm).collect()
                })
                .collect()
        }
    }
}

/// Sublevel-boundedness probe: the minimum of `S` on spheres of growing radius.
///
/// Coercive evidence needs strictly increasing minima whose increments do not
/// collapse geometrically; minima that stall, decrease, or have geometrically
/// vanishing increments (a bounded limit) count as non-coercive evidence.
pub fn check_coercivity(cert: &StorageCertificate) -> Result<CoercivityReport> {
    if cert.radii.is_empty() || cert.radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("coercivity radii must be nonempty and increasing".into()));
    }
    let dirs = sphere_directions(cert.state_dim());
    let growth_table: Vec<(f64, f64)> = cert
        .radii
        .iter()
        .map(|&r| {
            let min = dirs
                .iter()
                .map(|d| cert.value(&d.iter().map(|c| c * r).collect::<Vec<_>>()))
                .fold(f64::INFINITY, f64::min);
            (r, min)
        })
        .collect();
    let minima: Vec<f64> = growth_table.iter().map(|(_, m)| *m).collect();
    let verdict = if minima.len() < 3 {
        CoercivityVerdict::Inconclusive
    } else {
        let increments: Vec<f64> = minima.windows(2).map(|w| w[1] - w[0]).collect();
        let last = *minima.last().unwrap();
        let earlier_max = minima[..minima.len() - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tail = &increments[increments.len() / 2..];
        let collapsing = tail.windows(2).all(|w| w[1].abs() <= 0.5 * w[0].abs());
        if last <= earlier_max || increments.iter().rev().take(2).any(|d| *d <= 0.0) {
            CoercivityVerdict::NonCoerciveEvidence
        } else if increments.iter().all(|d| *d > 0.0) && !collapsing {
            CoercivityVerdict::CoerciveEvidence
        } else if collapsing {
            CoercivityVerdict::NonCoerciveEvidence
        } else {
            CoercivityVerdict::Inconclusive
        }
    };
    Ok(CoercivityReport { verdict, growth_table })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessReport {
    /// Sublevel bound `M` from the stored constants.
    pub bound: f64,
    pub ok: bool,
    /// Per sample: `(max_t S(x(t)), sup_t |x(t)|)`.
    pub samples: Vec<(f64, f64)>,
}

/// Constants entering the sublevel bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// Cost cap `C` of the sampled family.
    pub cost_cap: f64,
    /// `‖γ‖₁`.
    pub gamma_l1: f64,
    /// `(α, p)` for unbounded `U`; `None` for compact `U`.
    pub growth: Option<(f64, f64)>,
}

impl BoundConstants {
    /// `M = S(x₀) + C + ‖γ‖₁ + αD` with `D = (C + ‖γ‖₁)/min(1, α)`, the `αD`
    /// term being absent for compact `U`.
    pub fn bound(&self, s0: f64) -> f64 {
        let base = s0 + self.cost_cap + self.gamma_l1;
        match self.growth {
            Some((alpha, _)) => base + alpha * (self.cost_cap + self.gamma_l1) / alpha.min(1.0),
            None => base,
        }
    }

    /// Reads `‖γ‖₁` and `α` from the cost's declared growth data.
    pub fn from_cost(cost: &RunningCost, set: &ControlValueSet, cost_cap: f64) -> Result<Self> {
        let growth = cost.growth.as_ref().ok_or_else(|| Error::Missing("growth constants".into()))?;
        let gamma_l1 = growth.gamma_l1.ok_or_else(|| Error::Missing("‖γ‖₁".into()))?;
        Ok(Self {
            cost_cap,
            gamma_l1,
            growth: if set.is_compact() { None } else { Some((growth.alpha, set.exponent())) },
        })
    }
}

/// Simulates each sampled control and checks `S(x(t)) ≤ M + tol` on the horizon.
pub fn uniform_boundedness_probe(
    cert: &StorageCertificate,
    system: &ControlAffineSystem,
    x0: &[f64],
    controls: &[ControlSignal],
    horizon: f64,
    constants: BoundConstants,
    tol: f64,
) -> Result<BoundednessReport> {
    let bound = constants.bound(cert.value(x0));
    let opts = IntegrateOptions::default();
    let mut ok = true;
    let mut samples = Vec::with_capacity(controls.len());
    for u in controls {
        let traj = integrate(system, u, x0, horizon, &opts)?;
        let end = traj.end_time();
        let mut s_max = f64::NEG_INFINITY;
        let mut x_sup: f64 = 0.0;
        let mut times = linspace(0.0, end, 2001);
        times.extend(traj.grid());
        for t in times {
            let x = traj.state_at(t);
            s_max = s_max.max(cert.value(&x));
            x_sup = x_sup.max(x.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        if traj.blew_up() {
            x_sup = f64::INFINITY;
        }
        if s_max > bound + tol || traj.blew_up() {
            ok = false;
        }
        samples.push((s_max, x_sup));
    }
    Ok(BoundednessReport { bound, ok, samples })
}
