//! Finite-horizon solvers: switching-time optimization over a fixed pattern
//! and a direct projected-gradient method on a uniform mesh.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::defaults;
use crate::error::{Error, Result};
use crate::optim::{bisect, golden_section, nelder_mead};
use crate::pmp::{breakpoint_sensitivities, costate_integrate};
use crate::problem::Problem;
use crate::quadrature;
use crate::signals::{ControlSignal, ControlValueSet};

/// Value of one piece of a pattern.
#[derive(Debug, Clone, PartialEq)]
pub enum PieceSpec {
    Fixed(Vec<f64>),
    /// A decision variable; `None` bounds mean the bounds of `U`.
    Free(Option<(Vec<f64>, Vec<f64>)>),
}

/// `N` pieces separated by `N − 1` interior breakpoints, each either a
/// decision variable (`None`) or pinned to an absolute time.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternTemplate {
    pieces: Vec<PieceSpec>,
    breakpoints: Vec<Option<f64>>,
}

impl PatternTemplate {
    pub fn new(pieces: Vec<PieceSpec>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidArgument("a pattern needs at least one piece".into()));
        }
        let breakpoints = vec![None; pieces.len() - 1];
        Ok(Self { pieces, breakpoints })
    }

    /// All pieces fixed, all breakpoints free.
    pub fn fixed(values: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(values.into_iter().map(PieceSpec::Fixed).collect())
    }

    /// Pins interior breakpoint `j` (1-based, `1 ≤ j < N`) to time `t`.
    pub fn with_fixed_breakpoint(mut self, j: usize, t: f64) -> Result<Self> {
        if j == 0 || j >= self.pieces.len() {
            return Err(Error::InvalidArgument(format!("interior breakpoint index {j} out of range")));
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidArgument(format!("fixed breakpoint {t} must be finite and nonnegative")));
        }
        self.breakpoints[j - 1] = Some(t);
        Ok(self)
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn pieces(&self) -> &[PieceSpec] {
        &self.pieces
    }

    pub fn interior_breakpoints(&self) -> &[Option<f64>] {
        &self.breakpoints
    }

    /// 1-based indices of the free interior breakpoints.
    pub fn free_breakpoints(&self) -> Vec<usize> {
        (1..self.pieces.len()).filter(|j| self.breakpoints[j - 1].is_none()).collect()
    }

    pub fn has_free_values(&self) -> bool {
        self.pieces.iter().any(|p| matches!(p, PieceSpec::Free(_)))
    }

    pub fn validate(&self, set: &ControlValueSet) -> Result<()> {
        let m = set.dim();
        for (j, p) in self.pieces.iter().enumerate() {
            match p {
                PieceSpec::Fixed(v) => {
                    if v.len() != m {
                        return Err(Error::DimensionMismatch { expected: m, got: v.len() });
                    }
                    if !set.contains(v) {
                        return Err(Error::InvalidArgument(format!("pattern piece {j} value {v:?} is outside U")));
                    }
                }
                PieceSpec::Free(None) => {
                    if !set.is_compact() {
                        return Err(Error::InvalidArgument(format!(
                            "free pattern piece {j} needs explicit bounds when U is unbounded"
                        )));
                    }
                }
                PieceSpec::Free(Some((lo, hi))) => {
                    if lo.len() != m || hi.len() != m {
                        return Err(Error::DimensionMismatch { expected: m, got: lo.len().min(hi.len()) });
                    }
                    if lo.iter().zip(hi).any(|(a, b)| a > b) || !set.contains(lo) || !set.contains(hi) {
                        return Err(Error::InvalidArgument(format!("free pattern piece {j} has invalid bounds")));
                    }
                }
            }
        }
        let fixed: Vec<f64> = self.breakpoints.iter().flatten().copied().collect();
        if fixed.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("fixed breakpoints must be nondecreasing".into()));
        }
        Ok(())
    }

    fn free_bounds<'a>(&'a self, set: &'a ControlValueSet) -> Vec<(&'a [f64], &'a [f64])> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                PieceSpec::Fixed(_) => None,
                PieceSpec::Free(Some((lo, hi))) => Some((lo.as_slice(), hi.as_slice())),
                PieceSpec::Free(None) => set.bounds(),
            })
            .collect()
    }
}

fn parse_vector(s: &str) -> Result<Vec<f64>> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    inner
        .split(|c: char| c.is_whitespace() || c == ';')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad number `{t}` in pattern"))))
        .collect()
}

/// Accepts `2,1,0`, vectors as `[1 0],[0 1]`, and `free` or `free[lo:hi]`
/// for decision pieces (bounds are vectors, e.g. `free[[0 0]:[1 1]]` or
/// `free[0:2]`).
impl FromStr for PatternTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut depth = 0i32;
        let mut current = String::new();
        for c in s.chars() {
            match c {
                '[' => depth += 1,
                ']' => depth -= 1,
                _ => {}
            }
            if c == ',' && depth == 0 {
                tokens.push(std::mem::take(&mut current));
            } else {
                current.push(c);
            }
        }
        tokens.push(current);
        if depth != 0 {
            return Err(Error::InvalidArgument(format!("unbalanced brackets in pattern `{s}`")));
        }
        let pieces = tokens
            .iter()
            .map(|tok| {
                let tok = tok.trim();
                if tok.is_empty() {
                    return Err(Error::InvalidArgument(format!("empty piece in pattern `{s}`")));
                }
                if let Some(rest) = tok.strip_prefix("free") {
                    let rest = rest.trim();
                    if rest.is_empty() {
                        return Ok(PieceSpec::Free(None));
                    }
                    let body = rest
                        .strip_prefix('[')
                        .and_then(|r| r.strip_suffix(']'))
                        .ok_or_else(|| Error::InvalidArgument(format!("bad free bounds `{rest}`")))?;
                    let (lo, hi) = body
                        .split_once(':')
                        .ok_or_else(|| Error::InvalidArgument(format!("free bounds need `lo:hi`, got `{body}`")))?;
                    return Ok(PieceSpec::Free(Some((parse_vector(lo)?, parse_vector(hi)?))));
                }
                parse_vector(tok).map(PieceSpec::Fixed)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pieces)
    }
}

fn fmt_vector(v: &[f64]) -> String {
    if v.len() == 1 {
        v[0].to_string()
    } else {
        format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))
    }
}

impl fmt::Display for PatternTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .pieces
            .iter()
            .map(|p| match p {
                PieceSpec::Fixed(v) => fmt_vector(v),
                PieceSpec::Free(None) => "free".to_string(),
                PieceSpec::Free(Some((lo, hi))) => format!("free[{}:{}]", fmt_vector(lo), fmt_vector(hi)),
            })
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Maps an unconstrained decision vector to monotone breakpoints and
/// admissible piece values.
///
/// Free breakpoints between two consecutive anchors (0, pinned times, `T`)
/// are parameterized by `k + 1` gaps `g`: `τ = a + (b − a)·Σ_{i≤j}|g_i| / Σ|g|`.
struct Layout<'a> {
    template: &'a PatternTemplate,
    set: &'a ControlValueSet,
    horizon: f64,
    /// `(lo anchor index, hi anchor index)` into the full breakpoint list, per segment with free breakpoints.
    segments: Vec<(usize, usize)>,
    gap_count: usize,
    value_dim: usize,
}

impl<'a> Layout<'a> {
    fn new(template: &'a PatternTemplate, set: &'a ControlValueSet, horizon: f64) -> Self {
        let n = template.piece_count();
        let mut anchors = vec![0];
        for j in 1..n {
            if template.breakpoints[j - 1].is_some() {
                anchors.push(j);
            }
        }
        anchors.push(n);
        let segments: Vec<(usize, usize)> =
            anchors.windows(2).filter(|w| w[1] - w[0] > 1).map(|w| (w[0], w[1])).collect();
        let gap_count = segments.iter().map(|(a, b)| b - a).sum();
        let value_dim = template.free_bounds(set).iter().map(|(lo, _)| lo.len()).sum();
        Self { template, set, horizon, segments, gap_count, value_dim }
    }

    fn dim(&self) -> usize {
        self.gap_count + self.value_dim
    }

    fn anchor_time(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else if j == self.template.piece_count() {
            self.horizon
        } else {
            self.template.breakpoints[j - 1].unwrap().min(self.horizon)
        }
    }

    fn decode(&self, y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.template.piece_count();
        let mut bps = vec![0.0; n + 1];
        for (j, b) in bps.iter_mut().enumerate() {
            if j == 0 || j == n || self.template.breakpoints[j - 1].is_some() {
                *b = self.anchor_time(j);
            }
        }
        let mut k = 0;
        for &(a, b) in &self.segments {
            let gaps: Vec<f64> = y[k..k + (b - a)].iter().map(|g| g.abs()).collect();
            k += b - a;
            let total: f64 = gaps.iter().sum();
            let (ta, tb) = (bps[a], bps[b]);
            let mut acc = 0.0;
            for (i, j) in (a + 1..b).enumerate() {
                acc += if total > 0.0 && total.is_finite() { gaps[i] / total } else { 1.0 / (b - a) as f64 };
                bps[j] = (ta + (tb - ta) * acc).clamp(ta, tb);
            }
        }
        for j in 1..=n {
            if bps[j] < bps[j - 1] {
                bps[j] = bps[j - 1];
            }
        }
        let bounds = self.template.free_bounds(self.set);
        let mut raw = y[self.gap_count..].iter();
        let mut free = bounds.iter();
        let values = self
            .template
            .pieces
            .iter()
            .map(|p| match p {
                PieceSpec::Fixed(v) => v.clone(),
                PieceSpec::Free(_) => {
                    let (lo, hi) = free.next().unwrap();
                    lo.iter().zip(hi.iter()).map(|(l, h)| raw.next().unwrap().clamp(*l, *h)).collect()
                }
            })
            .collect();
        (bps, values)
    }

    fn encode(&self, bps: &[f64], values: &[Vec<f64>]) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.dim());
        for &(a, b) in &self.segments {
            for j in a + 1..=b {
                let lo = if j - 1 == a { self.anchor_time(a) } else { bps[j - 1] };
                let hi = if j == b { self.anchor_time(b) } else { bps[j] };
                y.push((hi - lo).max(0.0) / self.horizon);
            }
        }
        for (p, v) in self.template.pieces.iter().zip(values) {
            if matches!(p, PieceSpec::Free(_)) {
                y.extend_from_slice(v);
            }
        }
        y
    }

    fn default_start(&self) -> Vec<f64> {
        let mut y = vec![1.0; self.gap_count];
        for (lo, hi) in self.template.free_bounds(self.set) {
            y.extend(lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)));
        }
        y
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut y: Vec<f64> = (0..self.gap_count).map(|_| rng.gen_range(0.0..1.0)).collect();
        for (lo, hi) in self.template.free_bounds(self.set) {
            y.extend(lo.iter().zip(hi).map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l }));
        }
        y
    }
}

/// One row of a convergence log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    /// Multistart index, or `None` for polishing passes.
    pub start: Option<usize>,
    pub iteration: usize,
    pub cost: f64,
    pub step: f64,
    pub residual: f64,
}

pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("start,iteration,cost,step,residual\n");
    for r in rows {
        let start = r.start.map_or("polish".to_string(), |i| i.to_string());
        s.push_str(&format!("{start},{},{},{},{}\n", r.iteration, r.cost, r.step, r.residual));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub seed: u64,
    pub multistarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Interior breakpoints used as the first start.
    pub warm_start: Option<Vec<f64>>,
    /// Refine free breakpoints with the exact derivative `dJ/dτ`.
    pub sensitivity_polish: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            seed: defaults::SEED,
            multistarts: defaults::MULTISTARTS,
            max_iters: defaults::MAX_ITERS,
            tol: defaults::OPT_TOL,
            warm_start: None,
            sensitivity_polish: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SwitchingSolution {
    pub signal: ControlSignal,
    pub cost: f64,
    /// `τ₀ = 0, …, τ_N = T`.
    pub breakpoints: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub log: Vec<LogRow>,
    pub converged: bool,
    pub warning: Option<String>,
    /// Best cost reached by each multistart.
    pub start_costs: Vec<f64>,
}

impl SwitchingSolution {
    pub fn interior_breakpoints(&self) -> &[f64] {
        &self.breakpoints[1..self.breakpoints.len() - 1]
    }
}

fn build_signal(problem: &Problem, bps: Vec<f64>, values: Vec<Vec<f64>>) -> Result<ControlSignal> {
    ControlSignal::new(bps, values, problem.u_star.clone())
}

/// `J_T` of a candidate; inadmissible or failed candidates score `+∞`.
fn score(problem: &Problem, bps: &[f64], values: &[Vec<f64>], horizon: f64) -> f64 {
    build_signal(problem, bps.to_vec(), values.to_vec())
        .and_then(|u| problem.cost_of(&u, horizon))
        .map(|c| if c.is_nan() { f64::INFINITY } else { c })
        .unwrap_or(f64::INFINITY)
}

fn improves(new: f64, old: f64, slack: f64) -> bool {
    new <= old + slack * (1.0 + old.abs())
}

/// Minimizes `J_T` over the breakpoints (and free values) of `template`.
///
/// Nelder–Mead runs on the gap parameterization from `opts.multistarts`
/// seeded starts in parallel; the best result (lowest start index on ties) is
/// then polished coordinate-wise by golden-section search and, when enabled,
/// by bisection on `dJ/dτ_j`.
pub fn solve_switching_times(
    problem: &Problem,
    template: &PatternTemplate,
    horizon: f64,
    opts: &SolveOptions,
) -> Result<SwitchingSolution> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be finite and positive, got {horizon}")));
    }
    template.validate(&problem.control_set)?;
    let layout = Layout::new(template, &problem.control_set, horizon);
    let starts = opts.multistarts.max(1);
    let objective = |y: &[f64]| {
        let (bps, values) = layout.decode(y);
        score(problem, &bps, &values, horizon)
    };

    let mut start_points = Vec::with_capacity(starts);
    start_points.push(match &opts.warm_start {
        Some(interior) if interior.len() == template.piece_count() - 1 => {
            let mut bps = vec![0.0];
            bps.extend(interior.iter().map(|t| t.clamp(0.0, horizon)));
            bps.push(horizon);
            for j in 1..bps.len() {
                bps[j] = bps[j].max(bps[j - 1]);
            }
            let (_, values) = layout.decode(&layout.default_start());
            layout.encode(&bps, &values)
        }
        _ => layout.default_start(),
    });
    for idx in 1..starts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(idx as u64);
        start_points.push(layout.random_start(&mut rng));
    }

    let runs: Vec<_> = if layout.dim() == 0 {
        let v = objective(&[]);
        vec![(Vec::new(), v, true, vec![LogRow { start: Some(0), iteration: 0, cost: v, step: 0.0, residual: 0.0 }])]
    } else {
        start_points
            .par_iter()
            .enumerate()
            .map(|(idx, y0)| {
                let mut f = |y: &[f64]| objective(y);
                let r = nelder_mead(&mut f, y0, 0.25, opts.tol, opts.tol.sqrt(), opts.max_iters);
                let log = (0..r.history.len())
                    .map(|i| LogRow {
                        start: Some(idx),
                        iteration: i,
                        cost: r.history[i],
                        step: r.sizes[i],
                        residual: r.spreads[i],
                    })
                    .collect::<Vec<_>>();
                (r.x, r.value, r.converged, log)
            })
            .collect()
    };
    let start_costs: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let best = (0..runs.len()).min_by(|&a, &b| runs[a].1.total_cmp(&runs[b].1).then(a.cmp(&b))).unwrap();
    let converged_nm = runs[best].2;
    let mut log: Vec<LogRow> = runs.iter().flat_map(|r| r.3.iter().cloned()).collect();
    let (mut bps, mut values) = layout.decode(&runs[best].0);
    let mut cost = runs[best].1;

    let free = template.free_breakpoints();
    let free_pieces: Vec<usize> =
        (0..template.piece_count()).filter(|&j| matches!(template.pieces[j], PieceSpec::Free(_))).collect();
    let bounds = template.free_bounds(&problem.control_set);
    let mut polish_iter = 0;
    for _sweep in 0..3 {
        let before = cost;
        for &j in &free {
            let (lo, hi) = (bps[j - 1], bps[j + 1]);
            if hi <= lo {
                continue;
            }
            let mut trial = bps.clone();
            let m = golden_section(
                &mut |s| {
                    trial[j] = s;
                    score(problem, &trial, &values, horizon)
                },
                lo,
                hi,
                opts.tol * horizon.max(1.0),
                200,
            );
            if m.value < cost {
                bps[j] = m.x;
                cost = m.value;
            }
        }
        for (slot, &j) in free_pieces.iter().enumerate() {
            let (lo, hi) = bounds[slot];
            for k in 0..lo.len() {
                if hi[k] <= lo[k] {
                    continue;
                }
                let mut trial = values.clone();
                let m = golden_section(
                    &mut |s| {
                        trial[j][k] = s;
                        score(problem, &bps, &trial, horizon)
                    },
                    lo[k],
                    hi[k],
                    opts.tol * (hi[k] - lo[k]).max(1.0),
                    200,
                );
                if m.value < cost {
                    values[j][k] = m.x;
                    cost = m.value;
                }
            }
        }
        log.push(LogRow { start: None, iteration: polish_iter, cost, step: before - cost, residual: 0.0 });
        polish_iter += 1;
        if before - cost <= opts.tol * (1.0 + cost.abs()) {
            break;
        }
    }

    if opts.sensitivity_polish && cost.is_finite() {
        for &j in &free {
            if values[j - 1] == values[j] {
                continue;
            }
            if let Some((t, c)) = sensitivity_refine(problem, &bps, &values, j, horizon) {
                if improves(c, cost, 1e-12) {
                    log.push(LogRow {
                        start: None,
                        iteration: polish_iter,
                        cost: c,
                        step: (t - bps[j]).abs(),
                        residual: 0.0,
                    });
                    polish_iter += 1;
                    bps[j] = t;
                    cost = c;
                }
            }
        }
    }

    let signal = build_signal(problem, bps.clone(), values.clone())?;
    signal.check_admissible(&problem.control_set)?;
    let warning = if !cost.is_finite() {
        Some("no candidate with finite cost was found".to_string())
    } else if !converged_nm {
        Some(format!("Nelder-Mead stopped after {} iterations without meeting the tolerance", opts.max_iters))
    } else {
        None
    };
    Ok(SwitchingSolution {
        signal,
        cost,
        breakpoints: bps,
        values,
        log,
        converged: warning.is_none(),
        warning,
        start_costs,
    })
}

/// Brackets and bisects a zero of `dJ/dτ_j` around the current `τ_j`,
/// descending toward lower cost; returns the new `τ_j` and its cost.
fn sensitivity_refine(
    problem: &Problem,
    bps: &[f64],
    values: &[Vec<f64>],
    j: usize,
    horizon: f64,
) -> Option<(f64, f64)> {
    let (lo, hi) = (bps[j - 1], bps[j + 1]);
    let mut trial = bps.to_vec();
    let mut grad = |s: f64| -> f64 {
        trial[j] = s;
        build_signal(problem, trial.clone(), values.to_vec())
            .and_then(|u| breakpoint_sensitivities(problem, &u, horizon))
            .map(|g| g[j - 1])
            .unwrap_or(f64::NAN)
    };
    let s0 = bps[j];
    let g0 = grad(s0);
    if !g0.is_finite() || g0 == 0.0 {
        return None;
    }
    let dir = -g0.signum();
    let mut w = 1e-4 * horizon.max(1.0);
    let target = loop {
        let s = (s0 + dir * w).clamp(lo, hi);
        let g = grad(s);
        if !g.is_finite() {
            return None;
        }
        if g.signum() != g0.signum() {
            let (a, b) = if s < s0 { (s, s0) } else { (s0, s) };
            break bisect(&mut grad, a, b, 1e-12 * horizon.max(1.0))?;
        }
        if s == lo || s == hi {
            break s;
        }
        w *= 2.0;
    };
    trial[j] = target;
    Some((target, score(problem, &trial, values, horizon)))
}

/// Piecewise-constant control on a uniform mesh of `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedControl {
    pub horizon: f64,
    pub cells: Vec<Vec<f64>>,
}

impl DiscretizedControl {
    pub fn mesh_size(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_width(&self) -> f64 {
        self.horizon / self.cells.len() as f64
    }

    pub fn to_signal(&self, tail: Vec<f64>) -> Result<ControlSignal> {
        let h = self.cell_width();
        let mut bps: Vec<f64> = (0..self.cells.len()).map(|i| i as f64 * h).collect();
        bps.push(self.horizon);
        ControlSignal::new(bps, self.cells.clone(), tail)
    }

    pub fn to_csv(&self) -> String {
        let m = self.cells.first().map_or(0, |c| c.len());
        let mut s = String::from("t_start,t_end");
        for k in 1..=m {
            s.push_str(&format!(",u{k}"));
        }
        s.push('\n');
        let h = self.cell_width();
        for (i, c) in self.cells.iter().enumerate() {
            s.push_str(&format!("{},{}", i as f64 * h, (i + 1) as f64 * h));
            for v in c {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectOptions {
    pub max_iters: usize,
    pub gtol: f64,
    /// Starting cell values; defaults to the center of `U` (or `u★` if `U` is unbounded).
    pub initial: Option<Vec<Vec<f64>>>,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self { max_iters: defaults::MAX_ITERS, gtol: defaults::GTOL, initial: None }
    }
}

#[derive(Debug, Clone)]
pub struct DirectSolution {
    pub control: DiscretizedControl,
    pub cost: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub log: Vec<LogRow>,
    pub converged: bool,
    /// The line search failed; the best iterate so far is returned.
    pub flagged: bool,
    /// Ten accepted steps lowered the cost by less than roundoff.
    pub stalled: bool,
}

/// Cost and cell gradients `(1/h)∫_cell ∂H/∂u dt` for a discretized control.
fn cost_and_gradient(problem: &Problem, control: &DiscretizedControl) -> Result<(f64, Vec<Vec<f64>>)> {
    let horizon = control.horizon;
    let u = control.to_signal(problem.u_star.clone())?;
    let traj = problem.simulate(&u, horizon)?;
    if traj.blew_up() {
        return Ok((f64::INFINITY, Vec::new()));
    }
    let cost = crate::costs::evaluate_cost(&problem.cost, &traj, &u, horizon, problem.tolerances.quad)?;
    let costate = costate_integrate(problem, &traj, &u, horizon)?;
    let h = control.cell_width();
    let n = problem.state_dim();
    let m = problem.control_dim();
    let quad_tol = problem.tolerances.quad;
    let grads = control
        .cells
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let (a, b) = (i as f64 * h, ((i + 1) as f64 * h).min(horizon));
            (0..m)
                .map(|k| {
                    let mut integrand = |t: f64| {
                        let x = traj.state_at(t);
                        let p = costate.costate_at(t);
                        let dl = problem.cost.control_gradient(t, &x, cell, &problem.control_set)[k];
                        let bm = problem.system.input_matrix(t, &x);
                        dl + (0..n).map(|r| bm[r * m + k] * p[r]).sum::<f64>()
                    };
                    quadrature::integrate(&mut integrand, a, b, quad_tol * h).value / h
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    Ok((cost, grads))
}

fn project_cells(set: &ControlValueSet, cells: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    cells.iter().map(|c| set.project(c)).collect()
}

fn weighted_dot(h: f64, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    h * a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q)).sum::<f64>()
}

fn kkt_residual(set: &ControlValueSet, h: f64, cells: &[Vec<f64>], grads: &[Vec<f64>]) -> Result<f64> {
    let mut acc = 0.0;
    for (c, g) in cells.iter().zip(grads) {
        let shifted: Vec<f64> = c.iter().zip(g).map(|(a, b)| a - b).collect();
        let p = set.project(&shifted)?;
        acc += p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok((h * acc).sqrt())
}

const STALL_WINDOW: usize = 10;

/// Projected gradient descent with Barzilai–Borwein steps and Armijo
/// backtracking on `M` uniform cells. The accepted cost never increases, and
/// the loop stops early once the cost stagnates at roundoff.
pub fn solve_direct(problem: &Problem, horizon: f64, mesh: usize, opts: &DirectOptions) -> Result<DirectSolution> {
    if mesh == 0 {
        return Err(Error::InvalidArgument("mesh needs at least one cell".into()));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be finite and positive, got {horizon}")));
    }
    let set = &problem.control_set;
    let start = if set.is_compact() { set.center() } else { problem.u_star.clone() };
    let cells = match &opts.initial {
        Some(c) if c.len() == mesh => project_cells(set, c)?,
        Some(c) => return Err(Error::DimensionMismatch { expected: mesh, got: c.len() }),
        None => vec![start; mesh],
    };
    let mut control = DiscretizedControl { horizon, cells };
    let h = control.cell_width();
    let (mut cost, mut grad) = cost_and_gradient(problem, &control)?;
    if !cost.is_finite() {
        return Err(Error::InvalidArgument("the initial control has infinite cost".into()));
    }
    let width = set.bounds().map(|(lo, hi)| lo.iter().zip(hi).map(|(a, b)| b - a).fold(0.0, f64::max)).unwrap_or(1.0);
    let gmax = grad.iter().flatten().fold(0.0f64, |a, g| a.max(g.abs()));
    let mut alpha = if gmax > 0.0 { width / gmax } else { 1.0 };
    let mut residual = kkt_residual(set, h, &control.cells, &grad)?;
    let mut log = vec![LogRow { start: None, iteration: 0, cost, step: 0.0, residual }];
    let mut flagged = false;
    let mut stalled = false;
    let mut iterations = 0;
    while iterations < opts.max_iters && residual >= opts.gtol {
        iterations += 1;
        let mut accepted = None;
        let mut step = alpha;
        for _ in 0..60 {
            let trial: Vec<Vec<f64>> = control
                .cells
                .iter()
                .zip(&grad)
                .map(|(c, g)| c.iter().zip(g).map(|(a, b)| a - step * b).collect::<Vec<f64>>())
                .collect();
            let trial = project_cells(set, &trial)?;
            let d: Vec<Vec<f64>> =
                trial.iter().zip(&control.cells).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect()).collect();
            let decrease = weighted_dot(h, &grad, &d);
            let candidate = DiscretizedControl { horizon, cells: trial };
            let (c_new, g_new) = cost_and_gradient(problem, &candidate)?;
            if c_new.is_finite() && c_new <= cost + 1e-4 * decrease {
                accepted = Some((candidate, c_new, g_new, d));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, c_new, g_new, s)) = accepted else {
            flagged = true;
            break;
        };
        let y: Vec<Vec<f64>> =
            g_new.iter().zip(&grad).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect()).collect();
        let sy = weighted_dot(h, &s, &y);
        let ss = weighted_dot(h, &s, &s);
        alpha = if sy > 0.0 && ss > 0.0 { ss / sy } else { step * 2.0 };
        control = candidate;
        cost = c_new;
        grad = g_new;
        residual = kkt_residual(set, h, &control.cells, &grad)?;
        log.push(LogRow { start: None, iteration: iterations, cost, step, residual });
        if log.len() > STALL_WINDOW && log[log.len() - 1 - STALL_WINDOW].cost - cost <= 1e-14 * (1.0 + cost.abs()) {
            stalled = true;
            break;
        }
    }
    Ok(DirectSolution {
        control,
        cost,
        kkt_residual: residual,
        iterations,
        log,
        converged: residual < opts.gtol,
        flagged,
        stalled,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub tau: f64,
    pub cost: f64,
    pub evaluations: usize,
}

/// Exhaustive scan of the single free breakpoint over `{0, step, 2·step, …, T}`
/// (restricted to its admissible bracket); ties go to the smallest `τ`.
pub fn brute_force_oracle(
    problem: &Problem,
    template: &PatternTemplate,
    horizon: f64,
    step: f64,
) -> Result<OracleResult> {
    template.validate(&problem.control_set)?;
    let free = template.free_breakpoints();
    if free.len() != 1 || template.has_free_values() {
        return Err(Error::InvalidArgument(
            "the oracle needs exactly one free breakpoint and no free piece values".into(),
        ));
    }
    if !(step > 0.0 && horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument("oracle needs a positive step and a finite horizon".into()));
    }
    let j = free[0];
    let layout = Layout::new(template, &problem.control_set, horizon);
    let (base, values) = layout.decode(&layout.default_start());
    let (lo, hi) = (base[j - 1], base[j + 1]);
    let count = (horizon / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|i| i as f64 * step).filter(|t| *t >= lo && *t <= hi).collect();
    if (horizon - count as f64 * step).abs() > 1e-12 && hi == horizon {
        grid.push(horizon);
    }
    if grid.is_empty() {
        grid.push(lo);
    }
    let costs: Vec<f64> = grid
        .par_iter()
        .map(|&t| {
            let mut bps = base.clone();
            bps[j] = t;
            score(problem, &bps, &values, horizon)
        })
        .collect();
    let best = (0..grid.len()).min_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b))).unwrap();
    Ok(OracleResult { tau: grid[best], cost: costs[best], evaluations: grid.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::RunningCost;
    use crate::dynamics::ControlAffineSystem;
    use std::sync::Arc;

    fn ex41() -> Problem {
        let sys = ControlAffineSystem::new(1, 1, Arc::new(|_, x| vec![x[0]]), Arc::new(|_, x| vec![-x[0]]));
        let cost = RunningCost::new(Arc::new(|_, x| x[0].abs()), Arc::new(|_, _, u| 4.0 * u[0].abs()));
        Problem::new("ex41", sys, cost, vec![1.0], ControlValueSet::interval(0.0, 2.0).unwrap(), vec![0.0]).unwrap()
    }

    /// `J(τ) = 8τ + 1 − 2e^{−τ} + e^{T−2τ}` for pattern (2, 0), minimized by
    /// the root of `e^{T−2τ} − e^{−τ} = 4`.
    fn ex41_closed_form(t_final: f64) -> (f64, f64) {
        let j = |s: f64| 8.0 * s + 1.0 - 2.0 * (-s).exp() + (t_final - 2.0 * s).exp();
        let g = |s: f64| (t_final - 2.0 * s).exp() - (-s).exp() - 4.0;
        let tau = if g(0.0) <= 0.0 { 0.0 } else { bisect(&mut |s| g(s), 0.0, t_final, 1e-14).unwrap() };
        (tau, j(tau))
    }

    fn ex42() -> Problem {
        let sys = ControlAffineSystem::new(1, 1, Arc::new(|_, x| vec![x[0]]), Arc::new(|_, x| vec![-x[0]]));
        let cost = RunningCost::new(
            Arc::new(|t, x| x[0].abs() * (-2.0 * t).exp()),
            Arc::new(|t, _, u| u[0].abs() / 3.0 * (-2.0 * t).exp()),
        );
        Problem::new("ex42", sys, cost, vec![1.0], ControlValueSet::interval(0.0, 2.0).unwrap(), vec![0.0]).unwrap()
    }

    #[test]
    fn three_piece_pattern_with_singular_middle() {
        let p = ex42();
        let t: PatternTemplate = "2,1,0".parse().unwrap();
        let sol = solve_switching_times(&p, &t, 10.0, &SolveOptions::default()).unwrap();
        assert!((sol.breakpoints[1] - 1.5f64.ln()).abs() < 1e-4, "{:?}", sol.breakpoints);
        assert!((sol.breakpoints[2] - (10.0 - 2f64.ln())).abs() < 1e-4, "{:?}", sol.breakpoints);
    }

    #[test]
    fn template_parsing_round_trips() {
        for s in ["2,1,0", "2,0", "[1 0],[0 1]", "free,0", "free[0:2],1"] {
            let t: PatternTemplate = s.parse().unwrap();
            assert_eq!(t.to_string(), s);
            assert_eq!(t.to_string().parse::<PatternTemplate>().unwrap(), t);
        }
        assert!("".parse::<PatternTemplate>().is_err());
        assert!("2,,0".parse::<PatternTemplate>().is_err());
        assert!("[1 0".parse::<PatternTemplate>().is_err());
    }

    #[test]
    fn template_validation() {
        let set = ControlValueSet::interval(0.0, 2.0).unwrap();
        assert!("2,1,0".parse::<PatternTemplate>().unwrap().validate(&set).is_ok());
        assert!("3,0".parse::<PatternTemplate>().unwrap().validate(&set).is_err());
        assert!("[1 1],0".parse::<PatternTemplate>().unwrap().validate(&set).is_err());
        let full = ControlValueSet::full_space(1, 2.0).unwrap();
        assert!("free".parse::<PatternTemplate>().unwrap().validate(&full).is_err());
    }

    #[test]
    fn layout_keeps_breakpoints_monotone() {
        let t = PatternTemplate::fixed(vec![vec![2.0], vec![1.0], vec![0.0], vec![1.0]])
            .unwrap()
            .with_fixed_breakpoint(2, 3.0)
            .unwrap();
        let set = ControlValueSet::interval(0.0, 2.0).unwrap();
        let layout = Layout::new(&t, &set, 10.0);
        assert_eq!(layout.dim(), 4);
        let (bps, _) = layout.decode(&[-1.0, 3.0, 0.0, 2.0]);
        assert_eq!(bps[0], 0.0);
        assert!((bps[1] - 0.75).abs() < 1e-14);
        assert_eq!(bps[2], 3.0);
        assert_eq!(bps[3], 3.0);
        assert_eq!(bps[4], 10.0);
        let y = layout.encode(
            &bps,
            &t.pieces
                .iter()
                .map(|p| match p {
                    PieceSpec::Fixed(v) => v.clone(),
                    PieceSpec::Free(_) => unreachable!(),
                })
                .collect::<Vec<_>>(),
        );
        let (again, _) = layout.decode(&y);
        for (a, b) in again.iter().zip(&bps) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn switching_solver_matches_closed_form() {
        let p = ex41();
        let t: PatternTemplate = "2,0".parse().unwrap();
        for t_final in [3.0, 6.0, 10.0] {
            let sol = solve_switching_times(&p, &t, t_final, &SolveOptions::default()).unwrap();
            let (tau, j) = ex41_closed_form(t_final);
            assert!((sol.breakpoints[1] - tau).abs() < 1e-5, "T={t_final}: {} vs {tau}", sol.breakpoints[1]);
            assert!((sol.cost - j).abs() < 1e-7 * (1.0 + j), "T={t_final}: {} vs {j}", sol.cost);
        }
    }

    #[test]
    fn short_horizon_degenerates_to_zero_control() {
        let p = ex41();
        let t: PatternTemplate = "2,0".parse().unwrap();
        let sol = solve_switching_times(&p, &t, 1.0, &SolveOptions::default()).unwrap();
        assert!(sol.breakpoints[1] < 1e-6);
        assert!((sol.cost - (1f64.exp() - 1.0)).abs() < 1e-8);
        let o = brute_force_oracle(&p, &t, 1.0, 1e-3).unwrap();
        assert_eq!(o.tau, 0.0);
    }

    #[test]
    fn oracle_dominance_and_solver_determinism() {
        let p = ex41();
        let t: PatternTemplate = "2,0".parse().unwrap();
        let o = brute_force_oracle(&p, &t, 10.0, 1e-2).unwrap();
        let (tau, _) = ex41_closed_form(10.0);
        assert!((o.tau - tau).abs() <= 1e-2);
        let a = solve_switching_times(&p, &t, 10.0, &SolveOptions::default()).unwrap();
        let b = solve_switching_times(&p, &t, 10.0, &SolveOptions::default()).unwrap();
        assert!(a.cost <= o.cost + 1e-6);
        assert_eq!(a.breakpoints, b.breakpoints);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn free_piece_value_is_optimized() {
        // x' = u, ℓ = (x − 1)² + u²/10 on [0, 1] from x = 0 with a constant free control
        let sys = ControlAffineSystem::new(1, 1, Arc::new(|_, _| vec![0.0]), Arc::new(|_, _| vec![1.0]));
        let cost = RunningCost::new(Arc::new(|_, x| (x[0] - 1.0).powi(2)), Arc::new(|_, _, u| 0.1 * u[0] * u[0]));
        let p =
            Problem::new("q", sys, cost, vec![0.0], ControlValueSet::interval(-5.0, 5.0).unwrap(), vec![0.0]).unwrap();
        let t: PatternTemplate = "free".parse().unwrap();
        let sol = solve_switching_times(&p, &t, 1.0, &SolveOptions::default()).unwrap();
        // J(c) = ∫(ct − 1)² + c²/10 = c²/3 − c + 1 + c²/10, minimized at c = 15/13
        assert!((sol.values[0][0] - 15.0 / 13.0).abs() < 1e-5, "{:?}", sol.values);
    }

    #[test]
    fn trivial_decoupled_quadratic() {
        let sys = ControlAffineSystem::frozen(1, 1);
        let cost = RunningCost::new(Arc::new(|_, _| 0.0), Arc::new(|_, _, u| u[0] * u[0]));
        let p =
            Problem::new("t", sys, cost, vec![0.3], ControlValueSet::interval(-1.0, 2.0).unwrap(), vec![0.0]).unwrap();
        let sol = solve_direct(&p, 2.0, 20, &DirectOptions::default()).unwrap();
        assert!(sol.cost < 1e-12, "{}", sol.cost);
        assert!(sol.control.cells.iter().all(|c| c[0].abs() < 1e-6));
        assert!(sol.log.windows(2).all(|w| w[1].cost <= w[0].cost));
    }

    #[test]
    fn direct_stops_when_the_cost_stagnates() {
        let p = crate::problems::lqr().unwrap();
        let sol = solve_direct(&p, 2.0, 40, &DirectOptions { gtol: 1e-14, ..DirectOptions::default() }).unwrap();
        assert!(sol.stalled && !sol.converged);
        assert!(sol.iterations < defaults::MAX_ITERS, "{}", sol.iterations);
        let tail = &sol.log[sol.log.len() - 1 - STALL_WINDOW..];
        assert!(tail[0].cost - tail[STALL_WINDOW].cost <= 1e-14 * (1.0 + sol.cost));
    }

    #[test]
    fn direct_agrees_with_switching_on_ex41() {
        let p = ex41();
        let sol = solve_direct(&p, 10.0, 200, &DirectOptions::default()).unwrap();
        let (tau, j) = ex41_closed_form(10.0);
        assert!((sol.cost - j).abs() / (1.0 + j) < 1e-3, "{} vs {j}", sol.cost);
        let h = sol.control.cell_width();
        let switch = sol.control.cells.iter().position(|c| c[0] < 1.0).unwrap() as f64 * h;
        assert!((switch - tau).abs() <= 2.0 * h, "{switch} vs {tau}");
        assert!(sol.log.windows(2).all(|w| w[1].cost <= w[0].cost));
    }
}
