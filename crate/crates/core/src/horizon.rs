//! Horizon sweeps `T_k → ∞`: breakpoint limits, the limit control, its
//! infinite-horizon cost, and the pattern-preservation verdict.

use std::fmt;

use crate::costs::{check_c1_growth, check_mk_domination, evaluate_cost, SampleGrid};
use crate::defaults;
use crate::dissipativity::{check_coercivity, check_differential, CoercivityVerdict, DissipationGrid, RefineOptions};
use crate::dynamics::linspace;
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::signals::ControlSignal;
use crate::solvers::{solve_switching_times, PatternTemplate, SolveOptions};

/// How a breakpoint sequence `τ_j^k` behaves as `T_k` grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitClass {
    FiniteLimit,
    DivergesToInfinity,
    Undetermined,
}

impl fmt::Display for LimitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LimitClass::FiniteLimit => "finite-limit",
            LimitClass::DivergesToInfinity => "diverges-to-infinity",
            LimitClass::Undetermined => "undetermined",
        })
    }
}

/// One solved horizon of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonEntry {
    pub horizon: f64,
    /// Interior breakpoints `τ₁ … τ_{N−1}`.
    pub breakpoints: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub cost: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternResult {
    pub template: String,
    pub entries: Vec<HorizonEntry>,
    /// Per interior breakpoint: the last value for finite limits, `+∞` for divergent ones, NaN otherwise.
    pub limit_breakpoints: Vec<f64>,
    pub limit_values: Vec<Vec<f64>>,
    pub flags: Vec<LimitClass>,
    /// Whether each piece value settled to within the tolerance.
    pub value_converged: Vec<bool>,
    pub conv_tol: f64,
}

impl PatternResult {
    /// One row per horizon; failed horizons keep their row with empty numeric fields.
    pub fn to_csv(&self) -> String {
        let nb = self.flags.len();
        let nv = self.limit_values.len();
        let m = self.limit_values.first().map_or(0, |v| v.len());
        let mut s = String::from("T");
        for j in 1..=nb {
            s.push_str(&format!(",tau{j}"));
        }
        for j in 1..=nv {
            for k in 1..=m {
                s.push_str(&format!(",u{j}_{k}"));
            }
        }
        s.push_str(",cost,converged,error\n");
        for e in &self.entries {
            s.push_str(&e.horizon.to_string());
            if e.error.is_some() {
                s.push_str(&",".repeat(nb + nv * m + 1));
            } else {
                for t in &e.breakpoints {
                    s.push_str(&format!(",{t}"));
                }
                for v in e.values.iter().flatten() {
                    s.push_str(&format!(",{v}"));
                }
                s.push_str(&format!(",{}", e.cost));
            }
            s.push_str(&format!(",{},{}\n", e.converged, e.error.as_deref().unwrap_or("").replace(',', ";")));
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("template={}\nhorizons={}\n", self.template, self.entries.len());
        for (j, (flag, lim)) in self.flags.iter().zip(&self.limit_breakpoints).enumerate() {
            s.push_str(&format!("tau{}_class={flag}\ntau{}_limit={lim}\n", j + 1, j + 1));
        }
        for (j, v) in self.limit_values.iter().enumerate() {
            s.push_str(&format!(
                "u{}_limit={}\nu{}_converged={}\n",
                j + 1,
                v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"),
                j + 1,
                self.value_converged[j]
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub solve: SolveOptions,
    pub conv_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { solve: SolveOptions::default(), conv_tol: defaults::CONV_TOL }
    }
}

/// Classifies a breakpoint sequence over increasing horizons.
///
/// Finite when the successive differences over the second half of the
/// sequence stay below `conv_tol`. Divergent when the same tail increases
/// strictly and either the offsets `T_k − τ_k` settle or `τ_k / T_k` stays
/// above one tenth.
pub fn classify(horizons: &[f64], taus: &[f64], conv_tol: f64) -> LimitClass {
    let k = taus.len();
    if k < 2 {
        return LimitClass::Undetermined;
    }
    let start = (k / 2).min(k - 2);
    let tail = &taus[start..];
    let tail_t = &horizons[start..];
    if tail.windows(2).all(|w| (w[1] - w[0]).abs() < conv_tol) {
        return LimitClass::FiniteLimit;
    }
    let increasing = tail.windows(2).all(|w| w[1] > w[0] + conv_tol);
    let offsets: Vec<f64> = tail_t.iter().zip(tail).map(|(t, s)| t - s).collect();
    let offsets_settle = offsets.windows(2).all(|w| (w[1] - w[0]).abs() < conv_tol);
    let ratio_bounded = tail_t.iter().zip(tail).all(|(t, s)| s / t >= 0.1);
    if increasing && (offsets_settle || ratio_bounded) {
        LimitClass::DivergesToInfinity
    } else {
        LimitClass::Undetermined
    }
}

/// Warm start for the next horizon: affine extrapolation in `T` from the
/// last two solved horizons, or the last solution itself.
fn extrapolate(entries: &[HorizonEntry], next: f64) -> Option<Vec<f64>> {
    let solved: Vec<&HorizonEntry> = entries.iter().filter(|e| e.error.is_none()).collect();
    match solved.as_slice() {
        [] => None,
        [one] => Some(one.breakpoints.clone()),
        [.., a, b] => {
            let dt = b.horizon - a.horizon;
            Some(
                a.breakpoints
                    .iter()
                    .zip(&b.breakpoints)
                    .map(|(x, y)| (y + (y - x) / dt * (next - b.horizon)).clamp(0.0, next))
                    .collect(),
            )
        }
    }
}

/// Solves the switching-time problem at each horizon in turn, each warm
/// started from the extrapolated previous solutions, and classifies the
/// breakpoint limits. Failures are recorded per horizon.
pub fn horizon_sweep(
    problem: &Problem,
    template: &PatternTemplate,
    horizons: &[f64],
    opts: &SweepOptions,
) -> Result<PatternResult> {
    if horizons.len() < 2 || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("horizons must be strictly increasing with at least two entries".into()));
    }
    template.validate(&problem.control_set)?;
    let mut entries: Vec<HorizonEntry> = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let mut solve = opts.solve.clone();
        if solve.warm_start.is_none() {
            solve.warm_start = extrapolate(&entries, t);
        }
        entries.push(match solve_switching_times(problem, template, t, &solve) {
            Ok(sol) => HorizonEntry {
                horizon: t,
                breakpoints: sol.interior_breakpoints().to_vec(),
                values: sol.values,
                cost: sol.cost,
                converged: sol.converged,
                error: None,
            },
            Err(e) => HorizonEntry {
                horizon: t,
                breakpoints: Vec::new(),
                values: Vec::new(),
                cost: f64::NAN,
                converged: false,
                error: Some(e.to_string()),
            },
        });
    }

    let nb = template.piece_count() - 1;
    let solved: Vec<&HorizonEntry> = entries.iter().filter(|e| e.error.is_none()).collect();
    let ts: Vec<f64> = solved.iter().map(|e| e.horizon).collect();
    let mut flags = Vec::with_capacity(nb);
    let mut limit_breakpoints = Vec::with_capacity(nb);
    for j in 0..nb {
        let taus: Vec<f64> = solved.iter().map(|e| e.breakpoints[j]).collect();
        let flag = classify(&ts, &taus, opts.conv_tol);
        limit_breakpoints.push(match flag {
            LimitClass::FiniteLimit => *taus.last().unwrap(),
            LimitClass::DivergesToInfinity => f64::INFINITY,
            LimitClass::Undetermined => f64::NAN,
        });
        flags.push(flag);
    }
    let (limit_values, value_converged) = match solved.last() {
        Some(last) => {
            let start = (solved.len() / 2).min(solved.len().saturating_sub(2));
            let converged = (0..template.piece_count())
                .map(|j| {
                    solved[start..]
                        .windows(2)
                        .all(|w| w[0].values[j].iter().zip(&w[1].values[j]).all(|(a, b)| (a - b).abs() < opts.conv_tol))
                })
                .collect();
            (last.values.clone(), converged)
        }
        None => (Vec::new(), Vec::new()),
    };
    Ok(PatternResult {
        template: template.to_string(),
        entries,
        limit_breakpoints,
        limit_values,
        flags,
        value_converged,
        conv_tol: opts.conv_tol,
    })
}

/// Assembles `u_∞ = Σ u_j^∞ 𝟏_[τ_{j−1}^∞, τ_j^∞)` on `[0, ∞)`, dropping empty pieces.
pub fn limit_control(result: &PatternResult) -> Result<ControlSignal> {
    if result.limit_values.is_empty() {
        return Err(Error::Undetermined("the sweep has no solved horizon".into()));
    }
    if let Some(j) = result.flags.iter().position(|f| *f == LimitClass::Undetermined) {
        return Err(Error::Undetermined(format!(
            "breakpoint tau{} has no determined limit; add larger horizons to the sweep",
            j + 1
        )));
    }
    if let Some(j) = result.value_converged.iter().position(|c| !c) {
        return Err(Error::Undetermined(format!("piece value u{} has not settled; add larger horizons", j + 1)));
    }
    let mut bounds = vec![0.0];
    bounds.extend(&result.limit_breakpoints);
    bounds.push(f64::INFINITY);
    for j in 1..bounds.len() {
        bounds[j] = bounds[j].max(bounds[j - 1]);
    }
    let mut finite = Vec::new();
    let mut pieces = Vec::new();
    for (j, value) in result.limit_values.iter().enumerate() {
        let (a, b) = (bounds[j], bounds[j + 1]);
        if b > a {
            if !pieces.is_empty() {
                finite.push(a);
            }
            pieces.push(value.clone());
        }
    }
    ControlSignal::infinite(finite, pieces)
}

/// Value of `J_∞` in the extended reals, or no decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostLimit {
    /// Finite value with an enclosing interval.
    Finite {
        value: f64,
        lower: f64,
        upper: f64,
    },
    PlusInfinity,
    MinusInfinity,
    Unresolved,
}

impl CostLimit {
    /// `±∞` or the value; `None` when unresolved.
    pub fn extended(&self) -> Option<f64> {
        match self {
            CostLimit::Finite { value, .. } => Some(*value),
            CostLimit::PlusInfinity => Some(f64::INFINITY),
            CostLimit::MinusInfinity => Some(f64::NEG_INFINITY),
            CostLimit::Unresolved => None,
        }
    }
}

impl fmt::Display for CostLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostLimit::Finite { value, lower, upper } => write!(f, "{value} in [{lower},{upper}]"),
            CostLimit::PlusInfinity => f.write_str("+inf"),
            CostLimit::MinusInfinity => f.write_str("-inf"),
            CostLimit::Unresolved => f.write_str("unresolved"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfiniteCostEstimate {
    /// `(T, J_T)`, `+∞` once the state has escaped.
    pub truncated: Vec<(f64, f64)>,
    /// `∫_T^∞ m_K` at the last truncation, when a dominator is declared.
    pub tail_bound: Option<f64>,
    pub limit: CostLimit,
    /// False for sign-indefinite costs: the verdict is reported but no value is extrapolated.
    pub extrapolated: bool,
}

/// Truncated costs of a signal on `[0, ∞)` and a decision on their limit.
///
/// Increments are compared across the last three truncations: geometric decay
/// with a negligible remainder gives a finite limit, while increments of one
/// sign that do not shrink give `±∞`.
pub fn infinite_cost_estimate(
    problem: &Problem,
    u: &ControlSignal,
    truncations: &[f64],
    quad_tol: f64,
) -> Result<InfiniteCostEstimate> {
    if truncations.is_empty() || truncations.windows(2).any(|w| w[1] <= w[0]) || truncations[0] <= 0.0 {
        return Err(Error::InvalidArgument("truncations must be positive and strictly increasing".into()));
    }
    let t_max = *truncations.last().unwrap();
    let traj = problem.simulate(u, t_max)?;
    let truncated: Vec<(f64, f64)> = truncations
        .iter()
        .map(|&t| {
            if traj.blow_up_time().is_some_and(|tb| tb <= t) || !traj.covers(t) {
                return Ok((t, f64::INFINITY));
            }
            evaluate_cost(&problem.cost, &traj, u, t, quad_tol).map(|j| (t, j))
        })
        .collect::<Result<_>>()?;
    let tail_bound = problem.cost.dominator.as_ref().and_then(|d| {
        let v = crate::costs::tail_integral(d.bound.as_ref(), t_max);
        v.is_finite().then_some(v)
    });

    let last = truncated.last().unwrap().1;
    let limit = if last == f64::INFINITY {
        CostLimit::PlusInfinity
    } else if truncated.len() < 3 {
        CostLimit::Unresolved
    } else {
        let k = truncated.len();
        let d1 = truncated[k - 2].1 - truncated[k - 3].1;
        let d2 = truncated[k - 1].1 - truncated[k - 2].1;
        let h1 = truncated[k - 2].0 - truncated[k - 3].0;
        let h2 = truncated[k - 1].0 - truncated[k - 2].0;
        let scale = 1.0 + last.abs();
        let negligible = 1e3 * quad_tol * scale;
        if d2.abs() <= negligible {
            let slack = d2.abs() + tail_bound.unwrap_or(0.0);
            CostLimit::Finite { value: last, lower: last - d2.abs(), upper: last + slack }
        } else {
            // per-unit-time rates
            let (r1, r2) = (d1 / h1, d2 / h2);
            let q = (r2 / r1).abs();
            if r1.signum() == r2.signum() && q < 0.5 {
                let geometric = d2.abs() * q / (1.0 - q);
                let remainder = geometric.max(tail_bound.unwrap_or(0.0));
                if remainder <= defaults::CONV_TOL * scale {
                    let value = last + d2.signum() * geometric;
                    CostLimit::Finite { value, lower: value.min(last) - remainder, upper: value.max(last) + remainder }
                } else {
                    CostLimit::Unresolved
                }
            } else if r1.signum() == r2.signum() && q >= 0.5 {
                if d2 > 0.0 {
                    CostLimit::PlusInfinity
                } else {
                    CostLimit::MinusInfinity
                }
            } else {
                CostLimit::Unresolved
            }
        }
    };
    Ok(InfiniteCostEstimate { truncated, tail_bound, limit, extrapolated: !problem.cost.sign_indefinite })
}

/// One checklist entry.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisFlag {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// The hypotheses under which pattern preservation is predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisChecklist {
    pub flags: Vec<HypothesisFlag>,
}

impl HypothesisChecklist {
    pub fn predicted(&self) -> bool {
        self.flags.iter().all(|f| f.passed)
    }

    pub fn flag(&self, name: &str) -> Option<&HypothesisFlag> {
        self.flags.iter().find(|f| f.name == name)
    }
}

impl fmt::Display for HypothesisChecklist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for flag in &self.flags {
            writeln!(f, "{}={}", flag.name, flag.passed)?;
            writeln!(f, "{}_detail={}", flag.name, flag.detail)?;
        }
        write!(f, "pattern_preservation_predicted={}", self.predicted())
    }
}

/// Evaluates every hypothesis flag for `problem`; `t_max` bounds the time
/// grids used for domination and growth checks.
pub fn hypothesis_checklist(problem: &Problem, t_max: f64) -> Result<HypothesisChecklist> {
    let mut flags = Vec::new();
    let tol = problem.tolerances.margin;
    flags.push(HypothesisFlag {
        name: "cost_bounded_below",
        passed: !problem.cost.sign_indefinite,
        detail: if problem.cost.sign_indefinite { "running cost is sign-indefinite".into() } else { "ok".into() },
    });

    let (dissipative, coercive) = match &problem.storage {
        None => (
            HypothesisFlag { name: "dissipativity", passed: false, detail: "no storage certificate supplied".into() },
            HypothesisFlag {
                name: "storage_coercive",
                passed: false,
                detail: "no storage certificate supplied".into(),
            },
        ),
        Some(cert) => {
            let grid = DissipationGrid::for_problem(
                problem.certificate_window,
                problem.system.coefficient_breakpoints(),
                &cert.domain_lower,
                &cert.domain_upper,
                &problem.control_set,
                10.0,
                defaults::GRID_POINTS,
            );
            let rep = check_differential(
                cert,
                &problem.system,
                &problem.cost,
                &grid,
                RefineOptions { rounds: defaults::REFINE_ROUNDS, margin_tol: tol },
            )?;
            let coerc = check_coercivity(cert)?;
            (
                HypothesisFlag {
                    name: "dissipativity",
                    passed: rep.ok && rep.nonnegative,
                    detail: format!(
                        "worst_margin={};min_storage={};grid={}",
                        rep.worst_margin, rep.min_storage, rep.grid_spec
                    ),
                },
                HypothesisFlag {
                    name: "storage_coercive",
                    passed: coerc.verdict == CoercivityVerdict::CoerciveEvidence,
                    detail: coerc.verdict.to_string(),
                },
            )
        }
    };
    flags.push(dissipative);
    flags.push(coercive);

    flags.push(HypothesisFlag {
        name: "decomposition",
        passed: problem.decomposition_declared,
        detail: if problem.decomposition_declared { "declared".into() } else { "not declared".into() },
    });

    let t_grid = linspace(0.0, t_max.max(1.0), defaults::GRID_POINTS);
    flags.push(match &problem.cost.dominator {
        None => HypothesisFlag { name: "mk_domination", passed: false, detail: "no dominator m_K supplied".into() },
        Some(_) => {
            let rep = check_mk_domination(&problem.cost, &problem.u_star, &t_grid, 21)?;
            HypothesisFlag {
                name: "mk_domination",
                passed: rep.ok,
                detail: format!("worst_excess={};pointwise_ok={}", rep.worst_excess, rep.pointwise_ok),
            }
        }
    });

    flags.push(if problem.control_set.is_compact() {
        HypothesisFlag { name: "growth_or_compact", passed: true, detail: "U is compact".into() }
    } else {
        let n = problem.state_dim();
        let m = problem.control_dim();
        let grid = SampleGrid::uniform(
            (0.0, t_max.max(1.0)),
            21,
            &vec![-10.0; n],
            &vec![10.0; n],
            11,
            &vec![-10.0; m],
            &vec![10.0; m],
            21,
        );
        match check_c1_growth(&problem.cost, &problem.control_set, &grid) {
            Ok(rep) => HypothesisFlag {
                name: "growth_or_compact",
                passed: rep.ok,
                detail: format!("worst_margin={}", rep.worst_margin),
            },
            Err(e) => HypothesisFlag { name: "growth_or_compact", passed: false, detail: e.to_string() },
        }
    });

    flags.push(HypothesisFlag {
        name: "state_equation_well_posed",
        passed: problem.assumption0_strengthened,
        detail: if problem.assumption0_strengthened { "asserted".into() } else { "not asserted".into() },
    });
    Ok(HypothesisChecklist { flags })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreservationVerdict {
    PredictedAndConfirmed,
    PredictedUnconfirmed,
    NotPredictedCounterexampleFound,
    NotPredictedNoCounterexample,
}

impl fmt::Display for PreservationVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PreservationVerdict::PredictedAndConfirmed => "predicted-and-confirmed",
            PreservationVerdict::PredictedUnconfirmed => "predicted-unconfirmed",
            PreservationVerdict::NotPredictedCounterexampleFound => "not-predicted-counterexample-found",
            PreservationVerdict::NotPredictedNoCounterexample => "not-predicted-no-counterexample",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ChallengerResult {
    pub label: String,
    pub estimate: InfiniteCostEstimate,
    /// Strictly lower `J_∞` than the limit control, compared in the extended reals.
    pub beats_limit: bool,
}

#[derive(Debug, Clone)]
pub struct PreservationReport {
    pub checklist: HypothesisChecklist,
    pub sweep: PatternResult,
    pub limit: Option<ControlSignal>,
    pub limit_error: Option<String>,
    pub limit_estimate: Option<InfiniteCostEstimate>,
    pub challengers: Vec<ChallengerResult>,
    pub verdict: PreservationVerdict,
}

impl PreservationReport {
    pub fn summary(&self) -> String {
        let mut s = format!("{}\n{}", self.checklist, self.sweep.summary());
        match (&self.limit, &self.limit_error) {
            (Some(u), _) => s.push_str(&format!("limit_control={u}\n")),
            (None, Some(e)) => s.push_str(&format!("limit_control_error={e}\n")),
            _ => {}
        }
        if let Some(e) = &self.limit_estimate {
            s.push_str(&format!("limit_cost={}\n", e.limit));
        }
        for c in &self.challengers {
            s.push_str(&format!(
                "challenger[{}]_cost={}\nchallenger[{}]_beats_limit={}\n",
                c.label, c.estimate.limit, c.label, c.beats_limit
            ));
        }
        s.push_str(&format!("verdict={}\n", self.verdict));
        s
    }
}

/// `u★` followed by every vertex of `U`, as constant signals on `[0, ∞)`, deduplicated.
pub fn default_challengers(problem: &Problem) -> Vec<(String, ControlSignal)> {
    let mut values = vec![problem.u_star.clone()];
    for v in problem.control_set.vertices() {
        if !values.contains(&v) {
            values.push(v);
        }
    }
    values
        .into_iter()
        .filter_map(|v| {
            let label = format!("u={}", v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"));
            ControlSignal::infinite(Vec::new(), vec![v]).ok().map(|u| (label, u))
        })
        .collect()
}

/// `a < b` in the extended reals with a relative slack for finite pairs.
fn strictly_below(a: f64, b: f64, tol: f64) -> bool {
    if a.is_finite() && b.is_finite() {
        a < b - tol * (1.0 + b.abs())
    } else {
        a < b
    }
}

/// Runs the checklist and the sweep, builds the limit control and compares
/// its `J_∞` with each challenger.
pub fn pattern_preservation_report(
    problem: &Problem,
    template: &PatternTemplate,
    horizons: &[f64],
    challengers: &[(String, ControlSignal)],
    truncations: &[f64],
    opts: &SweepOptions,
) -> Result<PreservationReport> {
    let t_max = truncations.last().copied().unwrap_or(1.0);
    let checklist = hypothesis_checklist(problem, t_max)?;
    let sweep = horizon_sweep(problem, template, horizons, opts)?;
    let quad = problem.tolerances.quad;
    let (limit, limit_error) = match limit_control(&sweep) {
        Ok(u) => (Some(u), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let limit_estimate = limit.as_ref().map(|u| infinite_cost_estimate(problem, u, truncations, quad)).transpose()?;
    let limit_value = limit_estimate.as_ref().and_then(|e| e.limit.extended());
    let challengers = challengers
        .iter()
        .map(|(label, u)| {
            let estimate = infinite_cost_estimate(problem, u, truncations, quad)?;
            let beats_limit = match (estimate.limit.extended(), limit_value) {
                (Some(c), Some(l)) => strictly_below(c, l, opts.conv_tol),
                _ => false,
            };
            Ok(ChallengerResult { label: label.clone(), estimate, beats_limit })
        })
        .collect::<Result<Vec<_>>>()?;
    let beaten = challengers.iter().any(|c| c.beats_limit);
    let confirmed = limit_value.is_some() && !beaten;
    let verdict = match (checklist.predicted(), confirmed, beaten) {
        (true, true, _) => PreservationVerdict::PredictedAndConfirmed,
        (true, false, _) => PreservationVerdict::PredictedUnconfirmed,
        (false, _, true) => PreservationVerdict::NotPredictedCounterexampleFound,
        (false, _, false) => PreservationVerdict::NotPredictedNoCounterexample,
    };
    Ok(PreservationReport { checklist, sweep, limit, limit_error, limit_estimate, challengers, verdict })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquicoercivityRow {
    pub horizon: f64,
    pub cost: f64,
    /// `J_T ≤ C`; rows above the cap are reported but not judged.
    pub within_cap: bool,
    pub state_sup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquicoercivityReport {
    pub cost_cap: f64,
    pub rows: Vec<EquicoercivityRow>,
    pub bounded: bool,
}

/// Simulates each `(T, u)` sample, records `sup_{[0,T]} |x|`, and judges
/// whether the sups of the cost-capped samples stay bounded as `T` grows.
///
/// The family counts as unbounded when a state escapes, or when the sups
/// increase along the horizons and the last is at least twice the first.
pub fn equicoercivity_probe(
    problem: &Problem,
    samples: &[(f64, ControlSignal)],
    cost_cap: f64,
) -> Result<EquicoercivityReport> {
    let mut rows = Vec::with_capacity(samples.len());
    for (t, u) in samples {
        let traj = problem.simulate(u, *t)?;
        let cost = if traj.blew_up() {
            f64::INFINITY
        } else {
            evaluate_cost(&problem.cost, &traj, u, *t, problem.tolerances.quad)?
        };
        let state_sup = if traj.blew_up() { f64::INFINITY } else { traj.sup_norm(4001) };
        rows.push(EquicoercivityRow { horizon: *t, cost, within_cap: cost <= cost_cap, state_sup });
    }
    let mut judged: Vec<&EquicoercivityRow> = rows.iter().filter(|r| r.within_cap).collect();
    judged.sort_by(|a, b| a.horizon.total_cmp(&b.horizon));
    let sups: Vec<f64> = judged.iter().map(|r| r.state_sup).collect();
    let unbounded = sups.iter().any(|s| !s.is_finite())
        || (sups.len() >= 2 && sups.windows(2).all(|w| w[1] > w[0]) && *sups.last().unwrap() >= 2.0 * sups[0]);
    Ok(EquicoercivityReport { cost_cap, rows, bounded: !unbounded })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverRow {
    pub horizon: f64,
    pub cost_a: f64,
    pub cost_b: f64,
    pub breakpoints_a: Vec<f64>,
    pub breakpoints_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverReport {
    pub template_a: String,
    pub template_b: String,
    pub rows: Vec<CrossoverRow>,
    /// Smallest tested horizon from which pattern `a` is cheaper on every
    /// larger tested horizon.
    pub crossover: Option<f64>,
}

impl CrossoverReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("T,cost_a,cost_b,difference,breakpoints_a,breakpoints_b\n");
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.horizon,
                r.cost_a,
                r.cost_b,
                r.cost_a - r.cost_b,
                join(&r.breakpoints_a),
                join(&r.breakpoints_b)
            ));
        }
        s
    }
}

/// Optimizes two patterns over a grid of horizons and locates the horizon
/// beyond which the first is cheaper.
pub fn crossover(
    problem: &Problem,
    template_a: &PatternTemplate,
    template_b: &PatternTemplate,
    horizons: &[f64],
    opts: &SolveOptions,
) -> Result<CrossoverReport> {
    let rows = horizons
        .iter()
        .map(|&t| {
            let a = solve_switching_times(problem, template_a, t, opts)?;
            let b = solve_switching_times(problem, template_b, t, opts)?;
            Ok(CrossoverRow {
                horizon: t,
                cost_a: a.cost,
                cost_b: b.cost,
                breakpoints_a: a.interior_breakpoints().to_vec(),
                breakpoints_b: b.interior_breakpoints().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut crossover = None;
    for r in rows.iter().rev() {
        if r.cost_a < r.cost_b {
            crossover = Some(r.horizon);
        } else {
            break;
        }
    }
    Ok(CrossoverReport { template_a: template_a.to_string(), template_b: template_b.to_string(), rows, crossover })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::RunningCost;
    use crate::dynamics::ControlAffineSystem;
    use crate::signals::ControlValueSet;
    use std::sync::Arc;

    #[test]
    fn classification_rules() {
        let ts = [6.0, 8.0, 10.0, 15.0, 20.0];
        let shifted: Vec<f64> = ts.iter().map(|t| t - 4.0).collect();
        assert_eq!(classify(&ts, &shifted, 1e-3), LimitClass::DivergesToInfinity);
        assert_eq!(classify(&ts, &[0.4, 0.41, 0.4055, 0.40547, 0.40546], 1e-3), LimitClass::FiniteLimit);
        assert_eq!(classify(&ts, &[1.0, 0.5, 2.0, 0.1, 3.0], 1e-3), LimitClass::Undetermined);
        let sqrt: Vec<f64> = ts.iter().map(|t: &f64| t.sqrt()).collect();
        assert_eq!(classify(&ts, &sqrt, 1e-3), LimitClass::DivergesToInfinity);
        let log: Vec<f64> = ts.iter().map(|t: &f64| t.ln() * 0.1).collect();
        assert_eq!(classify(&ts, &log, 1e-3), LimitClass::Undetermined);
    }

    fn result_with(limit: Vec<f64>, flags: Vec<LimitClass>, values: Vec<Vec<f64>>) -> PatternResult {
        PatternResult {
            template: String::new(),
            entries: Vec::new(),
            value_converged: vec![true; values.len()],
            limit_breakpoints: limit,
            limit_values: values,
            flags,
            conv_tol: 1e-3,
        }
    }

    #[test]
    fn limit_control_drops_empty_pieces() {
        let r = result_with(
            vec![0.5, f64::INFINITY],
            vec![LimitClass::FiniteLimit, LimitClass::DivergesToInfinity],
            vec![vec![2.0], vec![1.0], vec![0.0]],
        );
        let u = limit_control(&r).unwrap();
        assert_eq!(u.breakpoints(), &[0.0, 0.5, f64::INFINITY]);
        assert_eq!(u.evaluate(100.0), &[1.0]);
        let r = result_with(vec![0.0, 0.0], vec![LimitClass::FiniteLimit; 2], vec![vec![2.0], vec![1.0], vec![0.0]]);
        let u = limit_control(&r).unwrap();
        assert_eq!(u.pieces(), &[vec![0.0]]);
        assert_eq!(u.evaluate(0.0), &[0.0]);
        let r = result_with(vec![f64::NAN], vec![LimitClass::Undetermined], vec![vec![2.0], vec![0.0]]);
        assert!(matches!(limit_control(&r), Err(Error::Undetermined(_))));
    }

    #[test]
    fn zero_cost_estimate() {
        let sys = ControlAffineSystem::frozen(1, 1);
        let p = Problem::new(
            "z",
            sys,
            RunningCost::zero(),
            vec![1.0],
            ControlValueSet::interval(0.0, 1.0).unwrap(),
            vec![0.0],
        )
        .unwrap();
        let u = ControlSignal::infinite(Vec::new(), vec![vec![1.0]]).unwrap();
        let e = infinite_cost_estimate(&p, &u, &[10.0, 20.0, 30.0], 1e-10).unwrap();
        assert!(e.truncated.iter().all(|(_, j)| *j == 0.0));
        assert_eq!(e.limit.extended(), Some(0.0));
    }

    #[test]
    fn frozen_dynamics_stay_bounded() {
        let sys = ControlAffineSystem::frozen(1, 1);
        let cost = RunningCost::new(Arc::new(|_, _| 0.0), Arc::new(|_, _, u| u[0]));
        let p =
            Problem::new("z", sys, cost, vec![1.5], ControlValueSet::interval(0.0, 1.0).unwrap(), vec![0.0]).unwrap();
        let samples: Vec<(f64, ControlSignal)> =
            [2.0, 5.0, 10.0].iter().map(|&t| (t, p.constant_control(vec![0.1], t).unwrap())).collect();
        let r = equicoercivity_probe(&p, &samples, 5.0).unwrap();
        assert!(r.bounded);
        assert!(r.rows.iter().all(|row| (row.state_sup - 1.5).abs() < 1e-12));
        assert!(!r.rows[2].within_cap || r.rows[2].cost <= 5.0);
    }

    #[test]
    fn extended_real_comparison() {
        assert!(!strictly_below(f64::INFINITY, f64::INFINITY, 1e-3));
        assert!(strictly_below(f64::NEG_INFINITY, 0.0, 1e-3));
        assert!(!strictly_below(0.6667, 0.6666, 1e-3));
        assert!(strictly_below(0.5, 0.6666, 1e-3));
    }
}
