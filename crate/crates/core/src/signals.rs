//! Piecewise-constant admissible controls and the control-value sets they live in.
//!
//! A [`ControlSignal`] is a finite list of constant pieces on half-open intervals
//! `[τ_{j-1}, τ_j)` covering `[0, T)`, followed by a fixed tail value on `[T, ∞)`.
//! With `T = ∞` the last breakpoint is `+∞` and the tail is never reached.

use std::fmt;

use crate::error::{Error, Result};

/// Membership slack for closed sets.
pub const SET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    FullSpace { dim: usize },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

/// The control-value set `U` together with the integrability exponent `p`.
///
/// `p = ∞` pairs with a compact box, `p < ∞` with the full space.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlValueSet {
    kind: SetKind,
    exponent: f64,
}

impl ControlValueSet {
    pub fn full_space(dim: usize, exponent: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("control dimension must be positive".into()));
        }
        if !(exponent > 1.0 && exponent.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "full-space control set needs a finite exponent p > 1, got {exponent}"
            )));
        }
        Ok(Self { kind: SetKind::FullSpace { dim }, exponent })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidArgument(format!(
                "box bounds must be nonempty and of equal length ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidArgument(format!("box component {i} has invalid bounds [{lo}, {hi}]")));
            }
        }
        Ok(Self { kind: SetKind::Box { lower, upper }, exponent: f64::INFINITY })
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::boxed(vec![lower], vec![upper])
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SetKind::FullSpace { dim } => *dim,
            SetKind::Box { lower, .. } => lower.len(),
        }
    }

    pub fn is_compact(&self) -> bool {
        matches!(self.kind, SetKind::Box { .. })
    }

    pub fn bounds(&self) -> Option<(&[f64], &[f64])> {
        match &self.kind {
            SetKind::Box { lower, upper } => Some((lower, upper)),
            SetKind::FullSpace { .. } => None,
        }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        match &self.kind {
            SetKind::FullSpace { .. } => v.iter().all(|c| c.is_finite()),
            SetKind::Box { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(c, (lo, hi))| *c >= lo - SET_TOLERANCE && *c <= hi + SET_TOLERANCE),
        }
    }

    /// Euclidean projection: a componentwise clamp for boxes, identity otherwise.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(match &self.kind {
            SetKind::FullSpace { .. } => v.to_vec(),
            SetKind::Box { lower, upper } => {
                v.iter().zip(lower.iter().zip(upper)).map(|(c, (lo, hi))| c.clamp(*lo, *hi)).collect()
            }
        })
    }

    /// All `2^m` vertices of a box, in binary counting order over components.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let Some((lower, upper)) = self.bounds() else {
            return Vec::new();
        };
        let m = lower.len();
        (0..1usize << m)
            .map(|mask| (0..m).map(|i| if mask >> i & 1 == 1 { upper[i] } else { lower[i] }).collect())
            .collect()
    }

    /// Midpoint of a box, or the origin of the full space.
    pub fn center(&self) -> Vec<f64> {
        match &self.kind {
            SetKind::FullSpace { dim } => vec![0.0; *dim],
            SetKind::Box { lower, upper } => lower.iter().zip(upper).map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
        }
    }
}

/// Piecewise-constant control with a frozen tail beyond the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    horizon: f64,
    breakpoints: Vec<f64>,
    pieces: Vec<Vec<f64>>,
    tail: Vec<f64>,
}

impl ControlSignal {
    /// `breakpoints` holds `τ₀ = 0, …, τ_N = T`; `pieces` holds the `N` values.
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Vec<f64>>, tail: Vec<f64>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidArgument("a control signal needs at least one piece".into()));
        }
        if breakpoints.len() != pieces.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} pieces need {} breakpoints, got {}",
                pieces.len(),
                pieces.len() + 1,
                breakpoints.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidArgument(format!("first breakpoint must be 0, got {}", breakpoints[0])));
        }
        if breakpoints.iter().any(|b| b.is_nan()) || breakpoints.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("breakpoints must be nondecreasing".into()));
        }
        let horizon = *breakpoints.last().unwrap();
        if horizon <= 0.0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if breakpoints[..breakpoints.len() - 1].iter().any(|b| b.is_infinite()) {
            return Err(Error::InvalidArgument("only the last breakpoint may be infinite".into()));
        }
        let m = pieces[0].len();
        if let Some(bad) = pieces.iter().find(|p| p.len() != m) {
            return Err(Error::DimensionMismatch { expected: m, got: bad.len() });
        }
        if tail.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: tail.len() });
        }
        Ok(Self { horizon, breakpoints, pieces, tail })
    }

    pub fn constant(value: Vec<f64>, horizon: f64, tail: Vec<f64>) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![value], tail)
    }

    /// A signal on `[0, ∞)`; `finite_breakpoints` are `τ₁ … τ_{N-1}`.
    pub fn infinite(finite_breakpoints: Vec<f64>, pieces: Vec<Vec<f64>>) -> Result<Self> {
        let mut bps = Vec::with_capacity(finite_breakpoints.len() + 2);
        bps.push(0.0);
        bps.extend(finite_breakpoints);
        bps.push(f64::INFINITY);
        let tail = pieces.last().cloned().unwrap_or_default();
        Self::new(bps, pieces, tail)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Vec<f64>] {
        &self.pieces
    }

    pub fn tail(&self) -> &[f64] {
        &self.tail
    }

    pub fn control_dim(&self) -> usize {
        self.tail.len()
    }

    /// Value at `t ≥ 0`: the piece whose half-open interval holds `t`, or the tail once `t ≥ T`.
    pub fn evaluate(&self, t: f64) -> &[f64] {
        if t >= self.horizon {
            return &self.tail;
        }
        // number of breakpoints ≤ t; empty pieces are skipped automatically
        let idx = self.breakpoints.partition_point(|b| *b <= t);
        if idx == 0 {
            return &self.pieces[0];
        }
        &self.pieces[(idx - 1).min(self.pieces.len() - 1)]
    }

    /// Finite breakpoints strictly inside `(0, T]`, deduplicated. These are the
    /// times where an integrator must restart.
    pub fn switch_times(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.breakpoints.iter().copied().filter(|b| *b > 0.0 && b.is_finite()).collect();
        out.dedup();
        out
    }

    /// Checks every piece (and a tail used after a finite horizon) against `U`.
    pub fn check_admissible(&self, set: &ControlValueSet) -> Result<()> {
        for (j, piece) in self.pieces.iter().enumerate() {
            if !set.contains(piece) {
                return Err(Error::InvalidArgument(format!("piece {j} value {piece:?} is outside U")));
            }
        }
        if self.horizon.is_finite() && !self.tail.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("tail value must be finite".into()));
        }
        Ok(())
    }
}

fn fmt_list(f: &mut fmt::Formatter<'_>, xs: &[f64]) -> fmt::Result {
    write!(f, "[")?;
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{x}")?;
    }
    write!(f, "]")
}

/// `{T=…; breakpoints=[…]; piece_values=[[…],…]; tail_value=[…]}`
impl fmt::Display for ControlSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{T={}; breakpoints=", self.horizon)?;
        fmt_list(f, &self.breakpoints)?;
        write!(f, "; piece_values=[")?;
        for (i, p) in self.pieces.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            fmt_list(f, p)?;
        }
        write!(f, "]; tail_value=")?;
        fmt_list(f, &self.tail)?;
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex41_signal() -> ControlSignal {
        ControlSignal::new(vec![0.0, 6.0, 10.0], vec![vec![2.0], vec![0.0]], vec![0.0]).unwrap()
    }

    #[test]
    fn evaluate_half_open_pieces() {
        let s = ex41_signal();
        assert_eq!(s.evaluate(3.0), &[2.0]);
        assert_eq!(s.evaluate(6.0), &[0.0]);
        assert_eq!(s.evaluate(12.0), &[0.0]);
        assert_eq!(s.evaluate(0.0), &[2.0]);
    }

    #[test]
    fn value_at_horizon_is_tail() {
        let s = ControlSignal::new(vec![0.0, 1.0], vec![vec![5.0]], vec![-1.0]).unwrap();
        assert_eq!(s.evaluate(0.999), &[5.0]);
        assert_eq!(s.evaluate(1.0), &[-1.0]);
    }

    #[test]
    fn constant_signal() {
        let s = ControlSignal::constant(vec![0.7], 4.0, vec![0.0]).unwrap();
        for t in [0.0, 1.0, 3.999] {
            assert_eq!(s.evaluate(t), &[0.7]);
        }
    }

    #[test]
    fn infinite_horizon_limit_signal() {
        let s = ControlSignal::infinite(vec![1.5f64.ln()], vec![vec![2.0], vec![1.0]]).unwrap();
        assert!(s.horizon().is_infinite());
        assert_eq!(s.evaluate(1.0), &[1.0]);
        assert_eq!(s.evaluate(0.1), &[2.0]);
        assert_eq!(s.evaluate(1e12), &[1.0]);
    }

    #[test]
    fn coincident_breakpoints_are_inert() {
        let s = ControlSignal::new(vec![0.0, 2.0, 2.0, 5.0], vec![vec![1.0], vec![9.0], vec![3.0]], vec![0.0]).unwrap();
        assert_eq!(s.evaluate(1.9), &[1.0]);
        assert_eq!(s.evaluate(2.0), &[3.0]);
        assert_eq!(s.switch_times(), vec![2.0, 5.0]);
    }

    #[test]
    fn leading_empty_piece_is_skipped() {
        let s = ControlSignal::new(vec![0.0, 0.0, 3.0], vec![vec![2.0], vec![0.0]], vec![0.0]).unwrap();
        assert_eq!(s.evaluate(0.0), &[0.0]);
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(ControlSignal::new(vec![0.0, 3.0, 2.0], vec![vec![1.0], vec![0.0]], vec![0.0]).is_err());
        assert!(ControlSignal::new(vec![1.0, 3.0], vec![vec![1.0]], vec![0.0]).is_err());
        assert!(ControlSignal::new(vec![0.0, 3.0], vec![vec![1.0]], vec![0.0, 1.0]).is_err());
        assert!(
            ControlSignal::new(vec![0.0, f64::INFINITY, f64::INFINITY], vec![vec![1.0], vec![0.0]], vec![0.0]).is_err()
        );
    }

    #[test]
    fn projection_examples() {
        let u = ControlValueSet::interval(0.0, 2.0).unwrap();
        assert_eq!(u.project(&[3.0]).unwrap(), vec![2.0]);
        assert_eq!(u.project(&[-1.0]).unwrap(), vec![0.0]);
        assert_eq!(u.project(&[1.5]).unwrap(), vec![1.5]);
        assert!(matches!(u.project(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        let full = ControlValueSet::full_space(2, 2.0).unwrap();
        assert_eq!(full.project(&[-7.0, 3.0]).unwrap(), vec![-7.0, 3.0]);
    }

    #[test]
    fn set_invariants() {
        assert!(ControlValueSet::interval(2.0, 0.0).is_err());
        assert!(ControlValueSet::full_space(1, f64::INFINITY).is_err());
        assert!(ControlValueSet::full_space(1, 1.0).is_err());
        let b = ControlValueSet::boxed(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(b.exponent(), f64::INFINITY);
        assert_eq!(b.vertices().len(), 4);
        assert!(b.contains(&[1.0 + 1e-10, 0.0]));
        assert!(!b.contains(&[1.1, 0.0]));
    }

    #[test]
    fn record_format() {
        let s = ex41_signal();
        assert_eq!(s.to_string(), "{T=10; breakpoints=[0,6,10]; piece_values=[[2],[0]]; tail_value=[0]}");
    }

    proptest! {
        #[test]
        fn projection_idempotent_and_nonexpansive(
            v in proptest::collection::vec(-10.0f64..10.0, 3),
            w in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            let set = ControlValueSet::boxed(vec![0.0, -1.0, -2.0], vec![2.0, 1.0, 0.5]).unwrap();
            let pv = set.project(&v).unwrap();
            let pw = set.project(&w).unwrap();
            prop_assert_eq!(set.project(&pv).unwrap(), pv.clone());
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d(&pv, &pw) <= d(&v, &w) + 1e-12);
        }

        #[test]
        fn evaluation_locally_constant_inside_pieces(
            gaps in proptest::collection::vec(0.1f64..3.0, 1..5),
            frac in 0.05f64..0.95,
        ) {
            let mut bps = vec![0.0];
            for g in &gaps { let last = *bps.last().unwrap(); bps.push(last + g); }
            let pieces: Vec<Vec<f64>> = (0..gaps.len()).map(|j| vec![j as f64]).collect();
            let s = ControlSignal::new(bps.clone(), pieces, vec![-1.0]).unwrap();
            for j in 0..gaps.len() {
                let t = bps[j] + frac * gaps[j];
                let eps = 0.01 * gaps[j].min(frac * gaps[j]).min((1.0 - frac) * gaps[j]);
                prop_assert_eq!(s.evaluate(t), s.evaluate(t + eps));
                prop_assert_eq!(s.evaluate(t)[0], j as f64);
            }
            let horizon = *bps.last().unwrap();
            prop_assert_eq!(s.evaluate(horizon + frac), &[-1.0]);
        }
    }
}
