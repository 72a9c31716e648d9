//! A complete optimal control problem instance.

use std::fmt;
use std::sync::Arc;

use crate::costs::RunningCost;
use crate::defaults::Tolerances;
use crate::dissipativity::StorageCertificate;
use crate::dynamics::{integrate, ControlAffineSystem, Trajectory};
use crate::error::{Error, Result};
use crate::signals::{ControlSignal, ControlValueSet};
use crate::solvers::PatternTemplate;

/// `(t, x) ↦` residual of the state condition that holds along singular arcs.
pub type SingularResidualFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub system: ControlAffineSystem,
    pub cost: RunningCost,
    pub x0: Vec<f64>,
    pub control_set: ControlValueSet,
    /// Control frozen on the tail `(T, ∞)`.
    pub u_star: Vec<f64>,
    pub storage: Option<StorageCertificate>,
    pub template: Option<PatternTemplate>,
    pub horizons: Vec<f64>,
    /// Interior values admitted on singular pieces.
    pub singular_values: Vec<Vec<f64>>,
    pub singular_residual: Option<SingularResidualFn>,
    /// The cost splits as `ℓ₁(t,x) + ℓ₂(t,x,u)` with `ℓ₂(t,x,u★)` dominated.
    pub decomposition_declared: bool,
    /// Author-asserted strengthened well-posedness of the state equation.
    pub assumption0_strengthened: bool,
    /// Time window `[0, t_max]` used by certificate grids.
    pub certificate_window: f64,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("system", &self.system)
            .field("x0", &self.x0)
            .field("control_set", &self.control_set)
            .field("u_star", &self.u_star)
            .field("storage", &self.storage)
            .field("template", &self.template)
            .field("horizons", &self.horizons)
            .finish()
    }
}

impl Problem {
    /// A problem with no certificate, template or declared hypotheses.
    pub fn new(
        name: impl Into<String>,
        system: ControlAffineSystem,
        cost: RunningCost,
        x0: Vec<f64>,
        control_set: ControlValueSet,
        u_star: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            name: name.into(),
            system,
            cost,
            x0,
            control_set,
            u_star,
            storage: None,
            template: None,
            horizons: Vec::new(),
            singular_values: Vec::new(),
            singular_residual: None,
            decomposition_declared: false,
            assumption0_strengthened: false,
            certificate_window: 1.0,
            seed: crate::defaults::SEED,
            tolerances: Tolerances::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.system.state_dim();
        let m = self.system.control_dim();
        if self.x0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.x0.len() });
        }
        if self.control_set.dim() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.control_set.dim() });
        }
        if self.u_star.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.u_star.len() });
        }
        if !self.control_set.contains(&self.u_star) {
            return Err(Error::InvalidArgument(format!("u_star {:?} is outside U", self.u_star)));
        }
        if let Some(s) = &self.storage {
            if s.state_dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: s.state_dim() });
            }
        }
        if let Some(t) = &self.template {
            t.validate(&self.control_set)?;
        }
        for v in &self.singular_values {
            if v.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: v.len() });
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.system.control_dim()
    }

    /// Integrates from `x0` under `u` up to `span_end`.
    pub fn simulate(&self, u: &ControlSignal, span_end: f64) -> Result<Trajectory> {
        integrate(&self.system, u, &self.x0, span_end, &self.tolerances.integrate_options())
    }

    /// `J_T(u)`; `+∞` when the state blows up before `T` or violates a state constraint.
    pub fn cost_of(&self, u: &ControlSignal, horizon: f64) -> Result<f64> {
        let traj = self.simulate(u, horizon)?;
        if traj.blew_up() {
            return Ok(f64::INFINITY);
        }
        crate::costs::evaluate_cost(&self.cost, &traj, u, horizon, self.tolerances.quad)
    }

    /// A constant control `v` on `[0, T)` with tail `u★`.
    pub fn constant_control(&self, v: Vec<f64>, horizon: f64) -> Result<ControlSignal> {
        ControlSignal::constant(v, horizon, self.u_star.clone())
    }

    pub fn is_singular_value(&self, v: &[f64]) -> bool {
        self.singular_values.iter().any(|s| s.iter().zip(v).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs())))
    }
}
