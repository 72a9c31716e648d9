//! Built-in problem instances, available by name without a config file.

use std::sync::Arc;

use crate::costs::{Dominator, GrowthBound, RunningCost};
use crate::dissipativity::StorageCertificate;
use crate::dynamics::ControlAffineSystem;
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::signals::ControlValueSet;
use crate::solvers::PatternTemplate;

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 5] = ["ex24", "counterexample", "ex41", "ex42", "lqr"];

pub fn builtin(name: &str) -> Result<Problem> {
    match name {
        "ex24" => ex24(),
        "counterexample" => counterexample(),
        "ex41" => ex41(),
        "ex42" => ex42(),
        "lqr" => lqr(),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

fn zero_dominator(n: usize) -> Dominator {
    Dominator { lower: vec![-1e3; n], upper: vec![1e3; n], bound: Arc::new(|_| 0.0) }
}

/// `x′ = x − ux`.
fn damped_growth() -> ControlAffineSystem {
    ControlAffineSystem::new(1, 1, Arc::new(|_, x| vec![x[0]]), Arc::new(|_, x| vec![-x[0]]))
        .with_jacobian(Arc::new(|_, _, u| vec![1.0 - u[0]]))
}

/// `x′ = x − ux`, `ℓ = |x| + 4|u|`, `U = [0, 2]`, `x₀ = 1`.
pub fn ex41() -> Result<Problem> {
    let cost = RunningCost::new(Arc::new(|_, x| x[0].abs()), Arc::new(|_, _, u| 4.0 * u[0].abs()))
        .with_dominator(zero_dominator(1));
    let mut p =
        Problem::new("ex41", damped_growth(), cost, vec![1.0], ControlValueSet::interval(0.0, 2.0)?, vec![0.0])?;
    p.storage = Some(
        StorageCertificate::new("ln(abs(x1)+1)", Arc::new(|x| (x[0].abs() + 1.0).ln()), vec![-100.0], vec![100.0])
            .with_gradient(Arc::new(|x| vec![x[0].signum() / (x[0].abs() + 1.0)])),
    );
    p.template = Some(PatternTemplate::fixed(vec![vec![2.0], vec![0.0]])?);
    p.horizons = vec![6.0, 8.0, 10.0, 15.0, 20.0, 30.0];
    p.decomposition_declared = true;
    p.assumption0_strengthened = true;
    p.validate()?;
    Ok(p)
}

/// `x′ = x − ux`, `ℓ = (|u|/3 + |x|)e^{−2t}`, `U = [0, 2]`, `x₀ = 1`; the
/// value 1 is admitted on singular arcs, where `x = 2/3`.
pub fn ex42() -> Result<Problem> {
    let cost = RunningCost::new(
        Arc::new(|t, x| x[0].abs() * (-2.0 * t).exp()),
        Arc::new(|t, _, u| u[0].abs() / 3.0 * (-2.0 * t).exp()),
    )
    .with_dominator(zero_dominator(1));
    let mut p =
        Problem::new("ex42", damped_growth(), cost, vec![1.0], ControlValueSet::interval(0.0, 2.0)?, vec![0.0])?;
    p.template = Some(PatternTemplate::fixed(vec![vec![2.0], vec![1.0], vec![0.0]])?);
    p.horizons = vec![4.0, 6.0, 10.0, 15.0, 20.0];
    p.singular_values = vec![vec![1.0]];
    p.singular_residual = Some(Arc::new(|_, x| x[0] - 2.0 / 3.0));
    p.decomposition_declared = true;
    p.assumption0_strengthened = true;
    p.validate()?;
    Ok(p)
}

/// `x′ = ux`, `ℓ = (u − 1)x`, `U = [0, 1]`, `x₀ = 1`; the cost is unbounded below.
pub fn ex24() -> Result<Problem> {
    let sys = ControlAffineSystem::new(1, 1, Arc::new(|_, _| vec![0.0]), Arc::new(|_, x| vec![x[0]]))
        .with_jacobian(Arc::new(|_, _, u| vec![u[0]]));
    let cost = RunningCost::new(Arc::new(|_, x| -x[0]), Arc::new(|_, x, u| u[0] * x[0]))
        .with_dominator(zero_dominator(1))
        .sign_indefinite();
    let mut p = Problem::new("ex24", sys, cost, vec![1.0], ControlValueSet::interval(0.0, 1.0)?, vec![0.0])?;
    p.template = Some(PatternTemplate::fixed(vec![vec![1.0], vec![0.0]])?);
    p.horizons = vec![3.0, 5.0, 10.0, 20.0];
    p.decomposition_declared = true;
    p.assumption0_strengthened = true;
    p.validate()?;
    Ok(p)
}

/// `x′ = 𝟏_[0,1](t) u x²`, `ℓ = e^{−t}|u|`, `U = [0, 1]`, `x₀ = 1`, with the
/// bounded storage `e^{−1}/(1 + x²)`.
pub fn counterexample() -> Result<Problem> {
    let sys = ControlAffineSystem::new(
        1,
        1,
        Arc::new(|_, _| vec![0.0]),
        Arc::new(|t, x| vec![if (0.0..=1.0).contains(&t) { x[0] * x[0] } else { 0.0 }]),
    )
    .with_breakpoints(vec![1.0]);
    let cost = RunningCost::new(Arc::new(|_, _| 0.0), Arc::new(|t, _, u| (-t).exp() * u[0].abs()))
        .with_dominator(zero_dominator(1));
    let mut p = Problem::new("counterexample", sys, cost, vec![1.0], ControlValueSet::interval(0.0, 1.0)?, vec![0.0])?;
    let e_inv = (-1.0f64).exp();
    p.storage = Some(
        StorageCertificate::new(
            "exp(-1)/(1+x1^2)",
            Arc::new(move |x| e_inv / (1.0 + x[0] * x[0])),
            vec![-50.0],
            vec![50.0],
        )
        .with_gradient(Arc::new(move |x| vec![-2.0 * x[0] * e_inv / (1.0 + x[0] * x[0]).powi(2)])),
    );
    p.horizons = vec![10.0, 100.0, 1000.0];
    p.certificate_window = 2.0;
    p.decomposition_declared = true;
    p.validate()?;
    Ok(p)
}

/// `x′ = u`, `ℓ = x² + u²`, `U = ℝ`, `x₀ = 1`.
pub fn lqr() -> Result<Problem> {
    let sys = ControlAffineSystem::linear(1, 1, vec![0.0], vec![1.0]);
    let cost = RunningCost::new(Arc::new(|_, x| x[0] * x[0]), Arc::new(|_, _, u| u[0] * u[0]))
        .with_growth(GrowthBound { alpha: 1.0, gamma: Arc::new(|_| 0.0), gamma_l1: Some(0.0) })
        .with_dominator(zero_dominator(1));
    let mut p = Problem::new("lqr", sys, cost, vec![1.0], ControlValueSet::full_space(1, 2.0)?, vec![0.0])?;
    p.storage = Some(
        StorageCertificate::new("x1^2/2", Arc::new(|x| 0.5 * x[0] * x[0]), vec![-10.0], vec![10.0])
            .with_gradient(Arc::new(|x| vec![x[0]])),
    );
    p.horizons = vec![2.0, 5.0, 10.0, 20.0];
    p.decomposition_declared = true;
    p.assumption0_strengthened = true;
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_resolves() {
        for name in BUILTIN_NAMES {
            let p = builtin(name).unwrap();
            assert_eq!(p.name, name);
        }
        assert!(matches!(builtin("nope"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn ex41_switch_cost_matches_closed_form() {
        let p = ex41().unwrap();
        let t_final = 10.0;
        let tau = 4.30515f64;
        let u =
            crate::signals::ControlSignal::new(vec![0.0, tau, t_final], vec![vec![2.0], vec![0.0]], vec![0.0]).unwrap();
        let j = p.cost_of(&u, t_final).unwrap();
        let oracle = 8.0 * tau + 1.0 - 2.0 * (-tau).exp() + (t_final - 2.0 * tau).exp();
        assert!((j - oracle).abs() < 1e-7 * oracle, "{j} vs {oracle}");
    }
}
