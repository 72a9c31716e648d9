//! TOML problem files.
//!
//! ```toml
//! [problem]
//! name = "ex41"
//! state_dim = 1
//! control_dim = 1
//! drift = ["x1"]
//! input = ["-x1"]
//! ell1 = "abs(x1)"
//! ell2 = "4*abs(u1)"
//! x0 = [1.0]
//! u_star = [0.0]
//!
//! [control_set]
//! kind = "box"
//! lower = [0.0]
//! upper = [2.0]
//! ```
//!
//! Key reference lives in the repository README.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::Deserialize;

use crate::costs::{tail_integral, Dominator, GrowthBound, RunningCost};
use crate::defaults::Tolerances;
use crate::dissipativity::StorageCertificate;
use crate::dsl::{parse_in, Expr, Scope};
use crate::dynamics::ControlAffineSystem;
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::signals::ControlValueSet;
use crate::solvers::PatternTemplate;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub problem: ProblemSection,
    pub control_set: ControlSetSection,
    pub storage: Option<StorageSection>,
    pub template: Option<TemplateSection>,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub tolerances: ToleranceSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    pub state_dim: usize,
    pub control_dim: usize,
    /// `n` expressions for `a(t, x)`.
    pub drift: Vec<String>,
    /// `n·m` expressions for `b(t, x)`, row-major.
    pub input: Vec<String>,
    pub ell1: String,
    pub ell2: String,
    pub x0: Vec<f64>,
    pub u_star: Vec<f64>,
    /// Times where `a` or `b` jump.
    #[serde(default)]
    pub time_breakpoints: Vec<f64>,
    pub seed: Option<u64>,
    /// State condition along singular arcs, in `t` and `x`.
    pub singular_residual: Option<String>,
    #[serde(default)]
    pub singular_values: Vec<Vec<f64>>,
    #[serde(default)]
    pub decomposition: bool,
    #[serde(default)]
    pub well_posed: bool,
    #[serde(default)]
    pub sign_indefinite: bool,
    /// Integrable `m_K(t)` bounding `ℓ₂(t, x, u★)` on the box `K`.
    pub dominator: Option<String>,
    pub dominator_lower: Option<Vec<f64>>,
    pub dominator_upper: Option<Vec<f64>>,
    /// `ℓ₂ ≥ α|u|^p − γ(t)`.
    pub growth_alpha: Option<f64>,
    pub growth_gamma: Option<String>,
    pub certificate_window: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSetSection {
    /// `box` or `full`.
    pub kind: String,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageSection {
    pub function: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub radii: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSection {
    /// Template text such as `"2,1,0"` or `"[1 0],free"`.
    pub pieces: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub horizons: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub quad: Option<f64>,
    pub opt: Option<f64>,
    pub conv: Option<f64>,
    pub singular: Option<f64>,
    pub margin: Option<f64>,
    pub gtol: Option<f64>,
}

impl ToleranceSection {
    pub fn resolve(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            rtol: self.rtol.unwrap_or(d.rtol),
            atol: self.atol.unwrap_or(d.atol),
            quad: self.quad.unwrap_or(d.quad),
            opt: self.opt.unwrap_or(d.opt),
            conv: self.conv.unwrap_or(d.conv),
            singular: self.singular.unwrap_or(d.singular),
            margin: self.margin.unwrap_or(d.margin),
            gtol: self.gtol.unwrap_or(d.gtol),
        }
    }
}

impl FromStr for ProblemConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

impl ProblemConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn horizons(&self) -> Vec<f64> {
        self.sweep.as_ref().map(|s| s.horizons.clone()).unwrap_or_default()
    }

    /// Parses every expression and assembles the problem; expressions are
    /// checked by evaluating them once at `(0, x₀, u★)`.
    pub fn build(&self) -> Result<Problem> {
        let p = &self.problem;
        let (n, m) = (p.state_dim, p.control_dim);
        if n == 0 || m == 0 {
            return Err(Error::Config("state_dim and control_dim must be positive".into()));
        }
        if p.drift.len() != n {
            return Err(Error::Config(format!("drift needs {n} entries, got {}", p.drift.len())));
        }
        if p.input.len() != n * m {
            return Err(Error::Config(format!(
                "input needs {} entries (row-major n x m), got {}",
                n * m,
                p.input.len()
            )));
        }
        let state_scope = Scope::new(n, 0);
        let full_scope = Scope::new(n, m);
        let drift = parse_all("problem.drift", &p.drift, state_scope)?;
        let input = parse_all("problem.input", &p.input, state_scope)?;
        let ell1 = parse_key("problem.ell1", &p.ell1, state_scope)?;
        let ell2 = parse_key("problem.ell2", &p.ell2, full_scope)?;

        let drift = Arc::new(drift);
        let input = Arc::new(input);
        let system = ControlAffineSystem::new(
            n,
            m,
            Arc::new(move |t, x| drift.iter().map(|e| eval_or_nan(e, t, x, &[])).collect()),
            Arc::new(move |t, x| input.iter().map(|e| eval_or_nan(e, t, x, &[])).collect()),
        )
        .with_breakpoints(p.time_breakpoints.clone());

        let e1 = ell1.clone();
        let e2 = ell2.clone();
        let mut cost = RunningCost::new(
            Arc::new(move |t, x| eval_or_nan(&e1, t, x, &[])),
            Arc::new(move |t, x, u| eval_or_nan(&e2, t, x, u)),
        );
        if p.sign_indefinite {
            cost = cost.sign_indefinite();
        }
        if let Some(src) = &p.dominator {
            let e = parse_key("problem.dominator", src, Scope::new(0, 0))?;
            let lower = p.dominator_lower.clone().unwrap_or_else(|| vec![-1e3; n]);
            let upper = p.dominator_upper.clone().unwrap_or_else(|| vec![1e3; n]);
            if lower.len() != n || upper.len() != n {
                return Err(Error::Config(format!("dominator bounds need {n} entries")));
            }
            cost =
                cost.with_dominator(Dominator { lower, upper, bound: Arc::new(move |t| eval_or_nan(&e, t, &[], &[])) });
        }
        if let Some(alpha) = p.growth_alpha {
            let gamma: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match &p.growth_gamma {
                Some(src) => {
                    let e = parse_key("problem.growth_gamma", src, Scope::new(0, 0))?;
                    Arc::new(move |t| eval_or_nan(&e, t, &[], &[]))
                }
                None => Arc::new(|_| 0.0),
            };
            let l1 = tail_integral(gamma.as_ref(), 0.0);
            cost = cost.with_growth(GrowthBound { alpha, gamma, gamma_l1: l1.is_finite().then_some(l1) });
        }

        let set = self.control_set()?;
        let mut problem = Problem::new(p.name.clone(), system, cost, p.x0.clone(), set, p.u_star.clone())?;
        problem.tolerances = self.tolerances.resolve();
        if let Some(seed) = p.seed {
            problem.seed = seed;
        }
        if let Some(w) = p.certificate_window {
            problem.certificate_window = w;
        }
        problem.decomposition_declared = p.decomposition;
        problem.assumption0_strengthened = p.well_posed;
        problem.singular_values = p.singular_values.clone();
        if let Some(src) = &p.singular_residual {
            let e = parse_key("problem.singular_residual", src, state_scope)?;
            problem.singular_residual = Some(Arc::new(move |t, x| eval_or_nan(&e, t, x, &[])));
        }
        if let Some(s) = &self.storage {
            let mut cert = storage_from_expr(&s.function, &s.lower, &s.upper)?;
            if let Some(r) = &s.radii {
                cert = cert.with_radii(r.clone());
            }
            problem.storage = Some(cert);
        }
        if let Some(t) = &self.template {
            problem.template =
                Some(t.pieces.parse::<PatternTemplate>().map_err(|e| Error::Config(format!("template.pieces: {e}")))?);
        }
        problem.horizons = self.horizons();
        problem.validate()?;

        // evaluate once so that domain errors surface with their source position
        let x0 = &p.x0;
        for (k, e) in drift_input_exprs(&self.problem, state_scope)?.iter() {
            e.eval(0.0, x0, &[]).map_err(|err| Error::Config(format!("{k} at x0: {err}")))?;
        }
        ell1.eval(0.0, x0, &[]).map_err(|err| Error::Config(format!("problem.ell1 at x0: {err}")))?;
        ell2.eval(0.0, x0, &p.u_star).map_err(|err| Error::Config(format!("problem.ell2 at x0: {err}")))?;
        Ok(problem)
    }

    fn control_set(&self) -> Result<ControlValueSet> {
        let c = &self.control_set;
        let m = self.problem.control_dim;
        match c.kind.as_str() {
            "box" => {
                let (lower, upper) = match (&c.lower, &c.upper) {
                    (Some(l), Some(u)) => (l.clone(), u.clone()),
                    _ => return Err(Error::Config("control_set of kind box needs lower and upper".into())),
                };
                if lower.len() != m || upper.len() != m {
                    return Err(Error::Config(format!("control_set bounds need {m} entries")));
                }
                ControlValueSet::boxed(lower, upper)
            }
            "full" => ControlValueSet::full_space(m, c.exponent.unwrap_or(2.0)),
            other => Err(Error::Config(format!("control_set.kind must be box or full, got {other:?}"))),
        }
    }
}

fn drift_input_exprs(p: &ProblemSection, scope: Scope) -> Result<Vec<(String, Expr)>> {
    let mut out = Vec::new();
    for (i, s) in p.drift.iter().enumerate() {
        out.push((format!("problem.drift[{i}]"), parse_key("problem.drift", s, scope)?));
    }
    for (i, s) in p.input.iter().enumerate() {
        out.push((format!("problem.input[{i}]"), parse_key("problem.input", s, scope)?));
    }
    Ok(out)
}

fn parse_key(key: &str, src: &str, scope: Scope) -> Result<Expr> {
    parse_in(src, scope).map_err(|e| Error::Config(format!("{key}: {e} in {src:?}")))
}

fn parse_all(key: &str, srcs: &[String], scope: Scope) -> Result<Vec<Expr>> {
    srcs.iter().enumerate().map(|(i, s)| parse_key(&format!("{key}[{i}]"), s, scope)).collect()
}

/// Domain errors inside the solvers surface as `NaN`, which the integrators
/// and quadrature reject.
fn eval_or_nan(e: &Expr, t: f64, x: &[f64], u: &[f64]) -> f64 {
    e.eval(t, x, u).unwrap_or(f64::NAN)
}

/// A storage candidate from an expression in `x1..xn` over the box `[lower, upper]`.
pub fn storage_from_expr(src: &str, lower: &[f64], upper: &[f64]) -> Result<StorageCertificate> {
    if lower.len() != upper.len() || lower.is_empty() {
        return Err(Error::Config("storage bounds must be nonempty and of equal length".into()));
    }
    let e = parse_key("storage.function", src, Scope::state_only(lower.len()))?;
    let label = e.to_string();
    Ok(StorageCertificate::new(label, Arc::new(move |x| eval_or_nan(&e, 0.0, x, &[])), lower.to_vec(), upper.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::ControlSignal;

    const EX41: &str = r#"
[problem]
name = "ex41"
state_dim = 1
control_dim = 1
drift = ["x1"]
input = ["-x1"]
ell1 = "abs(x1)"
ell2 = "4*abs(u1)"
x0 = [1.0]
u_star = [0.0]
dominator = "0"
decomposition = true
well_posed = true

[control_set]
kind = "box"
lower = [0.0]
upper = [2.0]

[storage]
function = "ln(abs(x1)+1)"
lower = [-100.0]
upper = [100.0]

[template]
pieces = "2,0"

[sweep]
horizons = [6, 8, 10]

[tolerances]
quad = 1e-11
"#;

    #[test]
    fn config_matches_builtin() {
        let cfg: ProblemConfig = EX41.parse().unwrap();
        let p = cfg.build().unwrap();
        let q = crate::problems::ex41().unwrap();
        assert_eq!(p.horizons, vec![6.0, 8.0, 10.0]);
        assert_eq!(p.tolerances.quad, 1e-11);
        assert_eq!(p.template.as_ref().unwrap().piece_count(), 2);
        let u = ControlSignal::new(vec![0.0, 3.0, 7.0], vec![vec![2.0], vec![0.0]], vec![0.0]).unwrap();
        let (a, b) = (p.cost_of(&u, 7.0).unwrap(), q.cost_of(&u, 7.0).unwrap());
        assert!((a - b).abs() < 1e-9 * b);
        let s = p.storage.unwrap();
        assert!((s.value(&[3.0]) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn indicator_dynamics_from_text() {
        let src = EX41
            .replace("drift = [\"x1\"]", "drift = [\"0\"]")
            .replace("input = [\"-x1\"]", "input = [\"indicator(t,0,1) * x1^2\"]\ntime_breakpoints = [1.0]");
        let p: Problem = src.parse::<ProblemConfig>().unwrap().build().unwrap();
        let u = ControlSignal::constant(vec![0.9], 1.0, vec![0.0]).unwrap();
        let traj = p.simulate(&u, 3.0).unwrap();
        assert!((traj.state_at(1.0)[0] - 10.0).abs() < 1e-7);
        assert!((traj.state_at(3.0)[0] - 10.0).abs() < 1e-7);
    }

    #[test]
    fn errors_name_the_key() {
        let bad = EX41.replace("abs(x1)\"", "abs(x1\"");
        let err = bad.parse::<ProblemConfig>().unwrap().build().unwrap_err().to_string();
        assert!(err.contains("problem.ell1"), "{err}");
        let bad = EX41.replace("4*abs(u1)", "4*abs(u2)");
        let err = bad.parse::<ProblemConfig>().unwrap().build().unwrap_err().to_string();
        assert!(err.contains("problem.ell2"), "{err}");
        let bad = EX41.replace("name = \"ex41\"", "name = \"ex41\"\ncolour = 3");
        assert!(bad.parse::<ProblemConfig>().is_err());
        let bad = EX41.replace("drift = [\"x1\"]", "drift = [\"ln(x1 - 5)\"]");
        let err = bad.parse::<ProblemConfig>().unwrap().build().unwrap_err().to_string();
        assert!(err.contains("x0"), "{err}");
    }
}
