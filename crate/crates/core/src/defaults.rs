//! Every default tolerance and size used by the library and the CLI.
//!
//! | name | value | used by |
//! |------|-------|---------|
//! | `ODE_RTOL` / `ODE_ATOL` | 1e-10 / 1e-12 | state integration |
//! | `COSTATE_ATOL` | 1e-20 | backward costate integration |
//! | `ESCAPE_RADIUS` | 1e9 | blow-up detection |
//! | `QUAD_TOL` | 1e-10 | cost quadrature |
//! | `GRID_POINTS` | 65 | certificate grids, per axis |
//! | `REFINE_ROUNDS` | 2 | certificate refinement |
//! | `MARGIN_TOL` | 1e-9 | certificate pass threshold |
//! | `SINGULAR_TOL` | 1e-7 | singular-arc flagging (relative) |
//! | `SINGULAR_WINDOW` | 10 | samples a singular stretch must persist |
//! | `SWITCH_SAMPLES` | 4001 | switching-function grid |
//! | `ROOT_TOL` | 1e-12 | zero bracketing |
//! | `MULTISTARTS` | 5 | switching-time solver |
//! | `OPT_TOL` | 1e-9 | switching-time polish |
//! | `MAX_ITERS` | 400 | optimizers |
//! | `MESH` | 400 | direct solver cells |
//! | `GTOL` | 1e-8 | direct solver stopping |
//! | `CONV_TOL` | 1e-3 | horizon limit classification |
//! | `SEED` | 7 | all randomized starts |

pub const ODE_RTOL: f64 = 1e-10;
pub const ODE_ATOL: f64 = 1e-12;
pub const COSTATE_ATOL: f64 = 1e-20;
pub const ESCAPE_RADIUS: f64 = 1e9;
pub const QUAD_TOL: f64 = 1e-10;
pub const GRID_POINTS: usize = 65;
pub const REFINE_ROUNDS: usize = 2;
pub const MARGIN_TOL: f64 = 1e-9;
pub const SINGULAR_TOL: f64 = 1e-7;
pub const SINGULAR_WINDOW: usize = 10;
pub const SWITCH_SAMPLES: usize = 4001;
pub const ROOT_TOL: f64 = 1e-12;
pub const MULTISTARTS: usize = 5;
pub const OPT_TOL: f64 = 1e-9;
pub const MAX_ITERS: usize = 400;
pub const MESH: usize = 400;
pub const GTOL: f64 = 1e-8;
pub const CONV_TOL: f64 = 1e-3;
pub const SEED: u64 = 7;
pub const COERCIVITY_RADII: [f64; 7] = [1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6];

/// Tolerances a run can override from the command line or a config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub quad: f64,
    pub opt: f64,
    pub conv: f64,
    pub singular: f64,
    pub margin: f64,
    pub gtol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: ODE_RTOL,
            atol: ODE_ATOL,
            quad: QUAD_TOL,
            opt: OPT_TOL,
            conv: CONV_TOL,
            singular: SINGULAR_TOL,
            margin: MARGIN_TOL,
            gtol: GTOL,
        }
    }
}

impl Tolerances {
    pub fn integrate_options(&self) -> crate::dynamics::IntegrateOptions {
        crate::dynamics::IntegrateOptions { rtol: self.rtol, atol: self.atol, ..Default::default() }
    }
}
