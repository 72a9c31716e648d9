use thiserror::Error;

use crate::dsl::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size underflow at t = {t} without escape (stiff or discontinuous dynamics)")]
    StepSizeUnderflow { t: f64 },

    #[error("maximum number of integration steps exceeded at t = {t}")]
    TooManySteps { t: f64 },

    #[error("non-finite evaluation at t = {t}")]
    NonFinite { t: f64 },

    #[error("solution blew up at t = {at}, before the required time {required}")]
    BlowUp { at: f64, required: f64 },

    #[error("trajectory ends at t = {end}, but t = {required} is required")]
    TrajectoryTooShort { end: f64, required: f64 },

    #[error("operation inapplicable: {0}")]
    Inapplicable(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error("undetermined convergence: {0}")]
    Undetermined(String),

    #[error("did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("config: {0}")]
    Config(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
