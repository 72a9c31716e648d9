//! Problem definitions from text: an expression language and a TOML config format.

pub mod config;
pub mod expr;

pub use config::{storage_from_expr, ProblemConfig};
pub use expr::{parse, parse_in, EvalError, Expr, ParseError, Pos, Scope};
