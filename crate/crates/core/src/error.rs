use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside the admissible range [{lo}, {hi}]")]
    Domain {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// Adaptive quadrature hit its depth limit before meeting the tolerance.
    /// The best available estimate is kept so callers can decide what to do.
    #[error("quadrature did not converge on [{a}, {b}] (best estimate {best})")]
    Quadrature { a: f64, b: f64, best: f64 },

    #[error("root of the length constraint is not bracketed for theta = {theta}")]
    NotBracketed { theta: f64 },

    #[error(
        "controller not realizable: |K(theta)| = {k_abs} < delta = {delta} at theta = {theta}"
    )]
    Realizability { theta: f64, k_abs: f64, delta: f64 },

    #[error("model degeneracy: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("setup error: {0}")]
    Setup(String),
}
