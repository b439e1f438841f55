use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} out of range for a basis with {count} modes")]
    InvalidMode { mode: usize, count: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("point ({x}, {y}) lies outside the domain")]
    OutOfDomain { x: f64, y: f64 },

    #[error("nonlinearity is singular at (u, v) = ({u}, {v})")]
    SingularNonlinearity { u: f64, v: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite coefficient sample {value} at quadrature point ({x}, {y})")]
    NonFiniteCoefficient { x: f64, y: f64, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("factorization of the {field} operator failed (tau = {tau}, {mesh}): {detail}")]
    SingularScheme {
        field: &'static str,
        tau: f64,
        mesh: String,
        detail: String,
    },

    #[error("linear solve for {field} at step {step} left relative residual {residual:e}")]
    SolverFailure {
        field: &'static str,
        step: usize,
        residual: f64,
    },

    #[error("non-finite state at step {step}{}", sample.map(|s| format!(" (sample {s})")).unwrap_or_default())]
    Divergence { step: usize, sample: Option<u64> },

    #[error("sample {sample} failed: {source}")]
    Sample {
        sample: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
