use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A value does not fit on the grid it is being placed on.
    #[error("value {value} is outside the grid [0, {z_max}]")]
    OutOfRange { value: f64, z_max: f64 },

    /// Two objects that must share a grid do not.
    #[error("grid mismatch: ({z_max_a}, {n_a}) vs ({z_max_b}, {n_b})")]
    GridMismatch {
        z_max_a: f64,
        n_a: usize,
        z_max_b: f64,
        n_b: usize,
    },

    /// The closed-form ReLU kernel was requested for another activation.
    #[error("closed-form kernel requires ReLU, got {0}")]
    WrongKernel(&'static str),

    /// The single-component law could not be resolved on the grid.
    #[error("grid cannot resolve the component law: mass deviates by {deviation:.3e}")]
    Resolution { deviation: f64 },

    /// A root search found no sign change on the searched bracket.
    #[error("no root of lambda(m) = 1 found in [{lower}, {upper}]")]
    NoRoot { lower: f64, upper: f64 },

    /// An iterative solver hit its iteration cap.
    #[error("no convergence after {iterations} iterations (worst residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    /// An operation was invoked on an object lacking the required state.
    #[error("invalid state: {0}")]
    State(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
