use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {constraint}")]
    InvalidParameter {
        name: &'static str,
        constraint: &'static str,
    },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("quadrature did not reach tolerance at {at} (estimated error {estimate:e})")]
    Quadrature { at: f64, estimate: f64 },

    #[error("step size underflow at y = {at}")]
    StepUnderflow { at: f64 },

    #[error("curvature unbounded at y = {at}")]
    UnboundedCurvature { at: f64 },

    #[error("continuation numerator negative at y = {at}: stopping region entered")]
    StoppingRegion { at: f64 },

    #[error("no bracket found: lower end {lower}, upper end {upper}")]
    NoBracket { lower: String, upper: String },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("state left the grid: {0}")]
    GridExit(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("non-concave input: positive second difference {excess:e} at index {index}")]
    NotConcave { index: usize, excess: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
