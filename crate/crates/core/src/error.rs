use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("kernel has {rows}x{cols} entries but the feature set has {features} values")]
    KernelDimension {
        rows: usize,
        cols: usize,
        features: usize,
    },

    #[error("{name} = {value} is out of range: {expected}")]
    Range {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },

    #[error("CFL violation: feature {feature}, node {node}, Courant number {courant}")]
    Cfl {
        feature: usize,
        node: usize,
        courant: f64,
    },

    #[error("{0} is undefined for this state")]
    Undefined(&'static str),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("density is nonzero at feature {feature}, node {node} where the reference profile vanishes")]
    Support { feature: usize, node: usize },

    #[error("power iteration did not converge after {iterations} steps (last lambda {lambda}, oscillation {oscillation})")]
    NotConverged {
        iterations: usize,
        lambda: f64,
        oscillation: f64,
    },

    #[error("direct and adjoint eigenvalues disagree: {direct} vs {adjoint}")]
    EigenMismatch { direct: f64, adjoint: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from user input rather than from the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Grid(_)
                | Error::Model(_)
                | Error::KernelDimension { .. }
                | Error::Range { .. }
                | Error::Config(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
