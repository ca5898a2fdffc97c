use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    /// Shapes, labels or arguments that do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    /// A covariance matrix left the PSD tolerance band.
    #[error("numerical degradation in {operation}: min eigenvalue {eigenvalue:e} below -1e-9 * trace ({trace:e})")]
    NumericalDegradation {
        operation: String,
        eigenvalue: f64,
        trace: f64,
    },

    #[error("degenerate conditioning on {label}: zero innovation variance with nonzero cross-covariance")]
    DegenerateConditioning { label: String },

    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("undefined parameter: {0}")]
    UndefinedParameter(String),

    #[error("undefined witness: numerator {numerator:e}, denominator {denominator:e}")]
    UndefinedWitness { numerator: f64, denominator: f64 },

    #[error("singular phase angle {phi} rad (cos phi = 0)")]
    Singularity { phi: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl SimError {
    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
