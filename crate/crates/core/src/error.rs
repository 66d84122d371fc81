use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Variants are grouped loosely by the stage that raises them. Numerical
/// failures carry enough context to be reported on a single line.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("basis headroom {headroom} is too small, at least {required} extra indices are needed")]
    InsufficientHeadroom { headroom: usize, required: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("quadrature did not reach tolerance {tolerance:e} (error estimate {estimate:e})")]
    QuadratureFailed { tolerance: f64, estimate: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    EigenNoConvergence { sweeps: usize, residual: f64 },

    #[error("zero-mode is ambiguous: gap {gap:e} is below {threshold:e}")]
    DegenerateZeroMode { gap: f64, threshold: f64 },

    #[error("zero-mode has vanishing L1 functional ({value:e}); mode is spurious")]
    SpuriousZeroMode { value: f64 },

    #[error("phase aliasing: tau * lambda_max = {product} exceeds 2*pi")]
    PhaseAliasing { product: f64 },

    #[error("matrix is not unitary (deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("qubit index {index} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("zero-phase bin captured only {fraction:.4} of the weight; zero-mode not resolved")]
    ZeroModeNotResolved { fraction: f64 },

    #[error("extrapolation needs at least {needed} points, got {got}")]
    ExtrapolationUnderdetermined { needed: usize, got: usize },

    #[error("readout calibration factor {factor} for `{word}` is unreliable")]
    UnreliableCalibration { word: String, factor: f64 },

    #[error("Langevin trajectory diverged at step {step} (x = {value})")]
    Diverged { step: usize, value: f64 },

    #[error("empty sample set")]
    EmptySamples,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
