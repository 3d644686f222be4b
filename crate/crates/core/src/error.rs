use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid frequency m = {0}; must be a positive integer")]
    InvalidFrequency(i64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("diffeomorphism not invertible: margin {margin:.3e} below threshold {threshold}")]
    DiffeoNotInvertible { margin: f64, threshold: f64 },
    #[error("fixed-point inversion did not converge: residual {residual:.3e} after {iterations} iterations")]
    ConvergenceFailure { residual: f64, iterations: usize },
    #[error("normal form failed at step {step}: {source}")]
    NormalFormFailed { step: usize, source: Box<Error> },
    #[error("coefficient vanishes (min |X| = {min_abs:.3e}); not resonantly stable")]
    NotResonantlyStable { min_abs: f64 },
    #[error("integration failure: {0}")]
    IntegrationFailure(String),
    #[error("vector field has no zeros")]
    NoHyperbolicStructure,
    #[error("degenerate zero near x = {x0:.6} (slope {slope:.3e})")]
    DegenerateVectorField { x0: f64, slope: f64 },
    #[error("escape construction failed: margin {margin:.3e} at x = {x:.6}")]
    EscapeConstructionFailed { x: f64, margin: f64 },
    #[error("region too small for initial datum: widest component {width:.3e}")]
    RegionTooSmall { width: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },
    #[error("linear solve failed at t = {t:.6}")]
    StepFailure { t: f64 },
    #[error("series contains a nonpositive entry at index {index}")]
    InvalidSeries { index: usize },
    #[error("wrong regime: expected {expected}, classified {found}")]
    WrongRegime { expected: String, found: String },
    #[error("no regular value found after {attempts} attempts")]
    RegularizationFailed { attempts: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
