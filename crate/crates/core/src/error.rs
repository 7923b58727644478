use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qudit dimension {0} outside supported range 2..=8")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid level index {level} for dimension {dim}")]
    InvalidLevel { level: usize, dim: usize },
    #[error("levels must differ, got ({0}, {0})")]
    DegenerateLevels(usize),
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("state vector is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("invalid Choi operator: {0}")]
    InvalidChoi(String),
    #[error("invalid level map: {0}")]
    InvalidLevelMap(String),
    #[error("clifford enumeration is implemented for prime dimensions, got {0}")]
    NonPrimeDimension(usize),
    #[error("coupling graph is not connected")]
    DisconnectedGraph,
    #[error("invalid coupling graph: {0}")]
    InvalidGraph(String),
    #[error("no auxiliary level available for decoupling at dimension {0}")]
    NoAuxLevel(usize),
    #[error("auxiliary level {0} collides with an active level")]
    AuxCollision(usize),
    #[error("invalid transition: {0}")]
    InvalidTransition(String),
    #[error("detuning {detuning_hz} Hz is inside the guard band of transition {label}")]
    ResonanceHit { detuning_hz: f64, label: String },
    #[error("tone system is singular; choose different detunings")]
    SingularSystem,
    #[error("compensation requires negative intensities {0:?}; choose different detunings")]
    NegativeIntensity(Vec<f64>),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
