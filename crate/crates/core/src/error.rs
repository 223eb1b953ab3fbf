use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by the core model.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("surface {surface}: invalid {field}: {reason}")]
    InvalidSurface {
        surface: String,
        field: &'static str,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("nodes per dimension {n} outside [{min}, {max}]")]
    NodeCountOutOfRange { n: usize, min: usize, max: usize },
    #[error("surface {surface_id}: degenerate geometry ({what})")]
    DegenerateGeometry { surface_id: usize, what: &'static str },
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("meshes belong to different surfaces ({left} vs {right})")]
    SurfaceMismatch { left: usize, right: usize },
    #[error("solver instability at step {step}: node {node} has temperature {value}")]
    Instability { step: usize, node: usize, value: f64 },
    #[error("unsupported primitive `{0}`")]
    UnsupportedPrimitive(String),
    #[error("gradient requested for non-scalar output of length {0}")]
    NonScalarOutput(usize),
    #[error("checkpoint interval must be at least 1")]
    InvalidCheckpointInterval,
    #[error("non-finite loss {value} (sample {sample})")]
    NonFiniteLoss { sample: usize, value: f64 },
    #[error("invalid settings: {0}")]
    InvalidSettings(&'static str),
    #[error("orbit {orbit}, sample {index}: {source}")]
    Sample {
        orbit: usize,
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("dataset split needs at least two orbits, found {0}")]
    TooFewOrbits(usize),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
