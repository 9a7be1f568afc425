use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("level {level} exceeds the configured maximum {max}")]
    LevelTooLarge { level: u32, max: u32 },

    #[error("vertex id {0} is out of range")]
    InvalidVertex(usize),

    #[error("edge id {0} is out of range")]
    InvalidEdge(usize),

    #[error("coarse level {coarse} is finer than target level {fine}")]
    LevelMismatch { coarse: u32, fine: u32 },

    #[error("operands live on different graphs (levels {left} and {right})")]
    GraphMismatch { left: u32, right: u32 },

    #[error("value vector has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },

    #[error("invalid L^p exponent {0}; p must be >= 1")]
    InvalidExponent(f64),

    #[error("invalid time {0}")]
    InvalidTime(f64),

    #[error("negative fractional power {0}")]
    NegativePower(f64),

    #[error("cutoff scale {scale} is not available at level {level}")]
    Scale { scale: u32, level: u32 },

    #[error("eigensolver failure: {0}")]
    SolverFailure(String),

    #[error("matrix of size {n} exceeds the cap {cap}")]
    SizeCap { n: usize, cap: usize },

    #[error("time grid [{lo:e}, {hi:e}] leaves the validity window [{window_lo:e}, {window_hi:e}]")]
    WindowEmpty {
        lo: f64,
        hi: f64,
        window_lo: f64,
        window_hi: f64,
    },

    #[error("insufficient samples: got {got}, need {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("unknown function family `{0}`")]
    UnknownFamily(String),

    #[error("constant function has no admissible ratio")]
    ConstantFunction,

    #[error("invalid document: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("cache at {path} has version {found}, expected {expected}")]
    CacheVersion { path: PathBuf, found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
