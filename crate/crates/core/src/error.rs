use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("boxminus undefined: unit vectors are (near-)antipodal, angle {angle} rad")]
    AntipodalLogarithm { angle: f64 },

    #[error("state propagation produced an invalid state: {reason}")]
    Propagation { reason: String },

    #[error("measurement degenerate: {valid} of {total} pixels valid")]
    MeasurementDegenerate { valid: usize, total: usize },

    #[error("gain system is singular")]
    GainSingular,

    #[error("render geometry error at t = {t}: {reason}")]
    RenderGeometry { t: f64, reason: String },

    #[error("estimator diverged; last good timestamp {last_good_t}")]
    Diverged { last_good_t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("non-monotonic timestamps in {source_name} at row {row}")]
    NonMonotonic { source_name: String, row: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error in {source_name}:{line}: {reason}")]
    Parse {
        source_name: String,
        line: usize,
        reason: String,
    },

    #[error("unknown config key `{key}` at line {line}")]
    UnknownKey { key: String, line: usize },

    #[error("no overlapping samples between estimates and ground truth")]
    EmptyOverlap,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
