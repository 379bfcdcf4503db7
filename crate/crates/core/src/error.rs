use thiserror::Error;

use crate::types::MeasurementKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid measurements: {0}")]
    InvalidMeasurements(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A point came within the guard distance of an anchor.
    #[error("point is {distance:e} m from anchor {anchor}, below guard {guard:e} m")]
    Degenerate {
        anchor: usize,
        distance: f64,
        guard: f64,
    },

    #[error("noise sigma for {kind} at anchor {anchor} is zero; weight would be infinite")]
    ZeroSigma { kind: MeasurementKind, anchor: usize },

    #[error("solver failed: {0}")]
    SolverFailure(String),

    #[error("linear system is rank deficient ({rows} rows, {cols} unknowns)")]
    RankDeficient { rows: usize, cols: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidGeometry(_)
                | Error::InvalidMeasurements(_)
                | Error::InvalidConfig(_)
                | Error::ZeroSigma { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
