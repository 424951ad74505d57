use thiserror::Error;

/// Errors produced by the fitting, prediction and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate design point at row {row} (matches row {earlier})")]
    DuplicatePoint { row: usize, earlier: usize },

    #[error("nesting violation at level {level}: point {point} ({coords:?}) is not present in level {lower}")]
    NestingViolation {
        level: usize,
        lower: usize,
        point: usize,
        coords: Vec<f64>,
    },

    #[error("numerical singularity: {0}")]
    NumericalSingularity(String),

    #[error("fitting failed{}: {diagnostics}", layer.map(|l| format!(" for layer {l}")).unwrap_or_default())]
    FittingFailure {
        layer: Option<usize>,
        diagnostics: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalSingularity(_) | Error::FittingFailure { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
