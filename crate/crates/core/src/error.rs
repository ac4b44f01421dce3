use thiserror::Error;

/// Errors raised by the diagnostics engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: column `{column}` {reason}")]
    Schema { column: String, reason: String },

    #[error("parse error at row {row}, column `{column}`: cannot read `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}` is {found}, expected {expected}")]
    ColumnType {
        column: String,
        expected: &'static str,
        found: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{kind} residuals are not supported for the {family} family")]
    UnsupportedResidual {
        family: &'static str,
        kind: &'static str,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate curve: need at least 2 points, got {0}")]
    DegenerateCurve(usize),

    #[error("distance function returned a non-finite value for finite input ({p}, {pm})")]
    InvalidDistance { p: f64, pm: f64 },

    #[error("column `{0}` is constant; pass an explicit bandwidth")]
    ConstantColumn(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("binary column file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
