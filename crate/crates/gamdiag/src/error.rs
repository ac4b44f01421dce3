use std::fmt;

use gamdiag_core::Error as EngineError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    BadRequest,
    NotFound,
    Busy,
    Internal,
}

/// Request failure with the machine-readable body served over HTTP.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: Status,
    pub code: &'static str,
    pub message: String,
    pub param: Option<String>,
}

impl ApiError {
    pub fn bad_param(param: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: Status::BadRequest,
            code: "invalid_param",
            message: message.into(),
            param: Some(param.to_string()),
        }
    }

    pub fn missing(what: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: Status::NotFound,
            code: what,
            message: message.into(),
            param: None,
        }
    }

    pub fn busy(message: impl Into<String>) -> Self {
        ApiError {
            status: Status::Busy,
            code: "simulation_in_flight",
            message: message.into(),
            param: None,
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError {
            status: Status::Internal,
            code: "internal",
            message: message.into(),
            param: None,
        }
    }

    /// Attributes the error to a query parameter when none is set yet.
    pub fn at(mut self, param: &str) -> Self {
        if self.param.is_none() {
            self.param = Some(param.to_string());
        }
        self
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        let (status, code) = match e {
            EngineError::UnknownColumn(_) => (Status::NotFound, "unknown_column"),
            EngineError::Config(_)
            | EngineError::Domain(_)
            | EngineError::UnsupportedResidual { .. }
            | EngineError::ConstantColumn(_)
            | EngineError::ColumnType { .. }
            | EngineError::DegenerateCurve(_)
            | EngineError::InvalidDistance { .. }
            | EngineError::UnknownScenario(_) => (Status::BadRequest, "invalid_request"),
            _ => (Status::Internal, "engine_error"),
        };
        ApiError {
            status,
            code,
            message,
            param: None,
        }
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.param {
            Some(p) => write!(f, "{} ({p})", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ApiError {}
