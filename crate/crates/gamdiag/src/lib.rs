//! Command-line driver and JSON service over the diagnostics engine.

pub mod api;
pub mod cli;
pub mod error;
pub mod render;
pub mod session;

pub use error::ApiError;
pub use session::{Model, Session, SCHEMA_VERSION};
