//! Binned, render-ready diagnostics for distributional regression models.
//!
//! The engine turns a dataset of responses, covariates and fitted per-row
//! distribution parameters into compact structures a plotting client can draw
//! directly: binned QQ curves with reference bands and simulation envelopes,
//! conditional density misfit fields, binned summary checks along one or two
//! covariates, glyph grids, and significance/uncertainty fields for fitted
//! two-dimensional smooths.

pub mod dataset;
pub mod density;
pub mod distributions;
pub mod effect;
pub mod error;
pub mod grid;
pub mod qq;
pub mod residuals;
pub mod scenarios;
pub mod stats;

pub use dataset::{load_binary, load_csv, load_for_family, DiagnosticDataset, Schema};
pub use distributions::Family;
pub use error::{Error, Result};
pub use residuals::{ResidualType, ResidualVector, SimulatedResiduals};
