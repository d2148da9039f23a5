//! Bottom-up operational energy and CO2 accounting for plug-in hybrid
//! electric vehicle fleets, by model, region and year.

pub mod aggregation;
pub mod error;
pub mod ingestion;
pub mod model;
pub mod report;
pub mod uncertainty;

pub use error::{Error, Result};
