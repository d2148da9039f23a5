use thiserror::Error;

use crate::model::Bound;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Precondition and domain violations raised by the computation modules.
///
/// Every variant that concerns a single input names the offending field via
/// [`Error::field`], so ingestion can attach it to a report entry.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("variant list is empty")]
    EmptyVariants,
    #[error("eta must lie in (0, 1], got {value}")]
    InvalidEta { value: f64 },
    #[error("variant {variant_id}: battery_energy_kwh must be finite and > 0, got {value}")]
    NonPositiveBatteryEnergy { variant_id: String, value: f64 },
    #[error("variant {variant_id}: nedc_aer_km must be finite and > 0, got {value}")]
    NonPositiveRange { variant_id: String, value: f64 },
    #[error("variant {variant_id}: popularity_weight must be finite and >= 0, got {value}")]
    NegativeWeight { variant_id: String, value: f64 },
    #[error("popularity weights sum to zero")]
    ZeroWeightSum,
    #[error("variant {variant_id}: gasoline_l_per_100km must be finite and >= 0, got {value}")]
    NegativeGasolineIntensity { variant_id: String, value: f64 },
    #[error("model {model_id}: {field} must lie in [0, 1], got {value}")]
    MuOutOfRange {
        model_id: String,
        field: &'static str,
        value: f64,
    },
    #[error(
        "model {model_id}: mu_electric + mu_gasoline = {} deviates from 1 (mu_electric = {mu_electric}, mu_gasoline = {mu_gasoline})",
        mu_electric + mu_gasoline
    )]
    SplitTolerance {
        model_id: String,
        mu_electric: f64,
        mu_gasoline: f64,
    },
    #[error("avkt_km must be finite and >= 0, got {value}")]
    NegativeAvkt { value: f64 },
    #[error("{field} is invalid: expected {expected}, got {value}")]
    InvalidConstant {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("{subject}: {field} must be finite and > 0, got {value}")]
    NonPositiveFactor {
        subject: String,
        field: &'static str,
        value: f64,
    },
    #[error("{subject}: factor bounds are not ordered lower <= default <= upper")]
    UnorderedFactors { subject: String },
    #[error("gasoline emission factor is not configured")]
    MissingGasolineFactor,
    #[error("{factor}: no {bound} value configured")]
    MissingFactorBound { factor: String, bound: Bound },
    #[error("model {model_id} appears more than once")]
    DuplicateModel { model_id: String },
    #[error("sales in {region}/{year} reference unknown model {model_id}")]
    UnknownModel {
        model_id: String,
        region: String,
        year: i32,
    },
    #[error("context {region}/{year} appears more than once")]
    DuplicateContext { region: String, year: i32 },
    #[error("model {model_id} has sales in {year} but no catalog variants for that year")]
    MissingVariantsForYear { model_id: String, year: i32 },
    #[error("region code T is reserved for the nationwide rollup ({region}/{year})")]
    ReservedRegion { region: String, year: i32 },
    #[error("region {code} is declared with conflicting names")]
    InconsistentRegion { code: String },
    #[error("duplicate cell ({model_id}, {region}, {year})")]
    DuplicateCell {
        model_id: String,
        region: String,
        year: i32,
    },
    #[error("cell ({model_id}, T, {year}) is already a nationwide cell")]
    NationalCellInRollup { model_id: String, year: i32 },
    #[error("vehicle count must be > 0")]
    ZeroVehicleCount,
    #[error("{field} must be finite and >= 0, got {value}")]
    NegativeEmission { field: &'static str, value: f64 },
    #[error("sweep over {parameter}: value {value} is outside the legal domain ({domain})")]
    InvalidSweepValue {
        parameter: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("sweep has no values")]
    EmptySweep,
}

impl Error {
    /// Name of the input field the error is about, if it concerns one.
    pub fn field(&self) -> Option<&'static str> {
        use Error::*;
        match self {
            EmptyVariants => Some("variants"),
            InvalidEta { .. } => Some("eta"),
            NonPositiveBatteryEnergy { .. } => Some("battery_energy_kwh"),
            NonPositiveRange { .. } => Some("nedc_aer_km"),
            NegativeWeight { .. } | ZeroWeightSum => Some("popularity_weight"),
            NegativeGasolineIntensity { .. } => Some("gasoline_l_per_100km"),
            MuOutOfRange { field, .. } => Some(field),
            SplitTolerance { .. } => Some("mu_electric"),
            NegativeAvkt { .. } => Some("avkt_km"),
            InvalidConstant { field, .. } => Some(field),
            NonPositiveFactor { field, .. } => Some(field),
            MissingGasolineFactor => Some("gasoline_factor_kgco2_per_tj"),
            UnknownModel { .. } | DuplicateModel { .. } | DuplicateCell { .. } => Some("model_id"),
            MissingVariantsForYear { .. } => Some("year"),
            DuplicateContext { .. } | ReservedRegion { .. } | InconsistentRegion { .. } => {
                Some("region_code")
            }
            NegativeEmission { field, .. } => Some(field),
            ZeroVehicleCount => Some("vehicle_count"),
            UnorderedFactors { .. }
            | MissingFactorBound { .. }
            | NationalCellInRollup { .. }
            | InvalidSweepValue { .. }
            | EmptySweep => None,
        }
    }
}
