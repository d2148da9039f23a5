//! Vehicle catalog types and the per-model estimators: popularity-weighted
//! electricity and gasoline intensity, the AVKT split between carriers, and
//! per-vehicle annual energy.
//!
//! Distances inside the engine are carried in hundreds of kilometres so that
//! they multiply directly with "per 100 km" intensities.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of NEDC all-electric range achieved on the road.
pub const DEFAULT_ETA: f64 = 0.75;
/// Gasoline density, kg per litre.
pub const DEFAULT_RHO_KG_PER_L: f64 = 0.74;
/// 1 kWh expressed in TJ.
pub const DEFAULT_ZETA_E_TJ_PER_KWH: f64 = 3.6e-6;

/// Allowed deviation of `mu_electric + mu_gasoline` from 1.
pub const SPLIT_TOLERANCE: f64 = 1e-6;
/// Weight sums further than this from 1 are normalized with a warning.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

pub const KM_PER_100KM: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(pub String);

impl ModelId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModelId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// One configuration of a vehicle model as offered in a given year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleVariant {
    pub variant_id: String,
    /// Sales year in which this configuration was on offer.
    pub year: i32,
    pub battery_energy_kwh: f64,
    /// Official (NEDC) all-electric range. Real-world range is `eta` times this.
    pub nedc_aer_km: f64,
    /// Real-world comprehensive gasoline consumption.
    pub gasoline_intensity_l_per_100km: f64,
    /// Popularity weight; any nonnegative scale, normalized per model-year.
    pub popularity_weight: f64,
}

impl VehicleVariant {
    pub fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if !(self.battery_energy_kwh.is_finite() && self.battery_energy_kwh > 0.0) {
            out.push(Error::NonPositiveBatteryEnergy {
                variant_id: self.variant_id.clone(),
                value: self.battery_energy_kwh,
            });
        }
        if !(self.nedc_aer_km.is_finite() && self.nedc_aer_km > 0.0) {
            out.push(Error::NonPositiveRange {
                variant_id: self.variant_id.clone(),
                value: self.nedc_aer_km,
            });
        }
        if !(self.gasoline_intensity_l_per_100km.is_finite()
            && self.gasoline_intensity_l_per_100km >= 0.0)
        {
            out.push(Error::NegativeGasolineIntensity {
                variant_id: self.variant_id.clone(),
                value: self.gasoline_intensity_l_per_100km,
            });
        }
        if !(self.popularity_weight.is_finite() && self.popularity_weight >= 0.0) {
            out.push(Error::NegativeWeight {
                variant_id: self.variant_id.clone(),
                value: self.popularity_weight,
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleModel {
    pub model_id: ModelId,
    pub name: String,
    pub variants: Vec<VehicleVariant>,
    /// Fraction of AVKT driven on electricity.
    pub mu_electric: f64,
    /// Fraction of AVKT driven on gasoline.
    pub mu_gasoline: f64,
}

impl VehicleModel {
    /// Variants on offer in `year`.
    pub fn variants_in(&self, year: i32) -> impl Iterator<Item = &VehicleVariant> + '_ {
        self.variants.iter().filter(move |v| v.year == year)
    }

    pub fn has_variants_in(&self, year: i32) -> bool {
        self.variants_in(year).next().is_some()
    }

    /// Years covered by the catalog for this model, ascending.
    pub fn years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.variants.iter().map(|v| v.year).collect();
        years.sort_unstable();
        years.dedup();
        years
    }

    /// Checks the split ratios only; variant checks live on [`VehicleVariant`].
    pub fn split_violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        for (field, value) in [
            ("mu_electric", self.mu_electric),
            ("mu_gasoline", self.mu_gasoline),
        ] {
            if !(0.0..=1.0).contains(&value) {
                out.push(Error::MuOutOfRange {
                    model_id: self.model_id.0.clone(),
                    field,
                    value,
                });
            }
        }
        let deviation = (self.mu_electric + self.mu_gasoline - 1.0).abs();
        if deviation.is_nan() || deviation > SPLIT_TOLERANCE {
            out.push(Error::SplitTolerance {
                model_id: self.model_id.0.clone(),
                mu_electric: self.mu_electric,
                mu_gasoline: self.mu_gasoline,
            });
        }
        out
    }

    pub fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if self.variants.is_empty() {
            out.push(Error::EmptyVariants);
        }
        out.extend(self.variants.iter().flat_map(VehicleVariant::violations));
        for year in self.years() {
            if weight_sum(self.variants_in(year)) <= 0.0 {
                out.push(Error::ZeroWeightSum);
            }
        }
        out.extend(self.split_violations());
        out
    }

    pub fn validate(&self) -> Result<()> {
        first_error(self.violations())
    }
}

pub(crate) fn first_error(errors: Vec<Error>) -> Result<()> {
    match errors.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Lower,
    Default,
    Upper,
}

impl Bound {
    pub const ALL: [Bound; 3] = [Bound::Lower, Bound::Default, Bound::Upper];

    pub fn as_str(self) -> &'static str {
        match self {
            Bound::Lower => "lower",
            Bound::Default => "default",
            Bound::Upper => "upper",
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An emission factor with optional lower and upper bounds around its default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorBounds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    pub default: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl FactorBounds {
    pub fn new(lower: f64, default: f64, upper: f64) -> Self {
        Self {
            lower: Some(lower),
            default,
            upper: Some(upper),
        }
    }

    pub fn get(&self, bound: Bound) -> Option<f64> {
        match bound {
            Bound::Lower => self.lower,
            Bound::Default => Some(self.default),
            Bound::Upper => self.upper,
        }
    }

    /// Multiplies every present bound by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lower: self.lower.map(|v| v * factor),
            default: self.default * factor,
            upper: self.upper.map(|v| v * factor),
        }
    }

    /// `allow_zero` admits factors equal to zero (scaled sweeps); otherwise all
    /// present values must be strictly positive.
    pub(crate) fn violations(
        &self,
        subject: &str,
        names: [&'static str; 3],
        allow_zero: bool,
    ) -> Vec<Error> {
        let mut out = Vec::new();
        let present = [self.lower, Some(self.default), self.upper];
        for (value, field) in present.iter().zip(names) {
            if let Some(v) = *value {
                let ok = v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0));
                if !ok {
                    out.push(Error::NonPositiveFactor {
                        subject: subject.to_owned(),
                        field,
                        value: v,
                    });
                }
            }
        }
        let lower_ok = self.lower.is_none_or(|l| l <= self.default);
        let upper_ok = self.upper.is_none_or(|u| self.default <= u);
        if !(lower_ok && upper_ok) {
            out.push(Error::UnorderedFactors {
                subject: subject.to_owned(),
            });
        }
        out
    }
}

/// Conversion constants and the gasoline emission factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub eta: f64,
    pub rho_kg_per_l: f64,
    pub zeta_e_tj_per_kwh: f64,
    pub zeta_g_tj_per_kg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gasoline_factor_kgco2_per_tj: Option<FactorBounds>,
}

impl Constants {
    /// Default eta, density and electricity conversion. The gasoline
    /// conversion factor has no default and must be given.
    pub fn new(zeta_g_tj_per_kg: f64) -> Self {
        Self {
            eta: DEFAULT_ETA,
            rho_kg_per_l: DEFAULT_RHO_KG_PER_L,
            zeta_e_tj_per_kwh: DEFAULT_ZETA_E_TJ_PER_KWH,
            zeta_g_tj_per_kg,
            gasoline_factor_kgco2_per_tj: None,
        }
    }

    pub fn with_gasoline_factor(mut self, factor: FactorBounds) -> Self {
        self.gasoline_factor_kgco2_per_tj = Some(factor);
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if let Err(e) = check_eta(self.eta) {
            out.push(e);
        }
        for (field, value) in [
            ("rho_kg_per_l", self.rho_kg_per_l),
            ("zeta_e_tj_per_kwh", self.zeta_e_tj_per_kwh),
            ("zeta_g_tj_per_kg", self.zeta_g_tj_per_kg),
        ] {
            if !(value.is_finite() && value > 0.0) {
                out.push(Error::InvalidConstant {
                    field,
                    value,
                    expected: "a finite value > 0",
                });
            }
        }
        if let Some(f) = &self.gasoline_factor_kgco2_per_tj {
            out.extend(f.violations(
                "gasoline_factor_kgco2_per_tj",
                [
                    "gasoline_factor.lower",
                    "gasoline_factor.default",
                    "gasoline_factor.upper",
                ],
                false,
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        first_error(self.violations())
    }

    /// Gasoline emission factor (kgCO2/TJ) at the requested bound.
    pub fn gasoline_factor(&self, bound: Bound) -> Result<f64> {
        let factor = self
            .gasoline_factor_kgco2_per_tj
            .as_ref()
            .ok_or(Error::MissingGasolineFactor)?;
        factor.get(bound).ok_or_else(|| Error::MissingFactorBound {
            factor: "gasoline_factor_kgco2_per_tj".into(),
            bound,
        })
    }
}

pub(crate) fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidEta { value: eta })
    }
}

/// Popularity-weighted real-world intensities of one model in one year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensity {
    pub electricity_kwh_per_100km: f64,
    pub gasoline_l_per_100km: f64,
}

impl Intensity {
    pub fn for_year(model: &VehicleModel, year: i32, eta: f64) -> Result<Self> {
        let variants: Vec<&VehicleVariant> = model.variants_in(year).collect();
        if variants.is_empty() {
            return Err(Error::MissingVariantsForYear {
                model_id: model.model_id.0.clone(),
                year,
            });
        }
        Ok(Self {
            electricity_kwh_per_100km: estimate_electricity_intensity(
                variants.iter().copied(),
                eta,
            )?,
            gasoline_l_per_100km: estimate_gasoline_intensity(variants)?,
        })
    }
}

/// Distance split between carriers, in hundreds of kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvktSplit {
    pub electric_100km: f64,
    pub gasoline_100km: f64,
}

/// Annual energy of one vehicle, by carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPair {
    pub electricity_tj: f64,
    pub gasoline_tj: f64,
}

impl EnergyPair {
    pub fn total_tj(&self) -> f64 {
        self.electricity_tj + self.gasoline_tj
    }
}

pub fn weight_sum<'a>(variants: impl IntoIterator<Item = &'a VehicleVariant>) -> f64 {
    variants.into_iter().map(|v| v.popularity_weight).sum()
}

/// Normalized weighted mean of `value` over the variants; validates weights.
fn weighted_mean<'a, I, F>(variants: I, mut value: F) -> Result<f64>
where
    I: IntoIterator<Item = &'a VehicleVariant>,
    F: FnMut(&VehicleVariant) -> Result<f64>,
{
    let mut weights = 0.0;
    let mut weighted = 0.0;
    let mut count = 0usize;
    for v in variants {
        count += 1;
        if !(v.popularity_weight.is_finite() && v.popularity_weight >= 0.0) {
            return Err(Error::NegativeWeight {
                variant_id: v.variant_id.clone(),
                value: v.popularity_weight,
            });
        }
        let x = value(v)?;
        weights += v.popularity_weight;
        weighted += v.popularity_weight * x;
    }
    if count == 0 {
        return Err(Error::EmptyVariants);
    }
    if weights <= 0.0 {
        return Err(Error::ZeroWeightSum);
    }
    Ok(weighted / weights)
}

/// Real-world electricity intensity in kWh/100 km.
///
/// Each variant contributes `BE / (eta * NAER) * 100`, weighted by its
/// normalized popularity. The `1 / eta` factor is applied once to the
/// weighted mean so the result scales exactly inversely with `eta`.
pub fn estimate_electricity_intensity<'a>(
    variants: impl IntoIterator<Item = &'a VehicleVariant>,
    eta: f64,
) -> Result<f64> {
    check_eta(eta)?;
    let per_km = weighted_mean(variants, |v| {
        if !(v.battery_energy_kwh.is_finite() && v.battery_energy_kwh > 0.0) {
            return Err(Error::NonPositiveBatteryEnergy {
                variant_id: v.variant_id.clone(),
                value: v.battery_energy_kwh,
            });
        }
        if !(v.nedc_aer_km.is_finite() && v.nedc_aer_km > 0.0) {
            return Err(Error::NonPositiveRange {
                variant_id: v.variant_id.clone(),
                value: v.nedc_aer_km,
            });
        }
        Ok(v.battery_energy_kwh / v.nedc_aer_km)
    })?;
    Ok(per_km * KM_PER_100KM / eta)
}

/// Real-world gasoline intensity in L/100 km.
pub fn estimate_gasoline_intensity<'a>(
    variants: impl IntoIterator<Item = &'a VehicleVariant>,
) -> Result<f64> {
    weighted_mean(variants, |v| {
        if v.gasoline_intensity_l_per_100km.is_finite() && v.gasoline_intensity_l_per_100km >= 0.0 {
            Ok(v.gasoline_intensity_l_per_100km)
        } else {
            Err(Error::NegativeGasolineIntensity {
                variant_id: v.variant_id.clone(),
                value: v.gasoline_intensity_l_per_100km,
            })
        }
    })
}

/// Splits an annual distance (km) into electric and gasoline portions.
pub fn split_avkt(model: &VehicleModel, avkt_km: f64) -> Result<AvktSplit> {
    if !(avkt_km.is_finite() && avkt_km >= 0.0) {
        return Err(Error::NegativeAvkt { value: avkt_km });
    }
    first_error(model.split_violations())?;
    Ok(AvktSplit {
        electric_100km: model.mu_electric * avkt_km / KM_PER_100KM,
        gasoline_100km: model.mu_gasoline * avkt_km / KM_PER_100KM,
    })
}

/// Per-vehicle annual energy in TJ for each carrier.
pub fn model_energy(intensity: &Intensity, split: &AvktSplit, constants: &Constants) -> EnergyPair {
    EnergyPair {
        electricity_tj: intensity.electricity_kwh_per_100km
            * split.electric_100km
            * constants.zeta_e_tj_per_kwh,
        gasoline_tj: intensity.gasoline_l_per_100km
            * split.gasoline_100km
            * constants.rho_kg_per_l
            * constants.zeta_g_tj_per_kg,
    }
}
