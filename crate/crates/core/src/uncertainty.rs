//! Emission envelopes across factor bounds, and one-at-a-time parameter sweeps.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    evaluate, per_vehicle_carbon, Execution, Fleet, RegionCode, RegionYearContext, ResultValues,
    Rollup, Scope,
};
use crate::error::{Error, Result};
use crate::model::{check_eta, Bound, Constants, VehicleModel};

/// Which factor bound each carrier uses in one emission computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundScenario {
    pub label: Bound,
    pub grid: Bound,
    pub gasoline: Bound,
}

impl BoundScenario {
    /// The scenario named by `label`: both carriers take the same bound.
    /// A lower grid bound falls back to the default factor when none is set.
    pub fn preset(label: Bound) -> Self {
        Self {
            label,
            grid: label,
            gasoline: label,
        }
    }

    /// Lower scenarios never pick a factor above default, upper never below.
    pub fn is_consistent(&self) -> bool {
        match self.label {
            Bound::Lower => self.grid <= Bound::Default && self.gasoline <= Bound::Default,
            Bound::Default => true,
            Bound::Upper => self.grid >= Bound::Default && self.gasoline >= Bound::Default,
        }
    }
}

impl Default for BoundScenario {
    fn default() -> Self {
        Self::preset(Bound::Default)
    }
}

/// CO2 of one scope under the three scenarios, indexed lower/default/upper.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub region: RegionCode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    pub cee_ktco2: [f64; 3],
    pub ceg_ktco2: [f64; 3],
    pub ce_ktco2: [f64; 3],
}

impl BoundRow {
    fn from_scopes(parts: [&Scope<ResultValues>; 3]) -> Self {
        Self {
            region: parts[0].region.clone(),
            year: parts[0].year,
            cee_ktco2: parts.map(|s| s.values.cee_ktco2),
            ceg_ktco2: parts.map(|s| s.values.ceg_ktco2),
            ce_ktco2: parts.map(|s| s.values.ce_ktco2),
        }
    }

    pub fn is_ordered(&self) -> bool {
        let ordered = |v: &[f64; 3]| v[0] <= v[1] && v[1] <= v[2];
        ordered(&self.cee_ktco2) && ordered(&self.ceg_ktco2) && ordered(&self.ce_ktco2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmissionBounds {
    pub lower: Rollup<ResultValues>,
    pub default: Rollup<ResultValues>,
    pub upper: Rollup<ResultValues>,
}

impl EmissionBounds {
    pub fn get(&self, label: Bound) -> &Rollup<ResultValues> {
        match label {
            Bound::Lower => &self.lower,
            Bound::Default => &self.default,
            Bound::Upper => &self.upper,
        }
    }

    /// Region-year rows, then region, national-year and national rows.
    pub fn rows(&self) -> Vec<BoundRow> {
        let scenarios = [&self.lower, &self.default, &self.upper];
        let mut rows = Vec::new();
        let zip = |f: &dyn Fn(&Rollup<ResultValues>) -> &Vec<Scope<ResultValues>>,
                   rows: &mut Vec<BoundRow>| {
            let n = f(scenarios[0]).len();
            for i in 0..n {
                rows.push(BoundRow::from_scopes(scenarios.map(|s| &f(s)[i])));
            }
        };
        zip(&|r| &r.region_years, &mut rows);
        zip(&|r| &r.regions, &mut rows);
        zip(&|r| &r.national_years, &mut rows);
        rows.push(BoundRow::from_scopes(scenarios.map(|s| &s.national)));
        rows
    }
}

/// Emissions under the lower, default and upper factor scenarios.
///
/// Needs the full gasoline factor triple and an upper grid factor on every
/// context; a missing lower grid factor falls back to the default.
pub fn emission_bounds(fleet: Fleet<'_>, exec: Execution) -> Result<EmissionBounds> {
    for b in Bound::ALL {
        fleet.constants.gasoline_factor(b)?;
    }
    let mut runs = Bound::ALL
        .into_iter()
        .map(|b| evaluate(fleet, &BoundScenario::preset(b), exec))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let (Some(lower), Some(default), Some(upper)) = (runs.next(), runs.next(), runs.next()) else {
        unreachable!("three scenarios evaluated");
    };
    Ok(EmissionBounds {
        lower,
        default,
        upper,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Real-world share of NEDC electric range; values are absolute.
    Eta,
    /// Electric share of AVKT applied to every model (gasoline share is the
    /// complement); values are absolute.
    #[value(alias = "mu_electric")]
    MuElectric,
    /// Multiplier on every grid factor bound.
    #[value(alias = "grid_factor")]
    GridFactor,
    /// Multiplier on every gasoline factor bound.
    #[value(alias = "gasoline_factor")]
    GasolineFactor,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::Eta => "eta",
            SweepParameter::MuElectric => "mu_electric",
            SweepParameter::GridFactor => "grid_factor",
            SweepParameter::GasolineFactor => "gasoline_factor",
        }
    }

    fn check(self, value: f64) -> Result<()> {
        let (ok, domain) = match self {
            SweepParameter::Eta => (check_eta(value).is_ok(), "(0, 1]"),
            SweepParameter::MuElectric => ((0.0..=1.0).contains(&value), "[0, 1]"),
            SweepParameter::GridFactor | SweepParameter::GasolineFactor => {
                (value.is_finite() && value > 0.0, "multiplier > 0")
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSweepValue {
                parameter: self.as_str(),
                value,
                domain,
            })
        }
    }

    /// Baseline implied by the dataset, when the parameter has one.
    pub fn natural_baseline(self, constants: &Constants) -> Option<f64> {
        match self {
            SweepParameter::Eta => Some(constants.eta),
            SweepParameter::GridFactor | SweepParameter::GasolineFactor => Some(1.0),
            SweepParameter::MuElectric => None,
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub baseline: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::EmptySweep);
        }
        for &v in self.values.iter().chain(std::iter::once(&self.baseline)) {
            self.parameter.check(v)?;
        }
        Ok(())
    }
}

/// One scope of one sweep row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepScope {
    pub region: RegionCode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    pub vehicles: u64,
    pub cee_ktco2: f64,
    pub ceg_ktco2: f64,
    pub ce_ktco2: f64,
    /// None when the scope has no vehicles.
    pub per_vehicle_kgco2: Option<f64>,
    /// Percent change of `ce_ktco2` against the baseline; None when the
    /// baseline is zero.
    pub ce_change_pct: Option<f64>,
    pub per_vehicle_change_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub national: SweepScope,
    pub national_years: Vec<SweepScope>,
    pub regions: Vec<SweepScope>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub baseline: f64,
    pub rows: Vec<SweepRow>,
}

fn pct_change(value: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| (value - base) / base * 100.0)
}

fn per_vehicle(scope: &Scope<ResultValues>) -> Option<f64> {
    per_vehicle_carbon(scope.values.ce_ktco2, scope.vehicles).ok()
}

fn sweep_scope(scope: &Scope<ResultValues>, base: &Scope<ResultValues>) -> SweepScope {
    let pv = per_vehicle(scope);
    let base_pv = per_vehicle(base);
    SweepScope {
        region: scope.region.clone(),
        year: scope.year,
        vehicles: scope.vehicles,
        cee_ktco2: scope.values.cee_ktco2,
        ceg_ktco2: scope.values.ceg_ktco2,
        ce_ktco2: scope.values.ce_ktco2,
        per_vehicle_kgco2: pv,
        ce_change_pct: pct_change(scope.values.ce_ktco2, base.values.ce_ktco2),
        per_vehicle_change_pct: pv.zip(base_pv).and_then(|(v, b)| pct_change(v, b)),
    }
}

/// Owned copy of a fleet with one parameter overridden.
struct Perturbed {
    models: Vec<VehicleModel>,
    contexts: Vec<RegionYearContext>,
    constants: Constants,
}

impl Perturbed {
    fn new(parameter: SweepParameter, value: f64, fleet: Fleet<'_>) -> Self {
        let mut p = Self {
            models: fleet.models.to_vec(),
            contexts: fleet.contexts.to_vec(),
            constants: fleet.constants.clone(),
        };
        match parameter {
            SweepParameter::Eta => p.constants.eta = value,
            SweepParameter::MuElectric => {
                for m in &mut p.models {
                    m.mu_electric = value;
                    m.mu_gasoline = 1.0 - value;
                }
            }
            SweepParameter::GridFactor => {
                for c in &mut p.contexts {
                    c.grid_factor_kgco2_per_kwh = c.grid_factor_kgco2_per_kwh.scaled(value);
                }
            }
            SweepParameter::GasolineFactor => {
                if let Some(f) = &mut p.constants.gasoline_factor_kgco2_per_tj {
                    *f = f.scaled(value);
                }
            }
        }
        p
    }

    fn fleet(&self) -> Fleet<'_> {
        Fleet {
            models: &self.models,
            contexts: &self.contexts,
            constants: &self.constants,
        }
    }
}

/// Recomputes default-scenario emissions once per sweep value and once at
/// the baseline, reporting each row's change against the baseline.
pub fn sweep(spec: &SweepSpec, fleet: Fleet<'_>, exec: Execution) -> Result<SweepTable> {
    spec.validate()?;
    let run = |value: f64| -> Result<Rollup<ResultValues>> {
        let p = Perturbed::new(spec.parameter, value, fleet);
        evaluate(p.fleet(), &BoundScenario::default(), exec)
    };
    let base = run(spec.baseline)?;
    let rollups: Vec<Rollup<ResultValues>> = match exec {
        Execution::Serial => spec.values.iter().map(|&v| run(v)).collect::<Result<_>>()?,
        Execution::Parallel => spec
            .values
            .par_iter()
            .map(|&v| run(v))
            .collect::<Result<_>>()?,
    };
    let rows = spec
        .values
        .iter()
        .zip(&rollups)
        .map(|(&value, r)| SweepRow {
            value,
            national: sweep_scope(&r.national, &base.national),
            national_years: r
                .national_years
                .iter()
                .zip(&base.national_years)
                .map(|(s, b)| sweep_scope(s, b))
                .collect(),
            regions: r
                .regions
                .iter()
                .zip(&base.regions)
                .map(|(s, b)| sweep_scope(s, b))
                .collect(),
        })
        .collect();
    Ok(SweepTable {
        parameter: spec.parameter,
        baseline: spec.baseline,
        rows,
    })
}
