//! Fleet rollups: per-model cells for every region-year context, summed to
//! region-year, region, national-year and national totals.
//!
//! Every total is a left fold over its parts in a fixed order (ascending
//! model id, then region code, then year), so serial and parallel runs give
//! bit-identical results.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    first_error, model_energy, split_avkt, Bound, Constants, FactorBounds, Intensity, ModelId,
    VehicleModel,
};
use crate::uncertainty::BoundScenario;

pub const KG_PER_KT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionCode(pub String);

impl RegionCode {
    pub const NATIONAL: &'static str = "T";

    pub fn new(code: impl Into<String>) -> Self {
        Self(code.into())
    }

    pub fn national() -> Self {
        Self(Self::NATIONAL.to_owned())
    }

    pub fn is_national(&self) -> bool {
        self.0 == Self::NATIONAL
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RegionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RegionCode {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub code: RegionCode,
    pub name: String,
}

/// Activity and grid data for one region in one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionYearContext {
    pub region: Region,
    pub year: i32,
    /// Annual distance per vehicle, km.
    pub avkt_km: f64,
    pub grid_factor_kgco2_per_kwh: FactorBounds,
    /// Units sold, keyed by model.
    pub sales: BTreeMap<ModelId, u64>,
}

impl RegionYearContext {
    pub fn label(&self) -> String {
        format!("{}/{}", self.region.code, self.year)
    }

    pub fn vehicles(&self) -> u64 {
        self.sales.values().sum()
    }

    pub fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if !(self.avkt_km.is_finite() && self.avkt_km >= 0.0) {
            out.push(Error::NegativeAvkt {
                value: self.avkt_km,
            });
        }
        if self.grid_factor_kgco2_per_kwh.upper.is_none() {
            out.push(Error::MissingFactorBound {
                factor: format!("grid factor {}", self.label()),
                bound: Bound::Upper,
            });
        }
        out.extend(self.grid_factor_kgco2_per_kwh.violations(
            &format!("grid factor {}", self.label()),
            [
                "grid_factor_lower_kgco2_per_kwh",
                "grid_factor_default_kgco2_per_kwh",
                "grid_factor_upper_kgco2_per_kwh",
            ],
            false,
        ));
        out
    }

    /// Grid factor (kgCO2/kWh) at `bound`. Without a configured lower value,
    /// the lower bound is the default.
    pub fn grid_factor(&self, bound: Bound) -> Result<f64> {
        let f = &self.grid_factor_kgco2_per_kwh;
        match bound {
            Bound::Lower => Ok(f.lower.unwrap_or(f.default)),
            Bound::Default => Ok(f.default),
            Bound::Upper => f.upper.ok_or_else(|| Error::MissingFactorBound {
                factor: format!("grid factor {}", self.label()),
                bound,
            }),
        }
    }
}

/// Borrowed view of everything a computation needs.
#[derive(Debug, Clone, Copy)]
pub struct Fleet<'a> {
    pub models: &'a [VehicleModel],
    pub contexts: &'a [RegionYearContext],
    pub constants: &'a Constants,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Field-wise additive result values.
pub trait Quantities: Copy + Default + Send + Sync {
    fn add(self, other: Self) -> Self;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyValues {
    pub electricity_tj: f64,
    pub gasoline_tj: f64,
    pub total_tj: f64,
}

impl Quantities for EnergyValues {
    fn add(self, o: Self) -> Self {
        Self {
            electricity_tj: self.electricity_tj + o.electricity_tj,
            gasoline_tj: self.gasoline_tj + o.gasoline_tj,
            total_tj: self.total_tj + o.total_tj,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultValues {
    pub electricity_tj: f64,
    pub gasoline_tj: f64,
    pub total_tj: f64,
    pub cee_ktco2: f64,
    pub ceg_ktco2: f64,
    pub ce_ktco2: f64,
}

impl ResultValues {
    pub fn energy(&self) -> EnergyValues {
        EnergyValues {
            electricity_tj: self.electricity_tj,
            gasoline_tj: self.gasoline_tj,
            total_tj: self.total_tj,
        }
    }
}

impl Quantities for ResultValues {
    fn add(self, o: Self) -> Self {
        Self {
            electricity_tj: self.electricity_tj + o.electricity_tj,
            gasoline_tj: self.gasoline_tj + o.gasoline_tj,
            total_tj: self.total_tj + o.total_tj,
            cee_ktco2: self.cee_ktco2 + o.cee_ktco2,
            ceg_ktco2: self.ceg_ktco2 + o.ceg_ktco2,
            ce_ktco2: self.ce_ktco2 + o.ce_ktco2,
        }
    }
}

/// Result for one (model, region, year).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell<V> {
    pub model_id: ModelId,
    pub region: RegionCode,
    pub year: i32,
    pub sales: u64,
    #[serde(flatten)]
    pub values: V,
}

pub type EnergyCell = Cell<EnergyValues>;
pub type ResultCell = Cell<ResultValues>;

impl<V> Cell<V> {
    fn key(&self) -> (&ModelId, &RegionCode, i32) {
        (&self.model_id, &self.region, self.year)
    }
}

/// Totals over a region (or the nation), for one year or all years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scope<V> {
    pub region: RegionCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    pub vehicles: u64,
    #[serde(flatten)]
    pub values: V,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rollup<V> {
    /// Sorted by model id, region code, year.
    pub cells: Vec<Cell<V>>,
    /// Sorted by region code, year.
    pub region_years: Vec<Scope<V>>,
    /// Per region over all years: fold of its region-year totals by year.
    pub regions: Vec<Scope<V>>,
    /// Per year over all regions: fold of region-year totals by region code.
    pub national_years: Vec<Scope<V>>,
    /// Fold of `regions` in order.
    pub national: Scope<V>,
}

impl<V: Quantities> Rollup<V> {
    pub fn region_year(&self, region: &str, year: i32) -> Option<&Scope<V>> {
        self.region_years
            .iter()
            .find(|s| s.region.as_str() == region && s.year == Some(year))
    }

    pub fn region(&self, region: &str) -> Option<&Scope<V>> {
        self.regions.iter().find(|s| s.region.as_str() == region)
    }
}

/// Per-model intermediate quantities for one context, fleet-wide (already
/// multiplied by sales).
#[derive(Debug, Clone)]
struct Terms {
    model_id: ModelId,
    sales: u64,
    electricity_kwh: f64,
    gasoline_l: f64,
    energy: EnergyValues,
}

struct ModelIndex<'a> {
    models: BTreeMap<&'a ModelId, &'a VehicleModel>,
}

impl<'a> ModelIndex<'a> {
    fn new(models: &'a [VehicleModel]) -> Result<Self> {
        let mut index = BTreeMap::new();
        for m in models {
            m.validate()?;
            if index.insert(&m.model_id, m).is_some() {
                return Err(Error::DuplicateModel {
                    model_id: m.model_id.0.clone(),
                });
            }
        }
        Ok(Self { models: index })
    }

    fn get(&self, id: &ModelId, ctx: &RegionYearContext) -> Result<&'a VehicleModel> {
        self.models
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownModel {
                model_id: id.0.clone(),
                region: ctx.region.code.0.clone(),
                year: ctx.year,
            })
    }
}

fn check_contexts(contexts: &[RegionYearContext], allow_national: bool) -> Result<()> {
    let mut seen = BTreeSet::new();
    for ctx in contexts {
        first_error(ctx.violations())?;
        if ctx.region.code.is_national() && !allow_national {
            return Err(Error::ReservedRegion {
                region: ctx.region.code.0.clone(),
                year: ctx.year,
            });
        }
        if !seen.insert((&ctx.region.code, ctx.year)) {
            return Err(Error::DuplicateContext {
                region: ctx.region.code.0.clone(),
                year: ctx.year,
            });
        }
    }
    Ok(())
}

fn context_terms(
    index: &ModelIndex<'_>,
    ctx: &RegionYearContext,
    constants: &Constants,
) -> Result<Vec<Terms>> {
    // BTreeMap iteration gives ascending model id.
    ctx.sales
        .iter()
        .map(|(id, &sales)| {
            let model = index.get(id, ctx)?;
            if sales == 0 && !model.has_variants_in(ctx.year) {
                return Ok(Terms {
                    model_id: id.clone(),
                    sales,
                    electricity_kwh: 0.0,
                    gasoline_l: 0.0,
                    energy: EnergyValues::default(),
                });
            }
            let intensity = Intensity::for_year(model, ctx.year, constants.eta)?;
            let split = split_avkt(model, ctx.avkt_km)?;
            let per_vehicle = model_energy(&intensity, &split, constants);
            let n = sales as f64;
            let electricity_tj = per_vehicle.electricity_tj * n;
            let gasoline_tj = per_vehicle.gasoline_tj * n;
            Ok(Terms {
                model_id: id.clone(),
                sales,
                electricity_kwh: intensity.electricity_kwh_per_100km * split.electric_100km * n,
                gasoline_l: intensity.gasoline_l_per_100km * split.gasoline_100km * n,
                energy: EnergyValues {
                    electricity_tj,
                    gasoline_tj,
                    total_tj: electricity_tj + gasoline_tj,
                },
            })
        })
        .collect()
}

/// Electricity and gasoline emission factors resolved for one context.
#[derive(Debug, Clone, Copy)]
struct Factors {
    grid_kg_per_kwh: f64,
    gasoline_kg_per_tj: f64,
}

impl Factors {
    fn resolve(
        ctx: &RegionYearContext,
        constants: &Constants,
        scenario: &BoundScenario,
    ) -> Result<Self> {
        Ok(Self {
            grid_kg_per_kwh: ctx.grid_factor(scenario.grid)?,
            gasoline_kg_per_tj: constants.gasoline_factor(scenario.gasoline)?,
        })
    }

    fn apply(&self, t: &Terms, constants: &Constants) -> ResultValues {
        let cee = electricity_kt(self.grid_kg_per_kwh, t);
        let ceg = gasoline_kt(self.gasoline_kg_per_tj, t, constants);
        ResultValues {
            electricity_tj: t.energy.electricity_tj,
            gasoline_tj: t.energy.gasoline_tj,
            total_tj: t.energy.total_tj,
            cee_ktco2: cee,
            ceg_ktco2: ceg,
            ce_ktco2: cee + ceg,
        }
    }
}

fn electricity_kt(grid_kg_per_kwh: f64, t: &Terms) -> f64 {
    grid_kg_per_kwh * t.electricity_kwh / KG_PER_KT
}

fn gasoline_kt(gasoline_kg_per_tj: f64, t: &Terms, constants: &Constants) -> f64 {
    gasoline_kg_per_tj * t.gasoline_l * constants.rho_kg_per_l * constants.zeta_g_tj_per_kg
        / KG_PER_KT
}

fn fold<V: Quantities>(values: impl IntoIterator<Item = V>) -> V {
    values.into_iter().fold(V::default(), V::add)
}

/// Computes the cells of every context, preserving context order and model
/// order within a context.
fn context_cells<V, F>(
    fleet: Fleet<'_>,
    exec: Execution,
    allow_national: bool,
    make: F,
) -> Result<Vec<Vec<Cell<V>>>>
where
    V: Quantities,
    F: Fn(&RegionYearContext, &Terms) -> Result<V> + Sync,
{
    fleet.constants.validate()?;
    check_contexts(fleet.contexts, allow_national)?;
    let index = ModelIndex::new(fleet.models)?;
    let one = |ctx: &RegionYearContext| -> Result<Vec<Cell<V>>> {
        context_terms(&index, ctx, fleet.constants)?
            .iter()
            .map(|t| {
                Ok(Cell {
                    model_id: t.model_id.clone(),
                    region: ctx.region.code.clone(),
                    year: ctx.year,
                    sales: t.sales,
                    values: make(ctx, t)?,
                })
            })
            .collect()
    };
    match exec {
        Execution::Serial => fleet.contexts.iter().map(one).collect(),
        Execution::Parallel => fleet.contexts.par_iter().map(one).collect(),
    }
}

/// Builds the rollup hierarchy from per-context cell lists.
type ContextKey = (RegionCode, i32);

fn build_rollup<V: Quantities>(
    per_context: Vec<Vec<Cell<V>>>,
    contexts: &[RegionYearContext],
) -> Rollup<V> {
    let mut keyed: Vec<(ContextKey, Vec<Cell<V>>)> = contexts
        .iter()
        .map(|c| (c.region.code.clone(), c.year))
        .zip(per_context)
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));

    let region_years: Vec<Scope<V>> = keyed
        .iter()
        .map(|((region, year), cells)| Scope {
            region: region.clone(),
            year: Some(*year),
            vehicles: cells.iter().map(|c| c.sales).sum(),
            values: fold(cells.iter().map(|c| c.values)),
        })
        .collect();

    let mut by_region: BTreeMap<&RegionCode, Vec<&Scope<V>>> = BTreeMap::new();
    let mut by_year: BTreeMap<i32, Vec<&Scope<V>>> = BTreeMap::new();
    for s in &region_years {
        by_region.entry(&s.region).or_default().push(s);
        by_year
            .entry(s.year.unwrap_or_default())
            .or_default()
            .push(s);
    }
    let regions: Vec<Scope<V>> = by_region
        .into_iter()
        .map(|(region, parts)| Scope {
            region: region.clone(),
            year: None,
            vehicles: parts.iter().map(|s| s.vehicles).sum(),
            values: fold(parts.iter().map(|s| s.values)),
        })
        .collect();
    let national_years = by_year
        .into_iter()
        .map(|(year, parts)| Scope {
            region: RegionCode::national(),
            year: Some(year),
            vehicles: parts.iter().map(|s| s.vehicles).sum(),
            values: fold(parts.iter().map(|s| s.values)),
        })
        .collect();
    let national = Scope {
        region: RegionCode::national(),
        year: None,
        vehicles: regions.iter().map(|s| s.vehicles).sum(),
        values: fold(regions.iter().map(|s| s.values)),
    };

    let mut cells: Vec<Cell<V>> = keyed.into_iter().flat_map(|(_, c)| c).collect();
    cells.sort_by(|a, b| a.key().cmp(&b.key()));
    Rollup {
        cells,
        region_years,
        regions,
        national_years,
        national,
    }
}

/// Energy and emissions for every context under one bound scenario.
pub fn evaluate(
    fleet: Fleet<'_>,
    scenario: &BoundScenario,
    exec: Execution,
) -> Result<Rollup<ResultValues>> {
    let constants = fleet.constants;
    let per_context = context_cells(fleet, exec, false, |ctx, t| {
        Ok(Factors::resolve(ctx, constants, scenario)?.apply(t, constants))
    })?;
    Ok(build_rollup(per_context, fleet.contexts))
}

/// Energy only; needs no emission factors.
pub fn evaluate_energy(fleet: Fleet<'_>, exec: Execution) -> Result<Rollup<EnergyValues>> {
    let per_context = context_cells(fleet, exec, false, |_, t| Ok(t.energy))?;
    Ok(build_rollup(per_context, fleet.contexts))
}

/// Evaluates nationwide (`T`) contexts on their own, for comparison with the
/// regional rollup. Non-national contexts in `fleet` are ignored.
pub fn independent_national(
    fleet: Fleet<'_>,
    scenario: &BoundScenario,
    exec: Execution,
) -> Result<Vec<Scope<ResultValues>>> {
    let national: Vec<RegionYearContext> = fleet
        .contexts
        .iter()
        .filter(|c| c.region.code.is_national())
        .cloned()
        .collect();
    let sub = Fleet {
        contexts: &national,
        ..fleet
    };
    let constants = fleet.constants;
    let per_context = context_cells(sub, exec, true, |ctx, t| {
        Ok(Factors::resolve(ctx, constants, scenario)?.apply(t, constants))
    })?;
    Ok(build_rollup(per_context, &national).region_years)
}

/// Separates nationwide contexts from regional ones.
pub fn split_national(
    contexts: &[RegionYearContext],
) -> (Vec<RegionYearContext>, Vec<RegionYearContext>) {
    contexts
        .iter()
        .cloned()
        .partition(|c| !c.region.code.is_national())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionalEnergy {
    pub cells: Vec<EnergyCell>,
    pub total: EnergyValues,
}

/// Per-model fleet energy for one context plus the context total.
pub fn regional_energy(
    models: &[VehicleModel],
    ctx: &RegionYearContext,
    constants: &Constants,
) -> Result<RegionalEnergy> {
    let fleet = Fleet {
        models,
        contexts: std::slice::from_ref(ctx),
        constants,
    };
    let mut per_context = context_cells(fleet, Execution::Serial, false, |_, t| Ok(t.energy))?;
    let cells = per_context.pop().unwrap_or_default();
    let total = fold(cells.iter().map(|c| c.values));
    Ok(RegionalEnergy { cells, total })
}

fn single_context_sum(
    models: &[VehicleModel],
    ctx: &RegionYearContext,
    constants: &Constants,
    make: impl Fn(&RegionYearContext, &Terms) -> Result<f64> + Sync,
) -> Result<f64> {
    let fleet = Fleet {
        models,
        contexts: std::slice::from_ref(ctx),
        constants,
    };
    let per_context = context_cells(fleet, Execution::Serial, true, |c, t| {
        let kt = make(c, t)?;
        Ok(ResultValues {
            ce_ktco2: kt,
            ..Default::default()
        })
    })?;
    Ok(per_context
        .iter()
        .flatten()
        .fold(0.0, |acc, c| acc + c.values.ce_ktco2))
}

/// Electricity CO2 (kt) of the fleet in one context.
pub fn electricity_emissions(
    models: &[VehicleModel],
    ctx: &RegionYearContext,
    constants: &Constants,
    bound: Bound,
) -> Result<f64> {
    let grid = ctx.grid_factor(bound)?;
    single_context_sum(models, ctx, constants, |_, t| Ok(electricity_kt(grid, t)))
}

/// Gasoline CO2 (kt) of the fleet in one context.
pub fn gasoline_emissions(
    models: &[VehicleModel],
    ctx: &RegionYearContext,
    constants: &Constants,
    bound: Bound,
) -> Result<f64> {
    let factor = constants.gasoline_factor(bound)?;
    single_context_sum(models, ctx, constants, |_, t| {
        Ok(gasoline_kt(factor, t, constants))
    })
}

fn check_emission(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeEmission { field, value })
    }
}

/// Total CO2 from the two carriers.
pub fn total_emissions(cee_ktco2: f64, ceg_ktco2: f64) -> Result<f64> {
    check_emission("cee_ktco2", cee_ktco2)?;
    check_emission("ceg_ktco2", ceg_ktco2)?;
    Ok(cee_ktco2 + ceg_ktco2)
}

/// Per-vehicle CO2 in kg.
pub fn per_vehicle_carbon(ce_ktco2: f64, vehicle_count: u64) -> Result<f64> {
    check_emission("ce_ktco2", ce_ktco2)?;
    if vehicle_count == 0 {
        return Err(Error::ZeroVehicleCount);
    }
    Ok(ce_ktco2 * KG_PER_KT / vehicle_count as f64)
}

/// Field-wise sum of cells over regions, giving one nationwide cell per
/// (model, year).
pub fn national_rollup<V: Quantities>(cells: &[Cell<V>]) -> Result<Vec<Cell<V>>> {
    let mut sorted: Vec<&Cell<V>> = cells.iter().collect();
    sorted.sort_by(|a, b| a.key().cmp(&b.key()));
    for pair in sorted.windows(2) {
        if pair[0].key() == pair[1].key() {
            return Err(Error::DuplicateCell {
                model_id: pair[0].model_id.0.clone(),
                region: pair[0].region.0.clone(),
                year: pair[0].year,
            });
        }
    }
    if let Some(c) = sorted.iter().find(|c| c.region.is_national()) {
        return Err(Error::NationalCellInRollup {
            model_id: c.model_id.0.clone(),
            year: c.year,
        });
    }
    let mut groups: BTreeMap<(&ModelId, i32), Vec<&Cell<V>>> = BTreeMap::new();
    for c in sorted {
        groups.entry((&c.model_id, c.year)).or_default().push(c);
    }
    Ok(groups
        .into_iter()
        .map(|((model_id, year), parts)| Cell {
            model_id: model_id.clone(),
            region: RegionCode::national(),
            year,
            sales: parts.iter().map(|c| c.sales).sum(),
            values: fold(parts.iter().map(|c| c.values)),
        })
        .collect())
}

/// Sum of all cells in (model, region, year) order.
pub fn totals<V: Quantities>(cells: &[Cell<V>]) -> V {
    let mut sorted: Vec<&Cell<V>> = cells.iter().collect();
    sorted.sort_by(|a, b| a.key().cmp(&b.key()));
    fold(sorted.into_iter().map(|c| c.values))
}
