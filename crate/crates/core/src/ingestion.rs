//! Loading, validating and writing datasets.
//!
//! A dataset is four files:
//!
//! * `catalog.csv`: one row per variant and sales year, columns
//!   [`CATALOG_COLUMNS`]. `model_name`, `mu_electric` and `mu_gasoline` repeat
//!   on every row of a model and must agree.
//! * `contexts.csv`: one row per region and year, columns
//!   [`CONTEXT_COLUMNS`], plus an optional `grid_factor_lower_kgco2_per_kwh`
//!   column (a blank cell there means "no lower bound") and optionally one
//!   `sales_<model_id>` column per model.
//! * `sales.csv` (long format, canonical): `region_code,year,model_id,units`.
//!   Looked up next to the contexts file. Giving sales both ways is an error.
//! * `constants.toml`: conversion constants, the gasoline factor triple and
//!   an optional `[metadata]` table.
//!
//! Blank cells are errors. Loading never stops at the first problem: every
//! issue found is collected into a [`ValidationReport`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};

use crate::aggregation::{Fleet, Region, RegionCode, RegionYearContext};
use crate::error::Error;
use crate::model::{
    weight_sum, Constants, FactorBounds, ModelId, VehicleModel, VehicleVariant, DEFAULT_ETA,
    DEFAULT_RHO_KG_PER_L, DEFAULT_ZETA_E_TJ_PER_KWH, WEIGHT_SUM_TOLERANCE,
};

pub const CATALOG_COLUMNS: [&str; 10] = [
    "model_id",
    "model_name",
    "variant_id",
    "year",
    "battery_energy_kwh",
    "nedc_aer_km",
    "gasoline_l_per_100km",
    "popularity_weight",
    "mu_electric",
    "mu_gasoline",
];

pub const CONTEXT_COLUMNS: [&str; 6] = [
    "region_code",
    "region_name",
    "year",
    "avkt_km",
    "grid_factor_default_kgco2_per_kwh",
    "grid_factor_upper_kgco2_per_kwh",
];

pub const GRID_LOWER_COLUMN: &str = "grid_factor_lower_kgco2_per_kwh";
pub const SALES_COLUMNS: [&str; 4] = ["region_code", "year", "model_id", "units"];
pub const WIDE_SALES_PREFIX: &str = "sales_";
pub const SALES_FILE_NAME: &str = "sales.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    Io,
    MissingColumn,
    MissingValue,
    Malformed,
    OutOfDomain,
    DuplicateKey,
    DanglingReference,
    Inconsistent,
    SplitTolerance,
    DegenerateWeights,
    MissingConstant,
    WeightNormalization,
}

impl IssueKind {
    fn of(e: &Error) -> Self {
        use Error::*;
        match e {
            InvalidEta { .. }
            | NonPositiveBatteryEnergy { .. }
            | NonPositiveRange { .. }
            | NegativeWeight { .. }
            | NegativeGasolineIntensity { .. }
            | MuOutOfRange { .. }
            | NegativeAvkt { .. }
            | InvalidConstant { .. }
            | NonPositiveFactor { .. }
            | UnorderedFactors { .. }
            | NegativeEmission { .. }
            | InvalidSweepValue { .. } => IssueKind::OutOfDomain,
            ZeroWeightSum => IssueKind::DegenerateWeights,
            SplitTolerance { .. } => IssueKind::SplitTolerance,
            MissingGasolineFactor | MissingFactorBound { .. } => IssueKind::MissingConstant,
            DuplicateModel { .. } | DuplicateContext { .. } | DuplicateCell { .. } => {
                IssueKind::DuplicateKey
            }
            UnknownModel { .. } | MissingVariantsForYear { .. } => IssueKind::DanglingReference,
            ReservedRegion { .. } | InconsistentRegion { .. } | NationalCellInRollup { .. } => {
                IssueKind::Inconsistent
            }
            EmptyVariants | ZeroVehicleCount | EmptySweep => IssueKind::Malformed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub file: String,
    /// 1-based line in the file (the header is line 1).
    pub row: Option<u64>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some(row) = self.row {
            write!(f, ":{row}")?;
        }
        if let Some(field) = &self.field {
            write!(f, " [{field}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Errors and warnings found while loading or validating a dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    errors: Vec<Issue>,
    warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn errors(&self) -> &[Issue] {
        &self.errors
    }

    pub fn warnings(&self) -> &[Issue] {
        &self.warnings
    }

    pub fn has_error(&self, kind: IssueKind) -> bool {
        self.errors.iter().any(|i| i.kind == kind)
    }

    fn error(
        &mut self,
        kind: IssueKind,
        file: &str,
        row: Option<u64>,
        field: Option<&str>,
        message: impl Into<String>,
    ) {
        self.errors.push(Issue {
            kind,
            file: file.to_owned(),
            row,
            field: field.map(str::to_owned),
            message: message.into(),
        });
    }

    fn warning(
        &mut self,
        kind: IssueKind,
        file: &str,
        row: Option<u64>,
        field: Option<&str>,
        message: impl Into<String>,
    ) {
        self.warnings.push(Issue {
            kind,
            file: file.to_owned(),
            row,
            field: field.map(str::to_owned),
            message: message.into(),
        });
    }

    fn domain_error(&mut self, e: &Error, file: &str, row: Option<u64>) {
        self.error(IssueKind::of(e), file, row, e.field(), e.to_string());
    }

    fn absorb(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }
}

impl Serialize for ValidationReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            ok: bool,
            errors: &'a [Issue],
            warnings: &'a [Issue],
        }
        View {
            ok: self.ok(),
            errors: &self.errors,
            warnings: &self.warnings,
        }
        .serialize(serializer)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

/// A validated, immutable input dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Sorted by model id.
    pub models: Vec<VehicleModel>,
    /// Regional contexts, sorted by region code and year.
    pub contexts: Vec<RegionYearContext>,
    /// Optional nationwide (`T`) contexts, used only for comparison with the
    /// regional rollup.
    pub national_contexts: Vec<RegionYearContext>,
    pub constants: Constants,
    pub metadata: Metadata,
}

impl Dataset {
    pub fn fleet(&self) -> Fleet<'_> {
        Fleet {
            models: &self.models,
            contexts: &self.contexts,
            constants: &self.constants,
        }
    }

    pub fn national_fleet(&self) -> Fleet<'_> {
        Fleet {
            models: &self.models,
            contexts: &self.national_contexts,
            constants: &self.constants,
        }
    }

    fn all_contexts(&self) -> impl Iterator<Item = &RegionYearContext> {
        self.contexts.iter().chain(&self.national_contexts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub catalog: PathBuf,
    pub contexts: PathBuf,
    pub sales: Option<PathBuf>,
    pub constants: PathBuf,
}

impl DatasetPaths {
    /// Uses `sales.csv` beside the contexts file when it exists.
    pub fn discover(
        catalog: impl Into<PathBuf>,
        contexts: impl Into<PathBuf>,
        constants: impl Into<PathBuf>,
    ) -> Self {
        let contexts = contexts.into();
        let sales = contexts
            .parent()
            .map(|dir| dir.join(SALES_FILE_NAME))
            .filter(|p| p.is_file());
        Self {
            catalog: catalog.into(),
            contexts,
            sales,
            constants: constants.into(),
        }
    }

    /// The four standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self::discover(
            dir.join("catalog.csv"),
            dir.join("contexts.csv"),
            dir.join("constants.toml"),
        )
    }
}

/// Maps dataset items back to file rows for error messages.
#[derive(Debug, Default)]
struct Locator {
    catalog: String,
    contexts: String,
    sales: String,
    constants: String,
    variant_rows: HashMap<(ModelId, i32, String), u64>,
    model_rows: HashMap<ModelId, u64>,
    context_rows: HashMap<(RegionCode, i32), u64>,
    sales_rows: HashMap<(RegionCode, i32, ModelId), (String, u64)>,
    /// Models with rows dropped for parse errors; references to them are
    /// not reported again.
    tainted_models: HashSet<ModelId>,
    tainted_contexts: HashSet<(RegionCode, i32)>,
    /// A whole file could not be read; references into it are not checked.
    catalog_unusable: bool,
    contexts_unusable: bool,
}

impl Locator {
    fn in_memory() -> Self {
        Self {
            catalog: "catalog".into(),
            contexts: "contexts".into(),
            sales: "sales".into(),
            constants: "constants".into(),
            ..Default::default()
        }
    }
}

/// Checks every invariant the computation modules rely on.
pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    validate_with(ds, &Locator::in_memory())
}

fn validate_with(ds: &Dataset, loc: &Locator) -> ValidationReport {
    let mut report = ValidationReport::default();

    for e in ds.constants.violations() {
        report.domain_error(&e, &loc.constants, None);
    }
    match &ds.constants.gasoline_factor_kgco2_per_tj {
        None => report.error(
            IssueKind::MissingConstant,
            &loc.constants,
            None,
            Some("gasoline_factor_kgco2_per_tj"),
            "gasoline emission factor triple (lower, default, upper) is required",
        ),
        Some(f) => {
            for (name, v) in [("lower", f.lower), ("upper", f.upper)] {
                if v.is_none() {
                    report.error(
                        IssueKind::MissingConstant,
                        &loc.constants,
                        None,
                        Some("gasoline_factor_kgco2_per_tj"),
                        format!("gasoline emission factor has no {name} value"),
                    );
                }
            }
        }
    }

    let mut model_ids = BTreeSet::new();
    for m in &ds.models {
        let model_row = loc.model_rows.get(&m.model_id).copied();
        if !model_ids.insert(&m.model_id) {
            report.error(
                IssueKind::DuplicateKey,
                &loc.catalog,
                model_row,
                Some("model_id"),
                format!("model {} appears more than once", m.model_id),
            );
        }
        if m.variants.is_empty() {
            report.error(
                IssueKind::Malformed,
                &loc.catalog,
                model_row,
                Some("variant_id"),
                format!("model {} has no variants", m.model_id),
            );
        }
        let mut variant_keys = BTreeSet::new();
        for v in &m.variants {
            let row = loc
                .variant_rows
                .get(&(m.model_id.clone(), v.year, v.variant_id.clone()))
                .copied();
            if !variant_keys.insert((v.year, &v.variant_id)) {
                report.error(
                    IssueKind::DuplicateKey,
                    &loc.catalog,
                    row,
                    Some("variant_id"),
                    format!(
                        "model {}: variant {} listed twice for {}",
                        m.model_id, v.variant_id, v.year
                    ),
                );
            }
            for e in v.violations() {
                report.domain_error(&e, &loc.catalog, row);
            }
        }
        for year in m.years() {
            let sum = weight_sum(m.variants_in(year));
            if sum.is_nan() || sum <= 0.0 {
                report.error(
                    IssueKind::DegenerateWeights,
                    &loc.catalog,
                    model_row,
                    Some("popularity_weight"),
                    format!(
                        "model {} ({year}): popularity weights sum to zero",
                        m.model_id
                    ),
                );
            } else if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                report.warning(
                    IssueKind::WeightNormalization,
                    &loc.catalog,
                    model_row,
                    Some("popularity_weight"),
                    format!(
                        "model {} ({year}): popularity weights sum to {sum}; normalized",
                        m.model_id
                    ),
                );
            }
        }
        for e in m.split_violations() {
            report.domain_error(&e, &loc.catalog, model_row);
        }
    }
    let models: HashMap<&ModelId, &VehicleModel> =
        ds.models.iter().map(|m| (&m.model_id, m)).collect();

    let mut keys = BTreeSet::new();
    let mut names: BTreeMap<&RegionCode, &str> = BTreeMap::new();
    for (national, ctx) in ds
        .contexts
        .iter()
        .map(|c| (false, c))
        .chain(ds.national_contexts.iter().map(|c| (true, c)))
    {
        let key = (ctx.region.code.clone(), ctx.year);
        let row = loc.context_rows.get(&key).copied();
        if ctx.region.code.is_national() != national {
            report.error(
                IssueKind::Inconsistent,
                &loc.contexts,
                row,
                Some("region_code"),
                format!("context {} is filed in the wrong list", ctx.label()),
            );
        }
        if ctx.region.code.as_str().is_empty()
            || ctx.region.code.as_str().contains(char::is_whitespace)
        {
            report.error(
                IssueKind::Malformed,
                &loc.contexts,
                row,
                Some("region_code"),
                format!(
                    "region code {:?} is empty or contains whitespace",
                    ctx.region.code.as_str()
                ),
            );
        }
        if !keys.insert(key.clone()) {
            report.error(
                IssueKind::DuplicateKey,
                &loc.contexts,
                row,
                Some("region_code"),
                format!("context {} appears more than once", ctx.label()),
            );
        }
        match names.get(&ctx.region.code) {
            Some(name) if *name != ctx.region.name => report.error(
                IssueKind::Inconsistent,
                &loc.contexts,
                row,
                Some("region_name"),
                format!(
                    "region {} is declared as both {:?} and {:?}",
                    ctx.region.code, name, ctx.region.name
                ),
            ),
            Some(_) => {}
            None => {
                names.insert(&ctx.region.code, &ctx.region.name);
            }
        }
        for e in ctx.violations() {
            report.domain_error(&e, &loc.contexts, row);
        }
        for (model_id, &units) in &ctx.sales {
            let (file, row) = loc
                .sales_rows
                .get(&(ctx.region.code.clone(), ctx.year, model_id.clone()))
                .map(|(f, r)| (f.as_str(), Some(*r)))
                .unwrap_or((loc.sales.as_str(), row));
            match models.get(model_id) {
                None if loc.catalog_unusable || loc.tainted_models.contains(model_id) => {}
                None => report.error(
                    IssueKind::DanglingReference,
                    file,
                    row,
                    Some("model_id"),
                    format!(
                        "sales in {} reference undeclared model {model_id}",
                        ctx.label()
                    ),
                ),
                Some(m)
                    if units > 0
                        && !m.has_variants_in(ctx.year)
                        && !loc.tainted_models.contains(model_id) =>
                {
                    report.error(
                        IssueKind::DanglingReference,
                        file,
                        row,
                        Some("year"),
                        format!(
                            "model {model_id} has sales in {} but no catalog variants for {}",
                            ctx.label(),
                            ctx.year
                        ),
                    )
                }
                Some(_) => {}
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Parsing

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

struct Table {
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

fn read_table(path: &Path, report: &mut ValidationReport) -> Option<Table> {
    let file = file_label(path);
    let text = match fs::read(path) {
        Ok(bytes) => bytes,
        Err(e) => {
            report.error(
                IssueKind::Io,
                &file,
                None,
                None,
                format!("cannot read: {e}"),
            );
            return None;
        }
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_slice());
    let headers = match reader.headers() {
        Ok(h) => h.iter().map(str::to_owned).collect(),
        Err(e) => {
            report.error(
                IssueKind::Malformed,
                &file,
                Some(1),
                None,
                format!("unreadable header: {e}"),
            );
            return None;
        }
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        match record {
            Ok(r) => rows.push((r.position().map_or(0, |p| p.line()), r)),
            Err(e) => {
                let line = e.position().map(|p| p.line());
                report.error(
                    IssueKind::Malformed,
                    &file,
                    line,
                    None,
                    format!("malformed row: {e}"),
                );
            }
        }
    }
    Some(Table { headers, rows })
}

fn require_columns(
    table: &Table,
    columns: &[&str],
    file: &str,
    report: &mut ValidationReport,
) -> Option<Vec<usize>> {
    let mut idx = Vec::with_capacity(columns.len());
    let mut missing = false;
    for c in columns {
        match table.column(c) {
            Some(i) => idx.push(i),
            None => {
                missing = true;
                report.error(
                    IssueKind::MissingColumn,
                    file,
                    Some(1),
                    Some(c),
                    format!("missing column {c}"),
                );
            }
        }
    }
    (!missing).then_some(idx)
}

/// Reads typed cells of one row, recording an issue for each bad cell.
struct RowReader<'a> {
    record: &'a csv::StringRecord,
    file: &'a str,
    line: u64,
    report: &'a mut ValidationReport,
    failed: bool,
}

impl<'a> RowReader<'a> {
    fn text(&mut self, idx: usize, name: &str) -> Option<&'a str> {
        match self.record.get(idx) {
            Some(s) if !s.is_empty() => Some(s),
            _ => {
                self.failed = true;
                self.report.error(
                    IssueKind::MissingValue,
                    self.file,
                    Some(self.line),
                    Some(name),
                    format!("blank {name}"),
                );
                None
            }
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, idx: usize, name: &str, what: &str) -> Option<T> {
        let s = self.text(idx, name)?;
        match s.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.failed = true;
                self.report.error(
                    IssueKind::Malformed,
                    self.file,
                    Some(self.line),
                    Some(name),
                    format!("{name}: {s:?} is not {what}"),
                );
                None
            }
        }
    }

    fn real(&mut self, idx: usize, name: &str) -> Option<f64> {
        self.parse(idx, name, "a number")
    }

    fn year(&mut self, idx: usize, name: &str) -> Option<i32> {
        self.parse(idx, name, "an integer year")
    }

    fn units(&mut self, idx: usize, name: &str) -> Option<u64> {
        let s = self.text(idx, name)?;
        match s.parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.failed = true;
                let negative = s.parse::<i64>().is_ok_and(|v| v < 0);
                let (kind, msg) = if negative {
                    (
                        IssueKind::OutOfDomain,
                        format!("{name}: sales must be >= 0, got {s}"),
                    )
                } else {
                    (
                        IssueKind::Malformed,
                        format!("{name}: {s:?} is not a whole number of units"),
                    )
                };
                self.report
                    .error(kind, self.file, Some(self.line), Some(name), msg);
                None
            }
        }
    }
}

struct CatalogRow {
    line: u64,
    model_id: ModelId,
    model_name: String,
    mu_electric: f64,
    mu_gasoline: f64,
    variant: VehicleVariant,
}

fn parse_catalog(
    path: &Path,
    report: &mut ValidationReport,
    loc: &mut Locator,
) -> Vec<VehicleModel> {
    let file = file_label(path);
    loc.catalog = file.clone();
    let table = read_table(path, report);
    let Some((table, idx)) =
        table.and_then(|t| require_columns(&t, &CATALOG_COLUMNS, &file, report).map(|i| (t, i)))
    else {
        loc.catalog_unusable = true;
        return Vec::new();
    };
    for h in &table.headers {
        if !CATALOG_COLUMNS.contains(&h.as_str()) {
            report.warning(
                IssueKind::Malformed,
                &file,
                Some(1),
                Some(h),
                format!("ignoring unknown column {h}"),
            );
        }
    }

    let mut rows = Vec::new();
    for (line, record) in &table.rows {
        let mut r = RowReader {
            record,
            file: &file,
            line: *line,
            report,
            failed: false,
        };
        let model_id = r.text(idx[0], CATALOG_COLUMNS[0]).map(ModelId::from);
        let model_name = r.text(idx[1], CATALOG_COLUMNS[1]);
        let variant_id = r.text(idx[2], CATALOG_COLUMNS[2]);
        let year = r.year(idx[3], CATALOG_COLUMNS[3]);
        let be = r.real(idx[4], CATALOG_COLUMNS[4]);
        let naer = r.real(idx[5], CATALOG_COLUMNS[5]);
        let gi = r.real(idx[6], CATALOG_COLUMNS[6]);
        let w = r.real(idx[7], CATALOG_COLUMNS[7]);
        let mu_e = r.real(idx[8], CATALOG_COLUMNS[8]);
        let mu_g = r.real(idx[9], CATALOG_COLUMNS[9]);
        let failed = r.failed;
        match (
            model_id, model_name, variant_id, year, be, naer, gi, w, mu_e, mu_g,
        ) {
            (
                Some(model_id),
                Some(name),
                Some(variant_id),
                Some(year),
                Some(be),
                Some(naer),
                Some(gi),
                Some(w),
                Some(mu_e),
                Some(mu_g),
            ) if !failed => rows.push(CatalogRow {
                line: *line,
                model_id,
                model_name: name.to_owned(),
                mu_electric: mu_e,
                mu_gasoline: mu_g,
                variant: VehicleVariant {
                    variant_id: variant_id.to_owned(),
                    year,
                    battery_energy_kwh: be,
                    nedc_aer_km: naer,
                    gasoline_intensity_l_per_100km: gi,
                    popularity_weight: w,
                },
            }),
            (model_id, ..) => {
                if let Some(id) = model_id {
                    loc.tainted_models.insert(id);
                }
            }
        }
    }

    let mut grouped: BTreeMap<ModelId, Vec<CatalogRow>> = BTreeMap::new();
    for row in rows {
        grouped.entry(row.model_id.clone()).or_default().push(row);
    }
    let mut models = Vec::new();
    for (model_id, rows) in grouped {
        let first = &rows[0];
        loc.model_rows.insert(model_id.clone(), first.line);
        for row in &rows[1..] {
            if row.model_name != first.model_name {
                report.error(
                    IssueKind::Inconsistent,
                    &file,
                    Some(row.line),
                    Some("model_name"),
                    format!(
                        "model {model_id}: name {:?} disagrees with {:?} on line {}",
                        row.model_name, first.model_name, first.line
                    ),
                );
            }
            for (field, a, b) in [
                ("mu_electric", row.mu_electric, first.mu_electric),
                ("mu_gasoline", row.mu_gasoline, first.mu_gasoline),
            ] {
                if a != b {
                    report.error(
                        IssueKind::Inconsistent,
                        &file,
                        Some(row.line),
                        Some(field),
                        format!(
                            "model {model_id}: {field} {a} disagrees with {b} on line {}",
                            first.line
                        ),
                    );
                }
            }
        }
        for row in &rows {
            // last line wins, so a duplicated variant is reported at its repeat
            loc.variant_rows
                .entry((
                    model_id.clone(),
                    row.variant.year,
                    row.variant.variant_id.clone(),
                ))
                .and_modify(|l| *l = row.line)
                .or_insert(row.line);
        }
        models.push(VehicleModel {
            model_id,
            name: first.model_name.clone(),
            mu_electric: first.mu_electric,
            mu_gasoline: first.mu_gasoline,
            variants: rows.into_iter().map(|r| r.variant).collect(),
        });
    }
    models
}

fn parse_contexts(
    path: &Path,
    report: &mut ValidationReport,
    loc: &mut Locator,
    long_sales: bool,
) -> Vec<RegionYearContext> {
    let file = file_label(path);
    loc.contexts = file.clone();
    let table = read_table(path, report);
    let Some((table, idx)) =
        table.and_then(|t| require_columns(&t, &CONTEXT_COLUMNS, &file, report).map(|i| (t, i)))
    else {
        loc.contexts_unusable = true;
        return Vec::new();
    };
    let lower_idx = table.column(GRID_LOWER_COLUMN);
    let mut wide: Vec<(usize, &str, ModelId)> = Vec::new();
    for (i, h) in table.headers.iter().enumerate() {
        if let Some(id) = h.strip_prefix(WIDE_SALES_PREFIX) {
            wide.push((i, h, ModelId::from(id)));
        } else if !CONTEXT_COLUMNS.contains(&h.as_str()) && h != GRID_LOWER_COLUMN {
            report.warning(
                IssueKind::Malformed,
                &file,
                Some(1),
                Some(h),
                format!("ignoring unknown column {h}"),
            );
        }
    }
    if long_sales && !wide.is_empty() {
        report.error(
            IssueKind::Inconsistent,
            &file,
            Some(1),
            Some(wide[0].1),
            format!(
                "sales are given both as {WIDE_SALES_PREFIX}* columns and in {SALES_FILE_NAME}"
            ),
        );
    }

    let mut contexts = Vec::new();
    for (line, record) in &table.rows {
        let mut r = RowReader {
            record,
            file: &file,
            line: *line,
            report,
            failed: false,
        };
        let code = r.text(idx[0], CONTEXT_COLUMNS[0]).map(RegionCode::from);
        let name = r.text(idx[1], CONTEXT_COLUMNS[1]);
        let year = r.year(idx[2], CONTEXT_COLUMNS[2]);
        let avkt = r.real(idx[3], CONTEXT_COLUMNS[3]);
        let default = r.real(idx[4], CONTEXT_COLUMNS[4]);
        let upper = r.real(idx[5], CONTEXT_COLUMNS[5]);
        let lower = match lower_idx {
            Some(i) if record.get(i).is_some_and(|s| !s.is_empty()) => r.real(i, GRID_LOWER_COLUMN),
            _ => None,
        };
        let mut sales = BTreeMap::new();
        for (i, column, model_id) in &wide {
            if let Some(units) = r.units(*i, column) {
                sales.insert(model_id.clone(), units);
            }
        }
        let failed = r.failed;
        if let (Some(code), Some(year)) = (&code, year) {
            if failed {
                loc.tainted_contexts.insert((code.clone(), year));
            }
            loc.context_rows
                .entry((code.clone(), year))
                .or_insert(*line);
        }
        if let (Some(code), Some(name), Some(year), Some(avkt), Some(default), Some(upper), false) =
            (code, name, year, avkt, default, upper, failed)
        {
            contexts.push(RegionYearContext {
                region: Region {
                    code,
                    name: name.to_owned(),
                },
                year,
                avkt_km: avkt,
                grid_factor_kgco2_per_kwh: FactorBounds {
                    lower,
                    default,
                    upper: Some(upper),
                },
                sales,
            });
        }
    }
    contexts
}

fn parse_sales(
    path: &Path,
    report: &mut ValidationReport,
    loc: &mut Locator,
    contexts: &mut [RegionYearContext],
) {
    let file = file_label(path);
    loc.sales = file.clone();
    let Some(table) = read_table(path, report) else {
        return;
    };
    let Some(idx) = require_columns(&table, &SALES_COLUMNS, &file, report) else {
        return;
    };
    let mut by_key: HashMap<(RegionCode, i32), usize> = HashMap::new();
    for (i, c) in contexts.iter().enumerate() {
        by_key.entry((c.region.code.clone(), c.year)).or_insert(i);
    }
    for (line, record) in &table.rows {
        let mut r = RowReader {
            record,
            file: &file,
            line: *line,
            report,
            failed: false,
        };
        let code = r.text(idx[0], SALES_COLUMNS[0]).map(RegionCode::from);
        let year = r.year(idx[1], SALES_COLUMNS[1]);
        let model_id = r.text(idx[2], SALES_COLUMNS[2]).map(ModelId::from);
        let units = r.units(idx[3], SALES_COLUMNS[3]);
        let (Some(code), Some(year), Some(model_id), Some(units)) = (code, year, model_id, units)
        else {
            continue;
        };
        let key = (code, year);
        let Some(&ci) = by_key.get(&key) else {
            if !loc.contexts_unusable && !loc.tainted_contexts.contains(&key) {
                report.error(
                    IssueKind::DanglingReference,
                    &file,
                    Some(*line),
                    Some("region_code"),
                    format!("sales reference undeclared context {}/{}", key.0, key.1),
                );
            }
            continue;
        };
        let ctx = &mut contexts[ci];
        if ctx.sales.insert(model_id.clone(), units).is_some() {
            report.error(
                IssueKind::DuplicateKey,
                &file,
                Some(*line),
                Some("model_id"),
                format!("sales for {model_id} in {} listed twice", ctx.label()),
            );
        } else {
            loc.sales_rows
                .insert((key.0, key.1, model_id), (file.clone(), *line));
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho_kg_per_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zeta_e_tj_per_kwh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zeta_g_tj_per_kg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gasoline_factor_kgco2_per_tj: Option<FactorFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<Metadata>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
}

fn parse_constants(
    path: &Path,
    report: &mut ValidationReport,
    loc: &mut Locator,
) -> Option<(Constants, Metadata)> {
    let file = file_label(path);
    loc.constants = file.clone();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            report.error(
                IssueKind::Io,
                &file,
                None,
                None,
                format!("cannot read: {e}"),
            );
            return None;
        }
    };
    let raw: ConstantsFile = match toml::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
            report.error(
                IssueKind::Malformed,
                &file,
                line,
                None,
                e.message().to_owned(),
            );
            return None;
        }
    };
    let Some(zeta_g) = raw.zeta_g_tj_per_kg else {
        report.error(
            IssueKind::MissingConstant,
            &file,
            None,
            Some("zeta_g_tj_per_kg"),
            "zeta_g_tj_per_kg (gasoline TJ per kg) has no default and must be set",
        );
        return None;
    };
    let gasoline_factor = match raw.gasoline_factor_kgco2_per_tj {
        None => {
            report.error(
                IssueKind::MissingConstant,
                &file,
                None,
                Some("gasoline_factor_kgco2_per_tj"),
                "[gasoline_factor_kgco2_per_tj] with lower, default and upper must be set",
            );
            return None;
        }
        Some(FactorFile { default: None, .. }) => {
            report.error(
                IssueKind::MissingConstant,
                &file,
                None,
                Some("gasoline_factor_kgco2_per_tj"),
                "gasoline_factor_kgco2_per_tj.default must be set",
            );
            return None;
        }
        Some(FactorFile {
            lower,
            default: Some(default),
            upper,
        }) => FactorBounds {
            lower,
            default,
            upper,
        },
    };
    Some((
        Constants {
            eta: raw.eta.unwrap_or(DEFAULT_ETA),
            rho_kg_per_l: raw.rho_kg_per_l.unwrap_or(DEFAULT_RHO_KG_PER_L),
            zeta_e_tj_per_kwh: raw.zeta_e_tj_per_kwh.unwrap_or(DEFAULT_ZETA_E_TJ_PER_KWH),
            zeta_g_tj_per_kg: zeta_g,
            gasoline_factor_kgco2_per_tj: Some(gasoline_factor),
        },
        raw.metadata.unwrap_or_default(),
    ))
}

/// Loads the dataset at `catalog`, `contexts` and `constants`, picking up a
/// `sales.csv` beside the contexts file.
pub fn load_dataset(
    catalog: impl AsRef<Path>,
    contexts: impl AsRef<Path>,
    constants: impl AsRef<Path>,
) -> Result<(Dataset, ValidationReport), ValidationReport> {
    load_dataset_from(&DatasetPaths::discover(
        catalog.as_ref(),
        contexts.as_ref(),
        constants.as_ref(),
    ))
}

/// Loads and fully validates a dataset. On success the report carries only
/// warnings; on failure it carries every error found.
pub fn load_dataset_from(
    paths: &DatasetPaths,
) -> Result<(Dataset, ValidationReport), ValidationReport> {
    let mut report = ValidationReport::default();
    let mut loc = Locator::in_memory();

    let models = parse_catalog(&paths.catalog, &mut report, &mut loc);
    let mut contexts = parse_contexts(
        &paths.contexts,
        &mut report,
        &mut loc,
        paths.sales.is_some(),
    );
    match &paths.sales {
        Some(sales) => parse_sales(sales, &mut report, &mut loc, &mut contexts),
        None if contexts.iter().all(|c| c.sales.is_empty()) => report.warning(
            IssueKind::MissingValue,
            &loc.contexts,
            None,
            None,
            "no sales data: every context has zero vehicles",
        ),
        None => {}
    }
    let constants = parse_constants(&paths.constants, &mut report, &mut loc);

    let Some((constants, metadata)) = constants else {
        return Err(report);
    };
    let (mut regional, mut national): (Vec<_>, Vec<_>) = contexts
        .into_iter()
        .partition(|c| !c.region.code.is_national());
    let by_key = |a: &RegionYearContext, b: &RegionYearContext| {
        (&a.region.code, a.year).cmp(&(&b.region.code, b.year))
    };
    regional.sort_by(by_key);
    national.sort_by(by_key);
    let dataset = Dataset {
        models,
        contexts: regional,
        national_contexts: national,
        constants,
        metadata,
    };
    report.absorb(validate_with(&dataset, &loc));
    if report.ok() {
        Ok((dataset, report))
    } else {
        Err(report)
    }
}

fn num(x: f64) -> String {
    // Display for f64 is the shortest string that parses back to the same value.
    x.to_string()
}

/// Writes `ds` as `catalog.csv`, `contexts.csv`, `sales.csv` and
/// `constants.toml` in `dir`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> io::Result<DatasetPaths> {
    fs::create_dir_all(dir)?;
    let paths = DatasetPaths {
        catalog: dir.join("catalog.csv"),
        contexts: dir.join("contexts.csv"),
        sales: Some(dir.join(SALES_FILE_NAME)),
        constants: dir.join("constants.toml"),
    };

    let mut w = csv::Writer::from_path(&paths.catalog)?;
    w.write_record(CATALOG_COLUMNS)?;
    for m in &ds.models {
        for v in &m.variants {
            w.write_record([
                m.model_id.as_str(),
                &m.name,
                &v.variant_id,
                &v.year.to_string(),
                &num(v.battery_energy_kwh),
                &num(v.nedc_aer_km),
                &num(v.gasoline_intensity_l_per_100km),
                &num(v.popularity_weight),
                &num(m.mu_electric),
                &num(m.mu_gasoline),
            ])?;
        }
    }
    w.flush()?;

    let all: Vec<&RegionYearContext> = ds.all_contexts().collect();
    let with_lower = all
        .iter()
        .any(|c| c.grid_factor_kgco2_per_kwh.lower.is_some());
    let mut w = csv::Writer::from_path(&paths.contexts)?;
    let mut header: Vec<&str> = CONTEXT_COLUMNS.to_vec();
    if with_lower {
        header.push(GRID_LOWER_COLUMN);
    }
    w.write_record(&header)?;
    for c in &all {
        let g = &c.grid_factor_kgco2_per_kwh;
        let mut rec = vec![
            c.region.code.0.clone(),
            c.region.name.clone(),
            c.year.to_string(),
            num(c.avkt_km),
            num(g.default),
            g.upper.map(num).unwrap_or_default(),
        ];
        if with_lower {
            rec.push(g.lower.map(num).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(paths.sales.as_ref().expect("set above"))?;
    w.write_record(SALES_COLUMNS)?;
    for c in &all {
        for (model_id, units) in &c.sales {
            w.write_record([
                c.region.code.as_str(),
                &c.year.to_string(),
                model_id.as_str(),
                &units.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let k = &ds.constants;
    let file = ConstantsFile {
        eta: Some(k.eta),
        rho_kg_per_l: Some(k.rho_kg_per_l),
        zeta_e_tj_per_kwh: Some(k.zeta_e_tj_per_kwh),
        zeta_g_tj_per_kg: Some(k.zeta_g_tj_per_kg),
        gasoline_factor_kgco2_per_tj: k.gasoline_factor_kgco2_per_tj.map(|f| FactorFile {
            lower: f.lower,
            default: Some(f.default),
            upper: f.upper,
        }),
        metadata: (ds.metadata != Metadata::default()).then(|| ds.metadata.clone()),
    };
    let text =
        toml::to_string_pretty(&file).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    fs::write(&paths.constants, text)?;
    Ok(paths)
}
