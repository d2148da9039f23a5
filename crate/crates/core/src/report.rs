//! Command-line front end: argument parsing, output rendering and exit codes.
//!
//! Exit codes: 0 success, 1 invalid dataset or failed computation, 2 usage
//! or I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::aggregation::{
    evaluate, evaluate_energy, independent_national, Cell, EnergyValues, Execution, ResultValues,
    Rollup, Scope,
};
use crate::error::Error;
use crate::ingestion::{
    load_dataset_from, Dataset, DatasetPaths, IssueKind, Metadata, ValidationReport,
};
use crate::model::{Bound, Intensity};
use crate::uncertainty::{
    emission_bounds, sweep, BoundRow, BoundScenario, SweepParameter, SweepScope, SweepSpec,
    SweepTable,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "phev-carbon",
    version,
    about = "Operational energy and CO2 accounting for PHEV fleets"
)]
pub struct Cli {
    /// Directory holding catalog.csv, contexts.csv, constants.toml and optionally sales.csv.
    #[arg(long, global = true, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Vehicle catalog CSV (overrides --data).
    #[arg(long, global = true, value_name = "FILE")]
    pub catalog: Option<PathBuf>,
    /// Region-year contexts CSV (overrides --data). A sales.csv beside it is used for sales.
    #[arg(long, global = true, value_name = "FILE")]
    pub contexts: Option<PathBuf>,
    /// Constants TOML (overrides --data).
    #[arg(long, global = true, value_name = "FILE")]
    pub constants: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Write output to FILE instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Evaluate on one thread.
    #[arg(long, global = true)]
    pub serial: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the dataset and report every problem found.
    Validate,
    /// Energy intensities per model and year.
    Intensity,
    /// Energy use by cell, region, year and nationwide.
    Energy,
    /// CO2 emissions under one bound scenario.
    Emissions {
        #[arg(long, value_enum, default_value_t = Bound::Default)]
        bound: Bound,
    },
    /// CO2 emissions under the lower, default and upper scenarios side by side.
    Bounds,
    /// Re-run the default scenario over a range of one parameter.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParameter,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        /// Reference value for percent changes. Defaults to the dataset value
        /// for eta and to 1 for the factor multipliers.
        #[arg(long, allow_negative_numbers = true)]
        baseline: Option<f64>,
    },
}

enum Failure {
    Usage(String),
    Invalid(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSweepValue { .. } | Error::EmptySweep => Failure::Usage(e.to_string()),
            e => Failure::Invalid(e.to_string()),
        }
    }
}

/// Parses `args` and runs the command, writing results to `out` (or the
/// `--out` file) and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                EXIT_USAGE
            } else {
                let _ = out.write_all(text.as_bytes());
                EXIT_OK
            };
        }
    };
    let (code, body) = match execute(&cli, err) {
        Ok(r) => r,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
        Err(Failure::Invalid(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_INVALID;
        }
    };
    let written = match &cli.out {
        Some(path) => {
            fs::write(path, &body).map_err(|e| format!("cannot write {}: {e}", path.display()))
        }
        None => out
            .write_all(body.as_bytes())
            .map_err(|e| format!("cannot write output: {e}")),
    };
    match written {
        Ok(()) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
    }
}

fn paths(cli: &Cli) -> Result<DatasetPaths, Failure> {
    let base = cli.data.as_deref().map(DatasetPaths::in_dir);
    let pick = |given: &Option<PathBuf>, from_dir: Option<PathBuf>, flag: &str| {
        given.clone().or(from_dir).ok_or_else(|| {
            Failure::Usage(format!("no {flag} given; pass --data DIR or --{flag} FILE"))
        })
    };
    let catalog = pick(
        &cli.catalog,
        base.as_ref().map(|b| b.catalog.clone()),
        "catalog",
    )?;
    let contexts = pick(
        &cli.contexts,
        base.as_ref().map(|b| b.contexts.clone()),
        "contexts",
    )?;
    let constants = pick(
        &cli.constants,
        base.as_ref().map(|b| b.constants.clone()),
        "constants",
    )?;
    Ok(DatasetPaths::discover(catalog, contexts, constants))
}

fn execute(cli: &Cli, err: &mut dyn Write) -> Result<(i32, String), Failure> {
    let paths = paths(cli)?;
    let loaded = load_dataset_from(&paths);
    let io_only = |r: &ValidationReport| r.errors().iter().all(|i| i.kind == IssueKind::Io);

    if let Command::Validate = cli.command {
        let (report, metadata) = match &loaded {
            Ok((ds, r)) => (r, Some(&ds.metadata)),
            Err(r) if io_only(r) => return Err(Failure::Usage(issue_lines(r.errors()))),
            Err(r) => (r, None),
        };
        let code = if report.ok() { EXIT_OK } else { EXIT_INVALID };
        return Ok((code, render_validation(cli.format, report, metadata)));
    }

    let (ds, report) = match loaded {
        Ok(l) => l,
        Err(r) if io_only(&r) => return Err(Failure::Usage(issue_lines(r.errors()))),
        Err(r) => {
            return Err(Failure::Invalid(format!(
                "dataset is invalid ({} errors)\n{}",
                r.errors().len(),
                issue_lines(r.errors())
            )))
        }
    };
    for w in report.warnings() {
        let _ = writeln!(err, "warning: {w}");
    }
    let exec = if cli.serial {
        Execution::Serial
    } else {
        Execution::Parallel
    };
    let body = match &cli.command {
        Command::Validate => unreachable!("handled above"),
        Command::Intensity => render_intensity(cli.format, &ds)?,
        Command::Energy => render_energy(cli.format, &ds, exec)?,
        Command::Emissions { bound } => {
            render_emissions(cli.format, &ds, BoundScenario::preset(*bound), exec)?
        }
        Command::Bounds => render_bounds(cli.format, &ds, exec)?,
        Command::Sweep {
            param,
            values,
            baseline,
        } => {
            let baseline = baseline
                .or_else(|| param.natural_baseline(&ds.constants))
                .ok_or_else(|| {
                    Failure::Usage(format!("--baseline is required when sweeping {param}"))
                })?;
            let spec = SweepSpec {
                parameter: *param,
                values: values.clone(),
                baseline,
            };
            render_sweep(cli.format, &ds, &spec, exec)?
        }
    };
    Ok((EXIT_OK, body))
}

fn issue_lines(issues: &[crate::ingestion::Issue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<&'a Metadata>,
    #[serde(flatten)]
    payload: T,
}

fn json<T: Serialize>(command: &'static str, dataset: Option<&Metadata>, payload: T) -> String {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        dataset,
        payload,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("report types serialize");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// CSV

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Tables

fn table(title: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut s = String::new();
    if !title.is_empty() {
        let _ = writeln!(s, "{title}");
    }
    let line = |s: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(&mut s, &mut header.iter().copied());
    let _ = writeln!(
        s,
        "{}",
        widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("  ")
    );
    for row in rows {
        line(&mut s, &mut row.iter().map(String::as_str));
    }
    s
}

fn r1(x: f64) -> String {
    format!("{x:.1}")
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{v:+.1}"))
        .unwrap_or_else(|| "n/a".into())
}

fn scope_label(region: &str, year: Option<i32>) -> (String, String) {
    (
        region.to_owned(),
        year.map_or_else(|| "all".into(), |y| y.to_string()),
    )
}

// ---------------------------------------------------------------------------
// validate

fn render_validation(
    format: Format,
    report: &ValidationReport,
    metadata: Option<&Metadata>,
) -> String {
    match format {
        Format::Json => json("validate", metadata, report),
        Format::Csv => {
            let rows = report
                .errors()
                .iter()
                .map(|i| ("error", i))
                .chain(report.warnings().iter().map(|i| ("warning", i)))
                .map(|(sev, i)| {
                    vec![
                        sev.into(),
                        serde_json::to_value(i.kind)
                            .ok()
                            .and_then(|v| v.as_str().map(str::to_owned))
                            .unwrap_or_default(),
                        i.file.clone(),
                        opt(i.row),
                        i.field.clone().unwrap_or_default(),
                        i.message.clone(),
                    ]
                });
            csv_text(
                &["severity", "kind", "file", "row", "field", "message"],
                rows,
            )
        }
        Format::Table => {
            let mut s = String::new();
            for i in report.errors() {
                let _ = writeln!(s, "error: {i}");
            }
            for i in report.warnings() {
                let _ = writeln!(s, "warning: {i}");
            }
            let _ = writeln!(
                s,
                "{}: {} errors, {} warnings",
                if report.ok() { "OK" } else { "INVALID" },
                report.errors().len(),
                report.warnings().len()
            );
            s
        }
    }
}

// ---------------------------------------------------------------------------
// intensity

#[derive(Serialize)]
struct IntensityRow<'a> {
    model_id: &'a str,
    model_name: &'a str,
    year: i32,
    variants: usize,
    electricity_kwh_per_100km: f64,
    gasoline_l_per_100km: f64,
}

fn render_intensity(format: Format, ds: &Dataset) -> Result<String, Failure> {
    let eta = ds.constants.eta;
    let mut rows = Vec::new();
    for m in &ds.models {
        for year in m.years() {
            let i = Intensity::for_year(m, year, eta)?;
            rows.push(IntensityRow {
                model_id: m.model_id.as_str(),
                model_name: &m.name,
                year,
                variants: m.variants_in(year).count(),
                electricity_kwh_per_100km: i.electricity_kwh_per_100km,
                gasoline_l_per_100km: i.gasoline_l_per_100km,
            });
        }
    }
    Ok(match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Payload<'a> {
                eta: f64,
                rows: Vec<IntensityRow<'a>>,
            }
            json("intensity", Some(&ds.metadata), Payload { eta, rows })
        }
        Format::Csv => csv_text(
            &[
                "model_id",
                "model_name",
                "year",
                "variants",
                "electricity_kwh_per_100km",
                "gasoline_l_per_100km",
            ],
            rows.iter().map(|r| {
                vec![
                    r.model_id.into(),
                    r.model_name.into(),
                    r.year.to_string(),
                    r.variants.to_string(),
                    r.electricity_kwh_per_100km.to_string(),
                    r.gasoline_l_per_100km.to_string(),
                ]
            }),
        ),
        Format::Table => table(
            &format!("Energy intensity (eta = {eta})"),
            &[
                "model",
                "name",
                "year",
                "variants",
                "EI kWh/100km",
                "GI L/100km",
            ],
            &rows
                .iter()
                .map(|r| {
                    vec![
                        r.model_id.into(),
                        r.model_name.into(),
                        r.year.to_string(),
                        r.variants.to_string(),
                        r1(r.electricity_kwh_per_100km),
                        r1(r.gasoline_l_per_100km),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
    })
}

// ---------------------------------------------------------------------------
// energy and emissions

/// Columns a value type contributes to tables and CSV.
trait Columns: Copy {
    const NAMES: &'static [&'static str];
    const HEADINGS: &'static [&'static str];
    fn values(&self) -> Vec<f64>;
}

impl Columns for EnergyValues {
    const NAMES: &'static [&'static str] = &["electricity_tj", "gasoline_tj", "total_tj"];
    const HEADINGS: &'static [&'static str] = &["electricity TJ", "gasoline TJ", "total TJ"];
    fn values(&self) -> Vec<f64> {
        vec![self.electricity_tj, self.gasoline_tj, self.total_tj]
    }
}

impl Columns for ResultValues {
    const NAMES: &'static [&'static str] = &[
        "electricity_tj",
        "gasoline_tj",
        "total_tj",
        "cee_ktco2",
        "ceg_ktco2",
        "ce_ktco2",
    ];
    const HEADINGS: &'static [&'static str] = &[
        "electricity TJ",
        "gasoline TJ",
        "total TJ",
        "CEE ktCO2",
        "CEG ktCO2",
        "CE ktCO2",
    ];
    fn values(&self) -> Vec<f64> {
        vec![
            self.electricity_tj,
            self.gasoline_tj,
            self.total_tj,
            self.cee_ktco2,
            self.ceg_ktco2,
            self.ce_ktco2,
        ]
    }
}

fn rollup_csv<V: Columns>(rollup: &Rollup<V>, national_independent: &[Scope<V>]) -> String {
    let mut header = vec!["level", "region", "year", "model_id", "vehicles"];
    header.extend(V::NAMES);
    let cell_row = |c: &Cell<V>| {
        let mut r = vec![
            "cell".into(),
            c.region.0.clone(),
            c.year.to_string(),
            c.model_id.0.clone(),
            c.sales.to_string(),
        ];
        r.extend(c.values.values().iter().map(f64::to_string));
        r
    };
    let scope_row = |level: &str, s: &Scope<V>| {
        let mut r = vec![
            level.into(),
            s.region.0.clone(),
            opt(s.year),
            String::new(),
            s.vehicles.to_string(),
        ];
        r.extend(s.values.values().iter().map(f64::to_string));
        r
    };
    let rows = rollup
        .cells
        .iter()
        .map(cell_row)
        .chain(
            rollup
                .region_years
                .iter()
                .map(|s| scope_row("region_year", s)),
        )
        .chain(rollup.regions.iter().map(|s| scope_row("region", s)))
        .chain(
            rollup
                .national_years
                .iter()
                .map(|s| scope_row("national_year", s)),
        )
        .chain(std::iter::once(scope_row("national", &rollup.national)))
        .chain(
            national_independent
                .iter()
                .map(|s| scope_row("national_independent", s)),
        )
        .collect::<Vec<_>>();
    csv_text(&header, rows)
}

fn rollup_table<V: Columns>(
    title: &str,
    rollup: &Rollup<V>,
    national_independent: &[Scope<V>],
) -> String {
    let mut header = vec!["region", "year", "vehicles"];
    header.extend(V::HEADINGS);
    let row = |s: &Scope<V>| {
        let (region, year) = scope_label(s.region.as_str(), s.year);
        let mut r = vec![region, year, s.vehicles.to_string()];
        r.extend(s.values.values().into_iter().map(r1));
        r
    };
    let mut rows: Vec<Vec<String>> = rollup.region_years.iter().map(row).collect();
    rows.extend(rollup.regions.iter().map(row));
    rows.extend(rollup.national_years.iter().map(row));
    rows.push(row(&rollup.national));
    let mut s = table(title, &header, &rows);
    if !national_independent.is_empty() {
        s.push('\n');
        s.push_str(&table(
            "Nationwide contexts evaluated directly",
            &header,
            &national_independent.iter().map(row).collect::<Vec<_>>(),
        ));
    }
    s
}

fn render_energy(format: Format, ds: &Dataset, exec: Execution) -> Result<String, Failure> {
    let rollup = evaluate_energy(ds.fleet(), exec)?;
    let national: Vec<Scope<EnergyValues>> = if ds.national_contexts.is_empty() {
        Vec::new()
    } else {
        independent_national(ds.national_fleet(), &BoundScenario::default(), exec)?
            .into_iter()
            .map(|s| Scope {
                region: s.region,
                year: s.year,
                vehicles: s.vehicles,
                values: s.values.energy(),
            })
            .collect()
    };
    Ok(match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Payload<'a> {
                #[serde(flatten)]
                rollup: &'a Rollup<EnergyValues>,
                #[serde(skip_serializing_if = "<[_]>::is_empty")]
                national_independent: &'a [Scope<EnergyValues>],
            }
            json(
                "energy",
                Some(&ds.metadata),
                Payload {
                    rollup: &rollup,
                    national_independent: &national,
                },
            )
        }
        Format::Csv => rollup_csv(&rollup, &national),
        Format::Table => rollup_table("Energy use", &rollup, &national),
    })
}

fn render_emissions(
    format: Format,
    ds: &Dataset,
    scenario: BoundScenario,
    exec: Execution,
) -> Result<String, Failure> {
    let rollup = evaluate(ds.fleet(), &scenario, exec)?;
    let national = if ds.national_contexts.is_empty() {
        Vec::new()
    } else {
        independent_national(ds.national_fleet(), &scenario, exec)?
    };
    Ok(match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Payload<'a> {
                scenario: BoundScenario,
                #[serde(flatten)]
                rollup: &'a Rollup<ResultValues>,
                #[serde(skip_serializing_if = "<[_]>::is_empty")]
                national_independent: &'a [Scope<ResultValues>],
            }
            json(
                "emissions",
                Some(&ds.metadata),
                Payload {
                    scenario,
                    rollup: &rollup,
                    national_independent: &national,
                },
            )
        }
        Format::Csv => rollup_csv(&rollup, &national),
        Format::Table => rollup_table(
            &format!("Emissions, {} scenario", scenario.label),
            &rollup,
            &national,
        ),
    })
}

fn render_bounds(format: Format, ds: &Dataset, exec: Execution) -> Result<String, Failure> {
    let rows = emission_bounds(ds.fleet(), exec)?.rows();
    let level = |r: &BoundRow| match (r.region.is_national(), r.year) {
        (false, Some(_)) => "region_year",
        (false, None) => "region",
        (true, Some(_)) => "national_year",
        (true, None) => "national",
    };
    Ok(match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Payload<'a> {
                scenarios: [BoundScenario; 3],
                rows: &'a [BoundRow],
            }
            json(
                "bounds",
                Some(&ds.metadata),
                Payload {
                    scenarios: Bound::ALL.map(BoundScenario::preset),
                    rows: &rows,
                },
            )
        }
        Format::Csv => csv_text(
            &[
                "level",
                "region",
                "year",
                "cee_lower_ktco2",
                "cee_default_ktco2",
                "cee_upper_ktco2",
                "ceg_lower_ktco2",
                "ceg_default_ktco2",
                "ceg_upper_ktco2",
                "ce_lower_ktco2",
                "ce_default_ktco2",
                "ce_upper_ktco2",
            ],
            rows.iter().map(|r| {
                let mut v = vec![level(r).into(), r.region.0.clone(), opt(r.year)];
                for triple in [r.cee_ktco2, r.ceg_ktco2, r.ce_ktco2] {
                    v.extend(triple.iter().map(f64::to_string));
                }
                v
            }),
        ),
        Format::Table => table(
            "Emission bounds, ktCO2 (lower / default / upper)",
            &["region", "year", "CEE", "CEG", "CE"],
            &rows
                .iter()
                .map(|r| {
                    let (region, year) = scope_label(r.region.as_str(), r.year);
                    let t = |v: [f64; 3]| format!("{} / {} / {}", r1(v[0]), r1(v[1]), r1(v[2]));
                    vec![region, year, t(r.cee_ktco2), t(r.ceg_ktco2), t(r.ce_ktco2)]
                })
                .collect::<Vec<_>>(),
        ),
    })
}

fn render_sweep(
    format: Format,
    ds: &Dataset,
    spec: &SweepSpec,
    exec: Execution,
) -> Result<String, Failure> {
    let table_data: SweepTable = sweep(spec, ds.fleet(), exec)?;
    let scopes = |row: &'_ crate::uncertainty::SweepRow| -> Vec<(&'static str, SweepScope)> {
        std::iter::once(("national", row.national.clone()))
            .chain(
                row.national_years
                    .iter()
                    .map(|s| ("national_year", s.clone())),
            )
            .chain(row.regions.iter().map(|s| ("region", s.clone())))
            .collect()
    };
    Ok(match format {
        Format::Json => json("sweep", Some(&ds.metadata), &table_data),
        Format::Csv => csv_text(
            &[
                "parameter",
                "value",
                "baseline",
                "level",
                "region",
                "year",
                "vehicles",
                "cee_ktco2",
                "ceg_ktco2",
                "ce_ktco2",
                "per_vehicle_kgco2",
                "ce_change_pct",
                "per_vehicle_change_pct",
            ],
            table_data.rows.iter().flat_map(|row| {
                scopes(row).into_iter().map(|(level, s)| {
                    vec![
                        spec.parameter.as_str().into(),
                        row.value.to_string(),
                        table_data.baseline.to_string(),
                        level.into(),
                        s.region.0.clone(),
                        opt(s.year),
                        s.vehicles.to_string(),
                        s.cee_ktco2.to_string(),
                        s.ceg_ktco2.to_string(),
                        s.ce_ktco2.to_string(),
                        opt(s.per_vehicle_kgco2),
                        opt(s.ce_change_pct),
                        opt(s.per_vehicle_change_pct),
                    ]
                })
            }),
        ),
        Format::Table => {
            // national totals only; JSON and CSV carry every scope
            let rows: Vec<Vec<String>> = table_data
                .rows
                .iter()
                .map(|row| {
                    let s = &row.national;
                    vec![
                        row.value.to_string(),
                        s.vehicles.to_string(),
                        r1(s.cee_ktco2),
                        r1(s.ceg_ktco2),
                        r1(s.ce_ktco2),
                        s.per_vehicle_kgco2.map(r1).unwrap_or_else(|| "n/a".into()),
                        pct(s.ce_change_pct),
                        pct(s.per_vehicle_change_pct),
                    ]
                })
                .collect();
            table(
                &format!(
                    "Sweep over {}, nationwide (baseline {})",
                    spec.parameter, table_data.baseline
                ),
                &[
                    spec.parameter.as_str(),
                    "vehicles",
                    "CEE kt",
                    "CEG kt",
                    "CE kt",
                    "kgCO2/vehicle",
                    "CE %",
                    "per-vehicle %",
                ],
                &rows,
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_dir() -> String {
        concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/example").to_owned()
    }

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("phev-carbon").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn table_aligns_columns() {
        let t = table("", &["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\n---  --\nxyz   1\n");
    }

    #[test]
    fn missing_paths_is_usage_error() {
        let (code, _, err) = run_args(&["energy"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--data"));
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run_args(&["energy", "--bogus"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("sweep"));
    }

    #[test]
    fn validate_example_is_ok() {
        let (code, out, _) = run_args(&["validate", "--data", &example_dir()]);
        assert_eq!(code, EXIT_OK, "{out}");
        assert!(out.starts_with("OK: 0 errors"));
    }

    #[test]
    fn sweep_mu_requires_baseline() {
        let (code, _, err) = run_args(&[
            "sweep",
            "--data",
            &example_dir(),
            "--param",
            "mu-electric",
            "--values",
            "0.4,0.6",
        ]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--baseline"));
    }

    #[test]
    fn sweep_rejects_out_of_domain_values() {
        let (code, _, err) = run_args(&[
            "sweep",
            "--data",
            &example_dir(),
            "--param",
            "eta",
            "--values",
            "0.5,1.2",
        ]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("1.2"));
    }
}
