//! Shared test support: random fleets, an independent oracle, property checks
//! and corrupted dataset fixtures. Used by the integration tests and by the
//! acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use phev_carbon::aggregation::{
    evaluate, Execution, Fleet, Region, RegionCode, RegionYearContext, ResultValues, Rollup, Scope,
};
use phev_carbon::ingestion::IssueKind;
use phev_carbon::model::{
    split_avkt, Bound, Constants, FactorBounds, ModelId, VehicleModel, VehicleVariant,
};
use phev_carbon::uncertainty::{emission_bounds, BoundScenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REGIONS: [&str; 3] = ["N", "S", "Y"];
pub const YEARS: [i32; 3] = [2020, 2021, 2022];

pub fn example_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/example")
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

#[derive(Debug, Clone)]
pub struct RandomFleet {
    pub models: Vec<VehicleModel>,
    pub contexts: Vec<RegionYearContext>,
    pub constants: Constants,
}

impl RandomFleet {
    pub fn fleet(&self) -> Fleet<'_> {
        Fleet {
            models: &self.models,
            contexts: &self.contexts,
            constants: &self.constants,
        }
    }

    pub fn evaluate(&self, scenario: &BoundScenario) -> Rollup<ResultValues> {
        evaluate(self.fleet(), scenario, Execution::Parallel).expect("random fleets are valid")
    }
}

/// Up to 5 models with up to 4 variants per year, over 3 regions and 3 years.
/// Some models skip some years; their sales there are zero or absent.
pub fn random_fleet(seed: u64) -> RandomFleet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_models = rng.gen_range(1..=5);
    let mut models = Vec::new();
    for m in 0..n_models {
        let mu_e: f64 = rng.gen_range(0.0..=1.0);
        let mut variants = Vec::new();
        for &year in &YEARS {
            if rng.gen_bool(0.15) {
                continue;
            }
            for v in 0..rng.gen_range(1..=4) {
                variants.push(VehicleVariant {
                    variant_id: format!("v{v}"),
                    year,
                    battery_energy_kwh: rng.gen_range(5.0..60.0),
                    nedc_aer_km: rng.gen_range(40.0..250.0),
                    gasoline_intensity_l_per_100km: rng.gen_range(0.0..10.0),
                    // zero weights allowed as long as one variant is positive
                    popularity_weight: if v > 0 && rng.gen_bool(0.1) {
                        0.0
                    } else {
                        rng.gen_range(0.01..5.0)
                    },
                });
            }
        }
        if variants.is_empty() {
            variants.push(VehicleVariant {
                variant_id: "v0".into(),
                year: YEARS[0],
                battery_energy_kwh: 13.0,
                nedc_aer_km: 80.0,
                gasoline_intensity_l_per_100km: 5.0,
                popularity_weight: 1.0,
            });
        }
        models.push(VehicleModel {
            model_id: ModelId::new(format!("m{m}")),
            name: format!("Model {m}"),
            variants,
            mu_electric: mu_e,
            mu_gasoline: 1.0 - mu_e,
        });
    }

    let mut contexts = Vec::new();
    for code in REGIONS {
        for &year in &YEARS {
            let default = rng.gen_range(0.3..1.0);
            let lower = default * rng.gen_range(0.7..=1.0);
            let upper = default * rng.gen_range(1.0..1.4);
            let mut sales = BTreeMap::new();
            for m in &models {
                if rng.gen_bool(0.2) {
                    continue;
                }
                let units = if m.has_variants_in(year) {
                    rng.gen_range(0..50_000)
                } else {
                    0
                };
                sales.insert(m.model_id.clone(), units);
            }
            contexts.push(RegionYearContext {
                region: Region {
                    code: RegionCode::new(code),
                    name: format!("Region {code}"),
                },
                year,
                avkt_km: rng.gen_range(3_000.0..25_000.0),
                grid_factor_kgco2_per_kwh: FactorBounds {
                    lower: rng.gen_bool(0.8).then_some(lower),
                    default,
                    upper: Some(upper),
                },
                sales,
            });
        }
    }

    let fg = rng.gen_range(60_000.0..75_000.0);
    let constants = Constants {
        eta: rng.gen_range(0.4..=1.0),
        rho_kg_per_l: rng.gen_range(0.70..0.78),
        zeta_e_tj_per_kwh: 3.6e-6,
        zeta_g_tj_per_kg: rng.gen_range(4.2e-5..4.6e-5),
        gasoline_factor_kgco2_per_tj: Some(FactorBounds::new(
            fg * rng.gen_range(0.9..=1.0),
            fg,
            fg * rng.gen_range(1.0..1.1),
        )),
    };
    RandomFleet {
        models,
        contexts,
        constants,
    }
}

/// electricity_tj, gasoline_tj, total_tj, cee, ceg, ce
pub type Sextet = [f64; 6];

pub fn sextet(v: &ResultValues) -> Sextet {
    [
        v.electricity_tj,
        v.gasoline_tj,
        v.total_tj,
        v.cee_ktco2,
        v.ceg_ktco2,
        v.ce_ktco2,
    ]
}

#[derive(Debug, Default)]
pub struct OracleTotals {
    pub region_years: BTreeMap<(String, i32), Sextet>,
    pub regions: BTreeMap<String, Sextet>,
    pub national_years: BTreeMap<i32, Sextet>,
    pub national: Sextet,
}

fn bump(acc: &mut Sextet, t: &Sextet) {
    for (a, b) in acc.iter_mut().zip(t) {
        *a += b;
    }
}

/// Expands every total into one term per (context, model, variant) and sums
/// the terms directly, without going through intensities or cells.
pub fn oracle(rf: &RandomFleet, scenario: &BoundScenario) -> OracleTotals {
    let k = &rf.constants;
    let gasoline_factor = k.gasoline_factor_kgco2_per_tj.unwrap();
    let fg = gasoline_factor.get(scenario.gasoline).unwrap();
    let mut out = OracleTotals::default();
    for ctx in &rf.contexts {
        let g = &ctx.grid_factor_kgco2_per_kwh;
        let fe = match scenario.grid {
            Bound::Lower => g.lower.unwrap_or(g.default),
            b => g.get(b).unwrap(),
        };
        let mut ctx_total = [0.0; 6];
        for (model_id, &units) in &ctx.sales {
            if units == 0 {
                continue;
            }
            let m = rf.models.iter().find(|m| &m.model_id == model_id).unwrap();
            let variants: Vec<&VehicleVariant> =
                m.variants.iter().filter(|v| v.year == ctx.year).collect();
            let w_sum: f64 = variants.iter().map(|v| v.popularity_weight).sum();
            for v in variants {
                let share = v.popularity_weight / w_sum;
                let n = units as f64;
                let kwh = share
                    * (v.battery_energy_kwh / v.nedc_aer_km)
                    * (100.0 / k.eta)
                    * (m.mu_electric * ctx.avkt_km / 100.0)
                    * n;
                let litres = share
                    * v.gasoline_intensity_l_per_100km
                    * (m.mu_gasoline * ctx.avkt_km / 100.0)
                    * n;
                let e_tj = kwh * k.zeta_e_tj_per_kwh;
                let g_tj = litres * k.rho_kg_per_l * k.zeta_g_tj_per_kg;
                let cee = kwh * fe / 1e6;
                let ceg = g_tj * fg / 1e6;
                bump(
                    &mut ctx_total,
                    &[e_tj, g_tj, e_tj + g_tj, cee, ceg, cee + ceg],
                );
            }
        }
        let code = ctx.region.code.0.clone();
        bump(
            out.region_years
                .entry((code.clone(), ctx.year))
                .or_default(),
            &ctx_total,
        );
        bump(out.regions.entry(code).or_default(), &ctx_total);
        bump(out.national_years.entry(ctx.year).or_default(), &ctx_total);
        bump(&mut out.national, &ctx_total);
    }
    out
}

fn compare(what: &str, engine: &ResultValues, oracle: &Sextet, tol: f64) -> Result<(), String> {
    let e = sextet(engine);
    for (i, (a, b)) in e.iter().zip(oracle).enumerate() {
        if !rel_close(*a, *b, tol) {
            return Err(format!("{what} field {i}: engine {a} vs oracle {b}"));
        }
    }
    Ok(())
}

/// Engine totals at every rollup level against the oracle.
pub fn check_oracle(rf: &RandomFleet, scenario: &BoundScenario, tol: f64) -> Result<(), String> {
    let r = rf.evaluate(scenario);
    let o = oracle(rf, scenario);
    for s in &r.region_years {
        let key = (s.region.0.clone(), s.year.unwrap());
        compare(
            &format!("region-year {key:?}"),
            &s.values,
            &o.region_years[&key],
            tol,
        )?;
    }
    for s in &r.regions {
        compare(
            &format!("region {}", s.region),
            &s.values,
            &o.regions[&s.region.0],
            tol,
        )?;
    }
    for s in &r.national_years {
        compare(
            &format!("national {}", s.year.unwrap()),
            &s.values,
            &o.national_years[&s.year.unwrap()],
            tol,
        )?;
    }
    compare("national", &r.national.values, &o.national, tol)
}

fn all_scopes(r: &Rollup<ResultValues>) -> Vec<&Scope<ResultValues>> {
    r.region_years
        .iter()
        .chain(&r.regions)
        .chain(&r.national_years)
        .chain(std::iter::once(&r.national))
        .collect()
}

fn same_totals(a: &Rollup<ResultValues>, b: &Rollup<ResultValues>, tol: f64) -> Result<(), String> {
    for (x, y) in all_scopes(a).into_iter().zip(all_scopes(b)) {
        compare(
            &format!("{} {:?}", x.region, x.year),
            &x.values,
            &sextet(&y.values),
            tol,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Properties. Each takes a seed and returns the first violation found.

/// Scaling every popularity weight of a model by a positive constant leaves
/// all results unchanged.
pub fn prop_weight_scaling(seed: u64, factor: f64) -> Result<(), String> {
    let rf = random_fleet(seed);
    let base = rf.evaluate(&BoundScenario::default());
    let mut scaled = rf.clone();
    for m in &mut scaled.models {
        for v in &mut m.variants {
            v.popularity_weight *= factor;
        }
    }
    same_totals(&base, &scaled.evaluate(&BoundScenario::default()), 1e-12)
}

/// The electric and gasoline distances add back to the full distance, for
/// any split within tolerance of 1.
pub fn prop_split_conservation(seed: u64, mu_e: f64, slack: f64) -> Result<(), String> {
    let rf = random_fleet(seed);
    for ctx in &rf.contexts {
        for m in &rf.models {
            let mut m = m.clone();
            m.mu_electric = mu_e;
            m.mu_gasoline = 1.0 - mu_e + slack;
            let s = split_avkt(&m, ctx.avkt_km).map_err(|e| e.to_string())?;
            let whole = ctx.avkt_km / 100.0;
            let err = (s.electric_100km + s.gasoline_100km - whole).abs();
            if err > (slack.abs() + 1e-15) * whole + 1e-12 {
                return Err(format!(
                    "split of {} lost {err} (slack {slack})",
                    ctx.avkt_km
                ));
            }
        }
    }
    Ok(())
}

/// Splitting every region into two sub-regions with the same factors and
/// partitioned sales leaves the year and nationwide totals unchanged, and the
/// nationwide CE is exactly the fold of the regional CE.
pub fn prop_partition_invariance(seed: u64) -> Result<(), String> {
    let rf = random_fleet(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut split = rf.clone();
    split.contexts.clear();
    for ctx in &rf.contexts {
        let mut a = ctx.clone();
        let mut b = ctx.clone();
        a.region.code = RegionCode::new(format!("{}a", ctx.region.code));
        b.region.code = RegionCode::new(format!("{}b", ctx.region.code));
        a.region.name = format!("{} a", ctx.region.name);
        b.region.name = format!("{} b", ctx.region.name);
        for (id, &units) in &ctx.sales {
            let left = rng.gen_range(0..=units);
            a.sales.insert(id.clone(), left);
            b.sales.insert(id.clone(), units - left);
        }
        split.contexts.push(a);
        split.contexts.push(b);
    }
    let whole = rf.evaluate(&BoundScenario::default());
    let parts = split.evaluate(&BoundScenario::default());
    compare(
        "national",
        &parts.national.values,
        &sextet(&whole.national.values),
        1e-9,
    )?;
    for (x, y) in parts.national_years.iter().zip(&whole.national_years) {
        compare(
            &format!("year {:?}", x.year),
            &x.values,
            &sextet(&y.values),
            1e-9,
        )?;
    }
    for r in [&whole, &parts] {
        let folded = r.regions.iter().fold(0.0, |acc, s| acc + s.values.ce_ktco2);
        if folded != r.national.values.ce_ktco2 {
            return Err(format!(
                "national CE {} is not the fold of regions {folded}",
                r.national.values.ce_ktco2
            ));
        }
    }
    Ok(())
}

/// Results are linear in sales: scaling by k scales every total by k, and
/// summing two sales tables sums the results.
pub fn prop_sales_linearity(seed: u64, k: u64) -> Result<(), String> {
    let rf = random_fleet(seed);
    let scenario = BoundScenario::default();
    let base = rf.evaluate(&scenario);
    let mut scaled = rf.clone();
    for ctx in &mut scaled.contexts {
        for units in ctx.sales.values_mut() {
            *units *= k;
        }
    }
    let scaled = scaled.evaluate(&scenario);
    for (x, y) in all_scopes(&scaled).into_iter().zip(all_scopes(&base)) {
        let expected = sextet(&y.values).map(|v| v * k as f64);
        compare(
            &format!("{} {:?} x{k}", x.region, x.year),
            &x.values,
            &expected,
            1e-9,
        )?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let (mut a, mut b) = (rf.clone(), rf.clone());
    for (ca, cb) in a.contexts.iter_mut().zip(&mut b.contexts) {
        for (ua, ub) in ca.sales.values_mut().zip(cb.sales.values_mut()) {
            *ua = rng.gen_range(0..=*ua);
            *ub -= *ua;
        }
    }
    let (ra, rb) = (a.evaluate(&scenario), b.evaluate(&scenario));
    for ((x, y), z) in all_scopes(&base)
        .into_iter()
        .zip(all_scopes(&ra))
        .zip(all_scopes(&rb))
    {
        let mut sum = sextet(&y.values);
        bump(&mut sum, &sextet(&z.values));
        compare(
            &format!("{} {:?} additivity", x.region, x.year),
            &x.values,
            &sum,
            1e-9,
        )?;
    }
    Ok(())
}

/// lower <= default <= upper for every carrier at every rollup level.
pub fn prop_bound_ordering(seed: u64) -> Result<(), String> {
    let rf = random_fleet(seed);
    let bounds = emission_bounds(rf.fleet(), Execution::Parallel).map_err(|e| e.to_string())?;
    match bounds.rows().into_iter().find(|r| !r.is_ordered()) {
        Some(r) => Err(format!("unordered bounds {r:?}")),
        None => Ok(()),
    }
}

/// Adding sales to one cell never lowers any total.
pub fn prop_sales_monotonicity(seed: u64, extra: u64) -> Result<(), String> {
    let rf = random_fleet(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31));
    let mut more = rf.clone();
    let ci = rng.gen_range(0..more.contexts.len());
    let ctx = &mut more.contexts[ci];
    let candidates: Vec<ModelId> = rf
        .models
        .iter()
        .filter(|m| m.has_variants_in(ctx.year))
        .map(|m| m.model_id.clone())
        .collect();
    if candidates.is_empty() {
        return Ok(());
    }
    let id = candidates[rng.gen_range(0..candidates.len())].clone();
    *ctx.sales.entry(id).or_insert(0) += extra;

    for bound in Bound::ALL {
        let scenario = BoundScenario::preset(bound);
        let (lo, hi) = (rf.evaluate(&scenario), more.evaluate(&scenario));
        for (x, y) in all_scopes(&lo).into_iter().zip(all_scopes(&hi)) {
            let (a, b) = (sextet(&x.values), sextet(&y.values));
            if a.iter().zip(&b).any(|(a, b)| b < a) {
                return Err(format!(
                    "{} {:?} decreased: {a:?} -> {b:?}",
                    x.region, x.year
                ));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Corrupted dataset fixtures, built by editing a copy of the bundled dataset.

pub struct Fixture {
    pub name: &'static str,
    pub file: &'static str,
    pub mutate: fn(&str) -> String,
    pub expected: IssueKind,
}

/// Replaces the value of `column` on data line `row` (1 = first data row).
pub fn set_cell(text: &str, row: usize, column: &str, value: &str) -> String {
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let col = lines[0]
        .split(',')
        .position(|h| h == column)
        .expect("column exists");
    let mut cells: Vec<&str> = lines[row].split(',').collect();
    cells[col] = value;
    lines[row] = cells.join(",");
    lines.join("\n") + "\n"
}

fn drop_column(text: &str, column: &str) -> String {
    let col = text
        .lines()
        .next()
        .unwrap()
        .split(',')
        .position(|h| h == column)
        .unwrap();
    text.lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(col);
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

fn on_model_rows(text: &str, model: &str, f: impl Fn(&str) -> String) -> String {
    text.lines()
        .map(|l| {
            if l.starts_with(&format!("{model},")) {
                f(l)
            } else {
                l.to_owned()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

pub fn fixtures() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "zero electric range",
            file: "catalog.csv",
            mutate: |t| set_cell(t, 2, "nedc_aer_km", "0"),
            expected: IssueKind::OutOfDomain,
        },
        Fixture {
            name: "negative battery energy",
            file: "catalog.csv",
            mutate: |t| set_cell(t, 5, "battery_energy_kwh", "-12.5"),
            expected: IssueKind::OutOfDomain,
        },
        Fixture {
            name: "blank catalog cell",
            file: "catalog.csv",
            mutate: |t| set_cell(t, 3, "gasoline_l_per_100km", ""),
            expected: IssueKind::MissingValue,
        },
        Fixture {
            name: "non-numeric distance",
            file: "contexts.csv",
            mutate: |t| set_cell(t, 1, "avkt_km", "13k"),
            expected: IssueKind::Malformed,
        },
        Fixture {
            name: "missing catalog column",
            file: "catalog.csv",
            mutate: |t| drop_column(t, "popularity_weight"),
            expected: IssueKind::MissingColumn,
        },
        Fixture {
            name: "split sums to 1.2",
            file: "catalog.csv",
            mutate: |t| {
                on_model_rows(t, "m01", |l| {
                    let mut c: Vec<&str> = l.split(',').collect();
                    c[8] = "0.6";
                    c[9] = "0.6";
                    c.join(",")
                })
            },
            expected: IssueKind::SplitTolerance,
        },
        Fixture {
            name: "split disagrees within a model",
            file: "catalog.csv",
            mutate: |t| {
                let row = t.lines().position(|l| l.starts_with("m02,")).unwrap() + 1;
                let t = set_cell(t, row, "mu_electric", "0.5");
                set_cell(&t, row, "mu_gasoline", "0.5")
            },
            expected: IssueKind::Inconsistent,
        },
        Fixture {
            name: "sales for undeclared model",
            file: "sales.csv",
            mutate: |t| format!("{t}S,2021,m99,250\n"),
            expected: IssueKind::DanglingReference,
        },
        Fixture {
            name: "duplicate context",
            file: "contexts.csv",
            mutate: |t| {
                let line = t.lines().nth(2).unwrap();
                format!("{t}{line}\n")
            },
            expected: IssueKind::DuplicateKey,
        },
        Fixture {
            name: "grid default above upper",
            file: "contexts.csv",
            mutate: |t| set_cell(t, 4, "grid_factor_default_kgco2_per_kwh", "1.5"),
            expected: IssueKind::OutOfDomain,
        },
        Fixture {
            name: "gasoline conversion factor missing",
            file: "constants.toml",
            mutate: |t| {
                t.lines()
                    .filter(|l| !l.starts_with("zeta_g_tj_per_kg"))
                    .collect::<Vec<_>>()
                    .join("\n")
            },
            expected: IssueKind::MissingConstant,
        },
        Fixture {
            name: "all-zero popularity weights",
            file: "catalog.csv",
            mutate: |t| {
                on_model_rows(t, "m01", |l| {
                    let mut c: Vec<&str> = l.split(',').collect();
                    c[7] = "0";
                    c.join(",")
                })
            },
            expected: IssueKind::DegenerateWeights,
        },
    ]
}

/// Copies the bundled dataset into `dir` and applies the fixture's edit.
pub fn materialize(fixture: &Fixture, dir: &Path) {
    for name in ["catalog.csv", "contexts.csv", "sales.csv", "constants.toml"] {
        let text = fs::read_to_string(example_dir().join(name)).unwrap();
        let text = if name == fixture.file {
            (fixture.mutate)(&text)
        } else {
            text
        };
        fs::write(dir.join(name), text).unwrap();
    }
}
