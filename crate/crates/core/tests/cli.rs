mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{example_dir, fixtures, materialize};
use serde_json::Value;

fn phev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phev-carbon"))
        .args(args)
        .output()
        .unwrap()
}

fn with_data(dir: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--data", dir.to_str().unwrap()];
    all.extend_from_slice(args);
    phev(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn validate_bundled_dataset() {
    let o = with_data(&example_dir(), &["validate"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 errors"));
}

#[test]
fn invalid_dataset_exits_one_with_report() {
    let dir = tempfile::tempdir().unwrap();
    materialize(&fixtures()[0], dir.path());
    let o = with_data(dir.path(), &["emissions"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nedc_aer_km"));

    let o = with_data(dir.path(), &["validate", "--format", "json"]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ok"], false);
    assert_eq!(v["errors"][0]["kind"], "out_of_domain");
    assert_eq!(v["errors"][0]["row"], 3);
}

#[test]
fn unreadable_paths_and_bad_flags_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(with_data(dir.path(), &["energy"]).status.code(), Some(2));
    assert_eq!(phev(&["energy"]).status.code(), Some(2));
    assert_eq!(
        with_data(&example_dir(), &["emissions", "--bound", "middle"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        with_data(&example_dir(), &["frobnicate"]).status.code(),
        Some(2)
    );
}

#[test]
fn explicit_file_flags_work() {
    let d = example_dir();
    let o = phev(&[
        "--catalog",
        d.join("catalog.csv").to_str().unwrap(),
        "--contexts",
        d.join("contexts.csv").to_str().unwrap(),
        "--constants",
        d.join("constants.toml").to_str().unwrap(),
        "energy",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("total TJ"));
}

#[test]
fn emissions_json_rolls_up_exactly() {
    let o = with_data(&example_dir(), &["emissions", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["scenario"]["label"], "default");
    let regions = v["regions"].as_array().unwrap();
    let folded = regions
        .iter()
        .fold(0.0, |acc, r| acc + r["ce_ktco2"].as_f64().unwrap());
    assert_eq!(folded, v["national"]["ce_ktco2"].as_f64().unwrap());
    let cells = v["cells"].as_array().unwrap();
    assert!(cells.iter().all(|c| c["ce_ktco2"].as_f64().unwrap()
        == c["cee_ktco2"].as_f64().unwrap() + c["ceg_ktco2"].as_f64().unwrap()));
    assert_eq!(v["national_independent"].as_array().unwrap().len(), 3);
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let json: Value = serde_json::from_slice(
        &with_data(&example_dir(), &["emissions", "--format", "json"]).stdout,
    )
    .unwrap();
    let csv = stdout(&with_data(
        &example_dir(),
        &["emissions", "--format", "csv"],
    ));
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let header = reader.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let national = reader
        .records()
        .map(Result::unwrap)
        .find(|r| &r[col("level")] == "national")
        .unwrap();
    for field in [
        "electricity_tj",
        "gasoline_tj",
        "total_tj",
        "cee_ktco2",
        "ceg_ktco2",
        "ce_ktco2",
    ] {
        let from_csv: f64 = national[col(field)].parse().unwrap();
        assert_eq!(
            from_csv,
            json["national"][field].as_f64().unwrap(),
            "{field}"
        );
    }
}

#[test]
fn eta_sweep_table_has_zero_change_at_baseline() {
    let o = with_data(
        &example_dir(),
        &["sweep", "--param", "eta", "--values", "0.70,0.75,0.80"],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(3).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0.75") && rows[1].contains("+0.0"));
}

#[test]
fn sweep_json_lists_every_value() {
    let o = with_data(
        &example_dir(),
        &[
            "sweep",
            "--param",
            "gasoline_factor",
            "--values",
            "0.9,1,1.1",
            "--format",
            "json",
        ],
    );
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["parameter"], "gasoline_factor");
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    assert_eq!(v["rows"][1]["national"]["ce_change_pct"], 0.0);
}

#[test]
fn bounds_and_intensity_run() {
    for cmd in ["bounds", "intensity"] {
        for format in ["table", "json", "csv"] {
            let o = with_data(&example_dir(), &[cmd, "--format", format]);
            assert_eq!(o.status.code(), Some(0), "{cmd} {format}");
            assert!(!o.stdout.is_empty());
        }
    }
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("energy.csv");
    let o = with_data(
        &example_dir(),
        &["energy", "--format", "csv", "--out", path.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("level,region,year,model_id,vehicles,electricity_tj"));
}

#[test]
fn json_output_is_byte_identical_across_runs_and_threads() {
    let a = with_data(&example_dir(), &["emissions", "--format", "json"]);
    let b = with_data(&example_dir(), &["emissions", "--format", "json"]);
    let c = with_data(
        &example_dir(),
        &["emissions", "--format", "json", "--serial"],
    );
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}
