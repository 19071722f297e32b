//! End-to-end checks of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

use fdd_subspace::channel::ScenarioConfig;
use fdd_subspace::harness::run_scenario;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdd-subspace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().clone();
    let rows = reader.records().map(|r| r.unwrap()).collect();
    (header, rows)
}

fn field<'a>(header: &csv::StringRecord, row: &'a csv::StringRecord, name: &str) -> &'a str {
    let idx = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    &row[idx]
}

#[test]
fn short_pilot_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never.csv");
    let o = bin(&[
        "run", "--M", "4", "--tau", "2", "--rho-u-db", "5", "--rho-d-db", "10", "--trials", "5", "--seed", "1",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tau"));
    assert!(!out.exists());
}

#[test]
fn unknown_preset_and_bad_flags_exit_two() {
    assert_eq!(bin(&["run", "--preset", "nope", "--trials", "1"]).status.code(), Some(2));
    assert_eq!(bin(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        bin(&["run", "--preset", "fig4-iters", "--trials", "1", "--delta", "0.2"]).status.code(),
        Some(2)
    );
}

#[test]
fn presets_are_listed() {
    let o = bin(&["presets"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["fig3-ul", "fig3-dl", "fig4-iters", "fig5-gain"] {
        assert!(text.contains(name));
    }
}

#[test]
fn preset_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (name, rows) in [("fig3-ul", 48), ("fig3-dl", 63), ("fig4-iters", 20), ("fig5-gain", 64)] {
        let path = dir.path().join(format!("{name}.csv"));
        let o = bin(&["run", "--preset", name, "--trials", "2", "--seed", "1", "--out", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let (header, records) = read_csv(&path);
        assert_eq!(records.len(), rows, "{name}");
        assert!(records.iter().all(|r| field(&header, r, "status") == "ok"));
    }
}

#[test]
fn csv_round_trips_summary_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    let o = bin(&[
        "run", "--M", "8", "--tau", "8", "--rho-u-db", "3", "--rho-d-db", "12", "--trials", "60",
        "--seed", "9", "--delta", "0.05", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = read_csv(&path);
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    for (name, value) in header.iter().zip(row.iter()) {
        if name != "status" {
            assert!(value.parse::<f64>().is_ok() || value == "true" || value == "false", "{name} = {value}");
        }
    }

    let config = ScenarioConfig {
        antennas: 8,
        pilot_len: 8,
        dl_power: 10f64.powf(1.2),
        channel_gain: 1.0,
        target_ul_sinr: 10f64.powf(0.3),
        stop_threshold: 0.05,
        trials: 60,
        seed: 9,
    };
    let s = run_scenario(&config).unwrap().1;
    let parsed = |name| field(&header, row, name).parse::<f64>().unwrap();
    for (name, expected) in [
        ("alpha", s.alpha),
        ("rmse_ul_svd", s.rmse_ul_svd),
        ("rmse_dl_pi", s.rmse_dl_pi),
        ("rmse_dl_svd_se", s.rmse_dl_svd_se),
        ("crb_dl", s.crb.dl_crb),
        ("iter_mean", s.iter_mean),
        ("gain_rel_bias_ml", s.gain_rel_bias_ml),
        ("gain_rel_var_scm", s.gain_rel_var_scm),
    ] {
        assert_eq!(parsed(name).to_bits(), expected.to_bits(), "{name}");
    }
}

#[test]
fn json_output_parses() {
    let o = bin(&[
        "run", "--M", "4", "--tau", "6", "--P", "2", "--beta", "0.5", "--rho-u-db", "0", "--trials", "10", "--seed", "2",
        "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["tau"], 6);
    assert_eq!(rows[0]["status"], "ok");
}
