use std::path::Path;
use std::process::{Command, Output};

use spinpair::io::{read_spectrum, write_peaks};
use spinpair::{site_b, transition_lines, Peak, Vector3};

fn spinpair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinpair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = spinpair(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(spinpair(&["simulate", "--bogus"]).status.code(), Some(1));
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(spinpair(&["--help"]).status.code(), Some(0));
    assert_eq!(spinpair(&["--version"]).status.code(), Some(0));
}

#[test]
fn missing_model_source_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    assert_eq!(
        spinpair(&["simulate", "--out", path(&out)]).status.code(),
        Some(1)
    );
}

#[test]
fn bad_input_files_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let peaks = dir.path().join("p.csv");
    std::fs::write(&peaks, "field_T,frequency_GHz\n0.1,abc\n").unwrap();
    let out = dir.path().join("f.json");
    let o = spinpair(&[
        "fit",
        "--peaks",
        path(&peaks),
        "--preset",
        "siteB",
        "--free",
        "g0z",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(":2:") && err.contains("abc"), "{err}");

    let o = spinpair(&["simulate", "--preset", "siteZ", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dipole_reports_the_site_b_coupling() {
    let o = spinpair(&[
        "dipole",
        "--g1",
        "232",
        "--g2",
        "232",
        "--r-angstrom",
        "5.4",
        "--axis",
        "0,0,1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let line = text
        .lines()
        .find(|l| l.starts_with("|J_dd,zz|"))
        .expect("coupling line");
    let value: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((value - 45.3).abs() < 0.05, "{line}");
}

#[test]
fn dipole_scan_needs_measured_couplings() {
    let o = spinpair(&[
        "dipole",
        "--g1",
        "232",
        "--g2",
        "232",
        "--r-angstrom",
        "5.4",
        "--scan",
        "3:8:11",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.json");
    let o = spinpair(&[
        "dipole",
        "--g1",
        "232",
        "--g2",
        "232",
        "--r-angstrom",
        "5.4",
        "--jobs",
        "209,233,220",
        "--scan",
        "3:8:11",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["scan"]["reports"].as_array().unwrap().len(), 11);
}

#[test]
fn simulate_site_b_shows_four_line_groups_at_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.csv");
    let img = dir.path().join("map.pgm");
    let ac = dir.path().join("ac.json");
    let o = spinpair(&[
        "simulate",
        "--preset",
        "siteB",
        "--bmin",
        "-0.2",
        "--bmax",
        "0.2",
        "--steps",
        "41",
        "--out",
        path(&map),
        "--png-out",
        path(&img),
        "--anticross-out",
        path(&ac),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let m = read_spectrum(&map).unwrap();
    let zero = m
        .fields
        .iter()
        .position(|b| b.abs() < 1e-12)
        .expect("zero-field column");
    let col = &m.intensity[zero];
    let top = col.iter().cloned().fold(0.0, f64::max);
    let groups = (1..col.len() - 1)
        .filter(|&k| col[k] > col[k - 1] && col[k] >= col[k + 1] && col[k] > 0.05 * top)
        .count();
    assert_eq!(groups, 4);

    let header = std::fs::read(&img).unwrap();
    assert!(header.starts_with(b"P5"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&ac).unwrap()).unwrap();
    let optical = report["anticrossings"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a["kind"] == "optical")
        .count();
    assert_eq!(optical, 2);
}

#[test]
fn preset_round_trips_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b.json");
    assert_eq!(
        spinpair(&["preset", "siteB-ising", "--out", path(&cfg)])
            .status
            .code(),
        Some(0)
    );
    let list = stdout(&spinpair(&["preset", "--list"]));
    assert_eq!(
        list.lines().collect::<Vec<_>>(),
        ["siteA", "siteB", "siteB-ising"]
    );
    let map = dir.path().join("m.csv");
    let o = spinpair(&[
        "simulate",
        "--config",
        path(&cfg),
        "--steps",
        "11",
        "--out",
        path(&map),
    ]);
    assert_eq!(o.status.code(), Some(0));
}

fn synthetic_peaks(dir: &Path) -> std::path::PathBuf {
    let model = site_b();
    let mut peaks = Vec::new();
    for k in 1..=4 {
        let b = 0.15 * k as f64;
        for l in transition_lines(&model, Vector3::new(0.0, 0.0, b)).unwrap() {
            if l.intensity > 0.05 {
                peaks.push(Peak::new(b, l.frequency));
            }
        }
    }
    let p = dir.join("peaks.csv");
    write_peaks(&peaks, &p).unwrap();
    p
}

#[test]
fn fit_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let peaks = synthetic_peaks(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = spinpair(&[
            "fit",
            "--peaks",
            path(&peaks),
            "--preset",
            "siteB",
            "--free",
            "delta",
            "--seed",
            "7",
            "--restarts",
            "1",
            "--out",
            path(&out),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        std::fs::read_to_string(out).unwrap()
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!(v["fit"].is_object() && v["model"].is_object());
}

#[test]
fn extract_writes_a_peak_list() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    let mut text = String::from("field_T,frequency_GHz,current\n");
    for i in 0..5 {
        let b = 0.1 * i as f64;
        for j in 0..101 {
            let f = -5.0 + 0.1 * j as f64;
            let ridge = 10.0 * (-(f - 2.0 * b).powi(2) / 0.02).exp();
            // deterministic ripple standing in for noise
            let ripple = 0.01 * ((7 * j + 3 * i) % 11) as f64;
            text.push_str(&format!("{b},{f},{}\n", ridge + ripple));
        }
    }
    std::fs::write(&raw, text).unwrap();
    let out = dir.path().join("peaks.csv");
    let o = spinpair(&["extract", "--map", path(&raw), "--out", path(&out)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let peaks = spinpair::io::read_peaks(&out).unwrap();
    assert_eq!(peaks.len(), 5);
    for p in peaks {
        assert!((p.frequency - 2.0 * p.field).abs() < 0.05);
    }
}
