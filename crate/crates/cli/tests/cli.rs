use std::path::Path;
use std::process::{Command, Output};

use firn::data::default_params;
use firn::forward::forward_end_state;
use firn::{Mesh, TestCase, TimeGrid};
use serde_json::Value;

fn firn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_firn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = firn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let k = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_case_is_a_usage_error() {
    let out = firn(&["forward", "--zf", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn malformed_values_are_usage_errors() {
    for args in [
        &["forward", "--case", "7"][..],
        &["forward", "--case", "1", "--h", "3/8"],
        &["forward", "--case", "1", "--dt", "h3"],
        &["invert", "--constraints", "sorted"],
    ] {
        assert_eq!(firn(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn invalid_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        &["forward", "--case", "1", "--zf", "-5", "--out", out][..],
        &[
            "forward", "--case", "1", "--mesh", "adaptive", "--h", "1/3", "--out", out,
        ],
        &["invert", "--data", "/nonexistent/data.csv", "--out", out],
        &[
            "forward",
            "--case",
            "1",
            "--config",
            "/nonexistent/run.conf",
        ],
    ] {
        assert_eq!(firn(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn solver_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = firn(&[
        "forward",
        "--case",
        "1",
        "--zf",
        "1e-200",
        "--h",
        "1/8",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver failure"));
}

#[test]
fn shallow_forward_run_is_smooth_and_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "forward", "--case", "1", "--zf", "1", "--te", "1", "--h", "1/16", "--out", out, "--trace",
    ]);
    let rho = column(&dir.path().join("solution.csv"), "rho");
    assert_eq!(rho.len(), 17);
    assert!(rho.windows(2).all(|w| w[1] < w[0]));

    let mesh = Mesh::uniform_cells(16).unwrap();
    let expected = forward_end_state(
        &mesh,
        &TimeGrid::with_intervals(16),
        &default_params(1.0, 1.0),
        &TestCase::Case1.profile(&mesh),
    )
    .unwrap()
    .values;
    for (a, b) in rho.iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
    }
    let z = column(&dir.path().join("solution.csv"), "z");
    assert_eq!(z, mesh.nodes());

    let trace = column(&dir.path().join("trace.csv"), "rho");
    assert_eq!(trace.len(), 17 * 17);
    assert_eq!(&trace[16 * 17..], &rho[..]);
    assert_eq!(json(&dir.path().join("forward.json"))["oscillating"], false);
}

#[test]
fn deep_forward_run_writes_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "forward", "--case", "1", "--zf", "150", "--te", "150", "--h", "1/256", "--dt", "h",
        "--out", out, "--svg",
    ]);
    let summary = json(&dir.path().join("forward.json"));
    assert_eq!(summary["nodes"], 257);
    assert_eq!(summary["oscillating"], false);
    let svg = std::fs::read_to_string(dir.path().join("solution.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));

    ok(&[
        "forward", "--case", "1", "--zf", "150", "--te", "150", "--h", "1/16", "--out", out,
    ]);
    assert_eq!(json(&dir.path().join("forward.json"))["oscillating"], true);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    let out = dir.path().join("out");
    std::fs::write(
        &conf,
        format!(
            "case = 2b\nzf = 50\nte = 150\nh = 1/8\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    ok(&["forward", "--config", conf.to_str().unwrap(), "--zf", "100"]);
    let summary = json(&out.join("forward.json"));
    assert_eq!(summary["case"], "case2b");
    assert_eq!(summary["params"]["depth"], 100.0);
    assert_eq!(summary["nodes"], 9);
}

#[test]
fn tables_reproduce_the_reference_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = ok(&[
        "tables", "--case", "1", "--zf", "1", "--te", "150", "--out", out,
    ]);
    assert!(stdout.contains("Runtimes"));

    let (header, rows) = read_csv(&dir.path().join("errors.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let row = rows.iter().find(|r| r[col("h")] == "1/128").unwrap();
    let linf: f64 = row[col("linf_rel")].parse().unwrap();
    assert!((linf / 2.58152757e-3 - 1.0).abs() < 1e-6, "{linf}");

    let (header, rows) = read_csv(&dir.path().join("runtime.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let pick = |mesh: &str, dt: &str, h: &str| {
        rows.iter()
            .find(|r| r[col("mesh")] == mesh && r[col("dt")] == dt && r[col("h")] == h)
            .unwrap_or_else(|| panic!("{mesh} {dt} {h}"))
    };
    assert_eq!(pick("adaptive", "h", "1/16")[col("nodes")], "49");
    assert_eq!(pick("adaptive", "h2", "1/64")[col("nodes")], "193");
    let per_step = |r: &Vec<String>| r[col("runtime_per_step_s")].parse::<f64>().unwrap();
    let ratio = per_step(pick("uniform", "h2", "1/256")) / per_step(pick("uniform", "h", "1/256"));
    assert!(ratio > 0.1 && ratio < 10.0, "{ratio}");
    assert!(std::fs::read_to_string(dir.path().join("tables.txt"))
        .unwrap()
        .contains("L2 rel"));
}

#[test]
fn gradient_check_passes_and_catches_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "gradcheck",
        "--case",
        "2d",
        "--zf",
        "5",
        "--te",
        "150",
        "--h",
        "1/16",
        "--out",
        out,
    ]);
    let report = json(&dir.path().join("gradcheck.json"));
    assert!(report["max_componentwise"].as_f64().unwrap() <= 1e-5);
    assert_eq!(report["passed"], true);

    ok(&[
        "gradcheck",
        "--h",
        "1/16",
        "--at",
        "100",
        "--dt",
        "h",
        "--out",
        out,
    ]);
    assert!(
        json(&dir.path().join("gradcheck.json"))["max_componentwise"]
            .as_f64()
            .unwrap()
            <= 1e-5
    );

    let bad = firn(&[
        "gradcheck",
        "--h",
        "1/16",
        "--corrupt-gradient",
        "1e-2",
        "--out",
        out,
    ]);
    assert!(!bad.status.success());
    assert_eq!(json(&dir.path().join("gradcheck.json"))["passed"], false);
}

#[test]
fn generated_data_round_trips_and_drives_inversion() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    ok(&[
        "generate",
        "--case",
        "2d",
        "--zf",
        "5",
        "--te",
        "150",
        "--out",
        data_dir.to_str().unwrap(),
    ]);
    let csv = data_dir.join("data.csv");
    let (header, rows) = read_csv(&csv);
    assert_eq!(header, ["z", "g_alpha1", "g_alpha2", "g_alpha3"]);
    assert_eq!(rows.len(), 66);
    let (data, meta) = firn::data::read_dataset(&csv).unwrap();
    let regenerated = firn::data::generate_data(TestCase::Case2d, &meta.params, 65).unwrap();
    for (a, b) in data.gases.iter().zip(&regenerated.gases) {
        assert_eq!(a.g, b.g);
    }

    let inv = dir.path().join("inv");
    let stdout = ok(&[
        "invert",
        "--data",
        csv.to_str().unwrap(),
        "--h",
        "1/16",
        "--out",
        inv.to_str().unwrap(),
        "--svg",
    ]);
    assert!(stdout.contains("relative L2 error"));
    let report = json(&inv.join("report.json"));
    let err = report["l2_relative_error"].as_f64().unwrap();
    assert!((0.1..1.0).contains(&err), "{err}");
    assert_eq!(report["config"]["beta"], "hz");
    assert!(inv.join("profile.svg").exists());
    assert_eq!(column(&inv.join("profile.csv"), "d").len(), 17);

    let dec = dir.path().join("dec");
    ok(&[
        "invert",
        "--data",
        csv.to_str().unwrap(),
        "--h",
        "1/64",
        "--constraints",
        "dec",
        "--method",
        "sd",
        "--tol",
        "1e-10",
        "--postprocess",
        "clamp",
        "--out",
        dec.to_str().unwrap(),
    ]);
    let err = json(&dec.join("report.json"))["l2_relative_error"]
        .as_f64()
        .unwrap();
    assert!((1e-3..1e-1).contains(&err), "{err}");
    let d = column(&dec.join("profile.csv"), "d");
    assert!(d.windows(2).all(|w| w[0] >= w[1]) && d.iter().all(|&v| v >= 0.0));
}

#[test]
fn inversion_started_at_the_truth_stops_at_once() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    ok(&[
        "generate",
        "--h",
        "1/16",
        "--ratios",
        "1",
        "--out",
        data_dir.to_str().unwrap(),
    ]);
    let csv = data_dir.join("data.csv");
    let out = dir.path().join("inv");
    ok(&[
        "invert",
        "--data",
        csv.to_str().unwrap(),
        "--h",
        "1/16",
        "--d0",
        "truth",
        "--out",
        out.to_str().unwrap(),
    ]);
    let report = json(&out.join("report.json"));
    assert!(report["iterations"].as_u64().unwrap() <= 1);
    assert_eq!(report["l2_relative_error"].as_f64().unwrap(), 0.0);
}

#[test]
fn noisy_generation_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&[
            "generate",
            "--h",
            "1/8",
            "--noise",
            "0.01",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        column(&out.join("data.csv"), "g_alpha1")
    };
    assert_eq!(run("a", "3"), run("b", "3"));
    assert_ne!(run("a", "3"), run("c", "4"));
}
