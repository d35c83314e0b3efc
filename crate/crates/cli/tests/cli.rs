use std::fs;
use std::process::{Command, Output};

use optoent_cli::table::Table;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optoent")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn first(csv: &str, column: &str) -> f64 {
    let t = Table::parse_csv(csv.as_bytes()).unwrap();
    t.values(column).unwrap()[0].unwrap()
}

fn close(a: f64, b: f64) {
    assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        ok(&[
            "sweep", "--axis", "n_th", "--range", "100,1e5,5", "--spacing", "log", "--methods",
            "closed_form,exact,witness", "--no-timestamp", "-o", path.to_str().unwrap(),
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn timestamp_line_is_optional() {
    let with = ok(&["epr", "--methods", "closed_form"]);
    assert!(with.starts_with("# generated unix_time="));
    let without = ok(&["epr", "--methods", "closed_form", "--no-timestamp"]);
    assert!(without.starts_with("axis_value,"));
    assert_eq!(Table::parse_csv(with.as_bytes()).unwrap(), Table::parse_csv(without.as_bytes()).unwrap());
}

#[test]
fn flag_overrides_file_overrides_default() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let cfg = cfg.to_str().unwrap();
    let base = ["epr", "--methods", "closed_form", "--no-timestamp"];
    let with = |extra: &[&str]| {
        let mut v = base.to_vec();
        v.extend_from_slice(extra);
        ok(&v)
    };

    close(first(&with(&[]), "c_q"), 1.0);

    fs::write(cfg, "c_q = 0.5\nn_th = 300.0\n").unwrap();
    let out = with(&["--config", cfg]);
    close(first(&out, "c_q"), 0.5);

    let out = with(&["--config", cfg, "--c-q", "2"]);
    close(first(&out, "c_q"), 2.0);

    // A coupling given as g on the command line replaces the file's c_q.
    let out = with(&["--config", cfg, "--g-hz", "1000"]);
    assert_eq!(first(&out, "g_hz"), 1000.0);
    assert!((first(&out, "c_q") - 0.5).abs() > 1e-3);

    fs::write(cfg, "g_hz = 1000.0\n").unwrap();
    let out = with(&["--config", cfg, "--c-q", "3"]);
    close(first(&out, "c_q"), 3.0);
}

#[test]
fn json_output_parses() {
    let out = ok(&["epr", "--methods", "closed_form,exact", "--format", "json"]);
    let t = Table::parse_json(out.as_bytes()).unwrap();
    assert_eq!(t.rows.len(), 1);
    let v = t.values("exact").unwrap()[0].unwrap();
    assert!((v - 1.5).abs() < 0.03);
}

#[test]
fn bad_input_exits_two() {
    assert_eq!(run(&["epr", "--eta", "2"]).status.code(), Some(2));
    assert_eq!(run(&["epr", "--c-q", "1", "--g-hz", "1"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "cq = 1.0\n").unwrap();
    assert_eq!(run(&["epr", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));

    // Blue detuning at strong coupling is dynamically unstable.
    let out = run(&["stability", "--c-q", "100", "--delta-over-kappa", "0.5"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["stable"], false);
    let out = run(&["epr", "--c-q", "100", "--delta-over-kappa", "0.5", "--methods", "witness"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn montecarlo_refuses_oversized_runs() {
    let out = run(&["montecarlo"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn dump_transfer_shape() {
    let out = ok(&["dump-transfer", "--count", "11", "--no-timestamp"]);
    let t = Table::parse_csv(out.as_bytes()).unwrap();
    assert_eq!(t.columns.len(), 17);
    assert_eq!(t.columns[0], "omega");
    assert_eq!(t.rows.len(), 11);
}

#[test]
fn stability_reports_four_eigenvalues() {
    let v: serde_json::Value = serde_json::from_str(&ok(&["stability"])).unwrap();
    assert_eq!(v["drift_eigen_real_parts"].as_array().unwrap().len(), 4);
    assert_eq!(v["stable"], true);
}

#[test]
fn figure_preset_row_count() {
    let out = ok(&["figure", "fig5", "--count", "3", "--no-timestamp"]);
    let t = Table::parse_csv(out.as_bytes()).unwrap();
    assert_eq!(t.rows.len(), 9);
    assert!(t.values("error").unwrap().iter().all(|v| v.is_none()));
}
