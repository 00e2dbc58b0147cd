use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data").join(name)
}

fn mmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmg")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn run(scenario: &Path, solver: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--scenario", scenario.to_str().unwrap(), "--solver", solver, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    mmg(&args)
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn check<'a>(rep: &'a Value, name: &str) -> &'a Value {
    rep["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn linear_run_writes_one_row_per_agent_and_node() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = run(&data("linear_four.json"), "linear", &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("paths.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,agent,Q,Y,delta_a,delta_b,best_ask,best_bid");
    assert_eq!(lines.count(), 4 * 1001);
    let rep = report(&out);
    assert_eq!(rep["solver"], "linear");
    assert_eq!(check(&rep, "ordering")["pass"], true);
    assert_eq!(rep["artifacts"], serde_json::json!(["paths.csv", "report.json"]));
}

#[test]
fn csv_uses_seventeen_significant_digits_in_document_order() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(code(&run(&data("linear_four.json"), "linear", &out, &["--steps", "100"])), 0);
    let csv = fs::read_to_string(out.join("paths.csv")).unwrap();
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    // document agent 0 has q0 = 1.8
    assert_eq!(first[..3], ["0", "0", "1.8"]);
    let third: Vec<&str> = csv.lines().nth(3).unwrap().split(',').collect();
    assert_eq!(third[2], "0.40000000000000002");
    assert_eq!(csv.lines().count(), 1 + 4 * 101);
}

#[test]
fn general_run_reports_certificates() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = run(&data("general_duo.json"), "general", &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rep = report(&out);
    for name in ["isaacs_gap", "ordering", "xi_independence", "terminal_gap"] {
        assert_eq!(check(&rep, name)["pass"], true, "{name}");
    }
    assert!(rep["details"]["shooting"]["converged"].as_bool().unwrap());
}

#[test]
fn output_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(code(&run(&data("quasi_sample.json"), "quasi", out, &["--steps", "100"])), 0);
    }
    for f in ["paths.csv", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // stable top-level key order
    let text = fs::read_to_string(a.join("report.json")).unwrap();
    let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
    assert!(pos("scenario_id") < pos("solver") && pos("solver") < pos("checks") && pos("checks") < pos("artifacts"));
}

#[test]
fn hetero_breakdown_flag() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = run(&data("hetero_breakdown.json"), "hetero", &out, &["--breakdown", "1,2,3,4,5"]);
    assert_eq!(code(&o), 0);
    let rep = report(&out);
    let b = &rep["details"]["breakdown"];
    assert!(b["delta_y0"].as_f64().unwrap() > 0.0);
    assert!(b["crossing_time"].as_f64().unwrap() < b["t_star"].as_f64().unwrap());
    assert_eq!(rep["details"]["terminal_factor"], 1);

    let out2 = tmp.path().join("o2");
    assert_eq!(code(&run(&data("hetero_breakdown.json"), "hetero", &out2, &["--terminal-factor", "2"])), 0);
    assert_eq!(report(&out2)["details"]["terminal_factor"], 2);
}

#[test]
fn failed_check_exits_with_four() {
    // exchange-symmetric data: ΔY ≡ 0, so no breakdown can be found
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(data("hetero_breakdown.json")).unwrap().replace("\"A\": 2.0", "\"A\": 1.0").replace("1.5, \"phi\"", "1.0, \"phi\"");
    let sc = write(&tmp, "sym.json", &text);
    let out = tmp.path().join("o");
    let o = run(&sc, "hetero", &out, &["--breakdown", "1,2"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(check(&report(&out), "breakdown_found")["pass"], false);
}

#[test]
fn validation_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let base = fs::read_to_string(data("general_duo.json")).unwrap();

    let unknown = write(&tmp, "unknown.json", &base.replace("\"steps\": 1000,", "\"steps\": 1000, \"colour\": 1,"));
    assert_eq!(code(&run(&unknown, "general", &out, &[])), 2);
    // linear solver needs ζ; hetero needs the linear model
    assert_eq!(code(&run(&data("general_duo.json"), "linear", &out, &[])), 2);
    assert_eq!(code(&run(&data("general_duo.json"), "hetero", &out, &[])), 2);
    assert_eq!(code(&run(&data("linear_four.json"), "hetero", &out, &[])), 2);
    assert_eq!(code(&run(&tmp.path().join("missing.json"), "linear", &out, &[])), 2);
    assert_eq!(code(&run(&data("linear_four.json"), "linear", &out, &["--terminal-factor", "3"])), 2);
    assert_eq!(code(&run(&data("linear_four.json"), "linear", &out, &["--steps", "0"])), 2);
    assert_eq!(code(&mmg(&["run", "--scenario", "x", "--solver", "newton", "--out", "o"])), 2);
}

#[test]
fn unreachable_tolerance_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let o = run(&data("general_duo.json"), "general", &tmp.path().join("o"), &["--tol", "1e-300", "--steps", "40"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn matrix_check() {
    let tmp = TempDir::new().unwrap();
    let classify = |text: &str| -> (i32, Option<Value>) {
        let p = write(&tmp, "m.txt", text);
        let o = mmg(&["check", "--matrix", p.to_str().unwrap()]);
        (code(&o), serde_json::from_slice(&o.stdout).ok())
    };
    let (c, m0) = classify("1 -1\n-1 1\n");
    assert_eq!(c, 0);
    assert_eq!(m0.as_ref().unwrap()["is_M0"], true);
    let (_, id) = classify("1 0\n0 1\n");
    let id = id.unwrap();
    assert_eq!((id["is_M"].as_bool(), id["is_M0"].as_bool()), (Some(true), Some(false)));
    let (_, dom) = classify("2,-1\n0,3\n");
    assert_eq!(dom.unwrap()["varah_bound"], 1.0);
    assert_eq!(classify("1 2 3\n4 5 6\n").0, 2);
}

#[test]
fn sweep_over_horizon_and_penalty() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("t");
    let o = mmg(&["sweep", "--scenario", data("hetero_breakdown.json").to_str().unwrap(), "--param", "T", "--values", "1,2,4", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let head: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = head.iter().position(|h| *h == "DeltaY0").unwrap();
    let dy: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert_eq!(dy.len(), 3);
    assert!(dy.iter().all(|&d| d > 0.0));
    for k in 0..3 {
        assert!(out.join(format!("run_{k:03}/paths.csv")).exists());
    }

    let out = tmp.path().join("a");
    let o = Command::new(env!("CARGO_BIN_EXE_mmg"))
        .args(["sweep", "--scenario", data("identical_impact.json").to_str().unwrap(), "--param", "A", "--values", "0,0.5,1", "--out", out.to_str().unwrap()])
        .env("MMG_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let head: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = head.iter().position(|h| *h == "ex_ante_terminal").unwrap();
    let v: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert!(v[0].abs() < 1e-12 && (v[2] - 2.0 * v[1]).abs() < 1e-12 && (v[2] - 0.4).abs() < 1e-9);
}

#[test]
fn sweep_marks_failures_and_rejects_bad_input() {
    let tmp = TempDir::new().unwrap();
    let sc = data("linear_four.json");
    let sc = sc.to_str().unwrap();
    let out = tmp.path().join("s");
    let out = out.to_str().unwrap();
    // a negative penalty fails validation for that run only
    let o = mmg(&["sweep", "--scenario", sc, "--param", "A", "--values", "1,-1", "--out", out]);
    assert_eq!(code(&o), 4);
    let csv = fs::read_to_string(Path::new(out).join("sweep.csv")).unwrap();
    let status: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(status, ["pass", "error"]);

    assert_eq!(code(&mmg(&["sweep", "--scenario", sc, "--param", "A", "--values", "", "--out", out])), 2);
    assert_eq!(code(&mmg(&["sweep", "--scenario", sc, "--param", "zeta", "--values", "1", "--out", out])), 2);
    assert_eq!(code(&mmg(&["sweep", "--scenario", sc, "--param", "q0[9]", "--values", "1", "--out", out])), 2);
}
