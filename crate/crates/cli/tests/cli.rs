use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ddbd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddbd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn value_line(out: &Output) -> f64 {
    stdout(out)
        .lines()
        .find_map(|l| l.strip_prefix("value: "))
        .expect("a value line")
        .parse()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// One supply node that must split between two demand nodes. Splitting is
/// forbidden and both outgoing arcs have positive lower bounds, so no
/// matching admits a flow.
const INFEASIBLE: &str = r#"{
  "schema_version": 1,
  "nodes": ["source", "supply", "demand", "demand", "sink", "artificial"],
  "arcs": [
    { "tail": 0, "head": 1, "upper": 300, "reward": 5.0 },
    { "tail": 1, "head": 2, "lower": 50, "upper": 200, "reward": 1.0 },
    { "tail": 1, "head": 3, "lower": 50, "upper": 200, "reward": 1.0 },
    { "tail": 2, "head": 4, "upper": 0, "reward": 0.0 },
    { "tail": 3, "head": 4, "upper": 0, "reward": 0.0 },
    { "tail": 5, "head": 2, "upper": null, "reward": -6.0 },
    { "tail": 5, "head": 3, "upper": null, "reward": -6.0 }
  ],
  "nsnm": [1],
  "scenarios": [ { "probability": 1.0, "demand": { "2": 100, "3": 100 } } ]
}
"#;

/// The source can send nothing, so all demand comes from the artificial
/// source.
const ZERO_SUPPLY: &str = r#"{
  "schema_version": 1,
  "nodes": ["source", "supply", "demand", "demand", "sink", "artificial"],
  "arcs": [
    { "tail": 0, "head": 1, "upper": 0, "reward": 5.0 },
    { "tail": 1, "head": 2, "upper": 200, "reward": 1.0 },
    { "tail": 1, "head": 3, "upper": 200, "reward": 1.0 },
    { "tail": 2, "head": 4, "upper": 0, "reward": 0.0 },
    { "tail": 3, "head": 4, "upper": 0, "reward": 0.0 },
    { "tail": 5, "head": 2, "upper": null, "reward": -6.0 },
    { "tail": 5, "head": 3, "upper": null, "reward": -8.0 }
  ],
  "nsnm": [2, 3],
  "scenarios": [
    { "probability": 0.5, "demand": { "2": 100, "3": 120 } },
    { "probability": 0.5, "demand": { "2": 140, "3": 110 } }
  ]
}
"#;

#[test]
fn generated_instance_validates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    let path = path.to_str().unwrap();
    let out = ddbd(&[
        "generate",
        "--nodes",
        "40",
        "--scenarios",
        "50",
        "--seed",
        "1",
        "--out",
        path,
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = ddbd(&["validate", path]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "ok");
}

#[test]
fn generate_is_deterministic_on_stdout() {
    let a = ddbd(&[
        "generate",
        "--nodes",
        "12",
        "--scenarios",
        "3",
        "--seed",
        "9",
    ]);
    let b = ddbd(&[
        "generate",
        "--nodes",
        "12",
        "--scenarios",
        "3",
        "--seed",
        "9",
    ]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn both_methods_print_the_same_optimum() {
    let dir = tempfile::tempdir().unwrap();
    for seed in ["2", "5"] {
        let path = dir.path().join(format!("s{seed}.json"));
        let path = path.to_str().unwrap();
        let gen = ddbd(&[
            "generate",
            "--nodes",
            "10",
            "--scenarios",
            "3",
            "--seed",
            seed,
            "--out",
            path,
        ]);
        assert_eq!(gen.status.code(), Some(0));
        let dd = ddbd(&["solve", path, "--method", "dd-bd", "--width-limit", "8"]);
        let en = ddbd(&["solve", path, "--method", "enum"]);
        assert_eq!(
            dd.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&dd.stderr)
        );
        assert_eq!(en.status.code(), Some(0));
        let (a, b) = (value_line(&dd), value_line(&en));
        assert!(
            (a - b).abs() <= 1e-6 * (1.0 + b.abs()),
            "dd-bd {a} vs enum {b}"
        );
    }
}

#[test]
fn zero_supply_is_covered_by_the_artificial_source() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "zero.json", ZERO_SUPPLY);
    let out = ddbd(&["solve", &path]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let expected = 0.5 * (-6.0 * 100.0 - 8.0 * 120.0) + 0.5 * (-6.0 * 140.0 - 8.0 * 110.0);
    assert!((value_line(&out) - expected).abs() < 1e-6);
    let en = ddbd(&["solve", &path, "--method", "enum"]);
    assert!((value_line(&en) - expected).abs() < 1e-6);
}

#[test]
fn infeasible_instance_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "inf.json", INFEASIBLE);
    for method in ["dd-bd", "enum"] {
        let out = ddbd(&["solve", &path, "--method", method]);
        assert_eq!(out.status.code(), Some(1), "{method}");
        assert!(stdout(&out).contains("status: infeasible"));
    }
}

#[test]
fn time_limit_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.json");
    let path = path.to_str().unwrap();
    ddbd(&[
        "generate",
        "--nodes",
        "40",
        "--scenarios",
        "10",
        "--seed",
        "1",
        "--out",
        path,
    ]);
    let out = ddbd(&["solve", path, "--time-limit", "0.2"]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
    assert!(stdout(&out).contains("status: time_limit"));
}

#[test]
fn usage_errors_exit_sixty_four() {
    assert_eq!(ddbd(&["solve"]).status.code(), Some(64));
    assert_eq!(ddbd(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(
        ddbd(&["solve", "x.json", "--method", "simplex"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(
        ddbd(&["generate", "--nodes", "3", "--scenarios", "1"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(ddbd(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreadable_and_invalid_files_exit_sixty_five() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        ddbd(&["validate", "/nonexistent/i.json"]).status.code(),
        Some(65)
    );
    let bad = write(
        dir.path(),
        "bad.json",
        &INFEASIBLE.replace("\"upper\": 300", "\"upper\": -300"),
    );
    let out = ddbd(&["validate", &bad]);
    assert_eq!(out.status.code(), Some(65));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
    // Parses, but probabilities do not sum to one.
    let invalid = write(
        dir.path(),
        "invalid.json",
        &ZERO_SUPPLY.replace(
            "\"probability\": 0.5, \"demand\": { \"2\": 140",
            "\"probability\": 0.25, \"demand\": { \"2\": 140",
        ),
    );
    let out = ddbd(&["validate", &invalid]);
    assert_eq!(out.status.code(), Some(65));
    assert!(stdout(&out).contains("ScenarioSet"));
    assert_eq!(ddbd(&["solve", &invalid]).status.code(), Some(65));
}

#[test]
fn csv_log_report_and_dot_dump() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "zero.json", ZERO_SUPPLY);
    let report = dir.path().join("report.json");
    let dot = dir.path().join("root.dot");
    let out = ddbd(&[
        "solve",
        &inst,
        "--log",
        "csv",
        "--out-report",
        report.to_str().unwrap(),
        "--dump-dot",
        dot.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("iteration,phase,node,bound,incumbent,upper_bound\n"));
    assert!(text.contains("matching: "));
    assert!(text.contains("scenario 1: value"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["termination"], "optimal");
    assert!(fs::read_to_string(&dot).unwrap().starts_with("digraph"));
}

#[test]
fn stats_summarizes_the_instance() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "zero.json", ZERO_SUPPLY);
    let out = ddbd(&["stats", &path]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("nodes: 6"));
    assert!(text.contains("demand: 2"));
    assert!(text.contains("no-split no-merge nodes: 2"));
    assert!(text.contains("scenarios: 2"));
}
