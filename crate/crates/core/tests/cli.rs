use std::path::Path;
use std::process::{Command, Output};

use fracfb::feedback::SimReport;

fn fracfb(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracfb"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
        .trim()
        .parse()
        .expect("number")
}

const CONFIG: &str = r#"{
  "problem": "example-g", "alpha": 0.5, "T": 1.0, "g": "one",
  "starts": [{"w0": [0.5]}, {"t": 0.25, "w0": [-1], "caputo": [0.3]}],
  "strategies": ["example", "constant:0"],
  "diameters": [0.25, 0.125],
  "steps": 128,
  "output": "results/deep"
}"#;

#[test]
fn simulate_writes_one_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), CONFIG).unwrap();
    let out = fracfb(&["simulate", "--config", "run.json", "--quiet"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = dir.path().join("results/deep");
    let mut reader = csv::Reader::from_path(results.join("simulate.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        [
            "strategy",
            "start",
            "diam",
            "cost",
            "rho",
            "epsilon",
            "k",
            "wall_time_ms"
        ]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2 * 2 * 2);
    for row in &rows {
        let cost: f64 = row[3].parse().unwrap();
        assert!(cost.is_finite());
        let digits = row[3].trim_start_matches('-').replace('.', "");
        assert!(digits.trim_start_matches('0').len() <= 12, "{}", &row[3]);
    }
    // emitted reports are re-readable
    let json = std::fs::read_to_string(results.join("run_example_start0_k4.json")).unwrap();
    let report: SimReport = serde_json::from_str(&json).unwrap();
    assert_eq!(report.controls.len(), 4);
    assert_eq!(serde_json::to_string_pretty(&report).unwrap(), json);
}

#[test]
fn simulate_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), CONFIG).unwrap();
    let strip = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    fracfb(
        &["simulate", "--config", "run.json", "--out", "a", "--quiet"],
        dir.path(),
    );
    fracfb(
        &["simulate", "--config", "run.json", "--out", "b", "--quiet"],
        dir.path(),
    );
    assert_eq!(
        strip(&dir.path().join("a/simulate.csv")),
        strip(&dir.path().join("b/simulate.csv"))
    );
}

#[test]
fn sweep_writes_a_csv_per_strategy_and_start() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), CONFIG).unwrap();
    let out = fracfb(
        &[
            "sweep", "--config", "run.json", "--out", "sweep", "--steps", "64",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    for name in [
        "sweep_example_start0.csv",
        "sweep_example_start1.csv",
        "sweep_constant-0_start1.csv",
    ] {
        let text = std::fs::read_to_string(dir.path().join("sweep").join(name)).unwrap();
        assert!(
            text.starts_with("diam,cost,rho,epsilon,k,wall_time_ms\n"),
            "{text}"
        );
        assert_eq!(text.lines().count(), 3);
    }
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"problem": "example-g", "alpha": 1.5, "T": 1.0}"#,
    )
    .unwrap();
    let out = fracfb(&["simulate", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha out of (0,1)"));

    std::fs::write(
        dir.path().join("typo.json"),
        "{\"problem\": \"example-g\",\n \"alpha\": 0.5, \"T\": 1.0, \"stpes\": 3}",
    )
    .unwrap();
    let out = fracfb(&["simulate", "--config", "typo.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stpes") && err.contains("line 2"), "{err}");
}

#[test]
fn dderiv_at_the_kink() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracfb(&["dderiv", "--t", "0", "--w0", "0", "--f", "0"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!((field(&text, "formula") - 4.0).abs() <= 5e-2, "{text}");
    assert!(field(&text, "relative_gap") <= 0.02, "{text}");

    let root_pi = std::f64::consts::PI.sqrt().to_string();
    let out = fracfb(&["dderiv", "--w0", "0", "--f", &root_pi], dir.path());
    let text = stdout(&out);
    assert!(field(&text, "formula").abs() <= 5e-2, "{text}");
    assert!(field(&text, "fd").abs() <= 5e-2, "{text}");
}

#[test]
fn dderiv_rejects_terminal_positions() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracfb(&["dderiv", "--t", "1", "--w0", "0.2"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn value_prints_every_route() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracfb(&["value", "--w0", "-1", "--steps", "256"], dir.path());
    let text = stdout(&out);
    assert!((field(&text, "closed_form") + 9.0).abs() < 1e-12);
    assert!((field(&text, "bruteforce") + 9.0).abs() < 5e-2);
    assert!((field(&text, "envelope") + 9.0).abs() < 5e-2);
}

#[test]
fn usage_and_selftest_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracfb(&[], dir.path());
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = fracfb(&["selftest", "--quiet"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = fracfb(
        &["selftest", "--criterion", "10", "--perturb-gamma", "1e-6"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("criterion 10"));
}
