use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use parity_reject::experiment::{
    parse_csv, render_csv, run_sweep, ExperimentConfig, SweepRow, AVERAGE_LABEL, CSV_VERSION,
};
use parity_reject::protocol::eq4_qber;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parity-reject"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{
  "sweep": { "p_values": [0.0, 0.1, 0.25, 0.4] },
  "pipeline": { "channel": "sandwich" },
  "trials_per_point": 4000,
  "master_seed": 12,
  "outputs": { "csv_path": "out/sweep.csv" }
}"#;

#[test]
fn sweep_rows_follow_closed_form() {
    let loaded = ExperimentConfig::from_json(SMALL).unwrap();
    let rows = run_sweep(&loaded.config).unwrap();
    assert_eq!(rows.len(), 4 * 7);
    for r in &rows {
        let e1 = r.e1_analytic.unwrap();
        let e0 = r.e0_analytic.unwrap();
        match r.state.as_str() {
            "+" | "-" => {
                assert!(e1.abs() < 1e-12 && e0.abs() < 1e-12);
            }
            s if s == AVERAGE_LABEL => {
                assert!((e1 - 2.0 / 3.0 * eq4_qber(r.p).unwrap()).abs() < 1e-12);
                assert!((e0 - 2.0 / 3.0 * r.p).abs() < 1e-12);
            }
            _ => {
                assert!((e1 - eq4_qber(r.p).unwrap()).abs() < 1e-12);
                assert!((e0 - r.p).abs() < 1e-12);
            }
        }
        for x in [r.e1_mc, r.ci_low, r.ci_high, r.yield_mc].into_iter().flatten() {
            assert!((0.0..=1.0).contains(&x));
        }
    }
}

#[test]
fn sweep_writes_identical_csv_on_rerun_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    assert!(run(&["sweep", &cfg], dir.path()).status.success());
    let first = fs::read(dir.path().join("out/sweep.csv")).unwrap();
    assert!(run(&["sweep", &cfg], dir.path()).status.success());
    let second = fs::read(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(first, second);

    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with(CSV_VERSION));
    assert!(text.contains("# master_seed: 12"));
    assert!(text.contains("# config_sha256: "));
    let parsed = parse_csv(&text).unwrap();

    let loaded = ExperimentConfig::from_json(SMALL).unwrap();
    let rows = run_sweep(&loaded.config).unwrap();
    assert_eq!(parsed.len(), rows.len());
    for (a, b) in parsed.iter().zip(&rows) {
        assert_rows_close(a, b);
    }
    // rendering the parsed rows again is lossless
    let again = render_csv(&parsed, 12, &loaded.sha256).unwrap();
    assert_eq!(again, text);
}

fn assert_rows_close(a: &SweepRow, b: &SweepRow) {
    assert_eq!(a.state, b.state);
    assert_eq!(a.basis, b.basis);
    assert_eq!((a.n_accepted, a.n_trials), (b.n_accepted, b.n_trials));
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
    assert!(close(a.p, b.p) && close(a.theta_deg, b.theta_deg));
    for (x, y) in [
        (a.e0_analytic, b.e0_analytic),
        (a.e1_analytic, b.e1_analytic),
        (a.e1_mc, b.e1_mc),
        (a.ci_low, b.ci_low),
        (a.ci_high, b.ci_high),
        (a.yield_analytic, b.yield_analytic),
        (a.yield_mc, b.yield_mc),
    ] {
        match (x, y) {
            (Some(x), Some(y)) => assert!(close(x, y), "{x} vs {y}"),
            (None, None) => {}
            other => panic!("mismatch {other:?}"),
        }
    }
}

#[test]
fn single_reports_and_rejects_bad_p() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = run(&["single", &cfg, "--state", "H", "--p", "0.25"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("rejected QBER (analytic):  0.1\n"), "{text}");

    let out = run(&["single", &cfg, "--state", "+", "--p", "0.4"], dir.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("rejected QBER (analytic):  0\n"));

    let out = run(&["single", &cfg, "--state", "H", "--p", "1.1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", r#"{"trials_per_point": 0}"#);
    assert_eq!(run(&["sweep", &bad], dir.path()).status.code(), Some(2));
    let typo = write_config(dir.path(), "typo.json", r#"{"master_sed": 1}"#);
    assert_eq!(run(&["sweep", &typo], dir.path()).status.code(), Some(2));
    let empty = write_config(dir.path(), "empty.json", r#"{"sweep": {"p_values": []}}"#);
    assert_eq!(run(&["sweep", &empty], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["sweep", "missing.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn infeasible_calibration_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"pipeline": {"source": {"kind": "visibilities", "v_hv": 1.2, "v_pm": 0.9}}}"#,
    );
    assert_eq!(run(&["sweep", &cfg], dir.path()).status.code(), Some(3));
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{"pipeline": {"source": {"kind": "visibilities", "v_hv": 0.97, "v_pm": 0.94},
            "herald": true, "ghz_visibility_target": 0.95}}"#,
    );
    assert_eq!(run(&["sweep", &cfg], dir.path()).status.code(), Some(3));
}

#[test]
fn validate_channel_reports_flip_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["validate-channel", "--theta", "0,10,22.5", "--trials", "200000"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().skip(1).collect();
    assert!(lines[0].starts_with("0 ") && lines[0].split_whitespace().nth(1) == Some("0"));
    assert_eq!(lines[1].split_whitespace().nth(1), Some("0.116977778441"));
    assert_eq!(lines[2].split_whitespace().nth(1), Some("0.5"));

    let out = run(&["validate-channel", "--theta", "50"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plotdata_from_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    assert!(run(&["sweep", &cfg], dir.path()).status.success());
    let out = run(&["plotdata", "out/sweep.csv", "--out", "plots/fig.dat"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dat = fs::read_to_string(dir.path().join("plots/fig.dat")).unwrap();
    for panel in ["V", "-", "L", AVERAGE_LABEL] {
        assert!(dat.contains(&format!("# panel {panel}\n")));
    }
    // ideal sweep: the V panel's analytic column sits on the closed form
    let block = dat.split("# panel V\n").nth(1).unwrap().split("\n\n").next().unwrap();
    for line in block.lines().filter(|l| !l.starts_with('#')) {
        let cols: Vec<f64> = line.split_whitespace().map(|c| c.parse().unwrap()).collect();
        assert!((cols[2] - cols[6]).abs() < 1e-9);
    }
    let svg = fs::read_to_string(dir.path().join("plots/fig.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline points=").count(), 4 * 3);
}

#[test]
fn plotdata_rejects_empty_and_accepts_baseline_only() {
    let dir = tempfile::tempdir().unwrap();
    let header = "state,basis,theta_deg,p,e0_analytic,e1_analytic,e1_mc,ci_low,ci_high,yield_analytic,yield_mc,n_accepted,n_trials\n";
    fs::write(dir.path().join("empty.csv"), format!("{CSV_VERSION}\n{header}")).unwrap();
    let out = run(&["plotdata", "empty.csv", "--out", "e.dat"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    fs::write(dir.path().join("junk.csv"), "not,a,sweep\n1,2,3\n").unwrap();
    assert_eq!(run(&["plotdata", "junk.csv", "--out", "j.dat"], dir.path()).status.code(), Some(2));

    let body: String = [0.0, 0.2, 0.4]
        .iter()
        .map(|p| format!("V,HV,0,{p},{p},,,,,,,0,0\n"))
        .collect();
    fs::write(dir.path().join("base.csv"), format!("{CSV_VERSION}\n{header}{body}")).unwrap();
    let out = run(&["plotdata", "base.csv", "--out", "b.dat"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = fs::read_to_string(dir.path().join("b.svg")).unwrap();
    assert_eq!(svg.matches("<rect x=").count(), 3);
    assert_eq!(svg.matches("<polygon").count(), 0);
}
