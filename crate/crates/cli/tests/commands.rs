use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use thinfilm_cli::commands::{diagnostics_csv, CSV_HEADER};
use thinfilm_cli::config::RunConfig;
use thinfilm_core::integrator::integrate;

fn thinfilm(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_thinfilm"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("exited normally"),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn value<'a>(report: &'a str, key: &str) -> &'a str {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` in report:\n{report}"))
}

#[test]
fn certify_remark_family() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ok.cfg", "initial.kind = remark\ninitial.mu = 0.001\n");
    let (code, out, _) = thinfilm(&["certify", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    let delta: f64 = value(&out, "delta").parse().unwrap();
    assert!((delta - 161.0 / 3000.0).abs() < 1e-15);
    assert_eq!(value(&out, "delta_exact"), "161/3000");
    assert_eq!(value(&out, "frak_c1_exact"), "1/12");
    assert_eq!(value(&out, "lambda1_0_exact"), "89/6");
    assert_eq!(value(&out, "lambda2_0_exact"), "17/2");
    assert_eq!(value(&out, "failing"), "none");

    let report = dir.path().join("out").join("cert.txt");
    let cfg = write(
        dir.path(),
        "bad.cfg",
        &format!("initial.kind = remark\ninitial.mu = 0.01\noutputs.report = {}\n", report.display()),
    );
    let (code, out, _) = thinfilm(&["certify", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(value(&out, "failing").split(',').any(|n| n == "gamma1"));
    assert_eq!(value(&out, "hypothesis.gamma1").split(' ').next(), Some("fail"));
    assert_eq!(fs::read_to_string(report).unwrap(), out);
}

#[test]
fn malformed_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "x.cfg", "params.G = 1\nstepper.dt = soon\n");
    let (code, out, err) = thinfilm(&["certify", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(out.is_empty());
    assert!(err.contains("line 2"), "{err}");
    let (code, _, _) = thinfilm(&["run", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(code, 1);
    let (code, _, _) = thinfilm(&["frobnicate"]);
    assert_eq!(code, 1);
}

const SMALL_RUN: &str = "initial.kind = remark
initial.mu = 0.001
initial.wavenumber = 3
stepper.M = 8
stepper.dt = 0.001
run.t_end = 0.2
stepper.record_every = 10
";

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let diag = dir.path().join("diag.csv");
    let snaps = dir.path().join("snap.csv");
    let text = format!(
        "{SMALL_RUN}outputs.diagnostics = {}\noutputs.snapshots = {}\noutputs.snapshot_stride = 5\n",
        diag.display(),
        snaps.display()
    );
    let cfg = write(dir.path(), "run.cfg", &text);
    let (code, out, _) = thinfilm(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(value(&out, "termination"), "completed");
    assert_eq!(value(&out, "decay.passed"), "true");

    let csv = fs::read_to_string(&diag).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let e00: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(e00.len(), 21);
    assert!(e00.windows(2).all(|w| w[1] < w[0]));

    let mut snapshots: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("snap_"))
        .collect();
    snapshots.sort();
    assert_eq!(snapshots, ["snap_000000.csv", "snap_000005.csv", "snap_000010.csv", "snap_000015.csv", "snap_000020.csv"]);
    let first = fs::read_to_string(dir.path().join(&snapshots[0])).unwrap();
    let rows: Vec<Vec<f64>> = first
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(first.lines().next(), Some("x,h,Gamma"));
    assert_eq!(rows.len(), 32);
    for r in &rows {
        assert!((r[1] - (1.0 + 1e-3 * (3.0 * r[0]).sin())).abs() < 1e-14);
        assert!((r[2] - (0.5 + 1e-3 * (3.0 * r[0]).cos())).abs() < 1e-14);
    }
}

#[test]
fn zero_horizon_records_once() {
    let dir = tempfile::tempdir().unwrap();
    let diag = dir.path().join("d.csv");
    let text = SMALL_RUN.replace("run.t_end = 0.2", "run.t_end = 0") + &format!("outputs.diagnostics = {}\n", diag.display());
    let cfg = write(dir.path(), "z.cfg", &text);
    let (code, _, _) = thinfilm(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(fs::read_to_string(diag).unwrap().lines().count(), 2);
}

#[test]
fn large_series_data_exit_the_theory() {
    let dir = tempfile::tempdir().unwrap();
    let text = "initial.kind = coefficients
initial.h = 0:1 1:0:-0.6
initial.gamma = 0:0.5 1:0.01
stepper.M = 8
stepper.dt = 0.001
stepper.form = series
run.t_end = 0.1
";
    let cfg = write(dir.path(), "big.cfg", text);
    let (code, out, _) = thinfilm(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code, 3, "{out}");
    assert_eq!(value(&out, "termination"), "theory_exit");
    assert!(value(&out, "reason").contains("h_mean"));
}

#[test]
fn diagnostics_csv_round_trips_and_config_reproduces_runs() {
    let c = RunConfig::parse(SMALL_RUN).unwrap();
    let again = RunConfig::parse(&c.to_text()).unwrap();
    let run = |c: &RunConfig| {
        let (p, s0) = c.build().unwrap();
        integrate(&s0, &p, &c.stepper, c.t_end, c.record_every)
    };
    let (a, b) = (run(&c), run(&again));
    assert_eq!(a, b);

    let csv = diagnostics_csv(&a.diagnostics);
    for (line, r) in csv.lines().skip(1).zip(&a.diagnostics) {
        let v: Vec<&str> = line.split(',').collect();
        let num = |i: usize| v[i].parse::<f64>().unwrap().to_bits();
        assert_eq!(num(0), r.time.to_bits());
        assert_eq!(num(1), r.e00.to_bits());
        assert_eq!(num(2), r.e22.to_bits());
        assert_eq!(v[3], "");
        assert_eq!(num(4), r.mass_f.to_bits());
        assert_eq!(num(6), r.min_h.to_bits());
        assert_eq!(num(8), r.linf_theta.to_bits());
    }
}

#[test]
fn convergence_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = "initial.kind = coefficients
initial.h = 0:1 1:0:-2.5e-4 2:1e-4
initial.gamma = 0:0.5 1:2.5e-4
stepper.M = 4
stepper.dt = 0.01
run.t_end = 0.5
";
    let cfg = write(dir.path(), "c.cfg", text);
    let (code, out, err) = thinfilm(&["convergence", cfg.to_str().unwrap(), "--levels", "4"]);
    assert_eq!(code, 0, "{err}");
    let dt_rows: Vec<&str> = out.lines().skip_while(|l| *l != "study: dt").skip(2).collect();
    assert_eq!(dt_rows.len(), 4);
    for row in &dt_rows[2..] {
        let order: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
        assert!((order - 2.0).abs() < 0.2, "{row}");
    }
    let m_rows: Vec<f64> = out
        .lines()
        .skip(2)
        .take_while(|l| !l.starts_with("study"))
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(m_rows.windows(2).all(|w| w[1] < w[0]), "{out}");

    let (code, out, _) = thinfilm(&[
        "convergence",
        cfg.to_str().unwrap(),
        "--levels",
        "2",
        "--m-factor",
        "1",
        "--dt-factor",
        "1",
    ]);
    assert_eq!(code, 0);
    let diffs: Vec<&str> = out.lines().filter(|l| l.starts_with("1,")).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(diffs, ["0", "0"]);

    let (code, _, _) = thinfilm(&["convergence", cfg.to_str().unwrap(), "--levels", "1"]);
    assert_eq!(code, 1);
}

#[test]
fn oracle_suite() {
    let (code, out, _) = thinfilm(&["oracle", "--seed", "7"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(value(&out, "passed"), "true");

    let (code, out, _) = thinfilm(&["oracle", "--tolerance-scale", "0"]);
    assert_eq!(code, 2);
    assert_eq!(value(&out, "passed"), "false");
    assert!(value(&out, "worst_discrepancy").parse::<f64>().unwrap() > 0.0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a0.cfg", "params.A = 0\ninitial.kind = remark\n");
    let (code, out, _) = thinfilm(&["oracle", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
}
