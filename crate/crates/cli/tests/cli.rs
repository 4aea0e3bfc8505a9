use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn flexpend(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexpend"))
        .args(args)
        .current_dir(dir)
        .env_remove("FLEXPEND_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn check_gains_accepts_table_sets() {
    let dir = TempDir::new().unwrap();
    for set in ["Set1", "Set2", "Set3"] {
        let o = flexpend(dir.path(), &["check-gains", "--preset-gains", set]);
        assert_eq!(o.status.code(), Some(0), "{set}: {}", stdout(&o));
        assert!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count() == 5);
    }
}

#[test]
fn check_gains_rejects_positive_ku() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.toml",
        "[gains]\npreset = \"Set1\"\nku = 1.0\n",
    );
    let o = flexpend(dir.path(), &["check-gains", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).lines().any(|l| l.starts_with("FAIL signs")));
}

#[test]
fn check_gains_reports_experimental_set() {
    let dir = TempDir::new().unwrap();
    let o = flexpend(dir.path(), &["check-gains", "--preset-gains", "exp"]);
    assert!(matches!(o.status.code(), Some(0) | Some(3)));
    assert_eq!(
        stdout(&o).lines().filter(|l| l.contains("margin=")).count(),
        5
    );
}

#[test]
fn simulate_writes_initial_row() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[run]\nhorizon = 0.1\n");
    let o = flexpend(
        dir.path(),
        &[
            "simulate",
            "--config",
            &cfg,
            "--preset-gains",
            "Set2",
            "--preset-ics",
            "ICs2",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with(
        "t,theta,z,thetadot,zdot,xi,u,tau,x_e,y_a,y_u,ytilde,H_d,H_u,V_d\n0,0.134,0,0,0,"
    ));
    let r = rows(&text);
    assert_eq!(r.len(), 101);
    assert!(r.iter().all(|row| row.len() == 15));
    for w in r.windows(2) {
        assert!(w[1][0] > w[0][0]);
    }
}

#[test]
fn simulate_from_origin_stays_there() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[ics]\npreset = \"origin\"\n[run]\nhorizon = 0.2\n",
    );
    let o = flexpend(dir.path(), &["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    for row in rows(&stdout(&o)) {
        assert!(row[1..6].iter().all(|v| *v == 0.0));
    }
}

#[test]
fn both_forms_give_the_same_trajectory() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[run]\nhorizon = 2.0\n");
    let rel = rows(&stdout(&flexpend(
        dir.path(),
        &["simulate", "--config", &cfg, "--form", "rel"],
    )));
    let srel = rows(&stdout(&flexpend(
        dir.path(),
        &["simulate", "--config", &cfg, "--form", "srel"],
    )));
    assert_eq!(rel.len(), srel.len());
    let dev = rel
        .iter()
        .zip(&srel)
        .flat_map(|(a, b)| (1..6).map(move |k| (a[k] - b[k]).abs()))
        .fold(0.0, f64::max);
    assert!(dev <= 1e-6, "deviation {dev:e}");
}

#[test]
fn aborted_run_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[ics]\ntheta = 0.29\nthetadot = 5.0\n[run]\nhorizon = 1.0\nstep = 0.01\nout = \"run.csv\"\n",
    );
    let o = flexpend(dir.path(), &["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("aborted"));
    let partial = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert!(!rows(&partial).is_empty());
}

#[test]
fn infeasible_gains_block_simulation_unless_forced() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[gains]\nku = -10.0\n[run]\nhorizon = 0.01\n",
    );
    let o = flexpend(dir.path(), &["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL ku_bound"));
    let o = flexpend(dir.path(), &["simulate", "--config", &cfg, "--force"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "[run]\nstep = \"fast\"\n");
    assert_eq!(
        flexpend(dir.path(), &["simulate", "--config", &bad])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        flexpend(dir.path(), &["simulate", "--config", "missing.toml"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        flexpend(dir.path(), &["linearize", "--preset-gains", "Set7"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        flexpend(dir.path(), &["simulate", "--form", "dae"])
            .status
            .code(),
        Some(1)
    );
    let off = write_config(dir.path(), "off.toml", "[ics]\ntheta = 0.4\n");
    assert_eq!(
        flexpend(dir.path(), &["simulate", "--config", &off])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(flexpend(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn linearize_lists_stable_poles_slowest_first() {
    let dir = TempDir::new().unwrap();
    let o = flexpend(dir.path(), &["linearize", "--preset-gains", "Set1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("re,im\n"));
    let r = rows(&text);
    assert_eq!(r.len(), 4);
    assert!(r.iter().all(|p| p[0] < 0.0));
    for w in r.windows(2) {
        assert!(w[0][0] >= w[1][0]);
    }
    assert!((r[0][0] + 0.58).abs() <= 0.15 * 0.58);
}

#[test]
fn level_curves_contain_the_origin() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[levelcurves]\nnodes = 21\n");
    let o = flexpend(dir.path(), &["levelcurves", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "0,0,0"));
    assert_eq!(text.lines().count(), 21 * 21 + 1);
}

#[test]
fn equilibria_csv() {
    let dir = TempDir::new().unwrap();
    let o = flexpend(dir.path(), &["equilibria"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,unstable,"));
    let side: f64 = lines[2].split(',').next().unwrap().parse().unwrap();
    assert!(lines[2].contains(",stable,") && (side - 0.134).abs() < 0.02);
    assert!(lines[0].starts_with(&format!("{},stable,", -side)));
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[run]\nhorizon = 0.5\n[levelcurves]\nnodes = 11\n",
    );
    for cmd in ["simulate", "linearize", "levelcurves", "equilibria"] {
        let a = flexpend(dir.path(), &[cmd, "--config", &cfg]).stdout;
        let b = flexpend(dir.path(), &[cmd, "--config", &cfg]).stdout;
        assert!(!a.is_empty());
        assert_eq!(a, b, "{cmd}");
    }
}

#[test]
fn default_output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("artifacts");
    let o = Command::new(env!("CARGO_BIN_EXE_flexpend"))
        .args(["equilibria"])
        .current_dir(dir.path())
        .env("FLEXPEND_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(out.join("equilibria.csv")).unwrap();
    assert!(text.starts_with("theta,stability"));
}

#[test]
fn batch_writes_runs_and_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.toml",
        "[run]\nhorizon = 0.2\nstep = 0.01\n[batch]\ngains = [\"Set1\", \"Set3\"]\nics = [\"ICs1\", \"origin\"]\n",
    );
    let o = flexpend(dir.path(), &["batch", "--config", &cfg, "--out", "sweep"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let sweep = dir.path().join("sweep");
    for f in [
        "set1_ics1.csv",
        "set1_origin.csv",
        "set3_ics1.csv",
        "set3_origin.csv",
    ] {
        assert!(sweep.join(f).exists(), "{f}");
    }
    let summary = std::fs::read_to_string(sweep.join("summary.csv")).unwrap();
    let lines: Vec<_> = summary.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("Set1,ICs1,complete,21,0.2"));
    assert!(lines[4].starts_with("Set3,origin,complete,21,0.2,0,0,0,0,0,0"));
}

#[test]
fn resolved_presets_reproduce_the_tables() {
    let dir = TempDir::new().unwrap();
    let o = flexpend(
        dir.path(),
        &[
            "show-config",
            "--preset-gains",
            "Set2",
            "--preset-ics",
            "ICs3",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for line in [
        "ke = 1.0",
        "ka = 1.0",
        "ku = -61.37",
        "kp = 1.92",
        "ki = 0.52",
        "kd = 1.28",
        "theta = 0.0",
        "z = -0.15",
        "l = 0.305",
        "m = 0.0275",
        "mc = 0.1",
        "r3 = 7.69",
        "eta = 1.1741",
        "gamma = 0.9049",
        "rho = 8400.0",
    ] {
        assert!(
            text.lines().any(|l| l == line),
            "missing {line:?} in\n{text}"
        );
    }
    let cfg = write_config(dir.path(), "dump.toml", &text);
    let again = flexpend(dir.path(), &["show-config", "--config", &cfg]);
    assert_eq!(stdout(&again), text);
}
