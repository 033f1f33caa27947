use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dephlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dephlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        let p = e.path();
        if p.is_dir() {
            for (n, c) in read_dir_sorted(&p) {
                out.push((format!("{}/{n}", e.file_name().to_string_lossy()), c));
            }
        } else {
            out.push((e.file_name().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

const MINIMAL: &str = r#"
analyses = ["trajectory"]
[model]
class = "exp_cutoff"
alpha0 = 1.0
[grid]
kind = "log"
start = 0.01
end = 100.0
count = 50
"#;

#[test]
fn minimal_run_writes_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "min.toml", MINIMAL);
    let out = tmp.path().join("out");
    let r = dephlab(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,Lambda,gamma,Xi,coherence,eps_E_delta,eps_SE_delta\n"));
    assert_eq!(csv.lines().count(), 51);
    assert!(out.join("summary.txt").exists());
    assert!(out.join("plot.gp").exists());
    assert!(out.join("effective_config.toml").exists());
}

#[test]
fn malformed_key_exits_one_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &MINIMAL.replace("alpha0 = 1.0", "alpha_0 = 1.0"));
    let out = tmp.path().join("out");
    let r = dephlab(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("alpha_0"), "{err}");
    assert!(err.contains("line"), "{err}");
    assert!(!out.exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("[\"trajectory\"]", "[\"trajectory\", \"long_time\", \"regimes\", \"info_flow\"]");
    let cfg = write(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    assert_eq!(dephlab(&["run", &cfg, "--out", o]).status.code(), Some(0));
    let first = read_dir_sorted(&out);
    assert_eq!(dephlab(&["run", &cfg, "--out", o]).status.code(), Some(0));
    assert_eq!(first, read_dir_sorted(&out));
}

#[test]
fn effective_config_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", MINIMAL);
    let out = tmp.path().join("out");
    assert_eq!(dephlab(&["run", &cfg, "--out", out.to_str().unwrap(), "--tolerance", "1e-9"]).status.code(), Some(0));
    let echo = fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(echo.contains("tolerance = 1e-9") || echo.contains("tolerance = 0.000000001"), "{echo}");
    let first = read_dir_sorted(&out);
    let echo_path = write(tmp.path(), "echo.toml", &echo);
    assert_eq!(dephlab(&["run", &echo_path]).status.code(), Some(0));
    assert_eq!(first, read_dir_sorted(&out));
}

const SWEEP: &str = r#"
analyses = ["regimes", "correspondence"]
T = 1.0
[model]
class = "exp_cutoff"
alpha0 = 2.0
[preparation]
omega0 = 1.0
z = 0.0
T_prep = 2.0
[sweep]
alpha0 = [1.5, 3.5]
"#;

#[test]
fn sweep_reports_loss_and_backflow() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SWEEP);
    let out = tmp.path().join("out");
    let r = dephlab(&["sweep", &cfg, "--axis", "alpha0", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(out.join("correspondence.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "alpha0,n0,T_fact,T_prep,N,n_intervals,flow_dir,energy_regime,verdict");
    assert!(rows[1].starts_with("1.5,") && rows[1].ends_with(",loss,decrease,match"), "{}", rows[1]);
    assert!(rows[2].starts_with("3.5,") && rows[2].ends_with(",backflow,increase,match"), "{}", rows[2]);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("correspondence table"));
}

#[test]
fn single_point_sweep_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SWEEP);
    let run_out = tmp.path().join("run");
    let sweep_out = tmp.path().join("sweep");
    assert_eq!(dephlab(&["run", &cfg, "--out", run_out.to_str().unwrap()]).status.code(), Some(0));
    let r = dephlab(&["sweep", &cfg, "--axis", "alpha0", "--values", "2", "--out", sweep_out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    for f in ["regimes.csv", "correspondence.csv"] {
        assert_eq!(
            fs::read_to_string(run_out.join(f)).unwrap(),
            fs::read_to_string(sweep_out.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn refused_point_is_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
analyses = ["regimes", "long_time"]
[model]
class = "class1"
terms = [[3.0, 0.0, 1.0]]
chi0 = 3.0
table = [[0.01, 1e-6], [0.1, 1e-3], [1.0, 0.3], [10.0, 1e-4]]
[sweep]
alpha0 = [3.0, 3.5]
"#;
    let cfg = write(tmp.path(), "r.toml", text);
    let out = tmp.path().join("out");
    let r = dephlab(&["sweep", &cfg, "--axis", "alpha0", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert!(rows[1].contains(",refused,refused,"), "{}", rows[1]);
    assert!(rows[2].contains(",ok,increase,"), "{}", rows[2]);
}

#[test]
fn failed_point_does_not_stop_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SWEEP.replace("alpha0 = [1.5, 3.5]", "alpha0 = [1.5, -1.0, 2.5]");
    let cfg = write(tmp.path(), "f.toml", &text);
    let out = tmp.path().join("out");
    let r = dephlab(&["sweep", &cfg, "--axis", "alpha0", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert!(rows[1].contains(",ok,"));
    assert!(rows[2].contains(",failed,"));
    assert!(rows[3].contains(",ok,"));
    assert!(!out.join("point_001").exists());
    let corr = fs::read_to_string(out.join("correspondence.csv")).unwrap();
    assert_eq!(corr.lines().count(), 3);
}

#[test]
fn quadrature_stats_go_to_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &MINIMAL.replace("\"exp_cutoff\"", "\"log_exp_cutoff\""));
    let out = tmp.path().join("out");
    let r = dephlab(&["run", &cfg, "--out", out.to_str().unwrap(), "--quadrature-stats"]);
    assert_eq!(r.status.code(), Some(0));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("quadrature:") && err.contains("integrals"), "{err}");
}

#[test]
fn unknown_axis_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", SWEEP);
    let r = dephlab(&["sweep", &cfg, "--axis", "omega_c"]);
    assert_eq!(r.status.code(), Some(1));
}
