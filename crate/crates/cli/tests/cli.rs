use std::path::Path;
use std::process::{Command, Output};

fn roomreg(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roomreg"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const ROOM: &str = include_str!("../../core/scenarios/paper_room.toml");

#[test]
fn simulate_without_controller_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = roomreg(&["simulate"], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("controller artifact missing"), "{err}");
    assert!(err.contains("simulate"), "stage should be named: {err}");
}

#[test]
fn schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("room.toml");
    std::fs::write(&path, ROOM.replace("frequencies = [0.0, 0.5, 1.0, 2.0]", "")).unwrap();
    let o = roomreg(&["steady", "--scenario", path.to_str().unwrap()], &dir.path().join("out"));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("signals.frequencies"), "{}", stderr(&o));
}

#[test]
fn unknown_scenario_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = roomreg(&["steady", "--scenario", "no_such_room"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no_such_room"));
}

#[test]
fn steady_is_cached_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["steady", "--mesh-override", "8"];
    let a = roomreg(&args, dir.path());
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stdout(&a).contains("steady: h = 1/8"));
    let first = std::fs::read(dir.path().join("steady/target.csv")).unwrap();
    let cached: Vec<_> = std::fs::read_dir(dir.path().join("cache")).unwrap().collect();
    assert_eq!(cached.len(), 1);

    let b = roomreg(&args, dir.path());
    assert!(b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(std::fs::read(dir.path().join("steady/target.csv")).unwrap(), first);

    // A fresh directory recomputes and reproduces the same bytes.
    let other = tempfile::tempdir().unwrap();
    assert!(roomreg(&args, other.path()).status.success());
    assert_eq!(std::fs::read(other.path().join("steady/target.csv")).unwrap(), first);
}

#[test]
fn written_scenario_is_normalized_and_reloadable() {
    let dir = tempfile::tempdir().unwrap();
    assert!(roomreg(&["steady", "--mesh-override", "8"], dir.path()).status.success());
    let dumped = dir.path().join("scenario.toml");
    let again = dir.path().join("again");
    let o = roomreg(&["steady", "--scenario", dumped.to_str().unwrap()], &again);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&dumped).unwrap(), std::fs::read(again.join("scenario.toml")).unwrap());
}

#[test]
fn analyze_reports_one_unstable_pair() {
    let dir = tempfile::tempdir().unwrap();
    let o = roomreg(&["analyze"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("analyze: 2 unstable eigenvalue(s) at h = 1/16"), "{out}");
    assert!(out.contains("assumptions pass"), "{out}");
    assert!(dir.path().join("analysis/eigenvalues.csv").exists());
    assert!(dir.path().join("analysis/cascade/manifest.txt").exists());
}

#[test]
fn full_run_on_coarse_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let o = roomreg(&["full", "--mesh-override", "8", "--t-end", "5", "--dt", "0.02"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("dim Z = 41"), "{out}");
    let manifest = std::fs::read_to_string(dir.path().join("controller/manifest.txt")).unwrap();
    assert!(manifest.starts_with("dim_z 41\n"), "{manifest}");
    let csv = std::fs::read_to_string(dir.path().join("simulation/trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,y_1,y_2,y_3,y_ref_1"), "{}", &csv[..80]);
    assert_eq!(csv.lines().count(), 1 + 251);
}
