//! End-to-end tests driving the `flatin` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flatin_cli::trace_io;

fn flatin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatin"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

const EQUILIBRIUM: &str = "\
name = equilibrium
duration = 20
segment = hold 0 20 1
";

#[test]
fn run_writes_a_quiet_equilibrium_trace() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "eq.scn", EQUILIBRIUM);
    let out = flatin(&["run", "eq.scn"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let rows = trace_io::parse_csv(&fs::read_to_string(dir.path().join("eq.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2001);
    assert!(rows.iter().all(|r| r.e.abs() < 1e-6));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max|e|"));
}

#[test]
fn run_overrides_change_the_horizon() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "eq.scn", EQUILIBRIUM);
    let out = flatin(&["run", "eq.scn", "--duration", "2", "--out", "short.csv"], dir.path());
    assert!(out.status.success());
    let rows = trace_io::parse_csv(&fs::read_to_string(dir.path().join("short.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 201);
}

#[test]
fn malformed_scenario_exits_with_config_code_and_no_csv() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.scn", "duration = 5\ngians = 2,6,4\n");
    let out = flatin(&["run", "bad.scn"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gians"));
    assert!(!dir.path().join("bad.csv").exists());
}

#[test]
fn simulation_fault_exits_distinctly_and_keeps_the_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    // Down-regulation dwells on the unstable compensator branch and exits
    // the observable domain; the run must still emit the partial trace.
    write(
        dir.path(),
        "offset.scn",
        "name = offset\nduration = 20\nx0 = 1.2, 0, 1.5707963267948966\nsegment = hold 0 20 1\n",
    );
    let out = flatin(&["run", "offset.scn"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let rows = trace_io::parse_csv(&fs::read_to_string(dir.path().join("offset.csv")).unwrap()).unwrap();
    assert!(rows.len() > 10);
    assert_ne!(rows.last().unwrap().flags & flatin_core::sim::flags::DOMAIN_FAULT, 0);
}

#[test]
fn verify_passes_by_default_and_rejects_bad_grids() {
    let dir = tempfile::tempdir().unwrap();
    let ok = flatin(&["verify"], dir.path());
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("verification passed"));

    let bad_grid = flatin(&["verify", "--x3-min", "0"], dir.path());
    assert_eq!(bad_grid.status.code(), Some(2));

    let perturbed = flatin(&["verify", "--perturb-gamma", "1e-3"], dir.path());
    assert_eq!(perturbed.status.code(), Some(4));
}

#[test]
fn plot_emits_a_script_and_rejects_broken_input() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "eq.scn", EQUILIBRIUM);
    assert!(flatin(&["run", "eq.scn", "--duration", "1"], dir.path()).status.success());
    let out = flatin(&["plot", "eq.csv"], dir.path());
    assert!(out.status.success());
    let script = fs::read_to_string(dir.path().join("eq.gp")).unwrap();
    assert!(script.contains("eq.csv"));

    write(dir.path(), "empty.csv", &format!("{}\n", trace_io::CSV_HEADER));
    let empty = flatin(&["plot", "empty.csv"], dir.path());
    assert_eq!(empty.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&empty.stderr).contains("no data rows"));

    write(dir.path(), "nohdr.csv", "a,b\n1,2\n");
    let bad = flatin(&["plot", "nohdr.csv"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("missing columns"));
}

#[test]
fn sweep_runs_every_scenario_in_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.scn", "duration = 1\nsegment = hold 0 1 1\n");
    write(dir.path(), "b.scn", "duration = 2\nsegment = hold 0 2 1\n");
    write(dir.path(), "ignored.txt", "not a scenario");
    let out = flatin(&["sweep", "."], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("a.csv").exists());
    assert!(dir.path().join("b.csv").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("a.scn"));
    assert!(stdout.contains("b.scn"));
}

#[test]
fn sweep_of_an_empty_directory_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = flatin(&["sweep", "."], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_reports_faulting_scenarios_with_the_fault_code() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "good.scn", "duration = 1\nsegment = hold 0 1 1\n");
    write(
        dir.path(),
        "faulty.scn",
        "duration = 20\nx0 = 1.2, 0, 1.5707963267948966\nsegment = hold 0 20 1\n",
    );
    let out = flatin(&["sweep", "."], dir.path());
    assert_eq!(out.status.code(), Some(3));
    // both traces exist, including the partial one from the faulted run
    assert!(dir.path().join("good.csv").exists());
    assert!(dir.path().join("faulty.csv").exists());
}
