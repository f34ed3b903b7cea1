//! Implementations of the `flatin` subcommands.
//!
//! Exit codes: 0 success, 2 configuration/input errors, 3 simulation faults,
//! 4 verification failures, 5 I/O failures while writing results.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use flatin_core::pendulum::Pendulum;
use flatin_core::sim::run_closed_loop;
use flatin_core::system::{observability_matrix, verify_flat_input};
use flatin_core::Error;

use crate::plot;
use crate::scenario::{self, Scenario};
use crate::trace_io;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    SimFault(String),
    Verification(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::SimFault(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::SimFault(m) => write!(f, "simulation fault: {m}"),
            CliError::Verification(m) => write!(f, "verification failure: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct RunOverrides {
    pub sim_dt: Option<f64>,
    pub ctrl_dt: Option<f64>,
    pub duration: Option<f64>,
    pub out: Option<PathBuf>,
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario");
    scenario::parse(&text, stem)
        .map_err(|e| CliError::Config(format!("{}:{e}", path.display())))
}

/// `flatin run <scenario>`: execute the closed loop and write the trace CSV.
///
/// A faulted run still writes the partial trace, then exits with the
/// simulation-fault code.
pub fn cmd_run(path: &Path, overrides: &RunOverrides) -> Result<(), CliError> {
    let mut scn = load_scenario(path)?;
    if let Some(v) = overrides.sim_dt {
        scn.sim_dt = v;
    }
    if let Some(v) = overrides.ctrl_dt {
        scn.ctrl_dt = v;
    }
    if let Some(v) = overrides.duration {
        scn.duration = v;
    }
    if let Some(v) = &overrides.out {
        scn.out = Some(v.clone());
    }
    let cfg = scn.build_config().map_err(CliError::Config)?;
    let trace = run_closed_loop(&cfg).map_err(|e| CliError::Config(e.to_string()))?;

    let out_path = scn
        .out
        .clone()
        .unwrap_or_else(|| path.with_extension("csv"));
    fs::write(&out_path, trace_io::to_csv(&trace))
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", out_path.display())))?;

    println!("scenario   {}", scn.name);
    println!("rows       {}", trace.rows.len());
    println!("max|e|     {:.6e}", trace.max_abs_error());
    println!("final e    {:.6e}", trace.final_error());
    println!("trace      {}", out_path.display());
    if let Some(fault) = trace.fault {
        println!("fault      {} at t = {}", fault.kind, fault.t);
        return Err(CliError::SimFault(format!(
            "{} at t = {} (partial trace written to {})",
            fault.kind,
            fault.t,
            out_path.display()
        )));
    }
    Ok(())
}

pub struct VerifyOptions {
    pub grid: usize,
    pub x3_min: f64,
    pub x3_max: f64,
    /// Test hook: additive perturbation on the second component of γ.
    pub perturb_gamma: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            grid: 100,
            x3_min: 0.2,
            x3_max: PI - 0.2,
            perturb_gamma: 0.0,
        }
    }
}

/// `flatin verify`: check the flat-input defining property and the
/// observability determinant against their closed forms on a grid of rod
/// angles.
pub fn cmd_verify(opts: &VerifyOptions) -> Result<(), CliError> {
    if opts.grid < 2 {
        return Err(CliError::Config("grid needs at least 2 points".into()));
    }
    if !(opts.x3_min > 0.0 && opts.x3_max < PI && opts.x3_min < opts.x3_max) {
        return Err(CliError::Config(format!(
            "grid [{}, {}] must lie strictly inside the observable band (0, pi)",
            opts.x3_min, opts.x3_max
        )));
    }
    let grid: Vec<DVector<f64>> = (0..opts.grid)
        .map(|i| {
            let x3 = opts.x3_min
                + (opts.x3_max - opts.x3_min) * i as f64 / (opts.grid - 1) as f64;
            DVector::from_row_slice(&[1.0, 0.0, x3])
        })
        .collect();

    let eps = opts.perturb_gamma;
    let gamma = move |x: &DVector<f64>| DVector::from_row_slice(&[0.0, eps, x[2].sin()]);
    let alpha = |x: &DVector<f64>| x[2].sin() * x[2].sin();

    let property_tol = 1e-10;
    let report = match verify_flat_input(&Pendulum, &gamma, &alpha, &grid, property_tol) {
        Ok(report) => report,
        Err(Error::VerificationFailure {
            point,
            row,
            residual,
            tol,
        }) => {
            return Err(CliError::Verification(format!(
                "flat-input property violated at x3 = {:.6}: row {row} residual {residual:.3e} > {tol:.0e}",
                point[2]
            )))
        }
        Err(e) => return Err(CliError::Config(e.to_string())),
    };

    let mut worst_det: f64 = 0.0;
    for x in &grid {
        let obs = observability_matrix(&Pendulum, x).map_err(|e| CliError::Config(e.to_string()))?;
        worst_det = worst_det.max((obs.det_q - x[2].sin()).abs());
    }

    println!(
        "grid                     {} points, x3 in [{}, {}]",
        opts.grid, opts.x3_min, opts.x3_max
    );
    println!("worst annihilation       {:.3e}  (tol {:.0e})", report.worst_annihilation, property_tol);
    println!("worst alpha residual     {:.3e}  (tol {:.0e})", report.worst_scaling, property_tol);
    println!("worst |detQ - sin x3|    {:.3e}  (tol 1e-12)", worst_det);

    if worst_det > 1e-12 {
        return Err(CliError::Verification(format!(
            "det Q deviates from sin x3 by {worst_det:.3e}"
        )));
    }
    println!("verification passed");
    Ok(())
}

/// `flatin plot <csv>`: emit a gnuplot script for the trace.
pub fn cmd_plot(csv_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let text = fs::read_to_string(csv_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", csv_path.display())))?;
    let rows = trace_io::parse_csv(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", csv_path.display())))?;
    let script = plot::script(csv_path, &rows);
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| csv_path.with_extension("gp"));
    fs::write(&out_path, script)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", out_path.display())))?;
    println!("plot script {}", out_path.display());
    println!("render with: gnuplot {}", out_path.display());
    Ok(())
}

/// `flatin sweep <dir>`: run every `.scn` scenario in a directory, each in
/// its own thread with its own output file.
pub fn cmd_sweep(dir: &Path) -> Result<(), CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "scn"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "no .scn scenario files in {}",
            dir.display()
        )));
    }

    let results: Vec<(String, RunSummary)> = std::thread::scope(|scope| {
        let handles: Vec<_> = paths
            .iter()
            .map(|path| {
                scope.spawn(move || {
                    let name = path.file_name().unwrap().to_string_lossy().into_owned();
                    (name, run_quiet(path))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut config_errors = 0;
    let mut faults = 0;
    for (name, result) in &results {
        match result {
            Ok(summary) => println!("{name}: {summary}"),
            Err(e) => {
                println!("{name}: {e}");
                match e {
                    CliError::SimFault(_) => faults += 1,
                    _ => config_errors += 1,
                }
            }
        }
    }
    if config_errors > 0 {
        return Err(CliError::Config(format!(
            "{config_errors} scenario(s) failed to run"
        )));
    }
    if faults > 0 {
        return Err(CliError::SimFault(format!("{faults} scenario(s) faulted")));
    }
    Ok(())
}

type RunSummary = Result<String, CliError>;

fn run_quiet(path: &Path) -> RunSummary {
    let scn = load_scenario(path)?;
    let cfg = scn.build_config().map_err(CliError::Config)?;
    let trace = run_closed_loop(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let out_path = scn.out.clone().unwrap_or_else(|| path.with_extension("csv"));
    fs::write(&out_path, trace_io::to_csv(&trace))
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", out_path.display())))?;
    match trace.fault {
        Some(fault) => Err(CliError::SimFault(format!(
            "{} at t = {}",
            fault.kind, fault.t
        ))),
        None => Ok(format!(
            "ok, max|e| = {:.3e}, trace {}",
            trace.max_abs_error(),
            out_path.display()
        )),
    }
}
