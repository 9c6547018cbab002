//! Command-line front end: `run`, `sweep`, `converge` and `verify`.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

pub use config::{load_config, parse_config, parse_config_in, Entries, FieldSpec, RunConfig};

use crate::diagnostics::{monitor_energy, population_balance_residuals, verify_bounds};
use crate::error::{Error, Result};
use crate::grid::{write_field, Field, Mesh};
use crate::interp::{convergence_study, verify_interpolant_identities, InterpolantSet, SampleSpace};
use crate::stepper::{run_simulation, SimulationFailure, Trajectory, Unknown};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

/// Relative tolerance for the interpolant identities in `verify`.
const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "seird", version, about = "Spatial SEIRD model with nonlinear diffusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write totals and snapshots.
    Run {
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the cartesian product of a parameter grid in parallel.
    Sweep {
        config: PathBuf,
        /// Lines of `key = v1, v2, ...` (use `;` between values that contain commas).
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time-refinement study over the given step counts.
    Converge {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        taus: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a completed run directory and check every diagnostic.
    Verify { rundir: PathBuf },
}

/// Parses `args` (including the program name) and executes; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli.command),
        Err(err) => {
            let _ = err.print();
            if err.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn execute(command: &Command) -> i32 {
    let result = match command {
        Command::Run { config, out } => cmd_run(config, out.as_deref()),
        Command::Sweep { config, grid, out } => cmd_sweep(config, grid, out.as_deref()),
        Command::Converge { config, taus, out } => cmd_converge(config, taus, out.as_deref()),
        Command::Verify { rundir } => cmd_verify(rundir),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        EXIT_CONFIG
    } else if err.is_invariant() {
        EXIT_INVARIANT
    } else {
        EXIT_SOLVER
    }
}

fn cmd_run(path: &Path, out: Option<&Path>) -> Result<i32> {
    let cfg = load_config(path)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    let code = run_into(&cfg, &dir)?;
    if code == EXIT_OK {
        println!("wrote {}", dir.display());
    }
    Ok(code)
}

/// Runs `cfg` and writes its outputs into `dir`, including a partial
/// trajectory when the run fails.
pub fn run_into(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let sim = cfg.simulation()?;
    fs::create_dir_all(dir)?;
    let saved = cfg.with_absolute_rasters();
    fs::write(dir.join("config.cfg"), saved.emit())?;
    match run_simulation(&sim) {
        Ok(traj) => {
            write_outputs(dir, &traj, cfg.every)?;
            Ok(EXIT_OK)
        }
        Err(SimulationFailure { error, partial }) => {
            if let Some(traj) = partial {
                write_outputs(dir, &traj, cfg.every)?;
            }
            Err(error)
        }
    }
}

pub fn totals_csv(traj: &Trajectory) -> String {
    let mesh = &traj.mesh;
    let mut out = String::from("step,time");
    for u in Unknown::ALL {
        let n = u.name();
        out.push_str(&format!(",{n}_total,{n}_min,{n}_max"));
    }
    out.push_str(",d_total\n");
    for (st, d) in traj.states.iter().zip(&traj.deceased) {
        out.push_str(&format!("{},{}", st.k, st.t));
        for u in Unknown::ALL {
            let f = st.field(u);
            out.push_str(&format!(",{},{},{}", f.integral(mesh), f.min(), f.max()));
        }
        out.push_str(&format!(",{}\n", d.integral(mesh)));
    }
    out
}

fn write_snapshot(path: &Path, mesh: &Mesh, field: &Field) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_field(&mut w, mesh, field)?;
    w.flush()?;
    Ok(())
}

fn write_outputs(dir: &Path, traj: &Trajectory, every: usize) -> Result<()> {
    fs::write(dir.join("totals.csv"), totals_csv(traj))?;
    let fields = dir.join("fields");
    fs::create_dir_all(&fields)?;
    let last = traj.steps();
    for (st, d) in traj.states.iter().zip(&traj.deceased) {
        if st.k % every != 0 && st.k != last {
            continue;
        }
        for u in Unknown::ALL {
            write_snapshot(&fields.join(format!("{}_{:05}.bin", u.name(), st.k)), &traj.mesh, st.field(u))?;
        }
        write_snapshot(&fields.join(format!("d_{:05}.bin", st.k)), &traj.mesh, d)?;
    }
    Ok(())
}

/// One axis of a sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

pub fn parse_grid(text: &str) -> Result<Vec<GridAxis>> {
    let mut axes: Vec<GridAxis> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, rest) = content.split_once('=').ok_or_else(|| Error::ConfigSyntax {
            line,
            message: format!("expected `key = v1, v2, ...`, found `{content}`"),
        })?;
        let key = key.trim().to_string();
        let sep = if rest.contains(';') { ';' } else { ',' };
        let values: Vec<String> = rest.split(sep).map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(Error::ConfigSyntax { line, message: format!("empty value for `{key}`") });
        }
        if axes.iter().any(|a| a.key == key) {
            return Err(Error::ConfigSyntax { line, message: format!("duplicate key `{key}`") });
        }
        axes.push(GridAxis { key, values });
    }
    if axes.is_empty() {
        return Err(Error::ConfigSyntax { line: 0, message: "grid file declares no keys".into() });
    }
    Ok(axes)
}

/// Cartesian product of the grid, last axis fastest.
pub fn grid_points(axes: &[GridAxis]) -> Vec<Vec<(String, String)>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((axis.key.clone(), v.clone()));
                    p
                })
            })
            .collect()
    })
}

fn sweep_threads() -> Option<usize> {
    std::env::var("SEIRD_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn cmd_sweep(path: &Path, grid: &Path, out: Option<&Path>) -> Result<i32> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let base_dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = Entries::parse(&text)?;
    let grid_text = fs::read_to_string(grid)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", grid.display()))))?;
    let points = grid_points(&parse_grid(&grid_text)?);

    // every point must parse before anything runs
    let configs = points
        .iter()
        .map(|point| {
            let mut e = base.clone();
            for (k, v) in point {
                e.set(k, v);
            }
            RunConfig::from_entries(e, base_dir)
        })
        .collect::<Result<Vec<_>>>()?;
    let root = out.map(Path::to_path_buf).unwrap_or_else(|| configs[0].output_dir.clone());
    fs::create_dir_all(&root)?;

    let mut index = String::from("point");
    for (k, _) in &points[0] {
        index.push(',');
        index.push_str(k);
    }
    index.push('\n');
    for (idx, point) in points.iter().enumerate() {
        index.push_str(&idx.to_string());
        for (_, v) in point {
            index.push_str(&format!(",\"{v}\""));
        }
        index.push('\n');
    }
    fs::write(root.join("points.csv"), index)?;

    let run_all = || {
        configs
            .par_iter()
            .enumerate()
            .map(|(idx, cfg)| {
                let dir = root.join(format!("point_{idx}"));
                let code = run_into(cfg, &dir).unwrap_or_else(|err| {
                    eprintln!("point {idx}: {err}");
                    exit_code(&err)
                });
                (idx, code)
            })
            .collect::<Vec<_>>()
    };
    let results = match sweep_threads() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };
    let failed: Vec<_> = results.iter().filter(|(_, c)| *c != EXIT_OK).collect();
    println!("{} of {} points succeeded under {}", results.len() - failed.len(), results.len(), root.display());
    Ok(failed.iter().map(|(_, c)| *c).max().unwrap_or(EXIT_OK))
}

fn cmd_converge(path: &Path, steps: &[usize], out: Option<&Path>) -> Result<i32> {
    let cfg = load_config(path)?;
    let sim = cfg.simulation()?;
    let table = convergence_study(&sim, steps)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir)?;
    let csv = table.to_csv();
    fs::write(dir.join("study.csv"), &csv)?;
    print!("{csv}");
    Ok(EXIT_OK)
}

/// Outcome of `verify` on a run directory.
#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub bound_violations: usize,
    pub balance_max: f64,
    pub balance_limit: f64,
    pub identity_failures: Vec<String>,
    pub energy_finite: bool,
    pub totals_match: bool,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.bound_violations == 0
            && self.balance_max <= self.balance_limit
            && self.identity_failures.is_empty()
            && self.energy_finite
            && self.totals_match
    }
}

pub fn verify_run_dir(rundir: &Path) -> Result<VerifyReport> {
    let cfg = load_config(&rundir.join("config.cfg"))?;
    let sim = cfg.simulation()?;
    let traj = run_simulation(&sim).map_err(|f| f.error)?;

    let violations = verify_bounds(&traj, &traj.ledger);
    for v in violations.iter().take(10) {
        eprintln!("bound violation: {v}");
    }
    let balance_max = population_balance_residuals(&traj).into_iter().fold(0.0, f64::max);

    let energy = monitor_energy(&traj);
    fs::write(rundir.join("energy.csv"), energy.to_csv())?;
    let energy_finite = energy.rows.iter().all(|r| r.entries().iter().all(|v| v.is_finite()));

    let mut identity_failures = Vec::new();
    for u in Unknown::ALL {
        let set = InterpolantSet::from_trajectory(&traj, u);
        for (label, space) in [("H", SampleSpace::H(&traj.mesh)), ("V", SampleSpace::V(&traj.mesh))] {
            let report = verify_interpolant_identities(&set, space, None)?;
            for check in report.failures(IDENTITY_TOL) {
                identity_failures.push(format!("{}[{label}] {}: gap {:e}", u.name(), check.name, check.gap()));
            }
        }
    }

    let saved = fs::read_to_string(rundir.join("totals.csv"))?;
    let totals_match = saved == totals_csv(&traj);

    Ok(VerifyReport {
        bound_violations: violations.len(),
        balance_max,
        balance_limit: 10.0 * traj.tol,
        identity_failures,
        energy_finite,
        totals_match,
    })
}

fn cmd_verify(rundir: &Path) -> Result<i32> {
    let r = verify_run_dir(rundir)?;
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    println!("bounds      {} ({} violations)", mark(r.bound_violations == 0), r.bound_violations);
    println!("balance     {} (max residual {:e})", mark(r.balance_max <= r.balance_limit), r.balance_max);
    println!("energy      {}", mark(r.energy_finite));
    println!("identities  {} ({} failures)", mark(r.identity_failures.is_empty()), r.identity_failures.len());
    for f in &r.identity_failures {
        println!("  {f}");
    }
    println!("totals      {}", mark(r.totals_match));
    Ok(if r.passed() { EXIT_OK } else { EXIT_INVARIANT })
}
