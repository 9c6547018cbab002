use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = "mesh.dim = 1\nmesh.cells = 16\ntime.T = 1\ntime.N = 8\n\
                    params.alpha = 0.3\nparams.mu = 0.2\nnl.kappa = linear\n\
                    init.n.preset = gaussian\ninit.n.center = 0.5\ninit.n.width = 0.2\ninit.n.amplitude = 1\ninit.n.floor = 1\n\
                    init.s.value = 0.8\ninit.h.value = 0.9\ninit.i.value = 0.05\noutput.every = 4\n";

fn seird(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seird")).args(args).current_dir(dir).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn workspace(cfg: &str) -> TempDir {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.cfg"), cfg).unwrap();
    tmp
}

fn totals(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn run_then_verify() {
    let tmp = workspace(BASE);
    let out = seird(&["run", "run.cfg", "--out", "out"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    assert!(dir.join("config.cfg").exists());
    let rows = totals(&dir.join("totals.csv"));
    assert_eq!(rows.len(), 9);
    for k in [0, 4, 8] {
        for u in ["n", "s", "i", "h", "d"] {
            assert!(dir.join(format!("fields/{u}_{k:05}.bin")).exists(), "{u} at {k}");
        }
    }
    assert!(!dir.join("fields/n_00001.bin").exists());

    let out = seird(&["verify", "out"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.join("energy.csv").exists());
}

#[test]
fn verify_flags_tampered_totals() {
    let tmp = workspace(BASE);
    assert_eq!(code(&seird(&["run", "run.cfg", "--out", "out"], tmp.path())), 0);
    let path = tmp.path().join("out/totals.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    cells[2] = "12345".to_string();
    lines[3] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = seird(&["verify", "out"], tmp.path());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("totals      FAIL"));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = workspace(&BASE.replace("params.mu = 0.2\n", "params.mu = 0.2\nparams.bogus = 1\n"));
    let out = seird(&["run", "run.cfg"], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.bogus"));

    // τ(α-μ) above one half
    let tmp = workspace(&BASE.replace("time.N = 8", "time.N = 1").replace("time.T = 1", "time.T = 0.9").replace("params.alpha = 0.3", "params.alpha = 1.0"));
    assert_eq!(code(&seird(&["run", "run.cfg"], tmp.path())), 1);

    assert_eq!(code(&seird(&["run", "missing.cfg"], tmp.path())), 1);
    assert_eq!(code(&seird(&["frobnicate"], tmp.path())), 1);
    assert_eq!(code(&seird(&["--help"], tmp.path())), 0);
}

#[test]
fn unattainable_tolerance_exits_with_two() {
    let cfg = BASE.replace("mesh.cells = 16", "mesh.cells = 400") + "solver.tol = 1e-18\n";
    let tmp = workspace(&cfg);
    let out = seird(&["run", "run.cfg", "--out", "out"], tmp.path());
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("out/config.cfg").exists());
}

#[test]
fn disease_free_totals_follow_the_population_law() {
    let cfg = "mesh.dim = 2\nmesh.cells = 6, 5\ntime.T = 1\ntime.N = 10\nparams.alpha = 0.25\nparams.mu = 0.25\n\
               init.n.preset = rectangle\ninit.n.lo = 0, 0\ninit.n.hi = 0.5, 0.5\ninit.n.inside = 2\ninit.n.outside = 1\n\
               init.s.value = 0.5\ninit.h.value = 0.5\n";
    let tmp = workspace(cfg);
    assert_eq!(code(&seird(&["run", "run.cfg", "--out", "out"], tmp.path())), 0);
    let rows = totals(&tmp.path().join("out/totals.csv"));
    let n0 = rows[0][2];
    for row in &rows {
        // α = μ with i = 0 conserves the population exactly
        assert!((row[2] - n0).abs() <= 1e-12 * n0);
    }
}

#[test]
fn sweep_writes_every_point() {
    let tmp = workspace(BASE);
    fs::write(tmp.path().join("grid.txt"), "params.alpha = 0.2, 0.3\nmesh.cells = 8; 12\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_seird"))
        .args(["sweep", "run.cfg", "--grid", "grid.txt", "--out", "sweep"])
        .env("SEIRD_THREADS", "2")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let points = fs::read_to_string(tmp.path().join("sweep/points.csv")).unwrap();
    assert_eq!(points.lines().count(), 5);
    for idx in 0..4 {
        assert!(tmp.path().join(format!("sweep/point_{idx}/totals.csv")).exists());
    }
}

#[test]
fn converge_writes_study() {
    let tmp = workspace(BASE);
    let out = seird(&["converge", "run.cfg", "--taus", "4,8,16", "--out", "study"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let study = fs::read_to_string(tmp.path().join("study/study.csv")).unwrap();
    // one row per consecutive pair of levels
    assert_eq!(study.lines().count(), 3);
    assert!(study.starts_with("tau,dist_n,dist_s,dist_i,dist_h,order_estimate"));
}

#[test]
fn runs_are_reproducible() {
    let tmp = workspace(BASE);
    assert_eq!(code(&seird(&["run", "run.cfg", "--out", "a"], tmp.path())), 0);
    assert_eq!(code(&seird(&["run", "run.cfg", "--out", "b"], tmp.path())), 0);
    for file in ["totals.csv", "fields/i_00008.bin"] {
        assert_eq!(fs::read(tmp.path().join("a").join(file)).unwrap(), fs::read(tmp.path().join("b").join(file)).unwrap());
    }
}
