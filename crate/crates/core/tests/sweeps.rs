//! Sweep runner: determinism, file layout and the bias-mode scaling laws.

use std::fs;
use std::path::Path;

use dflm::analysis::fit::loglog_slope;
use dflm::harness::{load_config, read_summary, run_sweep, ConfigFile, SweepSpec, SUMMARY_HEADER};
use dflm::trainer::TrainConfig;

fn desk(dir: &Path) -> SweepSpec {
    SweepSpec {
        dt_values: vec![1e-3, 4e-3],
        ns_values: vec![1, 4],
        trials: 1,
        output_dir: dir.to_path_buf(),
        base: TrainConfig {
            nr: 16,
            nb: 8,
            iterations: 20,
            hidden: vec![8, 8],
            eval_grid: 21,
            log_every: 5,
            eval_every: 10,
            dt_max: 5e-4,
            seed: 11,
            ..Default::default()
        },
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_sweep(&desk(a.path()), false).unwrap();
    run_sweep(&desk(b.path()), false).unwrap();
    let summary = fs::read(a.path().join("summary.csv")).unwrap();
    assert_eq!(summary, fs::read(b.path().join("summary.csv")).unwrap());
    let text = String::from_utf8(summary).unwrap();
    assert_eq!(text.lines().next(), Some(SUMMARY_HEADER));
    assert_eq!(text.lines().count(), 5);
    assert!(!text.contains('\r'));
    for r in &ma.runs {
        let rel = Path::new(&r.dir).join("metrics.csv");
        assert_eq!(fs::read(a.path().join(&rel)).unwrap(), fs::read(b.path().join(&rel)).unwrap());
        // each cell carries the config that reproduces it
        let ConfigFile::Train(c) = load_config(&a.path().join(&r.dir).join("config.toml")).unwrap() else {
            panic!("cell config should be a training config")
        };
        assert_eq!((c.dt, c.ns, c.seed), (r.dt, r.ns, r.seed));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], true);
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 4);
}

#[test]
fn rerun_in_place_skips_finished_cells() {
    let dir = tempfile::tempdir().unwrap();
    let spec = desk(dir.path());
    let first = run_sweep(&spec, false).unwrap();
    let before = fs::read(dir.path().join("summary.csv")).unwrap();
    let second = run_sweep(&spec, false).unwrap();
    assert_eq!(first.runs, second.runs);
    assert_eq!(before, fs::read(dir.path().join("summary.csv")).unwrap());
}

fn bias_spec(dir: &Path, dts: Vec<f64>, ns: Vec<usize>) -> SweepSpec {
    SweepSpec {
        dt_values: dts,
        ns_values: ns,
        trials: 1,
        output_dir: dir.to_path_buf(),
        base: TrainConfig {
            nr: 400,
            nb: 40,
            iterations: 30,
            log_every: 1,
            eval_grid: 21,
            dt_max: 2e-4,
            ..Default::default()
        },
    }
}

#[test]
fn bias_mode_loss_grows_linearly_in_dt() {
    let dir = tempfile::tempdir().unwrap();
    run_sweep(&bias_spec(dir.path(), vec![4e-4, 1.6e-3, 6.4e-3], vec![4]), true).unwrap();
    let rows = read_summary(&dir.path().join("summary.csv")).unwrap();
    let xs: Vec<f64> = rows.iter().map(|r| r.dt).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.converged_loss_mean).collect();
    let (slope, _) = loglog_slope(&xs, &ys).unwrap();
    assert!((slope - 1.0).abs() <= 0.15, "slope {slope}, rows {rows:?}");
    assert!(rows.iter().all(|r| r.final_rel_l2 == Some(0.0)));
}

#[test]
fn bias_mode_loss_falls_as_one_over_ns() {
    let dir = tempfile::tempdir().unwrap();
    run_sweep(&bias_spec(dir.path(), vec![1.6e-3], vec![1, 4, 16]), true).unwrap();
    let rows = read_summary(&dir.path().join("summary.csv")).unwrap();
    let xs: Vec<f64> = rows.iter().map(|r| r.ns as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.converged_loss_mean).collect();
    let (slope, _) = loglog_slope(&xs, &ys).unwrap();
    assert!((slope + 1.0).abs() <= 0.15, "slope {slope}, rows {rows:?}");
}
