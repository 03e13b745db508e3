//! The `(Δt, N_s, trial)` sweep runner.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    io_err, now_unix, save_config, train_into, worker_count, write_manifest, ConfigFile, HarnessError, SweepSpec,
    CODE_VERSION,
};
use crate::trainer::{bias_mode_losses, converged_loss, relative_l2_error, write_metrics_csv, MetricsRow, TrainConfig};
use crate::walker::rng::{hash_key, tags};

pub const SUMMARY_HEADER: &str = "dt,ns,trial,final_interior_loss,final_rel_l2,converged_loss_mean";

/// Seed of one sweep cell. Hashing the values rather than their positions
/// keeps existing cells' seeds when the sweep grows. Kept to 63 bits so the
/// seed fits a TOML integer.
pub fn cell_seed(base_seed: u64, dt: f64, ns: usize, trial: usize) -> u64 {
    hash_key(&[tags::SWEEP, base_seed, dt.to_bits(), ns as u64, trial as u64]) >> 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dt: f64,
    pub ns: usize,
    pub trial: usize,
    pub seed: u64,
    /// Inner step actually used.
    pub inner_step: f64,
    /// Directory of this run relative to the sweep output directory.
    pub dir: String,
    pub final_interior_loss: f64,
    pub final_rel_l2: Option<f64>,
    pub converged_loss_mean: f64,
    pub wall_time_s: f64,
}

impl RunRecord {
    fn key(&self) -> (u64, usize, usize) {
        (self.dt.to_bits(), self.ns, self.trial)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec: SweepSpec,
    pub bias_mode: bool,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub complete: bool,
    pub runs: Vec<RunRecord>,
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dt: f64,
    pub ns: usize,
    pub trial: usize,
    pub final_interior_loss: f64,
    pub final_rel_l2: Option<f64>,
    pub converged_loss_mean: f64,
}

pub fn summary_rows(manifest: &RunManifest) -> Vec<SummaryRow> {
    let mut runs = manifest.runs.clone();
    sort_runs(&mut runs);
    runs.into_iter()
        .map(|r| SummaryRow {
            dt: r.dt,
            ns: r.ns,
            trial: r.trial,
            final_interior_loss: r.final_interior_loss,
            final_rel_l2: r.final_rel_l2,
            converged_loss_mean: r.converged_loss_mean,
        })
        .collect()
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

fn sort_runs(runs: &mut [RunRecord]) {
    runs.sort_by(|a, b| {
        a.dt.total_cmp(&b.dt)
            .then(a.ns.cmp(&b.ns))
            .then(a.trial.cmp(&b.trial))
    });
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.dt,
            r.ns,
            r.trial,
            r.final_interior_loss,
            r.final_rel_l2.map_or(String::new(), |v| v.to_string()),
            r.converged_loss_mean
        ));
    }
    super::write_text(path, &text)
}

fn cell_config(spec: &SweepSpec, dt: f64, ns: usize, trial: usize) -> TrainConfig {
    TrainConfig {
        dt,
        ns,
        seed: cell_seed(spec.base.seed, dt, ns, trial),
        ..spec.base.clone()
    }
}

fn run_cell(
    spec: &SweepSpec,
    bias_mode: bool,
    (dt, ns, trial): (f64, usize, usize),
) -> Result<RunRecord, HarnessError> {
    let config = cell_config(spec, dt, ns, trial);
    config.validate()?;
    let dir = format!("runs/dt{dt}_ns{ns}_trial{trial}");
    let out = spec.output_dir.join(&dir);
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    save_config(&out.join("config.toml"), &ConfigFile::Train(config.clone()))?;
    let started = Instant::now();
    let problem = config.build_problem();
    let (rows, final_rel_l2): (Vec<MetricsRow>, Option<f64>) = if bias_mode {
        let exact = problem.exact().ok_or_else(|| {
            HarnessError::Usage("bias mode needs a problem with a known exact solution".into())
        })?;
        let rows = bias_mode_losses(&config, &problem, exact)?;
        let path = out.join("metrics.csv");
        let file = File::create(&path).map_err(io_err(&path))?;
        write_metrics_csv(std::io::BufWriter::new(file), &rows).map_err(io_err(&path))?;
        let err = relative_l2_error(exact, exact, problem.domain(), config.eval_grid);
        (rows, Some(err))
    } else {
        let mut outputs = Vec::new();
        let net = train_into(&config, &out, &mut outputs)?;
        let path = out.join("metrics.csv");
        let rows = read_metrics(&path)?;
        let err = problem
            .exact()
            .map(|u| relative_l2_error(&net, u, problem.domain(), config.eval_grid));
        (rows, err)
    };
    log::info!("finished dt={dt} ns={ns} trial={trial}");
    Ok(RunRecord {
        dt,
        ns,
        trial,
        seed: config.seed,
        inner_step: config.inner_step()?,
        dir,
        final_interior_loss: rows.last().map_or(f64::NAN, |r| r.interior_loss),
        final_rel_l2,
        converged_loss_mean: converged_loss(&rows).unwrap_or(f64::NAN),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    #[derive(Deserialize)]
    struct Row {
        iteration: u64,
        interior_loss: f64,
        boundary_loss: f64,
        relative_l2_error: Option<f64>,
        wall_time_s: Option<f64>,
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    r.deserialize::<Row>()
        .map(|row| {
            row.map(|x| MetricsRow {
                iteration: x.iteration,
                interior_loss: x.interior_loss,
                boundary_loss: x.boundary_loss,
                relative_l2_error: x.relative_l2_error,
                wall_time_s: x.wall_time_s,
            })
            .map_err(|e| HarnessError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Runs every missing cell of `spec`, then writes `summary.csv`.
///
/// An existing `manifest.json` in the output directory is resumed: cells it
/// lists as finished are skipped, provided its base config and mode match.
/// Cells run on `DFLM_WORKERS` threads.
pub fn run_sweep(spec: &SweepSpec, bias_mode: bool) -> Result<RunManifest, HarnessError> {
    spec.validate()?;
    let root = &spec.output_dir;
    fs::create_dir_all(root).map_err(io_err(root))?;
    let manifest_path = root.join("manifest.json");
    let mut manifest = RunManifest {
        spec: spec.clone(),
        bias_mode,
        code_version: CODE_VERSION.into(),
        started_unix: now_unix(),
        finished_unix: None,
        complete: false,
        runs: Vec::new(),
    };
    if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let old: RunManifest = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;
        if old.spec.base != spec.base || old.bias_mode != bias_mode {
            return Err(HarnessError::Usage(format!(
                "{} holds a sweep with a different base config or mode",
                root.display()
            )));
        }
        manifest.runs = old
            .runs
            .into_iter()
            .filter(|r| root.join(&r.dir).join("metrics.csv").exists())
            .collect();
    }
    let done: BTreeSet<_> = manifest.runs.iter().map(RunRecord::key).collect();
    let mut todo = Vec::new();
    for &dt in &spec.dt_values {
        for &ns in &spec.ns_values {
            for trial in 0..spec.trials {
                if !done.contains(&(dt.to_bits(), ns, trial)) {
                    todo.push((dt, ns, trial));
                }
            }
        }
    }
    write_manifest(&manifest_path, &manifest)?;
    log::info!("{} cells to run, {} already done", todo.len(), done.len());

    let shared = Mutex::new(manifest);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| HarnessError::Usage(e.to_string()))?;
    let result = pool.install(|| {
        todo.par_iter().try_for_each(|&cell| {
            let record = run_cell(spec, bias_mode, cell)?;
            let mut m = shared.lock().expect("manifest lock");
            m.runs.push(record);
            sort_runs(&mut m.runs);
            write_manifest(&manifest_path, &*m)
        })
    });
    let mut manifest = shared.into_inner().expect("manifest lock");
    result?;
    write_summary(&root.join("summary.csv"), &summary_rows(&manifest))?;
    manifest.finished_unix = Some(now_unix());
    manifest.complete = true;
    write_manifest(&manifest_path, &manifest)?;
    Ok(manifest)
}
