//! Config files, single runs, sweeps, evaluation and the analysis driver.

mod analyze;
mod config;
mod sweep;

pub use analyze::{run_analysis, AnalysisKind, AnalysisOutcome, AnalysisParams, BiasField};
pub use config::{
    dt_ladder, load_config, paper_scale_config, parse_config, save_config, ConfigFile, DtLadder, SweepSpec,
};
pub use sweep::{
    cell_seed, read_summary, run_sweep, summary_rows, RunManifest, RunRecord, SummaryRow,
    SUMMARY_HEADER,
};

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisError;
use crate::field::{ClosedForm, ScalarField};
use crate::nn::{Network, NnError};
use crate::trainer::{relative_l2_error, TrainConfig, TrainError, Trainer, METRICS_HEADER};
use crate::walker::BoxDomain;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Crate version recorded in manifests.
pub const CODE_VERSION: &str = concat!("dflm ", env!("CARGO_PKG_VERSION"));

/// Worker count from `DFLM_WORKERS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("DFLM_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Manifest of a single training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainManifest {
    pub config: TrainConfig,
    pub seed: u64,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub complete: bool,
    /// Inner Euler–Maruyama step actually used.
    pub inner_step: f64,
    pub wall_time_s: Option<f64>,
    pub final_rel_l2: Option<f64>,
    pub outputs: Vec<String>,
}

fn write_manifest<T: Serialize>(path: &Path, m: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(m).expect("manifest serializes") + "\n";
    write_text(path, &text)
}

/// Trains one config, writing `config.toml`, `metrics.csv`, checkpoints and
/// `manifest.json` under `out_dir`.
pub fn run_training(config: &TrainConfig, out_dir: &Path) -> Result<TrainManifest, HarnessError> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    save_config(&out_dir.join("config.toml"), &ConfigFile::Train(config.clone()))?;
    let mut manifest = TrainManifest {
        config: config.clone(),
        seed: config.seed,
        code_version: CODE_VERSION.into(),
        started_unix: now_unix(),
        finished_unix: None,
        complete: false,
        inner_step: config.inner_step()?,
        wall_time_s: None,
        final_rel_l2: None,
        outputs: vec!["config.toml".into(), "metrics.csv".into(), "checkpoint.json".into()],
    };
    let manifest_path = out_dir.join("manifest.json");
    write_manifest(&manifest_path, &manifest)?;

    let started = Instant::now();
    let net = train_into(config, out_dir, &mut manifest.outputs)?;
    let final_rel = config
        .build_problem()
        .exact()
        .map(|u| relative_l2_error(&net, u, config.build_problem().domain(), config.eval_grid));
    manifest.final_rel_l2 = final_rel;
    manifest.wall_time_s = Some(started.elapsed().as_secs_f64());
    manifest.finished_unix = Some(now_unix());
    manifest.complete = true;
    write_manifest(&manifest_path, &manifest)?;
    Ok(manifest)
}

/// Training loop with streamed metrics and checkpoints. Returns the final
/// network, also saved as `checkpoint.json`.
pub(crate) fn train_into(
    config: &TrainConfig,
    out_dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<Network, HarnessError> {
    let metrics_path = out_dir.join("metrics.csv");
    let file = File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut metrics = BufWriter::new(file);
    writeln!(metrics, "{METRICS_HEADER}").map_err(io_err(&metrics_path))?;
    let mut trainer = Trainer::new(config.clone(), config.build_problem())?;
    let every = config.checkpoint_every;
    let mut saved = Vec::new();
    let result = trainer.run(|row, net| {
        writeln!(metrics, "{}", row.to_csv_line())?;
        if every > 0 && row.iteration % every == 0 {
            let name = format!("checkpoint_{}.json", row.iteration);
            net.save(out_dir.join(&name))?;
            saved.push(name);
        }
        Ok(())
    });
    metrics.flush().map_err(io_err(&metrics_path))?;
    match result {
        Ok(_) => {}
        Err(TrainError::NonFinite { iteration, last_good }) => {
            last_good.save(out_dir.join("last_good.json"))?;
            return Err(TrainError::NonFinite { iteration, last_good }.into());
        }
        Err(e) => return Err(e.into()),
    }
    outputs.extend(saved);
    let net = trainer.into_network();
    net.save(out_dir.join("checkpoint.json"))?;
    Ok(net)
}

/// Relative `L²` error of `field` against `sin(2mπx₁)sin(2mπx₂)` on a
/// `grid_n × grid_n` grid of the unit square.
pub fn evaluate_field<F: ScalarField + ?Sized>(field: &F, grid_n: usize, m: u32) -> Result<f64, HarnessError> {
    if grid_n < 2 {
        return Err(HarnessError::Invalid {
            field: "grid".into(),
            reason: format!("need at least 2 nodes per axis, got {grid_n}"),
        });
    }
    if m == 0 {
        return Err(HarnessError::Invalid {
            field: "m".into(),
            reason: "wavenumber must be at least 1".into(),
        });
    }
    if field.dim() != 2 {
        return Err(HarnessError::Invalid {
            field: "checkpoint".into(),
            reason: format!("expected a 2-input network, got {} inputs", field.dim()),
        });
    }
    Ok(relative_l2_error(
        field,
        &ClosedForm::sine_product(m),
        &BoxDomain::unit_square(),
        grid_n,
    ))
}

/// Loads a checkpoint and evaluates it with [`evaluate_field`].
pub fn evaluate(checkpoint: &Path, grid_n: usize, m: u32) -> Result<f64, HarnessError> {
    let net = Network::load(checkpoint)?;
    evaluate_field(&net, grid_n, m)
}
