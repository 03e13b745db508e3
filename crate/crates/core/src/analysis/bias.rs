//! Split-sample estimate of the empirical-loss bias `E_x Var(ȳ_x)`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fit, AnalysisError};
use crate::field::ScalarField;
use crate::target::build_targets;
use crate::trainer::sample_interior;
use crate::walker::rng::{hash_key, keyed_rng, tags};
use crate::walker::{substeps, PdeProblem, WalkConfig, WalkMode};

pub const MIN_OUTER: usize = 100;
const BOOTSTRAP_RESAMPLES: usize = 200;

/// Walk settings for a bias measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasSetup {
    pub dt: f64,
    pub dt_max: f64,
    pub ns: usize,
    pub n_outer: usize,
    pub mode: WalkMode,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub dt: f64,
    pub ns: usize,
    /// `mean ½(ȳ⁽¹⁾ − ȳ⁽²⁾)²`, the gap between the two loss estimators below.
    pub estimated_bias: f64,
    /// `(Δt/N_s)·E_x|∇u|²`.
    pub predicted_bias: f64,
    pub std_error: f64,
    pub n_outer: usize,
    /// `mean ½[(u−ȳ⁽¹⁾)² + (u−ȳ⁽²⁾)²]`.
    pub empirical_loss: f64,
    /// `mean (u−ȳ⁽¹⁾)(u−ȳ⁽²⁾)`, unbiased for the exact martingale loss.
    pub exact_loss: f64,
}

/// Bootstrap standard error of the mean of `v`.
pub(crate) fn bootstrap_std_error(v: &[f64], key: &[u64]) -> f64 {
    let n = v.len();
    let mut rng = keyed_rng(key);
    let means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| v[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    (means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (means.len() - 1) as f64).sqrt()
}

/// Estimates the bias of the empirical interior loss at `u_eval`.
///
/// Collocation points are uniform over the interior region at distance at
/// least `4√Δt` from the boundary. At each point two independent target means
/// are built with `N_s` walkers each; their cross product estimates the exact
/// loss without bias and their squares estimate the empirical loss.
pub fn estimate_bias<U: ScalarField + ?Sized>(
    u_eval: &U,
    problem: &PdeProblem,
    setup: &BiasSetup,
) -> Result<BiasReport, AnalysisError> {
    if setup.n_outer < MIN_OUTER {
        return Err(AnalysisError::TooFewOuter {
            required: MIN_OUTER,
            got: setup.n_outer,
        });
    }
    let margin = 4.0 * setup.dt.sqrt();
    let region = problem.domain().shrunk(margin).ok_or_else(|| {
        AnalysisError::InvalidArgument(format!("dt = {} leaves no interior at margin {margin}", setup.dt))
    })?;
    let cell = hash_key(&[tags::ANALYSIS, setup.seed, setup.dt.to_bits(), setup.ns as u64]);
    let points = sample_interior(&region, setup.n_outer, &mut keyed_rng(&[cell, 0]));
    let walk = WalkConfig {
        mode: setup.mode,
        horizon: setup.dt,
        step: substeps(setup.dt, setup.dt_max)?.1,
        walkers: setup.ns,
    };
    let first = build_targets(&points, problem, u_eval, &walk, cell, 1)?;
    let second = build_targets(&points, problem, u_eval, &walk, cell, 2)?;
    let mut u = vec![0.0; setup.n_outer];
    u_eval.values(&points, &mut u);

    let n = setup.n_outer as f64;
    let mut per_point = Vec::with_capacity(setup.n_outer);
    let (mut emp, mut exact) = (0.0, 0.0);
    for ((ui, a), b) in u.iter().zip(&first).zip(&second) {
        let (ra, rb) = (ui - a.mean, ui - b.mean);
        emp += 0.5 * (ra * ra + rb * rb);
        exact += ra * rb;
        per_point.push(0.5 * (a.mean - b.mean).powi(2));
    }
    let estimated_bias = per_point.iter().sum::<f64>() / n;
    let std_error = bootstrap_std_error(&per_point, &[cell, 3]);

    // E|∇u|² over the same region, with an independent point set
    let n_grad = setup.n_outer.max(10_000);
    let grad_points = sample_interior(&region, n_grad, &mut keyed_rng(&[cell, 4]));
    let k = problem.dim();
    let mut g = vec![0.0; k];
    let mean_grad_sq = grad_points
        .chunks_exact(k)
        .map(|x| {
            u_eval.gradient(x, &mut g);
            g.iter().map(|v| v * v).sum::<f64>()
        })
        .sum::<f64>()
        / n_grad as f64;

    Ok(BiasReport {
        dt: setup.dt,
        ns: setup.ns,
        estimated_bias,
        predicted_bias: setup.dt / setup.ns as f64 * mean_grad_sq,
        std_error,
        n_outer: setup.n_outer,
        empirical_loss: emp / n,
        exact_loss: exact / n,
    })
}

/// Fitted exponents of `bias ∝ Δt^p · N_s^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSlopes {
    pub slope_dt: f64,
    pub slope_ns: f64,
    pub log_intercept: f64,
}

pub fn fit_bias_slopes(reports: &[BiasReport]) -> Option<BiasSlopes> {
    let dt: Vec<f64> = reports.iter().map(|r| r.dt).collect();
    let ns: Vec<f64> = reports.iter().map(|r| r.ns as f64).collect();
    let b: Vec<f64> = reports.iter().map(|r| r.estimated_bias).collect();
    let (slope_dt, slope_ns, log_intercept) = fit::loglog_plane(&dt, &ns, &b)?;
    Some(BiasSlopes {
        slope_dt,
        slope_ns,
        log_intercept,
    })
}

/// `bias_report.csv` with columns `dt,ns,estimated_bias,predicted_bias,std_error,n_outer`.
pub fn write_bias_csv<W: Write>(mut out: W, reports: &[BiasReport]) -> std::io::Result<()> {
    writeln!(out, "dt,ns,estimated_bias,predicted_bias,std_error,n_outer")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.dt, r.ns, r.estimated_bias, r.predicted_bias, r.std_error, r.n_outer
        )?;
    }
    out.flush()
}
