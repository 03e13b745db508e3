//! Checks of the concentration, folded-normal and learning-amount bounds.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{fit, AnalysisError};
use crate::field::ScalarField;
use crate::target::{
    apply_target_operator, convolution_target, q_target, qtilde_target, GaussHermite, GridFunction,
    OperatorOptions, UniformGrid,
};
use crate::walker::rng::{hash_key, keyed_rng, tags};
use crate::walker::{simulate_batch, substeps, PdeProblem, RngStream, WalkConfig, WalkMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    /// Above the bound but within twice it.
    Flagged,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevReport {
    /// Fraction of trials with `|ȳ − E ȳ| > ε`.
    pub tail_probability: f64,
    /// Binomial standard error of the tail fraction.
    pub std_error: f64,
    /// `|∇u(x)|²Δt / (ε²N_s)`.
    pub bound: f64,
    /// Mean of the trial means, used in place of `E ȳ`.
    pub center: f64,
    pub n_trials: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChebyshevSetup {
    pub dt: f64,
    pub dt_max: f64,
    pub ns: usize,
    pub eps: f64,
    pub n_trials: usize,
    pub mode: WalkMode,
    pub seed: u64,
}

/// Tail probability of the target mean at `x` against the Chebyshev bound.
///
/// The bound is read with constant 1: above `bound + 3σ` is flagged, above
/// `2·bound + 3σ` fails.
pub fn chebyshev_check<U: ScalarField + ?Sized>(
    u_eval: &U,
    problem: &PdeProblem,
    x: &[f64],
    setup: &ChebyshevSetup,
) -> Result<ChebyshevReport, AnalysisError> {
    if !(setup.eps > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!("eps must be positive, got {}", setup.eps)));
    }
    if setup.n_trials == 0 || setup.ns == 0 {
        return Err(AnalysisError::InvalidArgument("n_trials and ns must be positive".into()));
    }
    let mut grad = vec![0.0; x.len()];
    u_eval.gradient(x, &mut grad);
    let bound = grad.iter().map(|g| g * g).sum::<f64>() * setup.dt / (setup.eps * setup.eps * setup.ns as f64);

    let means: Vec<f64> = if setup.dt == 0.0 {
        // walkers do not move and nothing accrues
        vec![u_eval.value(x); setup.n_trials]
    } else {
        let walk = WalkConfig {
            mode: setup.mode,
            horizon: setup.dt,
            step: substeps(setup.dt, setup.dt_max)?.1,
            walkers: setup.ns,
        };
        let key = hash_key(&[tags::ANALYSIS, setup.seed, setup.dt.to_bits(), setup.ns as u64, 11]);
        (0..setup.n_trials as u64)
            .map(|t| {
                let rec = simulate_batch(x, problem, u_eval, &walk, &RngStream::new(key, t, 0))?;
                let m = match setup.mode {
                    WalkMode::XProcess => q_target(&rec, u_eval, problem)?,
                    WalkMode::BProcess => qtilde_target(&rec, u_eval, problem)?,
                };
                Ok(m.mean)
            })
            .collect::<Result<_, AnalysisError>>()?
    };
    let n = means.len() as f64;
    let center = means.iter().sum::<f64>() / n;
    let tail = means.iter().filter(|m| (*m - center).abs() > setup.eps).count() as f64 / n;
    let std_error = (tail.max(1.0 / n) * (1.0 - tail).max(1.0 / n) / n).sqrt();
    let verdict = if tail <= bound + 3.0 * std_error {
        Verdict::Pass
    } else if tail <= 2.0 * bound + 3.0 * std_error {
        Verdict::Flagged
    } else {
        Verdict::Fail
    };
    Ok(ChebyshevReport {
        tail_probability: tail,
        std_error,
        bound,
        center,
        n_trials: setup.n_trials,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedNormalReport {
    pub mu: Vec<f64>,
    pub sigma: f64,
    /// Monte-Carlo `E|w|` for `w ~ N(μ, σ²I)`.
    pub mc_estimate: f64,
    pub std_error: f64,
    /// `k√(2/π)σ e^{−|μ|²/2σ²} + k|μ|`.
    pub bound: f64,
    /// `mc_estimate ≤ bound + 4·std_error`.
    pub holds: bool,
}

pub const MIN_FOLDED_SAMPLES: usize = 10_000;

/// `k√(2/π)σ e^{−|μ|²/2σ²} + k|μ|` in dimension `k = μ.len()`.
pub fn folded_normal_bound(mu: &[f64], sigma: f64) -> f64 {
    let k = mu.len() as f64;
    let m2: f64 = mu.iter().map(|v| v * v).sum();
    let expo = if sigma > 0.0 { (-m2 / (2.0 * sigma * sigma)).exp() } else { 0.0 };
    k * (2.0 / PI).sqrt() * sigma * expo + k * m2.sqrt()
}

pub fn folded_normal_bound_check(
    mu: &[f64],
    sigma: f64,
    n_samples: usize,
    seed: u64,
) -> Result<FoldedNormalReport, AnalysisError> {
    if n_samples < MIN_FOLDED_SAMPLES {
        return Err(AnalysisError::TooFewOuter {
            required: MIN_FOLDED_SAMPLES,
            got: n_samples,
        });
    }
    if mu.is_empty() || !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(AnalysisError::InvalidArgument("need k ≥ 1 and finite σ ≥ 0".into()));
    }
    let mut key = vec![tags::ANALYSIS, seed, sigma.to_bits(), 13];
    key.extend(mu.iter().map(|v| v.to_bits()));
    let mut rng = keyed_rng(&key);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n_samples {
        let r2: f64 = mu
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (m + sigma * z).powi(2)
            })
            .sum();
        let r = r2.sqrt();
        s += r;
        s2 += r * r;
    }
    let n = n_samples as f64;
    let mean = s / n;
    let std_error = ((s2 / n - mean * mean).max(0.0) / (n - 1.0)).sqrt();
    let bound = folded_normal_bound(mu, sigma);
    Ok(FoldedNormalReport {
        mu: mu.to_vec(),
        sigma,
        mc_estimate: mean,
        std_error,
        bound,
        holds: mean <= bound + 4.0 * std_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningBoundReport {
    pub x: Vec<f64>,
    /// `|Tu(x) − u(x)|`.
    pub measured: f64,
    /// `|∇u(x)|(C₁√Δt + C₂|V(x)|Δt) + |G(x)|Δt`.
    pub bound: f64,
    pub c1: f64,
    pub c2: f64,
    /// `measured ≤ bound` up to `1e-12` of quadrature slack.
    pub holds: bool,
    /// `½‖∇²u(x)‖_F · E|z|²` with `E|z|² = kΔt + |V|²Δt²`: the Taylor remainder
    /// that the first-order bound drops.
    pub second_order: f64,
    /// `measured ≤ bound + second_order`.
    pub holds_to_second_order: bool,
}

/// Frobenius norm of the central-difference Hessian at `x`.
fn hessian_norm<U: ScalarField + ?Sized>(u: &U, x: &[f64]) -> f64 {
    let h = 1e-4;
    let k = x.len();
    let mut y = x.to_vec();
    let mut eval = |di: usize, si: f64, dj: usize, sj: f64| {
        y.copy_from_slice(x);
        y[di] += si * h;
        y[dj] += sj * h;
        u.value(&y)
    };
    let mut sum = 0.0;
    for i in 0..k {
        for j in 0..k {
            let hij = (eval(i, 1.0, j, 1.0) - eval(i, 1.0, j, -1.0) - eval(i, -1.0, j, 1.0)
                + eval(i, -1.0, j, -1.0))
                / (4.0 * h * h);
            sum += hij * hij;
        }
    }
    sum.sqrt()
}

/// Compares one application of the target operator with the pointwise
/// learning bound. The bound is first order in the step `z`, so at critical
/// points of `u` it can be exceeded by the second-order term; both readings
/// are reported.
pub fn learning_bound_check<U: ScalarField + ?Sized>(
    u_fn: &U,
    problem: &PdeProblem,
    x: &[f64],
    dt: f64,
    order: usize,
) -> Result<LearningBoundReport, AnalysisError> {
    let k = x.len() as f64;
    let c1 = k * (2.0 / PI).sqrt();
    let c2 = k;
    let rule = GaussHermite::new(order)?;
    let ux = u_fn.value(x);
    let measured = (convolution_target(u_fn, x, dt, problem, &rule)? - ux).abs();
    let mut grad = vec![0.0; x.len()];
    u_fn.gradient(x, &mut grad);
    let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut v = vec![0.0; x.len()];
    problem.drift_at(x, ux, &mut v);
    let vnorm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let bound = gnorm * (c1 * dt.sqrt() + c2 * vnorm * dt) + problem.force_at(x, ux).abs() * dt;
    let second_order = 0.5 * hessian_norm(u_fn, x) * (k * dt + vnorm * vnorm * dt * dt);
    Ok(LearningBoundReport {
        x: x.to_vec(),
        measured,
        bound,
        c1,
        c2,
        holds: measured <= bound + 1e-12,
        second_order,
        holds_to_second_order: measured <= bound + second_order + 1e-12,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub dt: f64,
    /// `‖Tu − u‖₂` over interior nodes.
    pub change_norm: f64,
    /// `‖u‖₂` over the same nodes.
    pub u_norm: f64,
    pub interior_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySweep {
    pub rows: Vec<DecayRow>,
    /// Log-log slope of `change_norm` against `Δt` over the positive rows.
    pub slope: Option<f64>,
}

/// `‖Tu − u‖₂` for each `Δt`, on grid nodes at least `4√Δt_max` from the
/// boundary so that every row uses the same node set. `Δt = 0` yields a zero
/// row without applying the operator.
pub fn learning_decay_sweep<U: ScalarField + ?Sized>(
    u_fn: &U,
    problem: &PdeProblem,
    grid_n: usize,
    dts: &[f64],
    options: &OperatorOptions,
) -> Result<DecaySweep, AnalysisError> {
    let grid = UniformGrid::new(problem.domain().clone(), grid_n)?;
    let u = GridFunction::sample(grid.clone(), u_fn);
    let dt_top = dts.iter().copied().fold(0.0, f64::max);
    let mask = grid.interior_mask(4.0 * dt_top.sqrt());
    let interior_nodes = mask.iter().filter(|m| **m).count();
    let u_norm = u.l2_norm(Some(&mask));
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        let change_norm = if dt == 0.0 {
            0.0
        } else {
            apply_target_operator(&u, dt, problem, options)?
                .minus(&u)?
                .l2_norm(Some(&mask))
        };
        rows.push(DecayRow {
            dt,
            change_norm,
            u_norm,
            interior_nodes,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.dt > 0.0 && r.change_norm > 0.0)
        .map(|r| (r.dt, r.change_norm))
        .unzip();
    let slope = fit::loglog_slope(&xs, &ys).map(|(b, _)| b);
    Ok(DecaySweep { rows, slope })
}
