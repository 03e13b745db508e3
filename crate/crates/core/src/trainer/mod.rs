//! The training loop: freeze the network, build martingale targets from
//! walkers, and regress the live network toward them with Adam.

mod config;
mod loss;

pub use config::{ProblemKind, TrainConfig};
pub use loss::{
    boundary_loss, interior_loss, relative_l2_error, residual_loss, sample_boundary,
    sample_interior,
};

use std::io::Write;
use std::time::Instant;

use crate::field::ScalarField;
use crate::nn::{AdamState, Network, NnError};
use crate::target::{build_targets, TargetError};
use crate::walker::rng::{hash_key, keyed_rng, tags};
use crate::walker::{PdeProblem, WalkConfig, WalkerError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("{points} points but {targets} targets")]
    SizeMismatch { points: usize, targets: usize },
    #[error("non-finite loss or gradient at iteration {iteration}")]
    NonFinite {
        iteration: u64,
        /// Parameters before the failing update.
        last_good: Box<Network>,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Walker(#[from] WalkerError),
    #[error("metrics output: {0}")]
    Io(#[from] std::io::Error),
}

/// One line of the metrics file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    /// Interior loss at the frozen parameters, against the fresh targets.
    pub interior_loss: f64,
    pub boundary_loss: f64,
    pub relative_l2_error: Option<f64>,
    pub wall_time_s: Option<f64>,
}

pub const METRICS_HEADER: &str = "iteration,interior_loss,boundary_loss,relative_l2_error,wall_time_s";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration,
            self.interior_loss,
            self.boundary_loss,
            opt(self.relative_l2_error),
            opt(self.wall_time_s)
        )
    }
}

pub fn write_metrics_csv<W: Write>(mut out: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv_line())?;
    }
    out.flush()
}

/// Mean interior loss over the last 10% of rows (at least one row).
pub fn converged_loss(rows: &[MetricsRow]) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    let take = rows.len().div_ceil(10);
    let tail = &rows[rows.len() - take..];
    Some(tail.iter().map(|r| r.interior_loss).sum::<f64>() / take as f64)
}

/// Losses of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub interior: f64,
    pub boundary: f64,
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRow>,
    pub network: Network,
}

/// Training state between iterations.
pub struct Trainer {
    config: TrainConfig,
    problem: PdeProblem,
    walk: WalkConfig,
    net: Network,
    adam: AdamState,
    iteration: u64,
    started: Instant,
}

impl Trainer {
    /// Fresh He-initialized network seeded from `config.seed`.
    pub fn new(config: TrainConfig, problem: PdeProblem) -> Result<Self, TrainError> {
        config.validate()?;
        let dims = config.layer_dims(problem.dim());
        let net = Network::new(&dims, config.activation, hash_key(&[tags::INIT, config.seed]))?;
        Self::with_network(config, problem, net)
    }

    pub fn with_network(config: TrainConfig, problem: PdeProblem, net: Network) -> Result<Self, TrainError> {
        config.validate()?;
        if net.input_dim() != problem.dim() {
            return Err(NnError::DimensionMismatch {
                expected: problem.dim(),
                got: net.input_dim(),
            }
            .into());
        }
        let walk = WalkConfig {
            mode: config.mode,
            horizon: config.dt,
            step: config.inner_step()?,
            walkers: config.ns,
        };
        let adam = AdamState::new(&net, config.adam());
        Ok(Self {
            config,
            problem,
            walk,
            net,
            adam,
            iteration: 0,
            started: Instant::now(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    /// Completed iterations.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Collocation points for iteration `n`: interior then boundary.
    pub fn collocation(&self, n: u64) -> (Vec<f64>, Vec<f64>) {
        let d = self.problem.domain();
        let interior = sample_interior(d, self.config.nr, &mut keyed_rng(&[tags::INTERIOR, self.config.seed, n]));
        let boundary = sample_boundary(d, self.config.nb, &mut keyed_rng(&[tags::BOUNDARY, self.config.seed, n]));
        (interior, boundary)
    }

    /// One outer iteration: freeze, sample, build targets, `inner_steps`
    /// Adam updates. Returns the losses at the frozen parameters.
    pub fn step(&mut self) -> Result<StepLosses, TrainError> {
        let n = self.iteration + 1;
        let frozen = self.net.clone();
        let (interior, boundary) = self.collocation(n);
        let targets = build_targets(&interior, &self.problem, &frozen, &self.walk, self.config.seed, n)?;
        let mut first = None;
        for _ in 0..self.config.inner_steps {
            let (li, mut grads) = interior_loss(&self.net, &interior, &targets)?;
            let (lb, gb) = boundary_loss(&self.net, &boundary, |x| self.problem.boundary_value(x))?;
            let non_finite = || TrainError::NonFinite {
                iteration: n,
                last_good: Box::new(frozen.clone()),
            };
            if !(li.is_finite() && lb.is_finite()) {
                return Err(non_finite());
            }
            grads.add_scaled(&gb, self.config.boundary_weight);
            match self.adam.step(&mut self.net, &grads) {
                Ok(()) => {}
                Err(NnError::NonFiniteGradient { .. }) => return Err(non_finite()),
                Err(e) => return Err(e.into()),
            }
            if !self.net.all_finite() {
                return Err(non_finite());
            }
            first.get_or_insert(StepLosses {
                interior: li,
                boundary: lb,
            });
        }
        self.iteration = n;
        Ok(first.expect("inner_steps ≥ 1"))
    }

    /// Relative `L²` error against the exact solution, if there is one.
    pub fn evaluate(&self) -> Option<f64> {
        self.problem
            .exact()
            .map(|u| relative_l2_error(&self.net, u, self.problem.domain(), self.config.eval_grid))
    }

    /// Runs the remaining iterations, calling `on_row` for each logged row.
    pub fn run(
        &mut self,
        mut on_row: impl FnMut(&MetricsRow, &Network) -> Result<(), TrainError>,
    ) -> Result<Vec<MetricsRow>, TrainError> {
        let total = self.config.iterations;
        let mut rows = Vec::new();
        while self.iteration < total {
            let losses = self.step()?;
            let n = self.iteration;
            let last = n == total;
            if n % self.config.log_every == 0 || last {
                let eval = last || (self.config.eval_every > 0 && n % self.config.eval_every == 0);
                let row = MetricsRow {
                    iteration: n,
                    interior_loss: losses.interior,
                    boundary_loss: losses.boundary,
                    relative_l2_error: if eval { self.evaluate() } else { None },
                    wall_time_s: self
                        .config
                        .record_wall_time
                        .then(|| self.started.elapsed().as_secs_f64()),
                };
                log::debug!("{}", row.to_csv_line());
                on_row(&row, &self.net)?;
                rows.push(row);
            }
        }
        Ok(rows)
    }

    pub fn into_network(self) -> Network {
        self.net
    }
}

/// Trains from scratch for `config.iterations` iterations.
pub fn train(config: &TrainConfig, problem: &PdeProblem) -> Result<TrainOutcome, TrainError> {
    let mut t = Trainer::new(config.clone(), problem.clone())?;
    let metrics = t.run(|_, _| Ok(()))?;
    Ok(TrainOutcome {
        metrics,
        network: t.into_network(),
    })
}

/// Losses of a fixed field used both as the evaluated function and as the
/// frozen target generator, over `config.iterations` fresh collocation
/// draws. The interior loss then measures the target variance alone.
pub fn bias_mode_losses<F: ScalarField + ?Sized>(
    config: &TrainConfig,
    problem: &PdeProblem,
    field: &F,
) -> Result<Vec<MetricsRow>, TrainError> {
    config.validate()?;
    let walk = WalkConfig {
        mode: config.mode,
        horizon: config.dt,
        step: config.inner_step()?,
        walkers: config.ns,
    };
    let d = problem.domain();
    let mut rows = Vec::new();
    for n in 1..=config.iterations {
        let interior = sample_interior(d, config.nr, &mut keyed_rng(&[tags::INTERIOR, config.seed, n]));
        let boundary = sample_boundary(d, config.nb, &mut keyed_rng(&[tags::BOUNDARY, config.seed, n]));
        let targets = build_targets(&interior, problem, field, &walk, config.seed, n)?;
        let y: Vec<f64> = targets.iter().map(|t| t.mean).collect();
        let g: Vec<f64> = boundary.chunks_exact(problem.dim()).map(|x| problem.boundary_value(x)).collect();
        if n % config.log_every == 0 || n == config.iterations {
            rows.push(MetricsRow {
                iteration: n,
                interior_loss: residual_loss(field, &interior, &y),
                boundary_loss: residual_loss(field, &boundary, &g),
                relative_l2_error: None,
                wall_time_s: None,
            });
        }
    }
    Ok(rows)
}
