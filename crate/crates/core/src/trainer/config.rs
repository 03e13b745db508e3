use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::{Activation, AdamConfig};
use crate::walker::{substeps, BoxDomain, PdeProblem, WalkMode};

/// Which built-in problem to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    /// `Δu = f` with a sinusoidal solution of wavenumber `m`.
    #[default]
    Poisson,
    /// `Δu = 0`, zero boundary data.
    Laplace,
}

/// Every knob of a training run. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub problem: ProblemKind,
    /// Wavenumber of the Poisson solution.
    pub m: u32,
    /// Walker horizon `Δt`.
    pub dt: f64,
    /// Largest inner Euler–Maruyama step; the actual step divides `dt`.
    pub dt_max: f64,
    /// Walkers per collocation point.
    pub ns: usize,
    /// Interior collocation points per iteration.
    pub nr: usize,
    /// Boundary collocation points per iteration.
    pub nb: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Adam steps per target construction.
    pub inner_steps: usize,
    pub iterations: u64,
    pub seed: u64,
    pub mode: WalkMode,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Evaluation grid nodes per axis.
    pub eval_grid: usize,
    /// Iterations between error evaluations; 0 evaluates only at the end.
    pub eval_every: u64,
    /// Iterations between metrics rows.
    pub log_every: u64,
    pub boundary_weight: f64,
    /// Iterations between checkpoints; 0 disables them.
    pub checkpoint_every: u64,
    /// Fill the `wall_time_s` column. Off by default so that reruns produce
    /// byte-identical metrics files.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Poisson,
            m: 1,
            dt: 5e-3,
            dt_max: 5e-4,
            ns: 40,
            nr: 2000,
            nb: 400,
            lr: 1e-3,
            beta1: 0.99,
            beta2: 0.99,
            eps: 1e-8,
            inner_steps: 1,
            iterations: 20_000,
            seed: 0,
            mode: WalkMode::XProcess,
            hidden: vec![64, 64, 64],
            activation: Activation::Relu,
            eval_grid: 201,
            eval_every: 1000,
            log_every: 100,
            boundary_weight: 1.0,
            checkpoint_every: 0,
            record_wall_time: false,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> TrainError {
    TrainError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = |field, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive and finite, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("dt_max", self.dt_max)?;
        positive("lr", self.lr)?;
        positive("eps", self.eps)?;
        for (field, v) in [("ns", self.ns), ("nr", self.nr), ("nb", self.nb), ("inner_steps", self.inner_steps)] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        for (field, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(invalid(field, format!("must lie in [0, 1), got {b}")));
            }
        }
        if self.problem == ProblemKind::Poisson && self.m == 0 {
            return Err(invalid("m", "wavenumber must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden", "layer widths must be positive"));
        }
        if self.eval_grid < 2 {
            return Err(invalid("eval_grid", "need at least 2 nodes per axis"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must fit a signed 64-bit integer"));
        }
        if self.log_every == 0 {
            return Err(invalid("log_every", "must be at least 1"));
        }
        if !(self.boundary_weight >= 0.0 && self.boundary_weight.is_finite()) {
            return Err(invalid("boundary_weight", "must be non-negative and finite"));
        }
        Ok(())
    }

    pub fn build_problem(&self) -> PdeProblem {
        match self.problem {
            ProblemKind::Poisson => PdeProblem::poisson(self.m),
            ProblemKind::Laplace => PdeProblem::laplace(BoxDomain::unit_square()),
        }
    }

    /// Layer widths including the input and the scalar output.
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(1);
        dims
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// Inner step `δt = Δt / ceil(Δt/δt_max)`.
    pub fn inner_step(&self) -> Result<f64, TrainError> {
        Ok(substeps(self.dt, self.dt_max)?.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        assert_eq!(TrainConfig::default().layer_dims(2), vec![2, 64, 64, 64, 1]);
    }

    #[test]
    fn bad_fields_are_named() {
        let c = TrainConfig {
            ns: 0,
            ..Default::default()
        };
        match c.validate() {
            Err(TrainError::InvalidConfig { field, .. }) => assert_eq!(field, "ns"),
            other => panic!("{other:?}"),
        }
        let c = TrainConfig {
            dt: -1.0,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(TrainError::InvalidConfig { field: "dt", .. })));
    }

    #[test]
    fn inner_step_divides_horizon() {
        let c = TrainConfig {
            dt: 5e-3,
            dt_max: 3e-4,
            ..Default::default()
        };
        let s = c.inner_step().unwrap();
        assert!(s <= 3e-4);
        assert!(((c.dt / s) - (c.dt / s).round()).abs() < 1e-9);
    }
}
