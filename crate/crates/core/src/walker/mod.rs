//! Euler–Maruyama walkers for the drifted process `dX = V dt + dB` and for
//! plain Brownian motion carrying a change-of-measure weight.

mod domain;
mod problem;
pub mod rng;
mod sim;

pub use domain::BoxDomain;
pub use problem::PdeProblem;
pub use rng::RngStream;
pub use sim::{
    detect_exit, simulate_batch, step_euler_maruyama, substeps, write_records_csv, ExitCrossing,
    WalkConfig,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum WalkerError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("time step must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("horizon {horizon} is not an integer multiple of step {step}")]
    StepMismatch { horizon: f64, step: f64 },
    #[error("start point {0:?} lies outside the domain")]
    StartOutside(Vec<f64>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("walker count must be at least 1")]
    NoWalkers,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Which process the walkers follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WalkMode {
    /// Drifted process; targets use the plain martingale.
    #[default]
    XProcess,
    /// Driftless Brownian motion; the drift enters through the Girsanov weight.
    BProcess,
}

impl std::str::FromStr for WalkMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x_process" | "x" => Ok(Self::XProcess),
            "b_process" | "b" => Ok(Self::BProcess),
            other => Err(format!("unknown walk mode `{other}` (expected x_process or b_process)")),
        }
    }
}

/// Outcome of one walker over the horizon `[0, Δt]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerRecord {
    pub walker_index: u64,
    pub mode: WalkMode,
    pub start: Vec<f64>,
    /// Position at `Δt`, or the exit point when absorbed.
    pub terminal: Vec<f64>,
    /// Time of absorption, `None` if the walker stayed inside.
    pub exit_time: Option<f64>,
    /// Left-endpoint approximation of `∫ G ds` up to `Δt ∧ τ`.
    pub force_integral: f64,
    /// `∫ V·dB − ½∫|V|² ds`; zero in `XProcess` mode.
    pub girsanov_log: f64,
}

impl WalkerRecord {
    pub fn exited(&self) -> bool {
        self.exit_time.is_some()
    }
}
