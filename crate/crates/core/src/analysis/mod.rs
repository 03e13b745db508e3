//! Quantitative checks of the loss-bias and learning-amount results.

mod bias;
mod bounds;
pub mod fit;

pub use bias::{estimate_bias, fit_bias_slopes, write_bias_csv, BiasReport, BiasSetup, BiasSlopes, MIN_OUTER};
pub use bounds::{
    chebyshev_check, folded_normal_bound, folded_normal_bound_check, learning_bound_check,
    learning_decay_sweep, ChebyshevReport, ChebyshevSetup, DecayRow, DecaySweep, FoldedNormalReport,
    LearningBoundReport, Verdict, MIN_FOLDED_SAMPLES,
};

use crate::target::TargetError;
use crate::walker::WalkerError;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("need at least {required} samples, got {got}")]
    TooFewOuter { required: usize, got: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Walker(#[from] WalkerError),
}
