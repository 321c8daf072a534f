//! Nonparametric closed-end sequential change-point detection.
//!
//! A learning sample of `m` observations is assumed stationary. Each new
//! observation `X_k`, `k = m+1..n`, updates a detector `D_m(k)` built from
//! differences of empirical distribution functions, and monitoring stops at
//! the first `k` with `D_m(k)` above a piecewise-constant threshold
//! function. Thresholds are calibrated so that the probability of a false
//! alarm is spread evenly over `p` monitoring intervals, either by Monte
//! Carlo simulation (univariate independent data) or by a dependent
//! multiplier bootstrap of the learning sample (time series, multivariate
//! data).
//!
//! Module map:
//!
//! * [`model`]: configuration, observation matrix, threshold function and
//!   the empirical quantile.
//! * [`detectors`]: incremental dominance counts, the five detectors and
//!   the change-point location estimate.
//! * [`bootstrap`]: dependent multiplier sequences and replicate detector
//!   paths.
//! * [`threshold`]: the conditional-quantile recursion, Monte Carlo and
//!   bootstrap threshold estimation.
//! * [`monitor`]: the streaming monitor state machine.
//! * [`sim`]: scenario generators, experiment runners and CSV I/O.

pub mod bootstrap;
pub mod detectors;
mod error;
pub mod model;
pub mod monitor;
pub(crate) mod rng;
pub mod sim;
pub mod threshold;

pub use bootstrap::{BandwidthRule, Kernel, MultiplierConfig, ReplicatePath};
pub use detectors::{DetectorPath, DominanceState};
pub use error::{Error, Result};
pub use model::{
    DetectorKind, MonitorConfig, ObservationMatrix, ThresholdFunction, ThresholdMode,
    ThresholdProvenance,
};
pub use monitor::{Decision, MonitorReport, MonitorState, MonitorStatus};
pub use threshold::PathSupMatrix;
