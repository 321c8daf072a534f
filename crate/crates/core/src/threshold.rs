//! Threshold functions with a constant conditional false-alarm probability.
//!
//! The horizon `{m+1, .., n}` is split into `p` intervals. Given simulated or
//! resampled detector paths reduced to their per-interval maxima, the level
//! of interval `i` is the empirical quantile of order `(1 - alpha)^(1/p)` of
//! the interval-`i` maxima among the paths that stayed below every earlier
//! level. Under the null the probability of crossing in interval `i`, given
//! no earlier crossing, is then `1 - (1 - alpha)^(1/p)` for every `i`, and the
//! overall false-alarm probability is `alpha`.

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bootstrap::{self, rescaled_learning_size, BandwidthRule, MultiplierConfig};
use crate::detectors::{detector_value, DominanceState, Scratch};
use crate::error::{Error, Result};
use crate::model::{
    interval_boundaries, quantile, MonitorConfig, ObservationMatrix, ThresholdFunction,
    ThresholdMode, ThresholdProvenance,
};
use crate::rng::{stream_rng, Domain};

/// Per-interval suprema of replicate paths; one row per replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSupMatrix {
    cols: usize,
    data: Vec<f64>,
}

impl PathSupMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().ok_or(Error::EmptySample)?.len();
        if cols == 0 {
            return Err(Error::InvalidArguments("no monitoring intervals".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::InvalidArguments(format!(
                    "interval suprema must be finite and non-negative, got {v}"
                )));
            }
            data.extend(row);
        }
        Ok(Self { cols, data })
    }

    pub fn nrows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

/// Sequential conditional quantiles `g_1..g_p` of order `order`.
pub fn conditional_quantiles(sups: &PathSupMatrix, order: f64) -> Result<Vec<f64>> {
    let mut survivors: Vec<usize> = (0..sups.nrows()).collect();
    let mut levels = Vec::with_capacity(sups.ncols());
    let mut column = Vec::with_capacity(survivors.len());
    for i in 0..sups.ncols() {
        if survivors.is_empty() {
            return Err(Error::DegenerateConditioning { interval: i + 1 });
        }
        column.clear();
        column.extend(survivors.iter().map(|&r| sups.get(r, i)));
        let g = quantile(&column, order)?;
        survivors.retain(|&r| sups.get(r, i) <= g);
        levels.push(g);
    }
    Ok(levels)
}

/// Per-step conditional false-alarm probability `1 - (1 - alpha)^(1/steps)`.
pub fn xi_from_alpha(alpha: f64, steps: usize) -> f64 {
    -((-alpha).ln_1p() / steps as f64).exp_m1()
}

/// Interval suprema of `replicates` simulated null paths, each drawn
/// i.i.d. from `sampler` (univariate only).
pub fn mc_sup_matrix<F>(cfg: &MonitorConfig, replicates: usize, seed: u64, sampler: F) -> Result<PathSupMatrix>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    cfg.validate()?;
    if cfg.dim != 1 {
        return Err(Error::McRequiresUnivariate { dim: cfg.dim });
    }
    if replicates == 0 {
        return Err(Error::InvalidArguments("at least one replicate is required".into()));
    }
    let boundaries = cfg.boundaries()?;
    let rows: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map_init(Scratch::default, |scratch, s| {
            let mut rng = stream_rng(seed, Domain::McPath, s as u64);
            let mut state = DominanceState::new(1);
            for _ in 0..cfg.n {
                state.extend(&[sampler(&mut rng)]).expect("finite univariate draw");
            }
            boundaries
                .windows(2)
                .map(|w| {
                    (w[0] + 1..=w[1])
                        .map(|k| detector_value(&state, cfg, k, scratch))
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect();
    PathSupMatrix::from_rows(rows)
}

/// Standard uniform draws for Monte Carlo paths.
pub fn uniform_sampler(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

/// Standard normal draws for Monte Carlo paths.
pub fn normal_sampler(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Monte Carlo threshold function for univariate independent observations.
///
/// The detectors are distribution-free in that setting, so the threshold
/// does not depend on any learning sample.
pub fn mc_threshold(cfg: &MonitorConfig, replicates: usize, seed: u64) -> Result<ThresholdFunction> {
    let sups = mc_sup_matrix(cfg, replicates, seed, uniform_sampler)?;
    let levels = conditional_quantiles(&sups, cfg.quantile_order())?;
    ThresholdFunction::new(
        cfg.boundaries()?,
        levels,
        cfg.quantile_order(),
        ThresholdProvenance {
            mode: ThresholdMode::Mc,
            seed,
            detector: cfg.detector,
            gamma: cfg.gamma,
            delta: cfg.delta,
            alpha: cfg.alpha,
            replicates,
            multiplier: None,
            bandwidth: None,
        },
    )
}

/// Threshold function from dependent multiplier replicates of the learning
/// sample.
pub fn bootstrap_threshold(
    learning: &ObservationMatrix,
    cfg: &MonitorConfig,
    mult: &MultiplierConfig,
) -> Result<ThresholdFunction> {
    cfg.validate()?;
    let m_prime = rescaled_learning_size(cfg.m, cfg.n);
    let limit = cfg.m.saturating_sub(m_prime);
    if cfg.p > limit {
        return Err(Error::StepsExceedRescaledHorizon { p: cfg.p, limit });
    }
    let (process, ell) = bootstrap::prepare(learning, cfg, mult)?;
    let span = process.horizon() - process.m_prime();
    if cfg.p > span {
        return Err(Error::StepsExceedRescaledHorizon { p: cfg.p, limit: span });
    }
    if learning.has_column_ties() {
        warn!("learning sample has tied values within a column; rank invariance may not hold");
    }
    let replicate_bounds = interval_boundaries(process.m_prime(), process.horizon(), cfg.p)?;
    let resolved = mult.clone().with_bandwidth(BandwidthRule::Fixed(ell));
    let rows = bootstrap::replicate_sups(&process, cfg, &resolved, &replicate_bounds)?;
    let sups = PathSupMatrix::from_rows(rows)?;
    let levels = conditional_quantiles(&sups, cfg.quantile_order())?;
    ThresholdFunction::new(
        cfg.boundaries()?,
        levels,
        cfg.quantile_order(),
        ThresholdProvenance {
            mode: ThresholdMode::Bootstrap,
            seed: mult.seed,
            detector: cfg.detector,
            gamma: cfg.gamma,
            delta: cfg.delta,
            alpha: cfg.alpha,
            replicates: mult.replicates,
            multiplier: Some(mult.clone()),
            bandwidth: Some(ell),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DetectorKind;

    #[test]
    fn single_interval_is_plain_quantile() {
        let sups = PathSupMatrix::from_rows((1..=10).map(|v| vec![f64::from(v)]).collect()).unwrap();
        assert_eq!(conditional_quantiles(&sups, 0.9).unwrap(), vec![9.0]);
        assert_eq!(conditional_quantiles(&sups, 0.95).unwrap(), vec![10.0]);
    }

    #[test]
    fn order_one_takes_survivor_maxima() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 2.0], vec![2.0, 4.0]];
        let sups = PathSupMatrix::from_rows(rows).unwrap();
        assert_eq!(conditional_quantiles(&sups, 1.0).unwrap(), vec![3.0, 5.0]);
    }

    #[test]
    fn conditioning_filters_rows() {
        // Order 0.5 over 4 rows keeps the two smallest first-column values.
        let rows = vec![
            vec![1.0, 10.0],
            vec![2.0, 20.0],
            vec![3.0, 1.0],
            vec![4.0, 2.0],
        ];
        let sups = PathSupMatrix::from_rows(rows).unwrap();
        assert_eq!(conditional_quantiles(&sups, 0.5).unwrap(), vec![2.0, 10.0]);
    }

    #[test]
    fn xi_examples() {
        assert!((xi_from_alpha(0.05, 1) - 0.05).abs() < 1e-15);
        let xi = xi_from_alpha(0.05, 50);
        assert!(((1.0 - xi).powi(50) - 0.95).abs() < 1e-12);
        assert!((xi - 0.001).abs() < 5e-5);
    }

    #[test]
    fn mc_rejects_multivariate() {
        let cfg = MonitorConfig::new(10, 20).with_dim(2);
        assert!(matches!(
            mc_threshold(&cfg, 10, 0),
            Err(Error::McRequiresUnivariate { dim: 2 })
        ));
    }

    #[test]
    fn mc_is_deterministic() {
        let cfg = MonitorConfig::new(10, 20).with_steps(3).with_detector(DetectorKind::S);
        let a = mc_threshold(&cfg, 200, 11).unwrap();
        let b = mc_threshold(&cfg, 200, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.boundaries, vec![10, 13, 17, 20]);
        assert_eq!(a.levels.len(), 3);
    }

    #[test]
    fn bootstrap_rejects_too_many_steps() {
        let x = ObservationMatrix::from_column((0..20).map(|i| f64::from(i * 37 % 20)).collect())
            .unwrap();
        // m' = 10, so at most 10 steps.
        let cfg = MonitorConfig::new(20, 40).with_steps(11);
        let mult = MultiplierConfig::new(10, 0);
        assert!(matches!(
            bootstrap_threshold(&x, &cfg, &mult),
            Err(Error::StepsExceedRescaledHorizon { p: 11, limit: 10 })
        ));
    }
}
