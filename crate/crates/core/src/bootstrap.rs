//! Dependent multiplier bootstrap of the detector functions.
//!
//! The learning sample `X_1..X_m` is split on a rescaled clock: the first
//! `m' = floor(m^2 / n)` observations play the learning sample and the rest
//! of the learning sample (up to `floor(m' n / m)`) plays the monitoring
//! period. A replicate of the sequential empirical process is
//!
//! ```text
//! B(s, x) = m'^{-1/2} sum_{i <= floor(m' s)} xi_i { 1(X_i <= x) - F_{1:m}(x) }
//! ```
//!
//! with an `ell`-dependent multiplier sequence `xi`, and replicate detector
//! paths are the same functionals of
//! `G(s, t, x) = lambda(0, t) B(s, x) - lambda(0, s) B(t, x)` as the detectors
//! are of the data.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{q_unchecked, DominanceState};
use crate::error::{Error, Result};
use crate::model::{pairwise_sum, DetectorKind, MonitorConfig, ObservationMatrix};
use crate::rng::{stream_rng, Domain};

/// Kernel shaping the moving-average multiplier weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Parzen,
}

impl Kernel {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Kernel::Parzen => parzen_kernel(x),
        }
    }
}

/// How the multiplier bandwidth `ell` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `max(1, round(m^{1/3}))`.
    #[default]
    PowerRule,
    Fixed(usize),
    /// Estimated from the serial dependence of the learning sample, see
    /// [`data_driven_bandwidth`].
    DataDriven,
}

impl BandwidthRule {
    /// The bandwidth for a learning sample of size `m`, or `None` when the
    /// rule needs the data.
    pub fn resolve(self, m: usize) -> Option<usize> {
        match self {
            BandwidthRule::Fixed(ell) => Some(ell),
            BandwidthRule::PowerRule => Some(((m as f64).cbrt().round() as usize).max(1)),
            BandwidthRule::DataDriven => None,
        }
    }
}

fn default_replicates() -> usize {
    2000
}

/// Settings of the dependent multiplier bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierConfig {
    /// Number of replicates `B`.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub bandwidth: BandwidthRule,
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default)]
    pub seed: u64,
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        Self {
            replicates: default_replicates(),
            bandwidth: BandwidthRule::PowerRule,
            kernel: Kernel::Parzen,
            seed: 0,
        }
    }
}

impl MultiplierConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            ..Self::default()
        }
    }

    pub fn with_bandwidth(mut self, rule: BandwidthRule) -> Self {
        self.bandwidth = rule;
        self
    }
}

/// Parzen's kernel.
pub fn parzen_kernel(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 {
        1.0 - 6.0 * a * a + 6.0 * a * a * a
    } else if a <= 1.0 {
        2.0 * (1.0 - a).powi(3)
    } else {
        0.0
    }
}

/// Bandwidth for a learning sample under `rule`.
pub fn estimate_bandwidth(learning: &ObservationMatrix, rule: BandwidthRule, kernel: Kernel) -> usize {
    rule.resolve(learning.nrows())
        .unwrap_or_else(|| data_driven_bandwidth(learning, kernel))
}

/// Budget of grid points for the data-driven bandwidth.
const GRID_BUDGET: usize = 64;

/// `phi''(0)` and `int phi^2` for the multiplier correlation function
/// `phi(x) = c(2x) / c(0)`, `c` the self-convolution of the kernel.
fn correlation_constants(kernel: Kernel) -> (f64, f64) {
    const N: usize = 2000;
    let h = 2.0 / N as f64;
    let k: Vec<f64> = (0..N).map(|i| kernel.eval(-1.0 + (i as f64 + 0.5) * h)).collect();
    let c: Vec<f64> = (0..N)
        .map(|lag| k.iter().zip(&k[lag..]).map(|(a, b)| a * b).sum::<f64>() * h)
        .collect();
    let slope_sq: f64 = k.windows(2).map(|w| ((w[1] - w[0]) / h).powi(2)).sum::<f64>() * h;
    let c_sq = (2.0 * c.iter().map(|v| v * v).sum::<f64>() - c[0] * c[0]) * h;
    (-4.0 * slope_sq / c[0], 0.5 * c_sq / (c[0] * c[0]))
}

fn flat_top(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 {
        1.0
    } else if a <= 1.0 {
        2.0 * (1.0 - a)
    } else {
        0.0
    }
}

/// Bandwidth minimising the integrated mean squared error of the
/// multiplier variance estimator.
///
/// The indicator processes `1(U_i <= u)` of the pseudo-observations are
/// evaluated on a regular grid of `u` in `(0, 1)^d`. Their long-run
/// covariances `sigma(u, v)` and second moments `Gamma(u, v) = sum_k k^2
/// gamma_k(u, v)` are estimated with a flat-top lag window whose truncation
/// lag is picked from the pooled autocorrelations (smallest `L >= 1` after which
/// 5 consecutive values are below `2 sqrt(log10(m) / m)`, doubled). Then
///
/// ```text
/// ell = ( phi''(0)^2 int Gamma^2 / ( int phi^2 int {sigma(u,u) sigma(v,v) + sigma(u,v)^2} ) )^{1/5} m^{1/5}
/// ```
///
/// rounded and clamped to `1..=m/2`. Depends on the data through ranks only.
pub fn data_driven_bandwidth(learning: &ObservationMatrix, kernel: Kernel) -> usize {
    let (m, d) = (learning.nrows(), learning.dim());
    let cap = (m / 2).max(1);
    if m < 4 {
        return 1;
    }
    // pseudo-observations as integer ranks
    let ranks: Vec<Vec<usize>> = (0..d)
        .map(|c| {
            let col: Vec<f64> = learning.rows().map(|r| r[c]).collect();
            col.iter().map(|v| col.iter().filter(|w| *w <= v).count()).collect()
        })
        .collect();
    let per_dim = ((GRID_BUDGET as f64).powf(1.0 / d as f64).floor() as usize).clamp(2, 25);
    let levels: Vec<f64> = (1..=per_dim).map(|g| g as f64 * (m + 1) as f64 / (per_dim + 1) as f64).collect();
    let grid_size = per_dim.pow(d as u32);
    let mut series: Vec<Vec<f64>> = Vec::with_capacity(grid_size);
    for g in 0..grid_size {
        let mut code = g;
        let u: Vec<f64> = (0..d)
            .map(|_| {
                let l = levels[code % per_dim];
                code /= per_dim;
                l
            })
            .collect();
        let ind: Vec<f64> = (0..m)
            .map(|i| f64::from(u8::from((0..d).all(|c| ranks[c][i] as f64 <= u[c]))))
            .collect();
        let mean = ind.iter().sum::<f64>() / m as f64;
        if mean > 0.0 && mean < 1.0 {
            series.push(ind.into_iter().map(|v| v - mean).collect());
        }
    }
    if series.is_empty() {
        return 1;
    }
    let runs = 5;
    let max_lag = ((m as f64).sqrt().ceil() as usize + runs).min(m - 1);
    let cov = |a: &[f64], b: &[f64], k: usize| -> f64 {
        a[..m - k].iter().zip(&b[k..]).map(|(x, y)| x * y).sum::<f64>() / m as f64
    };
    let pooled: Vec<f64> = (0..=max_lag)
        .map(|k| series.iter().map(|s| cov(s, s, k)).sum::<f64>())
        .collect();
    let bound = 2.0 * ((m as f64).log10() / m as f64).sqrt();
    let small = |k: usize| k > max_lag || (pooled[k] / pooled[0]).abs() < bound;
    let cut = (1..=max_lag)
        .find(|&l| (1..=runs).all(|j| small(l + j)))
        .unwrap_or(max_lag);
    let lag_window = (2 * cut).min(max_lag);
    let g = series.len();
    let mut sigma = vec![0.0; g * g];
    let mut gamma = vec![0.0; g * g];
    for a in 0..g {
        for b in 0..g {
            let mut s = cov(&series[a], &series[b], 0);
            let mut t = 0.0;
            for k in 1..=lag_window {
                let w = flat_top(k as f64 / lag_window as f64);
                let both = cov(&series[a], &series[b], k) + cov(&series[b], &series[a], k);
                s += w * both;
                t += w * (k * k) as f64 * both;
            }
            sigma[a * g + b] = s;
            gamma[a * g + b] = t;
        }
    }
    let gamma_sq = gamma.iter().map(|v| v * v).sum::<f64>();
    let delta: f64 = (0..g)
        .flat_map(|a| (0..g).map(move |b| (a, b)))
        .map(|(a, b)| sigma[a * g + a] * sigma[b * g + b] + sigma[a * g + b].powi(2))
        .sum();
    if !(gamma_sq > 0.0 && delta > 0.0) {
        return 1;
    }
    let (phi2, phi_sq) = correlation_constants(kernel);
    let ell = (phi2 * phi2 * gamma_sq / (phi_sq * delta)).powf(0.2) * (m as f64).powf(0.2);
    (ell.round() as usize).clamp(1, cap)
}

/// Moving-average weights for bandwidth `ell`.
///
/// With half-width `h = floor((ell - 1) / 2)` the weights are
/// `kernel((j - h) / (h + 1))`, `j = 0..=2h`, scaled to unit sum of squares.
/// The resulting multipliers are `2h`-dependent, hence `ell`-dependent.
pub fn multiplier_weights(ell: usize, kernel: Kernel) -> Vec<f64> {
    let h = ell.saturating_sub(1) / 2;
    let raw: Vec<f64> = (0..=2 * h)
        .map(|j| kernel.eval((j as f64 - h as f64) / (h as f64 + 1.0)))
        .collect();
    let norm = raw.iter().map(|w| w * w).sum::<f64>().sqrt();
    raw.into_iter().map(|w| w / norm).collect()
}

/// Correlation `sum_j w_j w_{j+lag}` induced by the moving-average weights.
pub fn induced_correlation(weights: &[f64], lag: usize) -> f64 {
    if lag >= weights.len() {
        return 0.0;
    }
    weights.iter().zip(&weights[lag..]).map(|(a, b)| a * b).sum()
}

/// Multipliers `xi_1..xi_m` of replicate `replicate_index`.
pub fn gen_multipliers(m: usize, cfg: &MultiplierConfig, replicate_index: usize) -> Result<Vec<f64>> {
    let ell = cfg.bandwidth.resolve(m).ok_or_else(|| {
        Error::InvalidArguments("a data-driven bandwidth has to be estimated from the learning sample first".into())
    })?;
    if ell == 0 || ell >= m {
        return Err(Error::BandwidthTooLarge { ell, m });
    }
    let w = multiplier_weights(ell, cfg.kernel);
    let mut rng = stream_rng(cfg.seed, Domain::Multiplier, replicate_index as u64);
    let z: Vec<f64> = (0..m + w.len() - 1)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(z.windows(w.len())
        .map(|win| win.iter().zip(&w).map(|(a, b)| a * b).sum())
        .collect())
}

/// `m' = floor(m^2 / n)`.
pub fn rescaled_learning_size(m: usize, n: usize) -> usize {
    m * m / n
}

/// Last replicate step `floor(m' n / m)`, the image of `n` on the rescaled clock.
pub fn rescaled_horizon(m: usize, n: usize) -> usize {
    rescaled_learning_size(m, n) * n / m
}

/// One replicate detector path on the steps `j = m'..=floor(m' n / m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatePath {
    pub m_prime: usize,
    pub values: Vec<f64>,
}

impl ReplicatePath {
    pub fn last_index(&self) -> usize {
        self.m_prime + self.values.len() - 1
    }

    pub fn at(&self, j: usize) -> Option<f64> {
        j.checked_sub(self.m_prime)
            .and_then(|o| self.values.get(o).copied())
    }

    /// Maximum over each replicate interval `(b_{i-1}, b_i]`.
    pub fn interval_sups(&self, boundaries: &[usize]) -> Vec<f64> {
        boundaries
            .windows(2)
            .map(|w| (w[0] + 1..=w[1]).filter_map(|j| self.at(j)).fold(0.0, f64::max))
            .collect()
    }
}

/// `max_r |a x_r - b y_r|`.
fn abs_max(x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let mut lanes = [0.0_f64; 4];
    let mut x4 = x.chunks_exact(4);
    let mut y4 = y.chunks_exact(4);
    for (u, v) in (&mut x4).zip(&mut y4) {
        for l in 0..4 {
            let g = (a * u[l] - b * v[l]).abs();
            if g > lanes[l] {
                lanes[l] = g;
            }
        }
    }
    x4.remainder()
        .iter()
        .zip(y4.remainder())
        .map(|(u, v)| (a * u - b * v).abs())
        .chain(lanes)
        .fold(0.0, f64::max)
}

/// `sum_r (a x_r - b y_r)^2`.
fn square_sum(x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let mut lanes = [0.0_f64; 4];
    let mut x4 = x.chunks_exact(4);
    let mut y4 = y.chunks_exact(4);
    for (u, v) in (&mut x4).zip(&mut y4) {
        for l in 0..4 {
            let g = a * u[l] - b * v[l];
            lanes[l] += g * g;
        }
    }
    let tail: f64 = x4
        .remainder()
        .iter()
        .zip(y4.remainder())
        .map(|(u, v)| (a * u - b * v).powi(2))
        .sum();
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Centred indicator matrix of a learning sample, shared by all replicates.
#[derive(Debug, Clone)]
pub struct LearningProcess {
    m: usize,
    m_prime: usize,
    horizon: usize,
    /// `centred[i * m + r] = 1(X_i <= X_r) - F_{1:m}(X_r)`, 0-based.
    centred: Vec<f64>,
}

impl LearningProcess {
    pub fn new(learning: &ObservationMatrix, cfg: &MonitorConfig) -> Result<Self> {
        let m = cfg.m;
        if learning.nrows() != m {
            return Err(Error::InvalidArguments(format!(
                "learning sample has {} rows, expected m = {m}",
                learning.nrows()
            )));
        }
        if learning.dim() != cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim,
                got: learning.dim(),
            });
        }
        let m_prime = rescaled_learning_size(m, cfg.n);
        if m_prime < 2 {
            return Err(Error::LearningTooSmall { m_prime });
        }
        let horizon = rescaled_horizon(m, cfg.n);
        let dom = DominanceState::from_matrix(learning);
        let mut centred = vec![0.0; m * m];
        for r in 1..=m {
            let f = f64::from(dom.prefix_count(r, m)) / m as f64;
            for i in 1..=m {
                centred[(i - 1) * m + (r - 1)] = f64::from(dom.indicator(r, i)) - f;
            }
        }
        Ok(Self {
            m,
            m_prime,
            horizon,
            centred,
        })
    }

    pub fn m_prime(&self) -> usize {
        self.m_prime
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Replicate path for explicit multipliers `xi` (at least `horizon` long).
    pub fn path_with_multipliers(&self, cfg: &MonitorConfig, xi: &[f64]) -> Result<ReplicatePath> {
        if xi.len() < self.horizon {
            return Err(Error::InvalidArguments(format!(
                "need {} multipliers, got {}",
                self.horizon,
                xi.len()
            )));
        }
        Ok(self.path_unchecked(cfg, xi))
    }

    fn path_unchecked(&self, cfg: &MonitorConfig, xi: &[f64]) -> ReplicatePath {
        let (m, mp, horizon) = (self.m, self.m_prime, self.horizon);
        let scale = 1.0 / (mp as f64).sqrt();

        // proc_[j * m + r] = B(j / m', X_r), j = 0..=horizon
        let mut proc_ = vec![0.0; (horizon + 1) * m];
        for j in 1..=horizon {
            let (done, rest) = proc_.split_at_mut(j * m);
            let prev = &done[(j - 1) * m..];
            let cur = &mut rest[..m];
            let c = &self.centred[(j - 1) * m..j * m];
            let coef = xi[j - 1] * scale;
            for r in 0..m {
                cur[r] = prev[r] + coef * c[r];
            }
        }

        let mpf = mp as f64;
        let (gamma, delta) = (cfg.gamma, cfg.delta);
        let mut inner = Vec::with_capacity(horizon);
        let mut values = Vec::with_capacity(horizon - mp + 1);
        values.push(0.0);
        for t in mp + 1..=horizon {
            let bt = &proc_[t * m..(t + 1) * m];
            let lt = t as f64 / mpf;
            let row = |j: usize| &proc_[j * m..(j + 1) * m];
            let coefs = |j: usize, q: f64| (lt / q, j as f64 / mpf / q);
            let v = match cfg.detector {
                DetectorKind::R => (mp..t)
                    .map(|j| {
                        let (a, b) = coefs(j, q_unchecked(j as f64 / mpf, lt, gamma, delta));
                        abs_max(row(j), bt, a, b)
                    })
                    .fold(0.0, f64::max),
                DetectorKind::S => (mp..t)
                    .map(|j| {
                        let (a, b) = coefs(j, q_unchecked(j as f64 / mpf, lt, gamma, delta));
                        square_sum(&row(j)[..t], &bt[..t], a, b) / t as f64
                    })
                    .fold(0.0, f64::max),
                DetectorKind::T => {
                    inner.clear();
                    for j in mp..t {
                        let (a, b) = coefs(j, q_unchecked(j as f64 / mpf, lt, gamma, delta));
                        inner.push(square_sum(&row(j)[..t], &bt[..t], a, b) / t as f64);
                    }
                    pairwise_sum(&inner) / mpf
                }
                DetectorKind::P => {
                    let (a, b) = coefs(mp, 1.0);
                    abs_max(row(mp), bt, a, b)
                }
                DetectorKind::Q => {
                    let (a, b) = coefs(mp, 1.0);
                    square_sum(&row(mp)[..t], &bt[..t], a, b) / t as f64
                }
            };
            values.push(v);
        }
        ReplicatePath {
            m_prime: mp,
            values,
        }
    }
}

/// Validates the bootstrap preconditions and resolves the bandwidth.
pub(crate) fn prepare(
    learning: &ObservationMatrix,
    cfg: &MonitorConfig,
    mult: &MultiplierConfig,
) -> Result<(LearningProcess, usize)> {
    cfg.validate()?;
    if mult.replicates == 0 {
        return Err(Error::InvalidArguments("at least one replicate is required".into()));
    }
    let process = LearningProcess::new(learning, cfg)?;
    let ell = estimate_bandwidth(learning, mult.bandwidth, mult.kernel);
    if ell == 0 || ell >= cfg.m {
        return Err(Error::BandwidthTooLarge { ell, m: cfg.m });
    }
    Ok((process, ell))
}

/// `B` replicate detector paths from the learning sample.
pub fn replicate_paths(
    learning: &ObservationMatrix,
    cfg: &MonitorConfig,
    mult: &MultiplierConfig,
) -> Result<Vec<ReplicatePath>> {
    let (process, ell) = prepare(learning, cfg, mult)?;
    let mult = &mult.clone().with_bandwidth(BandwidthRule::Fixed(ell));
    (0..mult.replicates)
        .into_par_iter()
        .map(|b| {
            let xi = gen_multipliers(cfg.m, mult, b)?;
            Ok(process.path_unchecked(cfg, &xi))
        })
        .collect()
}

/// Per-interval suprema of every replicate path, computed without keeping
/// the paths around.
pub(crate) fn replicate_sups(
    process: &LearningProcess,
    cfg: &MonitorConfig,
    mult: &MultiplierConfig,
    boundaries: &[usize],
) -> Result<Vec<Vec<f64>>> {
    (0..mult.replicates)
        .into_par_iter()
        .map(|b| {
            let xi = gen_multipliers(cfg.m, mult, b)?;
            Ok(process.path_unchecked(cfg, &xi).interval_sups(boundaries))
        })
        .collect()
}
