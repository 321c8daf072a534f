//! Shared domain types and the empirical quantile.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bootstrap::MultiplierConfig;
use crate::error::{Error, Result};

/// The five detectors.
///
/// `R`, `S` and `T` maximize (or average) over every candidate break point
/// `j in {m, .., k-1}`; `P` and `Q` only compare the learning sample with
/// everything observed after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorKind {
    /// Kolmogorov-Smirnov type, maximum over break points.
    R,
    /// Cramer-von Mises type, maximum over break points.
    S,
    /// Cramer-von Mises type, averaged over break points.
    T,
    /// Kolmogorov-Smirnov CUSUM against the learning sample.
    P,
    /// Cramer-von Mises CUSUM against the learning sample.
    Q,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::R,
        DetectorKind::S,
        DetectorKind::T,
        DetectorKind::P,
        DetectorKind::Q,
    ];

    /// `true` for the detectors that depend on the weight function `q`.
    pub fn is_weighted(self) -> bool {
        matches!(self, DetectorKind::R | DetectorKind::S | DetectorKind::T)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DetectorKind::R => "R",
            DetectorKind::S => "S",
            DetectorKind::T => "T",
            DetectorKind::P => "P",
            DetectorKind::Q => "Q",
        };
        f.write_str(s)
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "R" => Ok(DetectorKind::R),
            "S" => Ok(DetectorKind::S),
            "T" => Ok(DetectorKind::T),
            "P" => Ok(DetectorKind::P),
            "Q" => Ok(DetectorKind::Q),
            other => Err(Error::InvalidConfig(format!("unknown detector {other:?}"))),
        }
    }
}

pub(crate) fn default_alpha() -> f64 {
    0.05
}

fn default_p() -> usize {
    1
}

fn default_detector() -> DetectorKind {
    DetectorKind::T
}

pub(crate) fn default_delta() -> f64 {
    1e-4
}

fn default_dim() -> usize {
    1
}

/// Parameters of one closed-end monitoring run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// Learning-sample size.
    pub m: usize,
    /// Monitoring horizon; monitoring stops after observation `n`.
    pub n: usize,
    /// Global false-alarm probability.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Number of threshold steps.
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_detector")]
    pub detector: DetectorKind,
    /// Exponent of the weight function, in `[0, 1/2]`.
    #[serde(default)]
    pub gamma: f64,
    /// Floor of the weight function, in `(0, 1)`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Dimension of the observations.
    #[serde(default = "default_dim")]
    pub dim: usize,
}

impl MonitorConfig {
    /// A configuration with the documented defaults: `alpha = 0.05`, `p = 1`,
    /// detector `T`, `gamma = 0`, `delta = 1e-4`, univariate data.
    pub fn new(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            alpha: default_alpha(),
            p: default_p(),
            detector: default_detector(),
            gamma: 0.0,
            delta: default_delta(),
            dim: default_dim(),
        }
    }

    pub fn with_detector(mut self, detector: DetectorKind) -> Self {
        self.detector = detector;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_steps(mut self, p: usize) -> Self {
        self.p = p;
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m < 1 {
            return bad("m must be at least 1".into());
        }
        if self.n <= self.m {
            return bad(format!("n = {} must exceed m = {}", self.n, self.m));
        }
        if self.p < 1 || self.p > self.n - self.m {
            return bad(format!("p = {} must lie in 1..={}", self.p, self.n - self.m));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha = {} must lie in (0, 1/2)", self.alpha));
        }
        if !(0.0..=0.5).contains(&self.gamma) {
            return bad(format!("gamma = {} must lie in [0, 1/2]", self.gamma));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if self.dim < 1 {
            return bad("dim must be at least 1".into());
        }
        Ok(())
    }

    /// Quantile order `(1 - alpha)^(1/p)` used by the threshold recursion.
    pub fn quantile_order(&self) -> f64 {
        (1.0 - self.alpha).powf(1.0 / self.p as f64)
    }

    /// Monitoring interval boundaries `m = b_0 < .. < b_p = n`.
    pub fn boundaries(&self) -> Result<Vec<usize>> {
        interval_boundaries(self.m, self.n, self.p)
    }
}

/// Time-ordered observations, one row per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    dim: usize,
    values: Vec<f64>,
}

impl ObservationMatrix {
    /// Builds a matrix from row-major values. Every entry must be finite and
    /// there must be at least one row.
    pub fn from_flat(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArguments("dimension must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if values.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: values.len() % dim,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptySample)?;
        let dim = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(dim, values)
    }

    /// A univariate matrix.
    pub fn from_column(values: Vec<f64>) -> Result<Self> {
        Self::from_flat(1, values)
    }

    pub fn nrows(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// The first `k` rows.
    pub fn head(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.nrows() {
            return Err(Error::InvalidArguments(format!(
                "cannot take {k} of {} rows",
                self.nrows()
            )));
        }
        Self::from_flat(self.dim, self.values[..k * self.dim].to_vec())
    }

    /// Rows `k..` as a vector of owned observations.
    pub fn tail_rows(&self, k: usize) -> Vec<Vec<f64>> {
        self.rows().skip(k).map(<[f64]>::to_vec).collect()
    }

    /// Applies `f(column, value)` to every entry.
    pub fn map_entries(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let dim = self.dim;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(pos, &v)| f(pos % dim, v))
            .collect();
        Self::from_flat(dim, values)
    }

    /// `true` when some column contains a repeated value.
    pub fn has_column_ties(&self) -> bool {
        (0..self.dim).any(|c| {
            let mut col: Vec<f64> = self.rows().map(|r| r[c]).collect();
            col.sort_by(f64::total_cmp);
            col.windows(2).any(|w| w[0] == w[1])
        })
    }
}

/// How a threshold function was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Mc,
    Bootstrap,
}

impl FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mc" => Ok(ThresholdMode::Mc),
            "bootstrap" => Ok(ThresholdMode::Bootstrap),
            other => Err(Error::InvalidConfig(format!("unknown threshold mode {other:?}"))),
        }
    }
}

/// Settings a threshold function was built with, kept so a run can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProvenance {
    pub mode: ThresholdMode,
    pub seed: u64,
    pub detector: DetectorKind,
    pub gamma: f64,
    pub delta: f64,
    pub alpha: f64,
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<MultiplierConfig>,
    /// Bandwidth actually used by the multiplier bootstrap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<usize>,
}

/// Piecewise-constant decision boundary over `{m+1, .., n}`.
///
/// Interval `i` (1-based) covers the observation indices
/// `boundaries[i-1]+1 ..= boundaries[i]` and carries `levels[i-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFunction {
    pub boundaries: Vec<usize>,
    pub levels: Vec<f64>,
    /// Quantile order `(1 - alpha)^(1/p)`.
    pub order: f64,
    #[serde(flatten)]
    pub provenance: ThresholdProvenance,
}

impl ThresholdFunction {
    pub fn new(
        boundaries: Vec<usize>,
        levels: Vec<f64>,
        order: f64,
        provenance: ThresholdProvenance,
    ) -> Result<Self> {
        let tf = Self {
            boundaries,
            levels,
            order,
            provenance,
        };
        tf.validate()?;
        Ok(tf)
    }

    pub fn validate(&self) -> Result<()> {
        if self.boundaries.len() < 2 || self.levels.len() + 1 != self.boundaries.len() {
            return Err(Error::InvalidArguments(format!(
                "threshold has {} boundaries for {} levels",
                self.boundaries.len(),
                self.levels.len()
            )));
        }
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArguments(
                "threshold boundaries must be strictly increasing".into(),
            ));
        }
        if let Some(g) = self.levels.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidArguments(format!(
                "threshold levels must be strictly positive, got {g}"
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.levels.len()
    }

    pub fn m(&self) -> usize {
        self.boundaries[0]
    }

    pub fn n(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    /// 1-based interval index containing observation index `k`, if any.
    pub fn interval_of(&self, k: usize) -> Option<usize> {
        interval_index(&self.boundaries, k)
    }

    /// Threshold level in force at observation index `k`.
    pub fn level_at(&self, k: usize) -> Option<f64> {
        self.interval_of(k).map(|i| self.levels[i - 1])
    }

    /// Reads a threshold function from JSON.
    pub fn from_json(s: &str) -> Result<Self> {
        let tf: Self = serde_json::from_str(s)?;
        tf.validate()?;
        Ok(tf)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// 1-based index `i` with `boundaries[i-1] < k <= boundaries[i]`.
pub(crate) fn interval_index(boundaries: &[usize], k: usize) -> Option<usize> {
    let first = *boundaries.first()?;
    let last = *boundaries.last()?;
    if k <= first || k > last {
        return None;
    }
    Some(boundaries.partition_point(|&b| b < k))
}

/// Lower empirical quantile `inf{x : G(x) >= y}` of `sample`.
///
/// Returns the minimum for `y <= 0` and the maximum for `y >= 1`.
pub fn quantile(sample: &[f64], y: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[quantile_rank(sorted.len(), y) - 1])
}

/// Smallest `r` in `1..=len` with `r / len >= y`.
pub(crate) fn quantile_rank(len: usize, y: f64) -> usize {
    if y <= 0.0 {
        return 1;
    }
    if y >= 1.0 {
        return len;
    }
    let n = len as f64;
    let mut r = ((y * n).ceil() as usize).clamp(1, len);
    while r > 1 && (r - 1) as f64 / n >= y {
        r -= 1;
    }
    while r < len && (r as f64) / n < y {
        r += 1;
    }
    r
}

/// Monitoring interval boundaries `b_i = m + round(i (n - m) / p)`, rounding
/// halves up, so that `b_0 = m` and `b_p = n`.
pub fn interval_boundaries(m: usize, n: usize, p: usize) -> Result<Vec<usize>> {
    if n <= m {
        return Err(Error::InvalidArguments(format!("n = {n} must exceed m = {m}")));
    }
    let span = n - m;
    if p == 0 {
        return Err(Error::InvalidArguments("p must be at least 1".into()));
    }
    if p > span {
        return Err(Error::TooManySteps { p, available: span });
    }
    Ok((0..=p).map(|i| m + (2 * i * span + p) / (2 * p)).collect())
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&[7.0], 1.0).unwrap(), 7.0);
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.0).unwrap(), 1.0);
        assert!(matches!(quantile(&[], 0.5), Err(Error::EmptySample)));
    }

    #[test]
    fn quantile_rank_respects_float_products() {
        // 0.95 * 20000 is not exactly 19000 in binary floating point.
        assert_eq!(quantile_rank(20000, 0.95), 19000);
        assert_eq!(quantile_rank(4, 0.25), 1);
        assert_eq!(quantile_rank(4, 0.2500001), 2);
        assert_eq!(quantile_rank(10, 0.999), 10);
    }

    #[test]
    fn boundaries_examples() {
        assert_eq!(interval_boundaries(50, 100, 1).unwrap(), vec![50, 100]);
        assert_eq!(interval_boundaries(50, 100, 2).unwrap(), vec![50, 75, 100]);
        assert_eq!(
            interval_boundaries(50, 100, 4).unwrap(),
            vec![50, 63, 75, 88, 100]
        );
        assert!(matches!(
            interval_boundaries(50, 100, 51),
            Err(Error::TooManySteps { .. })
        ));
    }

    #[test]
    fn interval_lookup_is_right_closed() {
        let b = vec![50, 63, 75, 88, 100];
        assert_eq!(interval_index(&b, 50), None);
        assert_eq!(interval_index(&b, 51), Some(1));
        assert_eq!(interval_index(&b, 63), Some(1));
        assert_eq!(interval_index(&b, 64), Some(2));
        assert_eq!(interval_index(&b, 100), Some(4));
        assert_eq!(interval_index(&b, 101), None);
    }

    #[test]
    fn config_validation() {
        assert!(MonitorConfig::new(50, 100).validate().is_ok());
        assert!(MonitorConfig::new(50, 50).validate().is_err());
        assert!(MonitorConfig::new(50, 100).with_alpha(0.5).validate().is_err());
        assert!(MonitorConfig::new(50, 100).with_gamma(0.6).validate().is_err());
        assert!(MonitorConfig::new(50, 100).with_steps(51).validate().is_err());
        let cfg: MonitorConfig = serde_json::from_str(r#"{"m": 10, "n": 20}"#).unwrap();
        assert_eq!(cfg, MonitorConfig::new(10, 20));
    }

    #[test]
    fn observation_matrix_rejects_bad_input() {
        assert!(ObservationMatrix::from_flat(2, vec![1.0, f64::NAN]).is_err());
        assert!(ObservationMatrix::from_flat(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(ObservationMatrix::from_rows::<Vec<f64>>(&[]).is_err());
        let x = ObservationMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 3.0]]).unwrap();
        assert!(x.has_column_ties());
        assert_eq!(x.row(1), &[1.0, 3.0]);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantile_is_sample_element_and_monotone(
                sample in prop::collection::vec(-1e6f64..1e6, 1..60),
                a in 0.0f64..=1.0,
                b in 0.0f64..=1.0,
            ) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let qlo = quantile(&sample, lo).unwrap();
                let qhi = quantile(&sample, hi).unwrap();
                prop_assert!(sample.contains(&qlo));
                prop_assert!(qlo <= qhi);
            }

            #[test]
            fn boundaries_partition_the_horizon(m in 1usize..200, span in 1usize..300, p_frac in 0.0f64..1.0) {
                let p = 1 + ((span - 1) as f64 * p_frac) as usize;
                let b = interval_boundaries(m, m + span, p).unwrap();
                prop_assert_eq!(b[0], m);
                prop_assert_eq!(b[p], m + span);
                let lens: Vec<usize> = b.windows(2).map(|w| w[1] - w[0]).collect();
                prop_assert!(lens.iter().all(|&l| l >= 1));
                let lo = *lens.iter().min().unwrap();
                let hi = *lens.iter().max().unwrap();
                prop_assert!(hi - lo <= 1);
                prop_assert_eq!(lens.iter().sum::<usize>(), span);
            }
        }
    }
}
