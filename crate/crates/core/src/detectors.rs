//! Empirical-d.f. detectors computed from pairwise dominance counts.
//!
//! Every quantity used by the detectors is of the form
//! `F_{j:k}(X_i) = #{r in j..=k : X_r <= X_i} / (k - j + 1)` with the
//! componentwise order on `R^d`. [`DominanceState`] keeps, for every ingested
//! point `X_i`, the running counts `#{r <= c : X_r <= X_i}` for all prefixes
//! `c`, so each `F_{j:k}(X_i)` is a difference of two integers. Because only
//! comparisons enter, the detectors are unchanged by strictly increasing
//! transformations of the margins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pairwise_sum, DetectorKind, MonitorConfig, ObservationMatrix};

/// Componentwise weak dominance `a <= b`.
#[inline]
pub(crate) fn dominated(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Prefix dominance counts over the observations ingested so far.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceState {
    dim: usize,
    points: Vec<f64>,
    /// `cols[c][i] = #{r < c : X_r <= X_i}` (0-based `i`), `c = 0..=k`.
    cols: Vec<Vec<u32>>,
}

impl DominanceState {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
            cols: vec![Vec::new()],
        }
    }

    pub fn from_matrix(x: &ObservationMatrix) -> Self {
        let mut state = Self::new(x.dim());
        for row in x.rows() {
            state.push_unchecked(row);
        }
        state
    }

    /// Number of ingested observations.
    pub fn len(&self) -> usize {
        self.cols.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The `i`-th ingested observation, 1-based.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[(i - 1) * self.dim..i * self.dim]
    }

    /// Ingests one observation in `O(k d)`.
    pub fn extend(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: self.len(),
                col,
            });
        }
        self.push_unchecked(x);
        Ok(())
    }

    /// Returns a new state with `x` appended, leaving `self` untouched.
    pub fn extended(&self, x: &[f64]) -> Result<Self> {
        let mut next = self.clone();
        next.extend(x)?;
        Ok(next)
    }

    fn push_unchecked(&mut self, x: &[f64]) {
        let k = self.len();
        let d = self.dim;
        // counts of the new point against every prefix
        let mut acc = 0u32;
        self.cols[0].push(0);
        for r in 0..k {
            acc += u32::from(dominated(&self.points[r * d..(r + 1) * d], x));
            self.cols[r + 1].push(acc);
        }
        // the prefix that now includes the new point
        let mut next = Vec::with_capacity(k + 1);
        let last = &self.cols[k];
        for i in 0..k {
            next.push(last[i] + u32::from(dominated(x, &self.points[i * d..(i + 1) * d])));
        }
        next.push(acc + 1);
        self.points.extend_from_slice(x);
        self.cols.push(next);
    }

    /// Indicator `1(X_r <= X_i)`, both 1-based.
    pub fn indicator(&self, i: usize, r: usize) -> u32 {
        self.cols[r][i - 1] - self.cols[r - 1][i - 1]
    }

    /// `#{r <= c : X_r <= X_i}`, `i` 1-based, `c` in `0..=k`.
    #[inline]
    pub fn prefix_count(&self, i: usize, c: usize) -> u32 {
        self.cols[c][i - 1]
    }

    /// `#{r <= c : X_r <= X_i}` for `i = 1..=k`.
    #[inline]
    fn prefix_column(&self, c: usize, k: usize) -> &[u32] {
        &self.cols[c][..k]
    }

    /// `F_{j:k}(X_i)`; zero when `j > k`.
    pub fn ecdf_eval(&self, j: usize, k: usize, i: usize) -> Result<f64> {
        if i == 0 || i > self.len() {
            return Err(Error::InvalidArguments(format!(
                "evaluation index i = {i} outside 1..={}",
                self.len()
            )));
        }
        if j == 0 || k == 0 {
            return Err(Error::InvalidArguments("j and k are 1-based".into()));
        }
        if k > self.len() {
            return Err(Error::BeyondIngested {
                k,
                ingested: self.len(),
            });
        }
        if j > k {
            return Ok(0.0);
        }
        Ok(f64::from(self.cols[k][i - 1] - self.cols[j - 1][i - 1]) / (k - j + 1) as f64)
    }
}

/// Weight function `q(s, t) = max{s^gamma (t - s)^gamma, delta}`.
pub fn weight_q(s: f64, t: f64, gamma: f64, delta: f64) -> Result<f64> {
    if !(s >= 0.0 && s <= t) {
        return Err(Error::InvalidArguments(format!(
            "weight_q needs 0 <= s <= t, got s = {s}, t = {t}"
        )));
    }
    Ok(q_unchecked(s, t, gamma, delta))
}

#[inline]
pub(crate) fn q_unchecked(s: f64, t: f64, gamma: f64, delta: f64) -> f64 {
    if gamma == 0.0 {
        return 1.0_f64.max(delta);
    }
    (s.powf(gamma) * (t - s).powf(gamma)).max(delta)
}

/// Break-point weight `j (k - j) / (m^{3/2} q(j/m, k/m))`.
#[inline]
fn break_weight(j: usize, k: usize, m: usize, gamma: f64, delta: f64) -> f64 {
    let mf = m as f64;
    let q = q_unchecked(j as f64 / mf, k as f64 / mf, gamma, delta);
    (j * (k - j)) as f64 / (mf * mf.sqrt() * q)
}

/// `max_i |F_{1:j}(X_i) - F_{j+1:k}(X_i)|` over `i = 1..=k`, scaled by `weight`.
fn weighted_sup(state: &DominanceState, j: usize, k: usize, weight: f64) -> f64 {
    let (cj, ck) = (state.prefix_column(j, k), state.prefix_column(k, k));
    let (inv_l, inv_r) = (1.0 / j as f64, 1.0 / (k - j) as f64);
    let term = |a: u32, c: u32| (f64::from(a) * inv_l - f64::from(c - a) * inv_r).abs();
    let mut lanes = [0.0_f64; 4];
    let mut cj4 = cj.chunks_exact(4);
    let mut ck4 = ck.chunks_exact(4);
    for (a, c) in (&mut cj4).zip(&mut ck4) {
        for l in 0..4 {
            let v = term(a[l], c[l]);
            if v > lanes[l] {
                lanes[l] = v;
            }
        }
    }
    let sup = cj4
        .remainder()
        .iter()
        .zip(ck4.remainder())
        .map(|(&a, &c)| term(a, c))
        .chain(lanes)
        .fold(0.0, f64::max);
    weight * sup
}

/// `(1/k) sum_i [weight (F_{1:j}(X_i) - F_{j+1:k}(X_i))]^2`.
fn weighted_mean_square(state: &DominanceState, j: usize, k: usize, weight: f64) -> f64 {
    let (cj, ck) = (state.prefix_column(j, k), state.prefix_column(k, k));
    let (inv_l, inv_r) = (1.0 / j as f64, 1.0 / (k - j) as f64);
    let term = |a: u32, c: u32| {
        let d = f64::from(a) * inv_l - f64::from(c - a) * inv_r;
        d * d
    };
    let mut lanes = [0.0_f64; 4];
    let mut cj4 = cj.chunks_exact(4);
    let mut ck4 = ck.chunks_exact(4);
    for (a, c) in (&mut cj4).zip(&mut ck4) {
        for l in 0..4 {
            lanes[l] += term(a[l], c[l]);
        }
    }
    let tail: f64 = cj4.remainder().iter().zip(ck4.remainder()).map(|(&a, &c)| term(a, c)).sum();
    let sum = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail;
    weight * weight * sum / k as f64
}

/// Reusable buffers for detector evaluation.
#[derive(Debug, Clone, Default)]
pub(crate) struct Scratch {
    inner: Vec<f64>,
}

pub(crate) fn detector_value(
    state: &DominanceState,
    cfg: &MonitorConfig,
    k: usize,
    scratch: &mut Scratch,
) -> f64 {
    let m = cfg.m;
    let (gamma, delta) = (cfg.gamma, cfg.delta);
    match cfg.detector {
        DetectorKind::R => (m..k)
            .map(|j| {
                let w = break_weight(j, k, m, gamma, delta);
                weighted_sup(state, j, k, w)
            })
            .fold(0.0, f64::max),
        DetectorKind::S => (m..k)
            .map(|j| {
                let w = break_weight(j, k, m, gamma, delta);
                weighted_mean_square(state, j, k, w)
            })
            .fold(0.0, f64::max),
        DetectorKind::T => {
            scratch.inner.clear();
            for j in m..k {
                let w = break_weight(j, k, m, gamma, delta);
                let v = weighted_mean_square(state, j, k, w);
                scratch.inner.push(v);
            }
            pairwise_sum(&scratch.inner) / m as f64
        }
        DetectorKind::P | DetectorKind::Q => {
            let mf = m as f64;
            let w = (m * (k - m)) as f64 / (mf * mf.sqrt());
            if cfg.detector == DetectorKind::P {
                weighted_sup(state, m, k, w)
            } else {
                weighted_mean_square(state, m, k, w)
            }
        }
    }
}

/// Detector value `D_m(k)` for `m < k <= state.len()`.
pub fn compute_detector(state: &DominanceState, cfg: &MonitorConfig, k: usize) -> Result<f64> {
    if k <= cfg.m {
        return Err(Error::MonitoringNotStarted { k, m: cfg.m });
    }
    if k > state.len() {
        return Err(Error::BeyondIngested {
            k,
            ingested: state.len(),
        });
    }
    Ok(detector_value(state, cfg, k, &mut Scratch::default()))
}

const TIE_TOLERANCE: f64 = 1e-9;

/// Change-point estimate after an exceedance at step `k`: one plus the
/// smallest `j in m..k` maximizing the Cramer-von Mises break-point objective.
pub fn estimate_changepoint(state: &DominanceState, cfg: &MonitorConfig, k: usize) -> Result<usize> {
    if k <= cfg.m {
        return Err(Error::MonitoringNotStarted { k, m: cfg.m });
    }
    if k > state.len() {
        return Err(Error::BeyondIngested {
            k,
            ingested: state.len(),
        });
    }
    let objective = |j: usize| weighted_mean_square(state, j, k, break_weight(j, k, cfg.m, cfg.gamma, cfg.delta));
    let mut best = (cfg.m, objective(cfg.m));
    for j in cfg.m + 1..k {
        let v = objective(j);
        // values equal up to rounding count as ties
        if v > best.1 + TIE_TOLERANCE * best.1 {
            best = (j, v);
        }
    }
    Ok(best.0 + 1)
}

/// Detector values `D_m(k)` for `k = m, m+1, ..`, with `D_m(m) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorPath {
    pub kind: DetectorKind,
    pub m: usize,
    pub values: Vec<f64>,
}

impl DetectorPath {
    /// The path holding only the convention `D_m(m) = 0`.
    pub fn start(kind: DetectorKind, m: usize) -> Self {
        Self {
            kind,
            m,
            values: vec![0.0],
        }
    }

    /// Evaluates the detector at every `k` in `m+1..=state.len()`.
    pub fn from_state(state: &DominanceState, cfg: &MonitorConfig) -> Result<Self> {
        if state.len() < cfg.m {
            return Err(Error::InvalidArguments(format!(
                "state holds {} observations, fewer than m = {}",
                state.len(),
                cfg.m
            )));
        }
        let mut path = Self::start(cfg.detector, cfg.m);
        let mut scratch = Scratch::default();
        for k in cfg.m + 1..=state.len() {
            path.values.push(detector_value(state, cfg, k, &mut scratch));
        }
        Ok(path)
    }

    /// One-shot computation on a full data matrix.
    pub fn from_matrix(x: &ObservationMatrix, cfg: &MonitorConfig) -> Result<Self> {
        Self::from_state(&DominanceState::from_matrix(x), cfg)
    }

    /// Last observation index covered by the path.
    pub fn last_index(&self) -> usize {
        self.m + self.values.len() - 1
    }

    /// `D_m(k)`.
    pub fn at(&self, k: usize) -> Option<f64> {
        k.checked_sub(self.m).and_then(|o| self.values.get(o).copied())
    }

    /// Maximum of the path over each interval `(b_{i-1}, b_i]`.
    pub fn interval_sups(&self, boundaries: &[usize]) -> Vec<f64> {
        boundaries
            .windows(2)
            .map(|w| {
                (w[0] + 1..=w[1])
                    .filter_map(|k| self.at(k))
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}
