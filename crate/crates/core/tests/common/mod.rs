//! Naive reference implementations used as test oracles.
#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use seqcp::DetectorKind;

pub fn leq(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// `F_{j1:j2}(x)` by direct counting, 1-based inclusive.
pub fn ecdf(x: &[Vec<f64>], j1: usize, j2: usize, at: &[f64]) -> f64 {
    if j1 > j2 {
        return 0.0;
    }
    let mut c = 0;
    for r in j1..=j2 {
        if leq(&x[r - 1], at) {
            c += 1;
        }
    }
    c as f64 / (j2 - j1 + 1) as f64
}

pub fn q(s: f64, t: f64, gamma: f64, delta: f64) -> f64 {
    let v = s.powf(gamma) * (t - s).powf(gamma);
    if v > delta {
        v
    } else {
        delta
    }
}

/// `D_m(k)` straight from the defining formulas.
pub fn detector(x: &[Vec<f64>], m: usize, k: usize, kind: DetectorKind, gamma: f64, delta: f64) -> f64 {
    let mf = m as f64;
    let norm = mf * mf.sqrt();
    let weight = |j: usize| (j * (k - j)) as f64 / (norm * q(j as f64 / mf, k as f64 / mf, gamma, delta));
    let sup_at = |j: usize| {
        let mut best: f64 = 0.0;
        for i in 1..=k {
            let d = (ecdf(x, 1, j, &x[i - 1]) - ecdf(x, j + 1, k, &x[i - 1])).abs();
            if d > best {
                best = d;
            }
        }
        best
    };
    let cvm_at = |j: usize, w: f64| {
        let mut s = 0.0;
        for i in 1..=k {
            let d = w * (ecdf(x, 1, j, &x[i - 1]) - ecdf(x, j + 1, k, &x[i - 1]));
            s += d * d;
        }
        s / k as f64
    };
    match kind {
        DetectorKind::R => {
            let mut best: f64 = 0.0;
            for j in m..k {
                best = best.max(weight(j) * sup_at(j));
            }
            best
        }
        DetectorKind::S => {
            let mut best: f64 = 0.0;
            for j in m..k {
                best = best.max(cvm_at(j, weight(j)));
            }
            best
        }
        DetectorKind::T => {
            let mut s = 0.0;
            for j in m..k {
                s += cvm_at(j, weight(j));
            }
            s / mf
        }
        DetectorKind::P => (m * (k - m)) as f64 / norm * sup_at(m),
        DetectorKind::Q => cvm_at(m, (m * (k - m)) as f64 / norm),
    }
}

/// Replicate path values at `t = m'..=floor(m' n / m)` for multipliers `xi`.
pub fn replicate_path(
    x: &[Vec<f64>],
    n: usize,
    xi: &[f64],
    kind: DetectorKind,
    gamma: f64,
    delta: f64,
) -> Vec<f64> {
    let m = x.len();
    let mp = m * m / n;
    let horizon = mp * n / m;
    let mpf = mp as f64;
    let b_hat = |j: usize, at: &[f64]| {
        let f = ecdf(x, 1, m, at);
        let mut s = 0.0;
        for i in 1..=j {
            let ind = if leq(&x[i - 1], at) { 1.0 } else { 0.0 };
            s += xi[i - 1] * (ind - f);
        }
        s / mpf.sqrt()
    };
    let g = |j: usize, t: usize, at: &[f64], qv: f64| {
        ((t as f64 / mpf) * b_hat(j, at) - (j as f64 / mpf) * b_hat(t, at)) / qv
    };
    let mut out = vec![0.0];
    for t in mp + 1..=horizon {
        let qj = |j: usize| q(j as f64 / mpf, t as f64 / mpf, gamma, delta);
        let sup = |j: usize, qv: f64| {
            let mut best: f64 = 0.0;
            for r in 1..=m {
                best = best.max(g(j, t, &x[r - 1], qv).abs());
            }
            best
        };
        let cvm = |j: usize, qv: f64| {
            let mut s = 0.0;
            for r in 1..=t {
                let v = g(j, t, &x[r - 1], qv);
                s += v * v;
            }
            s / t as f64
        };
        let v = match kind {
            DetectorKind::R => (mp..t).map(|j| sup(j, qj(j))).fold(0.0, f64::max),
            DetectorKind::S => (mp..t).map(|j| cvm(j, qj(j))).fold(0.0, f64::max),
            DetectorKind::T => (mp..t).map(|j| cvm(j, qj(j))).sum::<f64>() / mpf,
            DetectorKind::P => sup(mp, 1.0),
            DetectorKind::Q => cvm(mp, 1.0),
        };
        out.push(v);
    }
    out
}

/// Lower empirical quantile by sorting.
pub fn sorted_quantile(sample: &[f64], y: f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    // smallest x with #{v <= x} / len >= y
    for (i, v) in s.iter().enumerate() {
        if (i + 1) as f64 / s.len() as f64 >= y {
            return *v;
        }
    }
    *s.last().unwrap()
}

/// Random observations; `ties` draws from a small integer grid.
pub fn random_rows(rng: &mut StdRng, k: usize, d: usize, ties: bool) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| {
            (0..d)
                .map(|_| {
                    if ties {
                        f64::from(rng.random_range(0..4u8))
                    } else {
                        rng.random_range(-3.0..3.0)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Binomial standard error of a proportion, in percent.
pub fn binomial_se_pct(p: f64, trials: usize) -> f64 {
    100.0 * (p * (1.0 - p) / trials as f64).sqrt()
}
