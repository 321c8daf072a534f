mod common;

use common::*;
use rand::Rng;
use rand_distr::StandardNormal;
use seqcp::bootstrap::{gen_multipliers, replicate_paths, LearningProcess};
use seqcp::detectors::{compute_detector, estimate_changepoint};
use seqcp::model::{interval_boundaries, quantile};
use seqcp::threshold::{conditional_quantiles, PathSupMatrix};
use seqcp::{BandwidthRule, DetectorKind, DominanceState, MonitorConfig, MultiplierConfig, ObservationMatrix};
use statrs::distribution::{ContinuousCDF, Normal};

fn state(rows: &[Vec<f64>]) -> DominanceState {
    DominanceState::from_matrix(&ObservationMatrix::from_rows(rows).unwrap())
}

#[test]
fn ecdf_matches_direct_count() {
    let mut g = rng(1);
    for _ in 0..200 {
        let k = g.random_range(1..10);
        let d = g.random_range(1..4);
        let ties = g.random_bool(0.3);
        let x = random_rows(&mut g, k, d, ties);
        let st = state(&x);
        for i in 1..=k {
            for j in 1..=k + 1 {
                for kk in 1..=k {
                    let got = st.ecdf_eval(j, kk, i).unwrap();
                    assert_eq!(got, ecdf(&x, j, kk, &x[i - 1]), "j={j} k={kk} i={i}");
                }
            }
        }
        assert!(st.ecdf_eval(1, k + 1, 1).is_err());
    }
}

#[test]
fn bivariate_ecdf_example() {
    let mut g = rng(2);
    let x = random_rows(&mut g, 5, 2, false);
    let st = state(&x);
    let direct = (2..=4).filter(|&r| leq(&x[r - 1], &x[2])).count() as f64 / 3.0;
    assert_eq!(st.ecdf_eval(2, 4, 3).unwrap(), direct);
}

#[test]
fn detectors_match_formula_oracle() {
    let mut g = rng(3);
    for _ in 0..300 {
        let m = g.random_range(1..=6);
        let n = g.random_range(m + 1..=12);
        let d = g.random_range(1..=3);
        let gamma = [0.0, 0.25, 0.5][g.random_range(0..3)];
        let ties = g.random_bool(0.2);
        let x = random_rows(&mut g, n, d, ties);
        let st = state(&x);
        for kind in DetectorKind::ALL {
            let cfg = MonitorConfig::new(m, n).with_dim(d).with_detector(kind).with_gamma(gamma);
            for k in m + 1..=n {
                let got = compute_detector(&st, &cfg, k).unwrap();
                let want = detector(&x, m, k, kind, gamma, cfg.delta);
                assert!((got - want).abs() <= 1e-12, "{kind} m={m} k={k} got {got} want {want}");
            }
        }
    }
}

#[test]
fn trivariate_s_example() {
    let mut g = rng(4);
    let x = random_rows(&mut g, 8, 3, false);
    let cfg = MonitorConfig::new(5, 8)
        .with_dim(3)
        .with_detector(DetectorKind::S)
        .with_gamma(0.25);
    let got = compute_detector(&state(&x), &cfg, 8).unwrap();
    assert!((got - detector(&x, 5, 8, DetectorKind::S, 0.25, 1e-4)).abs() <= 1e-12);
}

#[test]
fn changepoint_matches_brute_force_argmax() {
    let mut g = rng(5);
    let mut moved = 0;
    for _ in 0..200 {
        let m = g.random_range(2..=6);
        let k = g.random_range(m + 1..=14);
        let gamma = [0.0, 0.25, 0.5][g.random_range(0..3)];
        let x = random_rows(&mut g, k, 1, false);
        let cfg = MonitorConfig::new(m, k).with_gamma(gamma);
        // objective of the S-type inner average, first maximiser
        let mf = m as f64;
        let objective = |j: usize| {
            let w = (j * (k - j)) as f64 / (mf * mf.sqrt() * q(j as f64 / mf, k as f64 / mf, gamma, 1e-4));
            (1..=k)
                .map(|i| (w * (ecdf(&x, 1, j, &x[i - 1]) - ecdf(&x, j + 1, k, &x[i - 1]))).powi(2))
                .sum::<f64>()
                / k as f64
        };
        let values: Vec<f64> = (m..k).map(objective).collect();
        let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = values.iter().position(|&v| v >= top - 1e-9 * top).unwrap();
        let best = (m + first, top);
        if best.0 != m {
            moved += 1;
        }
        assert_eq!(estimate_changepoint(&state(&x), &cfg, k).unwrap(), best.0 + 1);
    }
    assert!(moved > 50, "argmax away from m in only {moved} cases");
}

#[test]
fn replicate_path_matches_oracle_m12_n24() {
    let mut g = rng(6);
    let x = random_rows(&mut g, 12, 1, false);
    let xi: Vec<f64> = (0..12).map(|_| g.sample(StandardNormal)).collect();
    for kind in DetectorKind::ALL {
        for gamma in [0.0, 0.25, 0.5] {
            let cfg = MonitorConfig::new(12, 24).with_detector(kind).with_gamma(gamma);
            let proc_ = LearningProcess::new(&ObservationMatrix::from_rows(&x).unwrap(), &cfg).unwrap();
            assert_eq!((proc_.m_prime(), proc_.horizon()), (6, 12));
            let got = proc_.path_with_multipliers(&cfg, &xi).unwrap();
            let want = replicate_path(&x, 24, &xi, kind, gamma, 1e-4);
            assert_eq!(got.values.len(), want.len());
            for (a, b) in got.values.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12, "{kind} gamma={gamma}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn replicate_paths_use_generated_multipliers() {
    let mut g = rng(7);
    let x = random_rows(&mut g, 20, 2, false);
    let learning = ObservationMatrix::from_rows(&x).unwrap();
    let cfg = MonitorConfig::new(20, 30).with_dim(2).with_detector(DetectorKind::T).with_gamma(0.25);
    let mult = MultiplierConfig::new(5, 99).with_bandwidth(BandwidthRule::Fixed(3));
    let paths = replicate_paths(&learning, &cfg, &mult).unwrap();
    assert_eq!(paths.len(), 5);
    for (b, path) in paths.iter().enumerate() {
        let xi = gen_multipliers(20, &mult, b).unwrap();
        let want = replicate_path(&x, 30, &xi, DetectorKind::T, 0.25, 1e-4);
        for (a, w) in path.values.iter().zip(&want) {
            assert!((a - w).abs() <= 1e-12);
        }
    }
}

#[test]
fn conditional_quantiles_match_filter_and_sort() {
    let mut g = rng(8);
    for order in [0.5, 0.9, 0.97] {
        let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| g.random::<f64>()).collect()).collect();
        let got = conditional_quantiles(&PathSupMatrix::from_rows(rows.clone()).unwrap(), order).unwrap();
        let mut alive = rows.clone();
        for i in 0..3 {
            let col: Vec<f64> = alive.iter().map(|r| r[i]).collect();
            let gi = sorted_quantile(&col, order);
            assert_eq!(got[i], gi);
            alive.retain(|r| r[i] <= gi);
        }
    }
}

#[test]
fn single_step_equals_sup_quantile() {
    let mut g = rng(9);
    let sups: Vec<f64> = (0..999).map(|_| g.random::<f64>() * 3.0).collect();
    let rows = sups.iter().map(|&v| vec![v]).collect();
    let levels = conditional_quantiles(&PathSupMatrix::from_rows(rows).unwrap(), 0.95).unwrap();
    assert_eq!(levels, vec![sorted_quantile(&sups, 0.95)]);
}

#[test]
fn quantile_examples() {
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.0);
    assert_eq!(quantile(&[7.0], 1.0).unwrap(), 7.0);
    assert!(quantile(&[], 0.5).is_err());
    let mut g = rng(10);
    let z: Vec<f64> = (0..1000).map(|_| g.sample(StandardNormal)).collect();
    let exact = Normal::standard().inverse_cdf(0.95);
    assert!((quantile(&z, 0.95).unwrap() - exact).abs() < 0.15);
    for y in [0.0, 0.1, 0.25, 0.5, 0.95, 0.999, 1.0] {
        assert_eq!(quantile(&z, y).unwrap(), sorted_quantile(&z, y));
    }
}

#[test]
fn boundary_examples() {
    assert_eq!(interval_boundaries(50, 100, 1).unwrap(), vec![50, 100]);
    assert_eq!(interval_boundaries(50, 100, 2).unwrap(), vec![50, 75, 100]);
    // 12.5 -> 13, 37.5 -> 38
    assert_eq!(interval_boundaries(50, 100, 4).unwrap(), vec![50, 63, 75, 88, 100]);
    assert!(interval_boundaries(50, 100, 51).is_err());
}
