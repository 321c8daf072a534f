//! Streaming closed-end monitor.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::detectors::{detector_value, estimate_changepoint, DetectorPath, DominanceState, Scratch};
use crate::error::{Error, Result};
use crate::model::{MonitorConfig, ObservationMatrix, ThresholdFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum MonitorStatus {
    Running,
    Alarmed { at: usize, changepoint: usize },
    EndedNoAlarm,
}

impl MonitorStatus {
    pub fn is_terminal(self) -> bool {
        !matches!(self, MonitorStatus::Running)
    }
}

/// Outcome of ingesting one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Continue {
        k: usize,
        value: f64,
        threshold: f64,
    },
    Alarm {
        k: usize,
        value: f64,
        threshold: f64,
        changepoint: usize,
    },
    /// Observation `n` arrived without an exceedance.
    Ended {
        k: usize,
        value: f64,
        threshold: f64,
    },
}

#[derive(Debug, Clone)]
pub struct MonitorState {
    cfg: MonitorConfig,
    dominance: DominanceState,
    threshold: ThresholdFunction,
    path: DetectorPath,
    threshold_trace: Vec<f64>,
    status: MonitorStatus,
    scratch: Scratch,
}

impl MonitorState {
    /// Starts monitoring after the learning sample, at `k = m` with `D_m(m) = 0`.
    pub fn init(learning: &ObservationMatrix, threshold: ThresholdFunction, cfg: MonitorConfig) -> Result<Self> {
        cfg.validate()?;
        threshold.validate()?;
        if learning.nrows() != cfg.m {
            return Err(Error::InvalidArguments(format!(
                "learning sample has {} rows, expected m = {}",
                learning.nrows(),
                cfg.m
            )));
        }
        if learning.dim() != cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim,
                got: learning.dim(),
            });
        }
        if threshold.m() != cfg.m || threshold.n() != cfg.n {
            return Err(Error::ThresholdMismatch(format!(
                "threshold spans ({}, {}], monitor expects ({}, {}]",
                threshold.m(),
                threshold.n(),
                cfg.m,
                cfg.n
            )));
        }
        let prov = &threshold.provenance;
        if prov.detector != cfg.detector {
            return Err(Error::ThresholdMismatch(format!(
                "threshold built for detector {}, monitor uses {}",
                prov.detector, cfg.detector
            )));
        }
        if cfg.detector.is_weighted() && (prov.gamma != cfg.gamma || prov.delta != cfg.delta) {
            return Err(Error::ThresholdMismatch(format!(
                "threshold built for gamma = {}, delta = {}; monitor uses gamma = {}, delta = {}",
                prov.gamma, prov.delta, cfg.gamma, cfg.delta
            )));
        }
        if learning.has_column_ties() {
            warn!("learning sample has tied values within a column; rank invariance may not hold");
        }
        Ok(Self {
            dominance: DominanceState::from_matrix(learning),
            path: DetectorPath::start(cfg.detector, cfg.m),
            threshold,
            threshold_trace: Vec::new(),
            status: MonitorStatus::Running,
            scratch: Scratch::default(),
            cfg,
        })
    }

    /// Index of the last ingested observation.
    pub fn k(&self) -> usize {
        self.dominance.len()
    }

    pub fn status(&self) -> MonitorStatus {
        self.status
    }

    pub fn path(&self) -> &DetectorPath {
        &self.path
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.cfg
    }

    pub fn threshold(&self) -> &ThresholdFunction {
        &self.threshold
    }

    pub fn step(&mut self, x: &[f64]) -> Result<Decision> {
        if self.status.is_terminal() {
            return Err(Error::MonitoringFinished);
        }
        self.dominance.extend(x)?;
        let k = self.dominance.len();
        let value = detector_value(&self.dominance, &self.cfg, k, &mut self.scratch);
        let threshold = self
            .threshold
            .level_at(k)
            .expect("threshold covers every monitoring index");
        self.path.values.push(value);
        self.threshold_trace.push(threshold);

        if value > threshold {
            let changepoint = estimate_changepoint(&self.dominance, &self.cfg, k)?;
            self.status = MonitorStatus::Alarmed { at: k, changepoint };
            return Ok(Decision::Alarm {
                k,
                value,
                threshold,
                changepoint,
            });
        }
        if k == self.cfg.n {
            self.status = MonitorStatus::EndedNoAlarm;
            return Ok(Decision::Ended { k, value, threshold });
        }
        Ok(Decision::Continue { k, value, threshold })
    }

    /// Feeds `stream` until it is exhausted or monitoring stops.
    pub fn run<R: AsRef<[f64]>>(mut self, stream: &[R]) -> Result<MonitorReport> {
        if stream.len() > self.cfg.n - self.cfg.m {
            return Err(Error::InvalidArguments(format!(
                "stream has {} observations, at most n - m = {} can be monitored",
                stream.len(),
                self.cfg.n - self.cfg.m
            )));
        }
        for x in stream {
            if self.step(x.as_ref())?.is_terminal() {
                break;
            }
        }
        Ok(self.report())
    }

    pub fn report(&self) -> MonitorReport {
        let (alarm_index, changepoint) = match self.status {
            MonitorStatus::Alarmed { at, changepoint } => (Some(at), Some(changepoint)),
            _ => (None, None),
        };
        MonitorReport {
            status: self.status,
            alarm_index,
            changepoint,
            detector_path: self.path.values.clone(),
            threshold_trace: self.threshold_trace.clone(),
            config: self.cfg.clone(),
            threshold: self.threshold.clone(),
        }
    }
}

impl Decision {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Decision::Continue { .. })
    }
}

/// Summary of a monitoring run.
///
/// `detector_path[0]` is `D_m(m) = 0`; `threshold_trace[i]` is the level
/// compared against `detector_path[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub status: MonitorStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alarm_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub changepoint: Option<usize>,
    pub detector_path: Vec<f64>,
    pub threshold_trace: Vec<f64>,
    pub config: MonitorConfig,
    pub threshold: ThresholdFunction,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ThresholdMode, ThresholdProvenance};

    fn threshold(m: usize, n: usize, levels: Vec<f64>) -> ThresholdFunction {
        let p = levels.len();
        let cfg = MonitorConfig::new(m, n).with_steps(p);
        ThresholdFunction::new(
            cfg.boundaries().unwrap(),
            levels,
            cfg.quantile_order(),
            ThresholdProvenance {
                mode: ThresholdMode::Mc,
                seed: 0,
                detector: cfg.detector,
                gamma: 0.0,
                delta: 1e-4,
                alpha: 0.05,
                replicates: 1,
                multiplier: None,
                bandwidth: None,
            },
        )
        .unwrap()
    }

    fn learning(m: usize) -> ObservationMatrix {
        ObservationMatrix::from_column((0..m).map(|i| (i * 7 % m) as f64 / m as f64).collect()).unwrap()
    }

    #[test]
    fn init_starts_at_m() {
        let st = MonitorState::init(&learning(5), threshold(5, 10, vec![1e9]), MonitorConfig::new(5, 10)).unwrap();
        assert_eq!(st.k(), 5);
        assert_eq!(st.path().values, vec![0.0]);
        assert_eq!(st.status(), MonitorStatus::Running);
    }

    #[test]
    fn init_rejects_mismatches() {
        let cfg = MonitorConfig::new(5, 10);
        assert!(MonitorState::init(&learning(4), threshold(5, 10, vec![1.0]), cfg.clone()).is_err());
        assert!(matches!(
            MonitorState::init(&learning(5), threshold(5, 12, vec![1.0]), cfg.clone()),
            Err(Error::ThresholdMismatch(_))
        ));
        let other = cfg.clone().with_detector(crate::model::DetectorKind::R);
        assert!(matches!(
            MonitorState::init(&learning(5), threshold(5, 10, vec![1.0]), other),
            Err(Error::ThresholdMismatch(_))
        ));
    }

    #[test]
    fn huge_threshold_runs_to_the_end() {
        let cfg = MonitorConfig::new(5, 8);
        let mut st = MonitorState::init(&learning(5), threshold(5, 8, vec![1e9]), cfg).unwrap();
        assert!(matches!(st.step(&[0.3]).unwrap(), Decision::Continue { k: 6, .. }));
        assert!(matches!(st.step(&[0.9]).unwrap(), Decision::Continue { k: 7, .. }));
        assert!(matches!(st.step(&[0.1]).unwrap(), Decision::Ended { k: 8, .. }));
        assert_eq!(st.status(), MonitorStatus::EndedNoAlarm);
        assert!(matches!(st.step(&[0.1]), Err(Error::MonitoringFinished)));
    }

    #[test]
    fn tiny_threshold_alarms_immediately() {
        let cfg = MonitorConfig::new(5, 8);
        let mut st = MonitorState::init(&learning(5), threshold(5, 8, vec![1e-12]), cfg).unwrap();
        let d = st.step(&[5.0]).unwrap();
        assert!(matches!(d, Decision::Alarm { k: 6, changepoint: 6, .. }));
        assert!(matches!(st.step(&[0.1]), Err(Error::MonitoringFinished)));
    }

    #[test]
    fn empty_stream_report() {
        let st = MonitorState::init(&learning(5), threshold(5, 10, vec![1.0]), MonitorConfig::new(5, 10)).unwrap();
        let rep = st.run::<Vec<f64>>(&[]).unwrap();
        assert_eq!(rep.status, MonitorStatus::Running);
        assert_eq!(rep.detector_path, vec![0.0]);
        assert!(rep.threshold_trace.is_empty());
    }

    #[test]
    fn overlong_stream_is_rejected() {
        let st = MonitorState::init(&learning(5), threshold(5, 7, vec![1.0]), MonitorConfig::new(5, 7)).unwrap();
        assert!(st.run(&[[0.1], [0.2], [0.3]]).is_err());
    }
}
