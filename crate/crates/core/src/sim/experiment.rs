use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{BandwidthRule, Kernel, MultiplierConfig};
use crate::error::{Error, Result};
use crate::model::{DetectorKind, MonitorConfig, ObservationMatrix, ThresholdFunction};
use crate::monitor::{MonitorState, MonitorStatus};
use crate::rng::{derive_seed, Domain};
use crate::sim::scenario::{generate, Change, Model, Scenario};
use crate::threshold::{bootstrap_threshold, mc_threshold};

/// How each trial obtains its threshold function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ThresholdSpec {
    /// One Monte Carlo threshold shared by every trial.
    Mc { replicates: usize },
    /// A multiplier-bootstrap threshold estimated from each trial's
    /// learning sample.
    Bootstrap {
        replicates: usize,
        #[serde(default)]
        bandwidth: BandwidthRule,
        #[serde(default)]
        kernel: Kernel,
    },
}

impl ThresholdSpec {
    pub fn bootstrap(replicates: usize) -> Self {
        ThresholdSpec::Bootstrap {
            replicates,
            bandwidth: BandwidthRule::PowerRule,
            kernel: Kernel::Parzen,
        }
    }
}

/// Outcome of one simulated monitoring run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub alarm: Option<usize>,
    pub changepoint: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// Percentage of trials with an alarm.
    pub rejection_pct: f64,
    /// Mean of `alarm - k*` over trials alarming after the change.
    pub mean_delay: Option<f64>,
    pub n_trials: usize,
    pub n_alarms: usize,
    /// Alarms at or before `k*`; every alarm when there is no change.
    pub n_false_alarms: usize,
    /// Trials without an alarm although a change occurred.
    pub n_missed: usize,
    pub n_usable_delay: usize,
    /// Alarm counts per monitoring interval.
    pub alarm_histogram: Vec<usize>,
    #[serde(skip)]
    pub outcomes: Vec<TrialOutcome>,
}

impl ExperimentResult {
    fn aggregate(outcomes: Vec<TrialOutcome>, boundaries: &[usize], change_at: Option<usize>) -> Self {
        let n_trials = outcomes.len();
        let mut hist = vec![0usize; boundaries.len() - 1];
        let (mut n_alarms, mut n_false, mut n_missed, mut usable, mut delay_sum) = (0, 0, 0, 0, 0u64);
        for o in &outcomes {
            match (o.alarm, change_at) {
                (Some(k), _) => {
                    n_alarms += 1;
                    if let Some(i) = crate::model::interval_index(boundaries, k) {
                        hist[i - 1] += 1;
                    }
                    match change_at {
                        Some(ks) if k > ks => {
                            usable += 1;
                            delay_sum += (k - ks) as u64;
                        }
                        _ => n_false += 1,
                    }
                }
                (None, Some(_)) => n_missed += 1,
                (None, None) => {}
            }
        }
        Self {
            rejection_pct: 100.0 * n_alarms as f64 / n_trials as f64,
            mean_delay: (usable > 0).then(|| delay_sum as f64 / usable as f64),
            n_trials,
            n_alarms,
            n_false_alarms: n_false,
            n_missed,
            n_usable_delay: usable,
            alarm_histogram: hist,
            outcomes,
        }
    }
}

fn monitor_trial(x: &ObservationMatrix, threshold: ThresholdFunction, cfg: &MonitorConfig) -> Result<TrialOutcome> {
    let learning = x.head(cfg.m)?;
    let stream = x.tail_rows(cfg.m);
    let report = MonitorState::init(&learning, threshold, cfg.clone())?.run(&stream)?;
    Ok(match report.status {
        MonitorStatus::Alarmed { at, changepoint } => TrialOutcome {
            alarm: Some(at),
            changepoint: Some(changepoint),
        },
        _ => TrialOutcome {
            alarm: None,
            changepoint: None,
        },
    })
}

fn check(scn: &Scenario, cfg: &MonitorConfig, trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    scn.validate()?;
    cfg.validate()?;
    if scn.m != cfg.m || scn.n != cfg.n {
        return Err(Error::InvalidArguments(format!(
            "scenario spans (m, n) = ({}, {}), configuration ({}, {})",
            scn.m, scn.n, cfg.m, cfg.n
        )));
    }
    if scn.dim() != cfg.dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim,
            got: scn.dim(),
        });
    }
    Ok(())
}

/// Runs `trials` monitoring runs on data drawn from `scn`, with trial `t`
/// using data seed `derive(seed, trial, t)`.
pub fn run_experiment(
    scn: &Scenario,
    cfg: &MonitorConfig,
    spec: &ThresholdSpec,
    trials: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    check(scn, cfg, trials)?;
    let shared = match spec {
        ThresholdSpec::Mc { replicates } => Some(mc_threshold(cfg, *replicates, seed)?),
        ThresholdSpec::Bootstrap { .. } => None,
    };
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let x = generate(scn, derive_seed(seed, Domain::Trial, t as u64))?;
            let threshold = match (&shared, spec) {
                (Some(th), _) => th.clone(),
                (
                    None,
                    ThresholdSpec::Bootstrap {
                        replicates,
                        bandwidth,
                        kernel,
                    },
                ) => {
                    let mult = MultiplierConfig {
                        replicates: *replicates,
                        bandwidth: *bandwidth,
                        kernel: *kernel,
                        seed: derive_seed(seed, Domain::TrialBootstrap, t as u64),
                    };
                    bootstrap_threshold(&x.head(cfg.m)?, cfg, &mult)?
                }
                (None, ThresholdSpec::Mc { .. }) => unreachable!("Monte Carlo thresholds are shared"),
            };
            monitor_trial(&x, threshold, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult::aggregate(
        outcomes,
        &cfg.boundaries()?,
        scn.change.as_ref().map(|c| c.at),
    ))
}

/// Empirical level of the procedure under a stationary scenario.
pub fn run_level_experiment(
    scn: &Scenario,
    cfg: &MonitorConfig,
    spec: &ThresholdSpec,
    trials: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    if scn.change.is_some() {
        return Err(Error::InvalidScenario("level experiments need a scenario without change".into()));
    }
    run_experiment(scn, cfg, spec, trials, seed)
}

/// Empirical power and mean detection delay under a change scenario.
pub fn run_power_experiment(
    scn: &Scenario,
    cfg: &MonitorConfig,
    spec: &ThresholdSpec,
    trials: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    if scn.change.is_none() {
        return Err(Error::InvalidScenario("power experiments need a change".into()));
    }
    run_experiment(scn, cfg, spec, trials, seed)
}

/// Change placed at `k* = floor(fraction * n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSpec {
    pub fraction: f64,
    pub post: Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub label: String,
    pub null_model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change: Option<ChangeSpec>,
}

fn default_trials() -> usize {
    1000
}

fn default_gammas() -> Vec<f64> {
    vec![0.0]
}

fn default_horizons() -> Vec<f64> {
    vec![1.0]
}

fn default_steps() -> Vec<usize> {
    vec![1]
}

/// A grid of experiments laid out like a results table: rows are
/// (scenario, gamma, m), columns are (horizon factor `T`, steps `p`), with
/// `n = floor(m (T + 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub detector: DetectorKind,
    #[serde(default = "crate::model::default_alpha")]
    pub alpha: f64,
    #[serde(default = "crate::model::default_delta")]
    pub delta: f64,
    pub threshold: ThresholdSpec,
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    pub ms: Vec<usize>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default = "default_steps")]
    pub steps: Vec<usize>,
}

/// One cell of an experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub scenario: String,
    pub gamma: f64,
    pub m: usize,
    pub horizon: f64,
    pub p: usize,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub change_at: Option<usize>,
    pub result: ExperimentResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub spec: ExperimentSpec,
    pub cells: Vec<TableCell>,
}

impl ExperimentSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Runs every cell; cell `c` (in row-major table order) uses master seed
    /// `derive(seed, scenario, c)`.
    pub fn run(&self) -> Result<ExperimentTable> {
        if self.trials == 0 {
            return Err(Error::NoTrials);
        }
        let mut cells = Vec::new();
        let mut index = 0u64;
        for sc in &self.scenarios {
            for &gamma in &self.gammas {
                for &m in &self.ms {
                    for &horizon in &self.horizons {
                        for &p in &self.steps {
                            if !(horizon > 0.0) {
                                return Err(Error::InvalidConfig(format!("horizon factor {horizon} must be positive")));
                            }
                            let n = (m as f64 * (horizon + 1.0)).floor() as usize;
                            let cfg = MonitorConfig {
                                m,
                                n,
                                alpha: self.alpha,
                                p,
                                detector: self.detector,
                                gamma,
                                delta: self.delta,
                                dim: sc.null_model.dim(),
                            };
                            let change = sc.change.as_ref().map(|c| Change {
                                at: (c.fraction * n as f64).floor() as usize,
                                post: c.post.clone(),
                            });
                            let scn = Scenario {
                                null_model: sc.null_model.clone(),
                                change,
                                m,
                                n,
                            };
                            let seed = derive_seed(self.seed, Domain::Scenario, index);
                            index += 1;
                            info!("cell {}: {} gamma={gamma} m={m} T={horizon} p={p}", index, sc.label);
                            let result = run_experiment(&scn, &cfg, &self.threshold, self.trials, seed)?;
                            cells.push(TableCell {
                                scenario: sc.label.clone(),
                                gamma,
                                m,
                                horizon,
                                p,
                                n,
                                change_at: scn.change.as_ref().map(|c| c.at),
                                result,
                            });
                        }
                    }
                }
            }
        }
        Ok(ExperimentTable {
            spec: self.clone(),
            cells,
        })
    }
}

impl ExperimentTable {
    /// Wide CSV of rejection percentages: one line per (scenario, gamma, m),
    /// one column per (T, p).
    pub fn to_wide_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["scenario".to_string(), "gamma".into(), "m".into()];
        for t in &self.spec.horizons {
            for p in &self.spec.steps {
                header.push(format!("T={t} p={p}"));
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        let width = self.spec.horizons.len() * self.spec.steps.len();
        for row in self.cells.chunks(width) {
            let first = &row[0];
            let mut rec = vec![first.scenario.clone(), first.gamma.to_string(), first.m.to_string()];
            rec.extend(row.iter().map(|c| format!("{:.1}", c.result.rejection_pct)));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}
