use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::ObservationMatrix;
use crate::rng::{stream_rng, Domain};

const AR_BURN_IN: usize = 100;
const GARCH_BURN_IN: usize = 500;

fn zero() -> f64 {
    0.0
}

fn one() -> f64 {
    1.0
}

/// A stationary data-generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    IidUniform,
    IidNormal {
        #[serde(default = "zero")]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    /// Gamma with the given shape and rate.
    IidGamma { shape: f64, rate: f64 },
    /// `X_i = beta X_{i-1} + eps_i`, standard normal innovations.
    Ar1 { beta: f64 },
    /// `sigma_i^2 = omega + alpha X_{i-1}^2 + beta sigma_{i-1}^2`, `X_i = sigma_i eps_i`.
    Garch11 { omega: f64, alpha: f64, beta: f64 },
    /// Gaussian copula with equal pairwise Kendall tau, uniform margins.
    NormalCopula { tau: f64, dim: usize },
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::NormalCopula { dim, .. } => *dim,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        match *self {
            Model::IidUniform => Ok(()),
            Model::IidNormal { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return bad(format!("normal needs finite mean and sd > 0, got ({mean}, {sd})"));
                }
                Ok(())
            }
            Model::IidGamma { shape, rate } => {
                if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                    return bad(format!("gamma needs shape, rate > 0, got ({shape}, {rate})"));
                }
                Ok(())
            }
            Model::Ar1 { beta } => {
                if !(beta.abs() < 1.0) {
                    return bad(format!("AR(1) needs |beta| < 1, got {beta}"));
                }
                Ok(())
            }
            Model::Garch11 { omega, alpha, beta } => {
                if !(omega > 0.0 && alpha >= 0.0 && beta >= 0.0) {
                    return bad(format!(
                        "GARCH(1,1) needs omega > 0 and alpha, beta >= 0, got ({omega}, {alpha}, {beta})"
                    ));
                }
                if alpha + beta >= 1.0 {
                    warn!("GARCH(1,1) with alpha + beta = {} >= 1 is not covariance stationary", alpha + beta);
                }
                Ok(())
            }
            Model::NormalCopula { tau, dim } => {
                if dim == 0 {
                    return bad("copula dimension must be positive".into());
                }
                if !(tau.abs() < 1.0) {
                    return bad(format!("Kendall tau must lie in (-1, 1), got {tau}"));
                }
                Ok(())
            }
        }
    }

    /// `len` observations, row-major.
    pub fn sample(&self, len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        self.validate()?;
        let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
        Ok(match *self {
            Model::IidUniform => (0..len).map(|_| rng.random::<f64>()).collect(),
            Model::IidNormal { mean, sd } => (0..len).map(|_| mean + sd * normal(rng)).collect(),
            Model::IidGamma { shape, rate } => {
                let g = Gamma::new(shape, 1.0 / rate)
                    .map_err(|e| Error::InvalidScenario(format!("gamma: {e}")))?;
                (0..len).map(|_| g.sample(rng)).collect()
            }
            Model::Ar1 { beta } => {
                let mut x = 0.0;
                for _ in 0..AR_BURN_IN {
                    x = beta * x + normal(rng);
                }
                (0..len)
                    .map(|_| {
                        x = beta * x + normal(rng);
                        x
                    })
                    .collect()
            }
            Model::Garch11 { omega, alpha, beta } => {
                let persistence = alpha + beta;
                let mut var = if persistence < 1.0 {
                    omega / (1.0 - persistence)
                } else {
                    omega
                };
                let mut x = 0.0;
                let mut out = Vec::with_capacity(len);
                for step in 0..GARCH_BURN_IN + len {
                    if step > 0 {
                        var = omega + alpha * x * x + beta * var;
                    }
                    x = var.sqrt() * normal(rng);
                    if step >= GARCH_BURN_IN {
                        out.push(x);
                    }
                }
                out
            }
            Model::NormalCopula { tau, dim } => {
                let rho = (std::f64::consts::PI * tau / 2.0).sin();
                let corr = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rho });
                let chol = corr.cholesky().ok_or_else(|| {
                    Error::InvalidScenario(format!(
                        "equicorrelation {rho} is not positive definite in dimension {dim}"
                    ))
                })?;
                let l = chol.l();
                let phi = Normal::standard();
                let mut out = Vec::with_capacity(len * dim);
                let mut z = vec![0.0; dim];
                for _ in 0..len {
                    for v in z.iter_mut() {
                        *v = normal(rng);
                    }
                    for i in 0..dim {
                        let x: f64 = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
                        out.push(phi.cdf(x));
                    }
                }
                out
            }
        })
    }
}

/// Post-change regime starting after observation `at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Change {
    /// Last pre-change index `k*`; `X_{k*+1}, .., X_n` follow `post`.
    pub at: usize,
    pub post: Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub null_model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change: Option<Change>,
    pub m: usize,
    pub n: usize,
}

impl Scenario {
    pub fn null(model: Model, m: usize, n: usize) -> Self {
        Self {
            null_model: model,
            change: None,
            m,
            n,
        }
    }

    pub fn with_change(mut self, at: usize, post: Model) -> Self {
        self.change = Some(Change { at, post });
        self
    }

    pub fn dim(&self) -> usize {
        self.null_model.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n <= self.m {
            return Err(Error::InvalidScenario(format!(
                "need 1 <= m < n, got m = {}, n = {}",
                self.m, self.n
            )));
        }
        self.null_model.validate()?;
        if let Some(ch) = &self.change {
            ch.post.validate()?;
            if !(self.m < ch.at && ch.at < self.n) {
                return Err(Error::InvalidScenario(format!(
                    "change index {} must lie strictly between m = {} and n = {}",
                    ch.at, self.m, self.n
                )));
            }
            if ch.post.dim() != self.dim() {
                return Err(Error::InvalidScenario(format!(
                    "post-change dimension {} differs from {}",
                    ch.post.dim(),
                    self.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Draws the `n` observations of a scenario.
///
/// Serially dependent post-change models restart from their own burn-in.
pub fn generate(scn: &Scenario, seed: u64) -> Result<ObservationMatrix> {
    scn.validate()?;
    let pre_len = scn.change.as_ref().map_or(scn.n, |c| c.at);
    let mut values = scn
        .null_model
        .sample(pre_len, &mut stream_rng(seed, Domain::Scenario, 0))?;
    if let Some(ch) = &scn.change {
        values.extend(ch.post.sample(scn.n - ch.at, &mut stream_rng(seed, Domain::Scenario, 1))?);
    }
    ObservationMatrix::from_flat(scn.dim(), values)
}
