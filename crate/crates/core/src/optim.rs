//! First-order optimizers: Adam and RMSProp.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::Param;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    RmsProp,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(Self::Adam),
            "rmsprop" => Ok(Self::RmsProp),
            other => Err(Error::Usage(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Adam => "adam",
            Self::RmsProp => "rmsprop",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Adam first-moment decay.
    pub beta1: f64,
    /// Adam second-moment decay.
    pub beta2: f64,
    /// RMSProp squared-gradient decay.
    pub rho: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::RmsProp,
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            eps: 1e-8,
        }
    }
}

/// Optimizer with per-parameter moment accumulators.
///
/// Accumulators are allocated lazily on the first step and bound by
/// position to the parameter list, so every call must pass the same
/// parameters in the same order.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
            return Err(Error::Usage(format!(
                "learning rate must be finite and non-negative, got {}",
                config.learning_rate
            )));
        }
        Ok(Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            if p.grad.as_slice().iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite gradient in parameter #{i} at optimizer step {}",
                    self.step + 1
                )));
            }
        }
        if self.second.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        } else if self.second.len() != params.len()
            || self.second.iter().zip(params.iter()).any(|(s, p)| s.len() != p.len())
        {
            return Err(Error::Shape(
                "optimizer state does not match the parameter list".into(),
            ));
        }

        self.step += 1;
        let c = self.config;
        match c.kind {
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
                    let Param { value, grad } = &mut **p;
                    for (((w, &g), mi), vi) in value
                        .as_mut_slice()
                        .iter_mut()
                        .zip(grad.as_slice())
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mi = c.beta1 * *mi + (1.0 - c.beta1) * g;
                        *vi = c.beta2 * *vi + (1.0 - c.beta2) * g * g;
                        let m_hat = *mi / bc1;
                        let v_hat = *vi / bc2;
                        *w -= c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
                    }
                }
            }
            OptimizerKind::RmsProp => {
                for (p, s) in params.iter_mut().zip(&mut self.second) {
                    let Param { value, grad } = &mut **p;
                    for ((w, &g), si) in value
                        .as_mut_slice()
                        .iter_mut()
                        .zip(grad.as_slice())
                        .zip(s.iter_mut())
                    {
                        *si = c.rho * *si + (1.0 - c.rho) * g * g;
                        *w -= c.learning_rate * g / (si.sqrt() + c.eps);
                    }
                }
            }
        }
        for p in params.iter_mut() {
            p.zero_grad();
        }
        Ok(())
    }
}
