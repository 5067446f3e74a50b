use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Rmsprop,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [
        OptimizerKind::Sgd,
        OptimizerKind::Adam,
        OptimizerKind::Rmsprop,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Rmsprop => "rmsprop",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "rmsprop" => Ok(OptimizerKind::Rmsprop),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const RMSPROP_DECAY: f64 = 0.9;
const EPSILON: f64 = 1e-8;

/// Optimizer kind, step size and moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, n_params: usize) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be non-negative, got {learning_rate}"
            )));
        }
        let (m, v) = match kind {
            OptimizerKind::Sgd => (0, 0),
            OptimizerKind::Adam => (n_params, n_params),
            OptimizerKind::Rmsprop => (0, n_params),
        };
        Ok(Self {
            kind,
            learning_rate,
            step_count: 0,
            first_moment: vec![0.0; m],
            second_moment: vec![0.0; v],
        })
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.step_count += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let t = self.step_count as f64;
                let c1 = 1.0 - libm::pow(ADAM_BETA1, t);
                let c2 = 1.0 - libm::pow(ADAM_BETA2, t);
                for i in 0..params.len() {
                    let g = grad[i];
                    let m = ADAM_BETA1 * self.first_moment[i] + (1.0 - ADAM_BETA1) * g;
                    let v = ADAM_BETA2 * self.second_moment[i] + (1.0 - ADAM_BETA2) * g * g;
                    self.first_moment[i] = m;
                    self.second_moment[i] = v;
                    params[i] -= lr * (m / c1) / (libm::sqrt(v / c2) + EPSILON);
                }
            }
            OptimizerKind::Rmsprop => {
                for i in 0..params.len() {
                    let g = grad[i];
                    let v = RMSPROP_DECAY * self.second_moment[i] + (1.0 - RMSPROP_DECAY) * g * g;
                    self.second_moment[i] = v;
                    params[i] -= lr * g / (libm::sqrt(v) + EPSILON);
                }
            }
        }
    }
}
