//! Hyperparameter vectors, the sampling space, and discretization levels.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, InitKind, OptimizerKind};
use crate::rng;

/// One draw of every training hyperparameter (the treatment vector).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparamVector {
    pub optimizer: OptimizerKind,
    pub activation: Activation,
    pub w0_type: InitKind,
    pub b0_type: InitKind,
    pub w0_std: f64,
    pub learning_rate: f64,
    pub l2: f64,
    pub dropout: f64,
    pub split_fraction: f64,
}

/// Names a coordinate of [`HyperparamVector`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HparamKey {
    Optimizer,
    Activation,
    W0Type,
    B0Type,
    W0Std,
    LearningRate,
    L2,
    Dropout,
    SplitFraction,
}

pub const L2_MARKERS: [f64; 4] = [1e-8, 1e-6, 1e-4, 1e-2];
pub const DROPOUT_MARKERS: [f64; 4] = [0.0, 0.2, 0.45, 0.7];
pub const W0_STD_MARKERS: [f64; 4] = [1e-3, 1e-2, 1e-1, 0.5];
pub const LEARNING_RATE_MARKERS: [f64; 3] = [5e-4, 5e-3, 5e-2];
pub const SPLIT_FRACTIONS: [f64; 3] = [0.5, 0.7, 0.9];

impl HparamKey {
    pub const ALL: [HparamKey; 9] = [
        HparamKey::Optimizer,
        HparamKey::Activation,
        HparamKey::W0Type,
        HparamKey::B0Type,
        HparamKey::W0Std,
        HparamKey::LearningRate,
        HparamKey::L2,
        HparamKey::Dropout,
        HparamKey::SplitFraction,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            HparamKey::Optimizer => "optimizer",
            HparamKey::Activation => "activation",
            HparamKey::W0Type => "w0_type",
            HparamKey::B0Type => "b0_type",
            HparamKey::W0Std => "w0_std",
            HparamKey::LearningRate => "learning_rate",
            HparamKey::L2 => "l2",
            HparamKey::Dropout => "dropout",
            HparamKey::SplitFraction => "split_fraction",
        }
    }

    /// Labels of the discretization levels, in level-index order.
    pub const fn level_labels(self) -> &'static [&'static str] {
        match self {
            HparamKey::Optimizer => &["sgd", "adam", "rmsprop"],
            HparamKey::Activation => &["relu", "tanh"],
            HparamKey::W0Type | HparamKey::B0Type => &["normal", "uniform", "zeros"],
            HparamKey::W0Std => &["1e-3", "1e-2", "1e-1", "0.5"],
            HparamKey::LearningRate => &["5e-4", "5e-3", "5e-2"],
            HparamKey::L2 => &["1e-8", "1e-6", "1e-4", "1e-2"],
            HparamKey::Dropout => &["0", "0.2", "0.45", "0.7"],
            HparamKey::SplitFraction => &["0.5", "0.7", "0.9"],
        }
    }

    /// Rounding markers and whether distances are measured in log10 space.
    pub const fn markers(self) -> Option<(&'static [f64], bool)> {
        match self {
            HparamKey::W0Std => Some((&W0_STD_MARKERS, true)),
            HparamKey::LearningRate => Some((&LEARNING_RATE_MARKERS, true)),
            HparamKey::L2 => Some((&L2_MARKERS, true)),
            HparamKey::Dropout => Some((&DROPOUT_MARKERS, false)),
            _ => None,
        }
    }

    pub fn levels(self) -> impl Iterator<Item = Level> {
        (0..self.level_labels().len()).map(move |index| Level { key: self, index })
    }

    /// Parses a level label, or any number that discretizes onto a marker.
    pub fn parse_level(self, label: &str) -> Result<Level> {
        if let Some(index) = self.level_labels().iter().position(|&l| l == label) {
            return Ok(Level { key: self, index });
        }
        if let Ok(v) = label.parse::<f64>() {
            if self.markers().is_some() {
                return discretize_value(self, v);
            }
            if self == HparamKey::SplitFraction {
                if let Some(index) = SPLIT_FRACTIONS.iter().position(|&s| s == v) {
                    return Ok(Level { key: self, index });
                }
            }
        }
        Err(Error::Input(format!(
            "`{label}` is not a level of {}; valid levels: {}",
            self.name(),
            self.level_labels().join(", ")
        )))
    }
}

impl fmt::Display for HparamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HparamKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HparamKey::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = HparamKey::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown hparam key `{s}`; valid keys: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// A discretized value of one hyperparameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Level {
    pub key: HparamKey,
    pub index: usize,
}

impl Level {
    pub fn label(&self) -> &'static str {
        self.key.level_labels()[self.index]
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.key, self.label())
    }
}

/// Rounds a continuous value to its nearest marker. Distances are taken in
/// log10 space for `l2`, `w0_std` and `learning_rate` and linearly for
/// `dropout`; exact ties go to the smaller marker.
pub fn discretize_value(key: HparamKey, value: f64) -> Result<Level> {
    let (markers, log) = key
        .markers()
        .ok_or_else(|| Error::Input(format!("{key} is categorical; it has no numeric markers")))?;
    let (lo, hi) = (markers[0], markers[markers.len() - 1]);
    if !(value >= lo && value <= hi) {
        return Err(Error::Input(format!(
            "{key} value {value} outside its range [{lo}, {hi}]"
        )));
    }
    let project = |v: f64| if log { libm::log10(v) } else { v };
    let target = project(value);
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, &m) in markers.iter().enumerate() {
        let d = libm::fabs(project(m) - target);
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    Ok(Level { key, index: best })
}

impl HyperparamVector {
    /// Discretized level of one coordinate.
    pub fn level(&self, key: HparamKey) -> Result<Level> {
        let index = match key {
            HparamKey::Optimizer => OptimizerKind::ALL.iter().position(|&o| o == self.optimizer),
            HparamKey::Activation => Activation::ALL.iter().position(|&a| a == self.activation),
            HparamKey::W0Type => InitKind::ALL.iter().position(|&i| i == self.w0_type),
            HparamKey::B0Type => InitKind::ALL.iter().position(|&i| i == self.b0_type),
            HparamKey::SplitFraction => SPLIT_FRACTIONS
                .iter()
                .position(|&s| s == self.split_fraction),
            HparamKey::W0Std => return discretize_value(key, self.w0_std),
            HparamKey::LearningRate => return discretize_value(key, self.learning_rate),
            HparamKey::L2 => return discretize_value(key, self.l2),
            HparamKey::Dropout => return discretize_value(key, self.dropout),
        };
        index.map(|index| Level { key, index }).ok_or_else(|| {
            Error::Input(format!(
                "split_fraction {} is not one of {:?}",
                self.split_fraction, SPLIT_FRACTIONS
            ))
        })
    }

    pub fn raw_value(&self, key: HparamKey) -> String {
        match key {
            HparamKey::Optimizer => self.optimizer.name().into(),
            HparamKey::Activation => self.activation.name().into(),
            HparamKey::W0Type => self.w0_type.name().into(),
            HparamKey::B0Type => self.b0_type.name().into(),
            HparamKey::W0Std => format!("{}", self.w0_std),
            HparamKey::LearningRate => format!("{}", self.learning_rate),
            HparamKey::L2 => format!("{}", self.l2),
            HparamKey::Dropout => format!("{}", self.dropout),
            HparamKey::SplitFraction => format!("{}", self.split_fraction),
        }
    }

    /// Replaces coordinate `key` with the representative value of `level`
    /// (the marker for continuous keys).
    pub fn with_level(mut self, level: Level) -> Self {
        let i = level.index;
        match level.key {
            HparamKey::Optimizer => self.optimizer = OptimizerKind::ALL[i],
            HparamKey::Activation => self.activation = Activation::ALL[i],
            HparamKey::W0Type => self.w0_type = InitKind::ALL[i],
            HparamKey::B0Type => self.b0_type = InitKind::ALL[i],
            HparamKey::W0Std => self.w0_std = W0_STD_MARKERS[i],
            HparamKey::LearningRate => self.learning_rate = LEARNING_RATE_MARKERS[i],
            HparamKey::L2 => self.l2 = L2_MARKERS[i],
            HparamKey::Dropout => self.dropout = DROPOUT_MARKERS[i],
            HparamKey::SplitFraction => self.split_fraction = SPLIT_FRACTIONS[i],
        }
        self
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

/// Where each hyperparameter is drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HparamSpace {
    pub optimizers: Vec<OptimizerKind>,
    pub activations: Vec<Activation>,
    pub w0_types: Vec<InitKind>,
    pub b0_types: Vec<InitKind>,
    /// log-uniform
    pub w0_std: Interval,
    /// log-uniform
    pub learning_rate: Interval,
    /// log-uniform
    pub l2: Interval,
    /// uniform
    pub dropout: Interval,
    pub split_fractions: Vec<f64>,
}

impl Default for HparamSpace {
    fn default() -> Self {
        Self {
            optimizers: OptimizerKind::ALL.to_vec(),
            activations: Activation::ALL.to_vec(),
            w0_types: InitKind::ALL.to_vec(),
            b0_types: InitKind::ALL.to_vec(),
            w0_std: Interval::new(1e-3, 0.5),
            learning_rate: Interval::new(5e-4, 5e-2),
            l2: Interval::new(1e-8, 1e-2),
            dropout: Interval::new(0.0, 0.7),
            split_fractions: SPLIT_FRACTIONS.to_vec(),
        }
    }
}

impl HparamSpace {
    pub fn validate(&self) -> Result<()> {
        let within = |name: &str, iv: Interval, lo: f64, hi: f64| {
            if iv.lo <= iv.hi && iv.lo >= lo && iv.hi <= hi {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} interval [{}, {}] must lie inside [{lo}, {hi}]",
                    iv.lo, iv.hi
                )))
            }
        };
        within("w0_std", self.w0_std, 1e-3, 0.5)?;
        within("learning_rate", self.learning_rate, 5e-4, 5e-2)?;
        within("l2", self.l2, 1e-8, 1e-2)?;
        within("dropout", self.dropout, 0.0, 0.7)?;
        if self.optimizers.is_empty()
            || self.activations.is_empty()
            || self.w0_types.is_empty()
            || self.b0_types.is_empty()
            || self.split_fractions.is_empty()
        {
            return Err(Error::Config(
                "every categorical hyperparameter needs at least one choice".into(),
            ));
        }
        if let Some(bad) = self
            .split_fractions
            .iter()
            .find(|s| !SPLIT_FRACTIONS.contains(s))
        {
            return Err(Error::Config(format!(
                "split fraction {bad} not one of {SPLIT_FRACTIONS:?}"
            )));
        }
        Ok(())
    }
}

fn pick<T: Copy>(choices: &[T], seed: u64, index: u64, field: &str) -> T {
    choices[rng::stream(seed, index, field).random_range(0..choices.len())]
}

fn log_uniform(iv: Interval, seed: u64, index: u64, field: &str) -> f64 {
    if iv.lo == iv.hi {
        return iv.lo;
    }
    let u: f64 = rng::stream(seed, index, field).random();
    let (a, b) = (libm::log(iv.lo), libm::log(iv.hi));
    libm::exp(a + u * (b - a)).clamp(iv.lo, iv.hi)
}

fn uniform(iv: Interval, seed: u64, index: u64, field: &str) -> f64 {
    let u: f64 = rng::stream(seed, index, field).random();
    (iv.lo + u * (iv.hi - iv.lo)).clamp(iv.lo, iv.hi)
}

/// Draws model `index`'s hyperparameters. Each field reads its own stream
/// keyed by `(sampling_seed, index, field)`, so fields are mutually
/// independent and never depend on data or outcomes.
pub fn sample_hparams(space: &HparamSpace, index: u64, sampling_seed: u64) -> HyperparamVector {
    let s = sampling_seed;
    HyperparamVector {
        optimizer: pick(&space.optimizers, s, index, "optimizer"),
        activation: pick(&space.activations, s, index, "activation"),
        w0_type: pick(&space.w0_types, s, index, "w0_type"),
        b0_type: pick(&space.b0_types, s, index, "b0_type"),
        w0_std: log_uniform(space.w0_std, s, index, "w0_std"),
        learning_rate: log_uniform(space.learning_rate, s, index, "learning_rate"),
        l2: log_uniform(space.l2, s, index, "l2"),
        dropout: uniform(space.dropout, s, index, "dropout"),
        split_fraction: pick(&space.split_fractions, s, index, "split_fraction"),
    }
}
