//! Mini-batch training with cross-entropy loss, L2 penalty and dropout.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::{Activation, ArchitectureSpec};
use super::network::{argmax, log_sum_exp, softmax, Network};
use super::optim::OptimizerState;
use super::params::{init_parameters, ParameterSet};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hparams::HyperparamVector;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub l2: f64,
    pub dropout_rate: f64,
    pub dropout_seed: u64,
}

impl LossConfig {
    pub const fn plain() -> Self {
        Self {
            l2: 0.0,
            dropout_rate: 0.0,
            dropout_seed: 0,
        }
    }
}

/// Inverted-dropout multipliers for one sample: 0 with probability `rate`,
/// `1 / (1 - rate)` otherwise.
pub fn dropout_mask(rate: f64, width: usize, seed: u64, sample: u64) -> Option<Vec<f64>> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 - rate;
    let mut r = rng::stream(seed, sample, "dropout");
    Some(
        (0..width)
            .map(|_| {
                if r.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

/// Mean cross-entropy plus `(l2 / 2)·‖θ‖²` over `batch` (indices into `data`).
pub fn loss(net: &Network<'_>, data: &Dataset, batch: &[usize], cfg: &LossConfig) -> Result<f64> {
    let mut total = 0.0;
    for (pos, &i) in batch.iter().enumerate() {
        let mask = dropout_mask(
            cfg.dropout_rate,
            net.arch.feature_channels(),
            cfg.dropout_seed,
            pos as u64,
        );
        let cache = net.forward_masked(data.input(i), mask)?;
        total += log_sum_exp(&cache.logits) - cache.logits[data.labels[i]];
    }
    Ok(total / batch.len() as f64 + 0.5 * cfg.l2 * net.params.squared_norm())
}

/// Gradient of [`loss`] with respect to every parameter, along with the loss.
pub fn param_gradient(
    net: &Network<'_>,
    data: &Dataset,
    batch: &[usize],
    cfg: &LossConfig,
) -> Result<(f64, ParameterSet)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    if !(0.0..=0.7).contains(&cfg.dropout_rate) || cfg.l2 < 0.0 {
        return Err(Error::Config(format!(
            "invalid loss config: l2 {} dropout {}",
            cfg.l2, cfg.dropout_rate
        )));
    }
    let n = batch.len() as f64;
    let mut grad = ParameterSet::zeros(net.arch);
    let mut data_loss = 0.0;
    for (pos, &i) in batch.iter().enumerate() {
        let label = *data
            .labels
            .get(i)
            .ok_or_else(|| Error::Input(format!("sample index {i} out of range")))?;
        if label >= net.arch.num_classes {
            return Err(Error::Input(format!("label {label} out of range")));
        }
        let mask = dropout_mask(
            cfg.dropout_rate,
            net.arch.feature_channels(),
            cfg.dropout_seed,
            pos as u64,
        );
        let x = data.input(i);
        let cache = net.forward_masked(x, mask)?;
        data_loss += log_sum_exp(&cache.logits) - cache.logits[label];
        let mut d_logits = softmax(&cache.logits);
        d_logits[label] -= 1.0;
        let g = net.backward(x, &cache, &d_logits);
        for (acc, v) in grad.values_mut().iter_mut().zip(g.params.values()) {
            *acc += v;
        }
    }
    let total = data_loss / n + 0.5 * cfg.l2 * net.params.squared_norm();
    if !total.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss {total} (data term {}, parameter norm² {})",
            data_loss / n,
            net.params.squared_norm()
        )));
    }
    for (g, p) in grad.values_mut().iter_mut().zip(net.params.values()) {
        *g = *g / n + cfg.l2 * p;
    }
    Ok((total, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ParameterSet,
    pub test_accuracy: f64,
    /// Training hit a non-finite loss or parameter; `params` are the last finite ones.
    pub diverged: bool,
    pub steps: u64,
}

/// Fraction of test samples classified correctly. Non-finite logits count as wrong.
pub fn accuracy(
    net: &Network<'_>,
    data: &Dataset,
    indices: core::ops::Range<usize>,
) -> Result<f64> {
    let n = indices.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for i in indices {
        let logits = net.logits(data.input(i))?;
        if logits.iter().all(|v| v.is_finite()) && argmax(&logits) == data.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

/// Seed used for weight initialization inside [`train`].
pub fn init_seed(train_seed: u64) -> u64 {
    rng::derive_seed(train_seed, 0x1a17)
}

/// Trains one model. Weight init, mini-batch order and dropout masks all
/// derive from `seed`; the run is single-threaded and bit-reproducible.
/// Final parameters are rounded to `f32`.
pub fn train(
    arch: &ArchitectureSpec,
    hparams: &HyperparamVector,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    arch.validate()?;
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config(
            "epochs and batch_size must be at least 1".into(),
        ));
    }
    if data.shape != arch.input_shape || data.num_classes != arch.num_classes {
        return Err(Error::Config(
            "dataset does not match the architecture".into(),
        ));
    }
    if !(hparams.split_fraction > 0.0 && hparams.split_fraction < 1.0) {
        return Err(Error::Config(format!(
            "split_fraction {} outside (0, 1)",
            hparams.split_fraction
        )));
    }
    let activation: Activation = hparams.activation;
    let mut params = init_parameters(
        arch,
        hparams.w0_type,
        hparams.w0_std,
        hparams.b0_type,
        init_seed(seed),
    )?;
    let mut opt = OptimizerState::new(hparams.optimizer, hparams.learning_rate, params.len())?;
    let mut order: Vec<usize> = data.train_indices(hparams.split_fraction).collect();
    let mut diverged = false;
    let mut step: u64 = 0;

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(seed, epoch as u64, "shuffle"));
        for batch in order.chunks(cfg.batch_size) {
            let loss_cfg = LossConfig {
                l2: hparams.l2,
                dropout_rate: hparams.dropout,
                dropout_seed: rng::derive_seed(seed, step),
            };
            let net = Network::new(arch, activation, &params);
            let grad = match param_gradient(&net, data, batch, &loss_cfg) {
                Ok((_, g)) if g.is_finite() => g,
                Ok(_) | Err(Error::Numerical(_)) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let mut next = params.clone();
            opt.step(next.values_mut(), grad.values());
            step += 1;
            if !next.fits_f32() {
                diverged = true;
                break 'epochs;
            }
            params = next;
        }
    }
    params.round_to_f32();
    let net = Network::new(arch, activation, &params);
    let test_accuracy = accuracy(&net, data, data.test_indices())?;
    Ok(TrainOutcome {
        params,
        test_accuracy,
        diverged,
        steps: step,
    })
}
