//! Forward and reverse-mode passes for the conv → pool → dense stack.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::arch::{Activation, ArchitectureSpec, ConvLayer, Shape};
use super::params::ParameterSet;
use crate::error::{Error, Result};

/// Post-softmax class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction(pub Vec<f64>);

impl Prediction {
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Index of the largest finite entry; 0 when none is finite.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &x) in v.iter().enumerate() {
        if x > best_val {
            best = i;
            best_val = x;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log Σ exp(z)`.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(logits.iter().map(|&z| libm::exp(z - max)).sum::<f64>())
}

/// Cached activations of one conv layer.
#[derive(Clone, Debug)]
pub struct LayerActivations {
    pub shape: Shape,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub layers: Vec<LayerActivations>,
    /// Global-average-pooled features before dropout.
    pub pooled: Vec<f64>,
    /// Inverted-dropout multipliers applied to `pooled`, if any.
    pub dropout_mask: Option<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl ForwardCache {
    pub fn features(&self) -> Vec<f64> {
        match &self.dropout_mask {
            Some(m) => self.pooled.iter().zip(m).map(|(p, m)| p * m).collect(),
            None => self.pooled.clone(),
        }
    }
}

/// Gradients produced by one backward pass.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub params: ParameterSet,
    pub input: Vec<f64>,
    /// Gradient with respect to each conv layer's post-activation output.
    pub layer_post: Vec<Vec<f64>>,
}

/// A parameterized network ready for evaluation.
#[derive(Clone, Copy, Debug)]
pub struct Network<'a> {
    pub arch: &'a ArchitectureSpec,
    pub activation: Activation,
    pub params: &'a ParameterSet,
}

fn conv_forward(
    layer: &ConvLayer,
    input: &[f64],
    in_shape: Shape,
    out_shape: Shape,
    w: &[f64],
    b: &[f64],
) -> Vec<f64> {
    let k = layer.kernel_size;
    let pad = layer.padding() as isize;
    let cin = in_shape.channels;
    let mut out = vec![0.0; out_shape.len()];
    for oy in 0..out_shape.height {
        for ox in 0..out_shape.width {
            let base_y = (oy * layer.stride) as isize - pad;
            let base_x = (ox * layer.stride) as isize - pad;
            for oc in 0..out_shape.channels {
                let mut acc = b[oc];
                let wk = &w[oc * k * k * cin..(oc + 1) * k * k * cin];
                for ky in 0..k {
                    let iy = base_y + ky as isize;
                    if iy < 0 || iy >= in_shape.height as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = base_x + kx as isize;
                        if ix < 0 || ix >= in_shape.width as isize {
                            continue;
                        }
                        let src = in_shape.index(iy as usize, ix as usize, 0);
                        let wsrc = (ky * k + kx) * cin;
                        for ic in 0..cin {
                            acc += wk[wsrc + ic] * input[src + ic];
                        }
                    }
                }
                out[out_shape.index(oy, ox, oc)] = acc;
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and returns the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    layer: &ConvLayer,
    input: &[f64],
    in_shape: Shape,
    out_shape: Shape,
    w: &[f64],
    d_out: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let k = layer.kernel_size;
    let pad = layer.padding() as isize;
    let cin = in_shape.channels;
    let mut d_in = vec![0.0; in_shape.len()];
    for oy in 0..out_shape.height {
        for ox in 0..out_shape.width {
            let base_y = (oy * layer.stride) as isize - pad;
            let base_x = (ox * layer.stride) as isize - pad;
            for oc in 0..out_shape.channels {
                let g = d_out[out_shape.index(oy, ox, oc)];
                if g == 0.0 {
                    continue;
                }
                db[oc] += g;
                let off = oc * k * k * cin;
                for ky in 0..k {
                    let iy = base_y + ky as isize;
                    if iy < 0 || iy >= in_shape.height as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = base_x + kx as isize;
                        if ix < 0 || ix >= in_shape.width as isize {
                            continue;
                        }
                        let src = in_shape.index(iy as usize, ix as usize, 0);
                        let wsrc = off + (ky * k + kx) * cin;
                        for ic in 0..cin {
                            dw[wsrc + ic] += g * input[src + ic];
                            d_in[src + ic] += g * w[wsrc + ic];
                        }
                    }
                }
            }
        }
    }
    d_in
}

impl<'a> Network<'a> {
    pub fn new(
        arch: &'a ArchitectureSpec,
        activation: Activation,
        params: &'a ParameterSet,
    ) -> Self {
        Self {
            arch,
            activation,
            params,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        let expected = self.arch.input_shape.len();
        if x.len() != expected {
            return Err(Error::Input(format!(
                "input has {} elements, expected {expected}",
                x.len()
            )));
        }
        if self.params.len() != self.arch.param_count() {
            return Err(Error::Input(
                "parameter set does not match the architecture".into(),
            ));
        }
        Ok(())
    }

    /// Inference-mode forward pass (dropout disabled).
    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        self.forward_masked(x, None)
    }

    /// Forward pass with an optional inverted-dropout mask on the pooled features.
    pub fn forward_masked(
        &self,
        x: &[f64],
        dropout_mask: Option<Vec<f64>>,
    ) -> Result<ForwardCache> {
        self.check_input(x)?;
        let shapes = self.arch.shapes();
        let mut layers: Vec<LayerActivations> = Vec::with_capacity(self.arch.conv_layers.len());
        for (l, layer) in self.arch.conv_layers.iter().enumerate() {
            let input: &[f64] = if l == 0 { x } else { &layers[l - 1].post };
            let pre = conv_forward(
                layer,
                input,
                shapes[l],
                shapes[l + 1],
                self.params.conv_weight(l),
                self.params.conv_bias(l),
            );
            let post = pre.iter().map(|&z| self.activation.apply(z)).collect();
            layers.push(LayerActivations {
                shape: shapes[l + 1],
                pre,
                post,
            });
        }
        let last = layers.last().expect("validated non-empty");
        let channels = last.shape.channels;
        let pixels = last.shape.pixels() as f64;
        let mut pooled = vec![0.0; channels];
        for p in 0..last.shape.pixels() {
            for (c, acc) in pooled.iter_mut().enumerate() {
                *acc += last.post[p * channels + c];
            }
        }
        for v in &mut pooled {
            *v /= pixels;
        }
        let features: Vec<f64> = match &dropout_mask {
            Some(m) => pooled.iter().zip(m).map(|(p, m)| p * m).collect(),
            None => pooled.clone(),
        };
        let w = self.params.dense_weight();
        let b = self.params.dense_bias();
        let logits = (0..self.arch.num_classes)
            .map(|k| {
                let row = &w[k * channels..(k + 1) * channels];
                b[k] + row.iter().zip(&features).map(|(w, f)| w * f).sum::<f64>()
            })
            .collect();
        Ok(ForwardCache {
            layers,
            pooled,
            dropout_mask,
            logits,
        })
    }

    /// Reverse pass from a logit-space gradient.
    pub fn backward(&self, x: &[f64], cache: &ForwardCache, d_logits: &[f64]) -> Gradients {
        let shapes = self.arch.shapes();
        let n_layers = self.arch.conv_layers.len();
        let mut grads = ParameterSet::zeros(self.arch);
        let channels = self.arch.feature_channels();
        let features = cache.features();

        let dense_w = self.params.dense_weight();
        let n_tensors = grads.layout().len();
        {
            let dw = grads.tensor_mut(n_tensors - 2);
            for (k, &g) in d_logits.iter().enumerate() {
                for c in 0..channels {
                    dw[k * channels + c] += g * features[c];
                }
            }
        }
        grads.tensor_mut(n_tensors - 1).copy_from_slice(d_logits);

        let mut d_pooled = vec![0.0; channels];
        for (k, &g) in d_logits.iter().enumerate() {
            for c in 0..channels {
                d_pooled[c] += g * dense_w[k * channels + c];
            }
        }
        if let Some(mask) = &cache.dropout_mask {
            for (d, m) in d_pooled.iter_mut().zip(mask) {
                *d *= m;
            }
        }

        let last_shape = shapes[n_layers];
        let pixels = last_shape.pixels() as f64;
        let mut d_post = vec![0.0; last_shape.len()];
        for p in 0..last_shape.pixels() {
            for c in 0..channels {
                d_post[p * channels + c] = d_pooled[c] / pixels;
            }
        }

        let mut layer_post = vec![Vec::new(); n_layers];
        let mut d_input = Vec::new();
        for l in (0..n_layers).rev() {
            let acts = &cache.layers[l];
            let d_pre: Vec<f64> = d_post
                .iter()
                .zip(acts.pre.iter().zip(&acts.post))
                .map(|(g, (&z, &a))| g * self.activation.derivative(z, a))
                .collect();
            layer_post[l] = d_post;
            let input: &[f64] = if l == 0 { x } else { &cache.layers[l - 1].post };
            let (wi, bi) = (2 * l, 2 * l + 1);
            let mut dw = vec![0.0; grads.tensor(wi).len()];
            let mut db = vec![0.0; grads.tensor(bi).len()];
            let d_in = conv_backward(
                &self.arch.conv_layers[l],
                input,
                shapes[l],
                shapes[l + 1],
                self.params.conv_weight(l),
                &d_pre,
                &mut dw,
                &mut db,
            );
            grads.tensor_mut(wi).copy_from_slice(&dw);
            grads.tensor_mut(bi).copy_from_slice(&db);
            if l == 0 {
                d_input = d_in;
                d_post = Vec::new();
            } else {
                d_post = d_in;
            }
        }
        Gradients {
            params: grads,
            input: d_input,
            layer_post,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.logits)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        Ok(Prediction(softmax(&self.forward(x)?.logits)))
    }

    /// Post-softmax probability of `target`.
    pub fn class_score(&self, x: &[f64], target: usize) -> Result<f64> {
        self.check_class(target)?;
        Ok(self.predict(x)?.0[target])
    }

    fn check_class(&self, target: usize) -> Result<()> {
        if target >= self.arch.num_classes {
            return Err(Error::Input(format!(
                "class {target} out of range for {} classes",
                self.arch.num_classes
            )));
        }
        Ok(())
    }

    /// ∂ softmax(logits)[target] / ∂x, dropout disabled.
    pub fn input_gradient(&self, x: &[f64], target: usize) -> Result<Vec<f64>> {
        self.check_class(target)?;
        let cache = self.forward(x)?;
        let p = softmax(&cache.logits);
        let d_logits: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(j, &pj)| p[target] * (if j == target { 1.0 } else { 0.0 } - pj))
            .collect();
        Ok(self.backward(x, &cache, &d_logits).input)
    }

    /// Gradient of the raw logit of `target` with respect to each conv layer's output.
    pub fn logit_layer_gradients(
        &self,
        x: &[f64],
        target: usize,
    ) -> Result<(ForwardCache, Vec<Vec<f64>>)> {
        self.check_class(target)?;
        let cache = self.forward(x)?;
        let mut d_logits = vec![0.0; self.arch.num_classes];
        d_logits[target] = 1.0;
        let grads = self.backward(x, &cache, &d_logits);
        Ok((cache, grads.layer_post))
    }
}
