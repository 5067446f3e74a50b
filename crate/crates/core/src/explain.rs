//! Saliency explanations (Gradient, SmoothGrad, Integrated Gradients,
//! Grad-CAM) and the normalization applied before comparing them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Network, Shape};
use crate::rng;

/// Anything with a differentiable per-class score over a fixed input shape.
pub trait ScoreModel {
    fn input_shape(&self) -> Shape;
    fn score(&self, x: &[f64], target: usize) -> Result<f64>;
    fn score_gradient(&self, x: &[f64], target: usize) -> Result<Vec<f64>>;
}

impl ScoreModel for Network<'_> {
    fn input_shape(&self) -> Shape {
        self.arch.input_shape
    }

    fn score(&self, x: &[f64], target: usize) -> Result<f64> {
        self.class_score(x, target)
    }

    fn score_gradient(&self, x: &[f64], target: usize) -> Result<Vec<f64>> {
        self.input_gradient(x, target)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Gradient,
    #[serde(rename = "smoothgrad")]
    SmoothGrad,
    IntegratedGradients,
    GradCam,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [
        MethodKind::Gradient,
        MethodKind::SmoothGrad,
        MethodKind::IntegratedGradients,
        MethodKind::GradCam,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            MethodKind::Gradient => "gradient",
            MethodKind::SmoothGrad => "smoothgrad",
            MethodKind::IntegratedGradients => "integrated_gradients",
            MethodKind::GradCam => "grad_cam",
        }
    }

    /// Whether raw attributions carry a sign.
    pub const fn is_signed(self) -> bool {
        !matches!(self, MethodKind::GradCam)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown explanation method `{s}`")))
    }
}

/// A saliency method together with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExplainMethod {
    Gradient,
    #[serde(rename = "smoothgrad")]
    SmoothGrad {
        n_samples: usize,
        sigma: f64,
        noise_seed: u64,
    },
    IntegratedGradients {
        steps: usize,
        /// `None` is the all-zeros input.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        baseline: Option<Vec<f64>>,
    },
    GradCam {
        /// `None` is the last conv layer.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        conv_layer: Option<usize>,
    },
}

impl ExplainMethod {
    pub fn smoothgrad_default(noise_seed: u64) -> Self {
        ExplainMethod::SmoothGrad {
            n_samples: 25,
            sigma: 0.15,
            noise_seed,
        }
    }

    pub fn integrated_gradients_default() -> Self {
        ExplainMethod::IntegratedGradients {
            steps: 64,
            baseline: None,
        }
    }

    /// Gradient, SmoothGrad, IG and Grad-CAM with default parameters.
    pub fn default_battery(noise_seed: u64) -> Vec<Self> {
        vec![
            ExplainMethod::Gradient,
            Self::smoothgrad_default(noise_seed),
            Self::integrated_gradients_default(),
            ExplainMethod::GradCam { conv_layer: None },
        ]
    }

    pub fn kind(&self) -> MethodKind {
        match self {
            ExplainMethod::Gradient => MethodKind::Gradient,
            ExplainMethod::SmoothGrad { .. } => MethodKind::SmoothGrad,
            ExplainMethod::IntegratedGradients { .. } => MethodKind::IntegratedGradients,
            ExplainMethod::GradCam { .. } => MethodKind::GradCam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExplainMethod::SmoothGrad {
                n_samples, sigma, ..
            } if *n_samples == 0 || !(*sigma >= 0.0) => Err(Error::Config(format!(
                "smoothgrad needs n_samples ≥ 1 and sigma ≥ 0, got {n_samples}, {sigma}"
            ))),
            ExplainMethod::IntegratedGradients { steps: 0, .. } => Err(Error::Config(
                "integrated gradients needs at least one step".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// A per-pixel attribution map.
#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub method: MethodKind,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub preprocessed: bool,
}

impl Explanation {
    fn raw(method: MethodKind, shape: Shape, values: Vec<f64>) -> Self {
        Self {
            method,
            height: shape.height,
            width: shape.width,
            values,
            preprocessed: false,
        }
    }
}

/// Collapses channels to one value per pixel: the largest magnitude across
/// channels. Single-channel maps pass through unchanged (sign kept).
pub fn reduce_channels(shape: Shape, values: &[f64]) -> Vec<f64> {
    if shape.channels == 1 {
        return values.to_vec();
    }
    values
        .chunks_exact(shape.channels)
        .map(|px| px.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v))))
        .collect()
}

/// Mean of equally weighted vectors, accumulated as deviations from the
/// first so identical inputs reproduce it bit-for-bit.
struct MeanAccumulator {
    first: Vec<f64>,
    deviation: Vec<f64>,
    count: usize,
}

impl MeanAccumulator {
    fn new(first: Vec<f64>) -> Self {
        let n = first.len();
        Self {
            first,
            deviation: vec![0.0; n],
            count: 1,
        }
    }

    fn push(&mut self, v: &[f64]) {
        for ((d, x), f) in self.deviation.iter_mut().zip(v).zip(&self.first) {
            *d += x - f;
        }
        self.count += 1;
    }

    fn finish(self) -> Vec<f64> {
        let n = self.count as f64;
        self.first
            .iter()
            .zip(&self.deviation)
            .map(|(f, d)| f + d / n)
            .collect()
    }
}

fn check_input(model: &impl ScoreModel, x: &[f64]) -> Result<Shape> {
    let shape = model.input_shape();
    if x.len() != shape.len() {
        return Err(Error::Input(format!(
            "input has {} elements, expected {}",
            x.len(),
            shape.len()
        )));
    }
    Ok(shape)
}

/// Plain input gradient of the target score.
pub fn gradient_saliency(model: &impl ScoreModel, x: &[f64], target: usize) -> Result<Explanation> {
    let shape = check_input(model, x)?;
    let g = model.score_gradient(x, target)?;
    Ok(Explanation::raw(
        MethodKind::Gradient,
        shape,
        reduce_channels(shape, &g),
    ))
}

/// Mean of channel-reduced gradients at `n_samples` noisy copies of `x`,
/// with noise `N(0, (sigma·(max x − min x))²)`.
pub fn smoothgrad(
    model: &impl ScoreModel,
    x: &[f64],
    target: usize,
    n_samples: usize,
    sigma: f64,
    noise_seed: u64,
) -> Result<Explanation> {
    ExplainMethod::SmoothGrad {
        n_samples,
        sigma,
        noise_seed,
    }
    .validate()?;
    let shape = check_input(model, x)?;
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale = sigma * (hi - lo);
    let noise = (scale > 0.0).then(|| Normal::new(0.0, scale).expect("positive scale"));
    let mut acc: Option<MeanAccumulator> = None;
    let mut noisy = x.to_vec();
    for s in 0..n_samples {
        if let Some(dist) = &noise {
            let mut r = rng::stream(noise_seed, s as u64, "smoothgrad");
            for (n, &v) in noisy.iter_mut().zip(x) {
                *n = v + dist.sample(&mut r);
            }
        }
        let g = reduce_channels(shape, &model.score_gradient(&noisy, target)?);
        match &mut acc {
            None => acc = Some(MeanAccumulator::new(g)),
            Some(a) => a.push(&g),
        }
    }
    let values = acc.expect("n_samples ≥ 1").finish();
    Ok(Explanation::raw(MethodKind::SmoothGrad, shape, values))
}

/// Per-element IG attributions before channel reduction:
/// `(x − baseline) ⊙ mean_k ∇score(baseline + α_k (x − baseline))`
/// with midpoints `α_k = (k + ½) / steps`.
pub fn integrated_gradients_attributions(
    model: &impl ScoreModel,
    x: &[f64],
    target: usize,
    steps: usize,
    baseline: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Config(
            "integrated gradients needs at least one step".into(),
        ));
    }
    let shape = check_input(model, x)?;
    let zeros;
    let base = match baseline {
        Some(b) if b.len() != shape.len() => {
            return Err(Error::Input("baseline shape differs from the input".into()));
        }
        Some(b) => b,
        None => {
            zeros = vec![0.0; shape.len()];
            &zeros
        }
    };
    let delta: Vec<f64> = x.iter().zip(base).map(|(a, b)| a - b).collect();
    let mut acc: Option<MeanAccumulator> = None;
    let mut point = vec![0.0; shape.len()];
    for k in 0..steps {
        let alpha = (k as f64 + 0.5) / steps as f64;
        for ((p, b), d) in point.iter_mut().zip(base).zip(&delta) {
            *p = b + alpha * d;
        }
        let g = model.score_gradient(&point, target)?;
        match &mut acc {
            None => acc = Some(MeanAccumulator::new(g)),
            Some(a) => a.push(&g),
        }
    }
    let mean = acc.expect("steps ≥ 1").finish();
    Ok(delta.iter().zip(&mean).map(|(d, g)| d * g).collect())
}

pub fn integrated_gradients(
    model: &impl ScoreModel,
    x: &[f64],
    target: usize,
    steps: usize,
    baseline: Option<&[f64]>,
) -> Result<Explanation> {
    let shape = check_input(model, x)?;
    let attr = integrated_gradients_attributions(model, x, target, steps, baseline)?;
    Ok(Explanation::raw(
        MethodKind::IntegratedGradients,
        shape,
        reduce_channels(shape, &attr),
    ))
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn bilinear_upsample(src: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    let coord = |d: usize, s: usize, dn: usize| -> (usize, usize, f64) {
        let c = ((d as f64 + 0.5) * s as f64 / dn as f64 - 0.5).clamp(0.0, (s - 1) as f64);
        let i0 = libm::floor(c) as usize;
        let i1 = (i0 + 1).min(s - 1);
        (i0, i1, c - i0 as f64)
    };
    let mut out = vec![0.0; dh * dw];
    for y in 0..dh {
        let (y0, y1, wy) = coord(y, sh, dh);
        for x in 0..dw {
            let (x0, x1, wx) = coord(x, sw, dw);
            let top = src[y0 * sw + x0] * (1.0 - wx) + src[y0 * sw + x1] * wx;
            let bottom = src[y1 * sw + x0] * (1.0 - wx) + src[y1 * sw + x1] * wx;
            out[y * dw + x] = top * (1.0 - wy) + bottom * wy;
        }
    }
    out
}

/// ReLU of the activation maps of `conv_layer` weighted by the spatial mean
/// of the target logit's gradient per channel, resized to the input.
pub fn grad_cam(
    net: &Network<'_>,
    x: &[f64],
    target: usize,
    conv_layer: Option<usize>,
) -> Result<Explanation> {
    let n_layers = net.arch.conv_layers.len();
    let layer = conv_layer.unwrap_or(n_layers - 1);
    if layer >= n_layers {
        return Err(Error::Config(format!(
            "conv layer {layer} does not exist ({n_layers} layers)"
        )));
    }
    let (cache, layer_grads) = net.logit_layer_gradients(x, target)?;
    let acts = &cache.layers[layer];
    let grads = &layer_grads[layer];
    let shape = acts.shape;
    let pixels = shape.pixels();
    let mut weights = vec![0.0; shape.channels];
    for p in 0..pixels {
        for (c, w) in weights.iter_mut().enumerate() {
            *w += grads[p * shape.channels + c];
        }
    }
    for w in &mut weights {
        *w /= pixels as f64;
    }
    let cam: Vec<f64> = (0..pixels)
        .map(|p| {
            let s: f64 = weights
                .iter()
                .enumerate()
                .map(|(c, w)| w * acts.post[p * shape.channels + c])
                .sum();
            s.max(0.0)
        })
        .collect();
    let input = net.arch.input_shape;
    let values = bilinear_upsample(&cam, shape.height, shape.width, input.height, input.width);
    Ok(Explanation::raw(MethodKind::GradCam, input, values))
}

/// Dispatches on `method`.
pub fn explain(
    net: &Network<'_>,
    x: &[f64],
    target: usize,
    method: &ExplainMethod,
) -> Result<Explanation> {
    method.validate()?;
    match method {
        ExplainMethod::Gradient => gradient_saliency(net, x, target),
        ExplainMethod::SmoothGrad {
            n_samples,
            sigma,
            noise_seed,
        } => smoothgrad(net, x, target, *n_samples, *sigma, *noise_seed),
        ExplainMethod::IntegratedGradients { steps, baseline } => {
            integrated_gradients(net, x, target, *steps, baseline.as_deref())
        }
        ExplainMethod::GradCam { conv_layer } => grad_cam(net, x, target, *conv_layer),
    }
}

/// Lower order statistic at quantile `q`: the sorted value at index
/// `floor(q·(n − 1))`.
pub fn percentile_lower(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = libm::floor(q * (sorted.len() - 1) as f64) as usize;
    sorted[idx]
}

pub const CLIP_QUANTILE: f64 = 0.99;

/// Maps a raw explanation into `[0, 1]`.
///
/// Signed maps are scaled to `[-1, 1]` by their largest magnitude and
/// negatives are clipped to 0. Every map then has values above its 99th
/// percentile clipped and is divided by its maximum. All-zero maps stay zero.
pub fn preprocess(raw: &Explanation) -> Result<Explanation> {
    if let Some(bad) = raw.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite attribution {bad} in {} map",
            raw.method
        )));
    }
    let mut v = raw.values.clone();
    if raw.method.is_signed() {
        let m = v.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x)));
        if m > 0.0 {
            for x in &mut v {
                *x /= m;
            }
        }
    }
    for x in &mut v {
        *x = x.max(0.0);
    }
    if !v.is_empty() {
        let p = percentile_lower(&v, CLIP_QUANTILE);
        for x in &mut v {
            *x = x.min(p);
        }
        let max = v.iter().fold(0.0f64, |m, x| m.max(*x));
        if max > 0.0 {
            for x in &mut v {
                *x /= max;
            }
        } else {
            v.fill(0.0);
        }
    }
    Ok(Explanation {
        values: v,
        preprocessed: true,
        ..raw.clone()
    })
}
