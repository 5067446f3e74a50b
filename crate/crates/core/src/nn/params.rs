use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::arch::{ArchitectureSpec, TensorLayout};
use crate::error::{Error, Result};
use crate::rng;

/// Initializer family for weights or biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Normal,
    Uniform,
    Zeros,
}

impl InitKind {
    pub const ALL: [InitKind; 3] = [InitKind::Normal, InitKind::Uniform, InitKind::Zeros];

    pub const fn name(self) -> &'static str {
        match self {
            InitKind::Normal => "normal",
            InitKind::Uniform => "uniform",
            InitKind::Zeros => "zeros",
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(InitKind::Normal),
            "uniform" => Ok(InitKind::Uniform),
            "zeros" => Ok(InitKind::Zeros),
            other => Err(Error::Config(format!("unsupported initializer `{other}`"))),
        }
    }
}

/// Flat parameter vector with per-tensor layout metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    layout: Vec<TensorLayout>,
    values: Vec<f64>,
}

impl ParameterSet {
    pub fn zeros(arch: &ArchitectureSpec) -> Self {
        let layout = arch.param_layout();
        let n = layout.iter().map(TensorLayout::len).sum();
        Self {
            layout,
            values: alloc::vec![0.0; n],
        }
    }

    /// Rebuilds a parameter set from stored tensors, checking it fits `arch`.
    pub fn from_tensors(
        arch: &ArchitectureSpec,
        dims: &[Vec<usize>],
        values: Vec<f64>,
    ) -> Result<Self> {
        let layout = arch.param_layout();
        if layout.len() != dims.len() || layout.iter().zip(dims).any(|(l, d)| &l.dims != d) {
            return Err(Error::Input(
                "stored tensor shapes do not match the architecture".into(),
            ));
        }
        if values.len() != arch.param_count() {
            return Err(Error::Input(format!(
                "expected {} parameter values, got {}",
                arch.param_count(),
                values.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &[TensorLayout] {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, i: usize) -> &[f64] {
        &self.values[self.layout[i].range()]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.layout[i].range();
        &mut self.values[r]
    }

    pub fn conv_weight(&self, layer: usize) -> &[f64] {
        self.tensor(2 * layer)
    }

    pub fn conv_bias(&self, layer: usize) -> &[f64] {
        self.tensor(2 * layer + 1)
    }

    pub fn dense_weight(&self) -> &[f64] {
        self.tensor(self.layout.len() - 2)
    }

    pub fn dense_bias(&self) -> &[f64] {
        self.tensor(self.layout.len() - 1)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Every value survives rounding to a finite `f32`.
    pub fn fits_f32(&self) -> bool {
        self.values.iter().all(|&v| (v as f32).is_finite())
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Rounds every value to the nearest `f32`, the precision of the weight files.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.values {
            *v = f64::from(*v as f32);
        }
    }

    pub fn is_bias(&self, tensor: usize) -> bool {
        tensor % 2 == 1
    }
}

fn fill(values: &mut [f64], kind: InitKind, std: f64, seed: u64, tensor: usize, tag: &str) {
    let mut rng = rng::stream(seed, tensor as u64, tag);
    match kind {
        InitKind::Zeros => values.fill(0.0),
        InitKind::Normal => {
            let dist = Normal::new(0.0, std).expect("std validated positive");
            for v in values {
                *v = f64::from(dist.sample(&mut rng) as f32);
            }
        }
        InitKind::Uniform => {
            // U(-a, a) has standard deviation a / sqrt(3)
            let a = std * libm::sqrt(3.0);
            let dist = Uniform::new_inclusive(-a, a).expect("bound validated positive");
            for v in values {
                *v = f64::from(dist.sample(&mut rng) as f32);
            }
        }
    }
}

/// Seeded initialization. Values are drawn in `f64` and rounded to `f32`.
/// Biases use the same standard deviation as the weights.
pub fn init_parameters(
    arch: &ArchitectureSpec,
    w0_type: InitKind,
    w0_std: f64,
    b0_type: InitKind,
    seed: u64,
) -> Result<ParameterSet> {
    arch.validate()?;
    if !(1e-3..=0.5).contains(&w0_std) {
        return Err(Error::Config(format!(
            "w0_std must lie in [1e-3, 0.5], got {w0_std}"
        )));
    }
    let mut params = ParameterSet::zeros(arch);
    for t in 0..params.layout.len() {
        let (kind, tag) = if params.is_bias(t) {
            (b0_type, "b0")
        } else {
            (w0_type, "w0")
        };
        fill(params.tensor_mut(t), kind, w0_std, seed, t, tag);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(p: &ParameterSet) -> Vec<f64> {
        (0..p.layout().len())
            .filter(|&t| !p.is_bias(t))
            .flat_map(|t| p.tensor(t).to_vec())
            .collect()
    }

    #[test]
    fn init_is_bit_deterministic() {
        let arch = ArchitectureSpec::desk_default(4);
        let a = init_parameters(&arch, InitKind::Normal, 0.1, InitKind::Zeros, 7).unwrap();
        let b = init_parameters(&arch, InitKind::Normal, 0.1, InitKind::Zeros, 7).unwrap();
        let bits = |p: &ParameterSet| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = init_parameters(&arch, InitKind::Normal, 0.1, InitKind::Zeros, 8).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn zero_bias_initializer() {
        let arch = ArchitectureSpec::desk_default(4);
        let p = init_parameters(&arch, InitKind::Uniform, 0.01, InitKind::Zeros, 1).unwrap();
        for t in (1..p.layout().len()).step_by(2) {
            assert!(p.tensor(t).iter().all(|&v| v == 0.0));
        }
        assert!(weights(&p)
            .iter()
            .all(|v| v.abs() <= 0.01 * 3f64.sqrt() + 1e-9));
    }

    #[test]
    fn normal_sample_std_close_to_requested() {
        let arch = ArchitectureSpec::desk_default(4);
        let p = init_parameters(&arch, InitKind::Normal, 0.5, InitKind::Zeros, 3).unwrap();
        let w = weights(&p);
        assert!(w.len() >= 1000);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 0.5).abs() / 0.5 < 0.1, "sample sd {sd}");
    }

    #[test]
    fn uniform_sample_std_close_to_requested() {
        let arch = ArchitectureSpec::desk_default(4);
        let p = init_parameters(&arch, InitKind::Uniform, 0.2, InitKind::Uniform, 5).unwrap();
        let w = weights(&p);
        let n = w.len() as f64;
        let sd = (w.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        assert!((sd - 0.2).abs() / 0.2 < 0.1, "sample sd {sd}");
    }

    #[test]
    fn rejects_out_of_range_std_and_unknown_kind() {
        let arch = ArchitectureSpec::desk_default(4);
        assert!(matches!(
            init_parameters(&arch, InitKind::Normal, 0.9, InitKind::Zeros, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            "orthogonal".parse::<InitKind>(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn param_count_matches_analytic_formula() {
        let arch = ArchitectureSpec::desk_default(6);
        assert_eq!(ParameterSet::zeros(&arch).len(), arch.param_count());
    }
}
