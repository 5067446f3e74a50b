#![allow(dead_code)]

use hpcausal_core::nn::{
    init_parameters, Activation, ArchitectureSpec, ConvLayer, InitKind, ParameterSet, Shape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_arch(num_classes: usize) -> ArchitectureSpec {
    ArchitectureSpec {
        input_shape: Shape::new(6, 5, 2),
        conv_layers: vec![ConvLayer::new(3, 3, 1), ConvLayer::new(3, 4, 2)],
        num_classes,
    }
}

pub fn random_params(arch: &ArchitectureSpec, seed: u64) -> ParameterSet {
    init_parameters(arch, InitKind::Normal, 0.5, InitKind::Normal, seed).unwrap()
}

pub fn random_input(shape: Shape, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..shape.len())
        .map(|_| r.random_range(-1.0..1.0))
        .collect()
}

pub const TANH: Activation = Activation::Tanh;
