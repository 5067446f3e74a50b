//! Deterministic engine for small conv → global-average-pool → dense classifiers.

mod arch;
mod network;
mod optim;
mod params;
mod train;

pub use arch::{Activation, ArchitectureSpec, ConvLayer, Shape, TensorLayout};
pub use network::{
    argmax, log_sum_exp, softmax, ForwardCache, Gradients, LayerActivations, Network, Prediction,
};
pub use optim::{OptimizerKind, OptimizerState};
pub use params::{init_parameters, InitKind, ParameterSet};
pub use train::{
    accuracy, dropout_mask, init_seed, loss, param_gradient, train, LossConfig, TrainConfig,
    TrainOutcome,
};
