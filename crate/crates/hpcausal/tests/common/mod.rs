#![allow(dead_code)]

use hpcausal::config::PipelineConfig;
use hpcausal::pipeline::RunOptions;
use hpcausal_core::analysis::BucketScheme;
use hpcausal_core::causal::Kernel;
use hpcausal_core::data::DatasetSpec;
use hpcausal_core::explain::ExplainMethod;
use hpcausal_core::hparams::HparamKey;
use hpcausal_core::nn::TrainConfig;
use std::path::Path;

/// A pipeline small enough to run in a few seconds.
pub fn tiny_config(n: usize) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.zoo.n = n;
    c.zoo.dataset = DatasetSpec::shapes(4, 240, 3);
    c.zoo.train = TrainConfig {
        epochs: 2,
        batch_size: 32,
    };
    c.explain.n_probes = 6;
    c.explain.methods = vec![
        ExplainMethod::Gradient,
        ExplainMethod::GradCam { conv_layer: None },
    ];
    c.effects.keys = vec![HparamKey::Activation, HparamKey::Optimizer];
    c.effects.kernels = vec![Kernel::Linear, Kernel::rbf()];
    c.effects.buckets = BucketScheme::new(vec![0.0, 50.0, 100.0]).unwrap();
    c.effects.marginalize.min_group_size = 2;
    c.analyze.bootstrap.resamples = 50;
    c.analyze.mediation.permutations = 2;
    c
}

pub fn opts(out: &Path) -> RunOptions {
    RunOptions {
        out: out.to_path_buf(),
        force: false,
    }
}
