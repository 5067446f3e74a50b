//! Building, saving and loading model zoos.

use std::fs;
use std::path::{Path, PathBuf};

use hpcausal_core::data::{generate_synthetic, Dataset, DatasetKind, DatasetSpec};
use hpcausal_core::hparams::{sample_hparams, HparamSpace, HyperparamVector};
use hpcausal_core::nn::{train, ArchitectureSpec, ParameterSet, TrainConfig};
use hpcausal_core::rng::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{encode_weights, read_dataset, read_weights};
use crate::store::{read_json, sha256_hex, to_json};

pub const MANIFEST: &str = "manifest.json";
pub const WEIGHTS_DIR: &str = "weights";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainSeedMode {
    /// Every model trains with the same seed.
    #[default]
    Shared,
    /// Model `i` trains with `derive_seed(train_seed, i)`.
    PerModel,
}

impl TrainSeedMode {
    pub fn seed(self, train_seed: u64, model_id: u64) -> u64 {
        match self {
            TrainSeedMode::Shared => train_seed,
            TrainSeedMode::PerModel => derive_seed(train_seed, model_id),
        }
    }
}

/// Everything that determines a zoo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZooConfig {
    pub n: usize,
    pub arch: ArchitectureSpec,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub sampling_seed: u64,
    pub train_seed: u64,
    #[serde(default)]
    pub train_seed_mode: TrainSeedMode,
    #[serde(default)]
    pub space: HparamSpace,
}

impl Default for ZooConfig {
    fn default() -> Self {
        Self {
            n: 500,
            arch: ArchitectureSpec::desk_default(4),
            dataset: DatasetSpec::shapes(4, 1200, 0),
            train: TrainConfig::default(),
            sampling_seed: 0,
            train_seed: 0,
            train_seed_mode: TrainSeedMode::Shared,
            space: HparamSpace::default(),
        }
    }
}

impl ZooConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("zoo size n must be at least 1".into()));
        }
        self.arch.validate()?;
        self.space.validate()?;
        if self.dataset.num_classes != self.arch.num_classes {
            return Err(Error::Config(format!(
                "dataset has {} classes but the architecture predicts {}",
                self.dataset.num_classes, self.arch.num_classes
            )));
        }
        if let Some(shape) = self.dataset.input_shape() {
            if shape != self.arch.input_shape {
                return Err(Error::Config(format!(
                    "dataset input shape {shape:?} does not match architecture input {:?}",
                    self.arch.input_shape
                )));
            }
        }
        Ok(())
    }
}

/// Metadata of one zoo member; weights live in `weights/<model_id>.bin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub model_id: u64,
    pub hparams: HyperparamVector,
    pub test_accuracy: f64,
    pub diverged: bool,
    pub train_seed: u64,
    pub steps: u64,
    /// Training failed; the model has no weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZooManifest {
    pub zoo_id: String,
    pub config: ZooConfig,
    pub records: Vec<ModelRecord>,
}

/// A manifest with the weights of every successfully trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct Zoo {
    pub manifest: ZooManifest,
    pub weights: Vec<Option<ParameterSet>>,
}

impl Zoo {
    /// Records with weights, paired with them.
    pub fn trained(&self) -> impl Iterator<Item = (&ModelRecord, &ParameterSet)> {
        self.manifest
            .records
            .iter()
            .zip(&self.weights)
            .filter_map(|(r, w)| w.as_ref().map(|w| (r, w)))
    }
}

/// Generates or reads the dataset a spec describes.
pub fn load_dataset(spec: &DatasetSpec, base: &Path) -> Result<Dataset> {
    match spec.kind {
        DatasetKind::External => {
            let rel = spec
                .external_path
                .as_deref()
                .ok_or_else(|| Error::Config("external dataset needs external_path".into()))?;
            let path = base.join(rel);
            let data = read_dataset(&path)?;
            if data.num_classes != spec.num_classes {
                return Err(Error::format(
                    &path,
                    format!(
                        "dataset has {} classes, config says {}",
                        data.num_classes, spec.num_classes
                    ),
                ));
            }
            Ok(data)
        }
        _ => Ok(generate_synthetic(spec)?),
    }
}

/// Stable identifier of a zoo configuration.
pub fn zoo_id(cfg: &ZooConfig) -> String {
    sha256_hex(to_json(cfg).as_bytes())[..16].into()
}

/// Trains model `model_id` of the zoo described by `cfg`.
pub fn build_record(
    cfg: &ZooConfig,
    data: &Dataset,
    model_id: u64,
) -> (ModelRecord, Option<ParameterSet>) {
    let hparams = sample_hparams(&cfg.space, model_id, cfg.sampling_seed);
    let train_seed = cfg.train_seed_mode.seed(cfg.train_seed, model_id);
    match train(&cfg.arch, &hparams, data, &cfg.train, train_seed) {
        Ok(out) => (
            ModelRecord {
                model_id,
                hparams,
                test_accuracy: out.test_accuracy,
                diverged: out.diverged,
                train_seed,
                steps: out.steps,
                error: None,
            },
            Some(out.params),
        ),
        Err(e) => (
            ModelRecord {
                model_id,
                hparams,
                test_accuracy: 0.0,
                diverged: false,
                train_seed,
                steps: 0,
                error: Some(e.to_string()),
            },
            None,
        ),
    }
}

/// Samples and trains `cfg.n` models in parallel. Records are ordered by
/// `model_id` regardless of completion order; a model whose training fails
/// keeps its record with the error and no weights.
pub fn build_zoo(cfg: &ZooConfig, data: &Dataset) -> Result<Zoo> {
    cfg.validate()?;
    if data.shape != cfg.arch.input_shape || data.num_classes != cfg.arch.num_classes {
        return Err(Error::Config(
            "dataset does not match the architecture".into(),
        ));
    }
    let built: Vec<(ModelRecord, Option<ParameterSet>)> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|id| build_record(cfg, data, id))
        .collect();
    let (records, weights) = built.into_iter().unzip();
    Ok(Zoo {
        manifest: ZooManifest {
            zoo_id: zoo_id(cfg),
            config: cfg.clone(),
            records,
        },
        weights,
    })
}

pub fn weights_path(dir: &Path, model_id: u64) -> PathBuf {
    dir.join(WEIGHTS_DIR).join(format!("{model_id}.bin"))
}

/// Writes `manifest.json` and one weight file per trained model into `dir`.
pub fn save_zoo(dir: &Path, zoo: &Zoo) -> Result<()> {
    let wdir = dir.join(WEIGHTS_DIR);
    fs::create_dir_all(&wdir).map_err(Error::io(&wdir))?;
    let manifest = dir.join(MANIFEST);
    fs::write(&manifest, to_json(&zoo.manifest)).map_err(Error::io(&manifest))?;
    for (r, w) in zoo.trained() {
        let path = weights_path(dir, r.model_id);
        let bytes = encode_weights(w, &path)?;
        fs::write(&path, bytes).map_err(Error::io(&path))?;
    }
    Ok(())
}

fn check_manifest(path: &Path, m: &ZooManifest) -> Result<()> {
    m.config.validate()?;
    if m.records.len() != m.config.n {
        return Err(Error::format(
            path,
            format!("{} records for a zoo of {}", m.records.len(), m.config.n),
        ));
    }
    for (i, r) in m.records.iter().enumerate() {
        if r.model_id != i as u64 {
            return Err(Error::format(
                path,
                format!("record {i} has model_id {}", r.model_id),
            ));
        }
        if !(0.0..=1.0).contains(&r.test_accuracy) {
            return Err(Error::format(
                path,
                format!(
                    "model {}: test_accuracy {} outside [0, 1]",
                    r.model_id, r.test_accuracy
                ),
            ));
        }
    }
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<ZooManifest> {
    let path = dir.join(MANIFEST);
    let m: ZooManifest = read_json(&path)?;
    check_manifest(&path, &m)?;
    Ok(m)
}

pub fn load_zoo(dir: &Path) -> Result<Zoo> {
    let manifest = load_manifest(dir)?;
    let weights = manifest
        .records
        .par_iter()
        .map(|r| match r.error {
            Some(_) => Ok(None),
            None => read_weights(
                &weights_path(dir, r.model_id),
                &manifest.config.arch,
                r.model_id,
            )
            .map(Some),
        })
        .collect::<Result<_>>()?;
    Ok(Zoo { manifest, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ZooConfig {
        ZooConfig {
            n: 3,
            dataset: DatasetSpec::shapes(4, 120, 1),
            train: TrainConfig {
                epochs: 1,
                batch_size: 32,
            },
            ..ZooConfig::default()
        }
    }

    #[test]
    fn per_model_seeds_differ() {
        assert_eq!(
            TrainSeedMode::Shared.seed(5, 1),
            TrainSeedMode::Shared.seed(5, 2)
        );
        assert_ne!(
            TrainSeedMode::PerModel.seed(5, 1),
            TrainSeedMode::PerModel.seed(5, 2)
        );
    }

    #[test]
    fn rejects_mismatched_dataset() {
        let mut cfg = tiny();
        cfg.dataset.num_classes = 3;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_rejects_unknown_field() {
        let cfg = tiny();
        let data = load_dataset(&cfg.dataset, Path::new(".")).unwrap();
        let zoo = build_zoo(&cfg, &data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_zoo(dir.path(), &zoo).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap().replacen(
            "\"zoo_id\"",
            "\"colour\": 1,\n  \"zoo_id\"",
            1,
        );
        fs::write(&path, text).unwrap();
        let err = load_zoo(dir.path()).unwrap_err().to_string();
        assert!(err.contains("unknown field `colour`"), "{err}");
    }
}
