//! Pipeline configuration (JSON).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hpcausal_core::analysis::{BucketScheme, MediationConfig};
use hpcausal_core::causal::{ControlMode, Kernel, MarginalizeConfig};
use hpcausal_core::explain::ExplainMethod;
use hpcausal_core::hparams::HparamKey;
use hpcausal_core::stats::BootstrapConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explanations::ExplainConfig;
use crate::store::read_json;
use crate::zoo::ZooConfig;

pub const OUT_ENV: &str = "HPCAUSAL_OUT";
pub const DEFAULT_OUT: &str = "hpcausal-out";

/// Control group of each treated level.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlChoice {
    /// All other levels of the key.
    #[default]
    Complement,
    /// One baseline level label per key; every key in `keys` needs one.
    Baseline(BTreeMap<HparamKey, String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectsConfig {
    pub keys: Vec<HparamKey>,
    /// Restricts the treated levels of some keys (labels); unlisted keys use all levels.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub levels: BTreeMap<HparamKey, Vec<String>>,
    #[serde(default)]
    pub control: ControlChoice,
    pub kernels: Vec<Kernel>,
    #[serde(default)]
    pub marginalize: MarginalizeConfig,
    #[serde(default)]
    pub buckets: BucketScheme,
    /// Estimate over the whole zoo as well as within each bucket.
    #[serde(default = "yes")]
    pub global: bool,
    #[serde(default = "yes")]
    pub within_buckets: bool,
}

fn yes() -> bool {
    true
}

impl Default for EffectsConfig {
    fn default() -> Self {
        Self {
            keys: HparamKey::ALL.to_vec(),
            levels: BTreeMap::new(),
            control: ControlChoice::Complement,
            kernels: Kernel::battery().to_vec(),
            marginalize: MarginalizeConfig::default(),
            buckets: BucketScheme::default(),
            global: true,
            within_buckets: true,
        }
    }
}

impl EffectsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keys.is_empty() {
            return Err(Error::Config("effects need at least one hparam key".into()));
        }
        if self.kernels.is_empty() {
            return Err(Error::Config("effects need at least one kernel".into()));
        }
        if !self.global && !self.within_buckets {
            return Err(Error::Config(
                "enable global or within-bucket effects".into(),
            ));
        }
        for (i, k) in self.keys.iter().enumerate() {
            if self.keys[..i].contains(k) {
                return Err(Error::Config(format!("hparam key {k} listed twice")));
            }
        }
        for (i, k) in self.kernels.iter().enumerate() {
            k.validate()?;
            if self.kernels[..i].iter().any(|o| o.name() == k.name()) {
                return Err(Error::Config(format!("kernel {} listed twice", k.name())));
            }
        }
        for (key, labels) in &self.levels {
            for l in labels {
                key.parse_level(l)
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        self.control_groups()?;
        self.buckets.validate()?;
        Ok(())
    }

    /// Keys grouped by their control mode, in `keys` order within a group.
    pub fn control_groups(&self) -> Result<Vec<(ControlMode, Vec<HparamKey>)>> {
        match &self.control {
            ControlChoice::Complement => Ok(vec![(ControlMode::Complement, self.keys.clone())]),
            ControlChoice::Baseline(map) => {
                let mut groups: Vec<(ControlMode, Vec<HparamKey>)> = Vec::new();
                for &key in &self.keys {
                    let label = map.get(&key).ok_or_else(|| {
                        Error::Config(format!("no baseline level given for {key}"))
                    })?;
                    let level = key
                        .parse_level(label)
                        .map_err(|e| Error::Config(e.to_string()))?;
                    let mode = ControlMode::FixedBaseline(level.index);
                    match groups.iter_mut().find(|(m, _)| *m == mode) {
                        Some((_, ks)) => ks.push(key),
                        None => groups.push((mode, vec![key])),
                    }
                }
                Ok(groups)
            }
        }
    }

    /// Whether `key = label` is a requested treated level.
    pub fn wants_level(&self, key: HparamKey, label: &str) -> bool {
        self.levels.get(&key).is_none_or(|ls| {
            ls.iter()
                .any(|l| key.parse_level(l).is_ok_and(|x| x.label() == label))
        })
    }
}

fn default_analysis_kernel() -> Kernel {
    Kernel::rbf()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub mediation: MediationConfig,
    /// Kernel of the mediation analysis and scatter plots.
    #[serde(default = "default_analysis_kernel")]
    pub kernel: Kernel,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            bootstrap: BootstrapConfig::default(),
            mediation: MediationConfig::default(),
            kernel: Kernel::rbf(),
        }
    }
}

impl AnalyzeConfig {
    pub fn validate(&self) -> Result<()> {
        self.bootstrap.validate()?;
        self.kernel.validate()?;
        if self.mediation.permutations == 0 {
            return Err(Error::Config(
                "mediation needs at least one permutation".into(),
            ));
        }
        Ok(())
    }
}

/// The whole pipeline. Every section has defaults, so `{}` is a valid config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub zoo: ZooConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub effects: EffectsConfig,
    #[serde(default)]
    pub analyze: AnalyzeConfig,
}

impl PipelineConfig {
    /// Reads a config file; malformed or unknown fields are configuration errors.
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path).map_err(|e| match e {
            Error::Json { path, source } => Error::Config(format!("{}: {source}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.zoo.validate()?;
        self.explain.validate()?;
        self.effects.validate()?;
        self.analyze.validate()
    }

    /// Sets every seed in the configuration.
    pub fn set_all_seeds(&mut self, seed: u64) {
        self.zoo.sampling_seed = seed;
        self.zoo.train_seed = seed;
        self.zoo.dataset.generation_seed = seed;
        for m in &mut self.explain.methods {
            if let ExplainMethod::SmoothGrad { noise_seed, .. } = m {
                *noise_seed = seed;
            }
        }
        self.analyze.bootstrap.seed = seed;
        self.analyze.mediation.permutation_seed = seed;
    }

    /// Output root: explicit, then the config, then `$HPCAUSAL_OUT`, then `hpcausal-out`.
    pub fn out_root(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}
