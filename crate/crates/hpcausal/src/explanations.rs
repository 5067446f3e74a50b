//! Predictions and preprocessed saliency maps for every (model, probe).

use std::path::{Path, PathBuf};

use hpcausal_core::causal::OutcomeTable;
use hpcausal_core::data::Dataset;
use hpcausal_core::explain::{explain, preprocess, ExplainMethod};
use hpcausal_core::nn::{argmax, softmax, Network, ParameterSet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{read_matrix, write_matrix, Matrix};
use crate::zoo::{ModelRecord, Zoo};

pub const INDEX: &str = "index.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainConfig {
    /// The first `n_probes` test instances are explained.
    pub n_probes: usize,
    pub methods: Vec<ExplainMethod>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            n_probes: 100,
            methods: ExplainMethod::default_battery(0),
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_probes == 0 {
            return Err(Error::Config("n_probes must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config(
                "at least one explanation method is required".into(),
            ));
        }
        for (i, m) in self.methods.iter().enumerate() {
            m.validate()?;
            if self.methods[..i].iter().any(|o| o.kind() == m.kind()) {
                return Err(Error::Config(format!(
                    "explanation method {} listed twice",
                    m.kind().name()
                )));
            }
        }
        Ok(())
    }

    pub fn method_names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.kind().name()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Excluded {
    pub model_id: u64,
    pub reason: String,
}

/// Describes the store: which models, probes and methods it holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplanationIndex {
    pub zoo_id: String,
    /// Dataset indices of the probe instances.
    pub probes: Vec<usize>,
    pub methods: Vec<String>,
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
    /// Models with outputs, in store order.
    pub models: Vec<u64>,
    pub excluded: Vec<Excluded>,
}

/// Outputs of one model: class probabilities and one map set per method.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutputs {
    pub predictions: Matrix,
    pub maps: Vec<Matrix>,
}

/// Probe instances: the first `n_probes` of the test set.
pub fn probe_indices(data: &Dataset, n_probes: usize) -> Result<Vec<usize>> {
    let test = data.test_indices();
    if n_probes > test.len() {
        return Err(Error::Config(format!(
            "{n_probes} probes requested but the test set has {}",
            test.len()
        )));
    }
    Ok(test.take(n_probes).collect())
}

fn non_finite(m: &Matrix) -> bool {
    m.values.iter().any(|v| !v.is_finite())
}

fn to_f32(values: &mut [f64]) {
    for v in values {
        *v = f64::from(*v as f32);
    }
}

/// Explains the predicted class of every probe with every method.
pub fn explain_model(
    record: &ModelRecord,
    params: &ParameterSet,
    zoo: &Zoo,
    data: &Dataset,
    probes: &[usize],
    cfg: &ExplainConfig,
) -> Result<ModelOutputs, String> {
    let arch = &zoo.manifest.config.arch;
    let net = Network::new(arch, record.hparams.activation, params);
    let pixels = arch.input_shape.pixels();
    let mut preds = Vec::with_capacity(probes.len() * arch.num_classes);
    let mut maps: Vec<Vec<f64>> =
        vec![Vec::with_capacity(probes.len() * pixels); cfg.methods.len()];
    for &i in probes {
        let x = data.input(i);
        let logits = net.logits(x).map_err(|e| format!("probe {i}: {e}"))?;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(format!("probe {i}: non-finite logits"));
        }
        let target = argmax(&logits);
        preds.extend(softmax(&logits));
        for (m, out) in cfg.methods.iter().zip(&mut maps) {
            let e = explain(&net, x, target, m)
                .and_then(|raw| preprocess(&raw))
                .map_err(|e| format!("probe {i}, {}: {e}", m.kind().name()))?;
            out.extend(e.values);
        }
    }
    to_f32(&mut preds);
    let predictions = Matrix {
        rows: probes.len(),
        dim: arch.num_classes,
        values: preds,
    };
    let maps: Vec<Matrix> = maps
        .into_iter()
        .map(|mut v| {
            to_f32(&mut v);
            Matrix {
                rows: probes.len(),
                dim: pixels,
                values: v,
            }
        })
        .collect();
    if non_finite(&predictions) || maps.iter().any(non_finite) {
        return Err("non-finite output".into());
    }
    Ok(ModelOutputs { predictions, maps })
}

pub fn prediction_path(dir: &Path, model_id: u64) -> PathBuf {
    dir.join("predictions").join(format!("{model_id}.bin"))
}

pub fn map_path(dir: &Path, model_id: u64, method: &str) -> PathBuf {
    dir.join("maps").join(format!("{model_id}_{method}.bin"))
}

/// Explains every trained model of `zoo` and writes the store into `dir`.
pub fn explain_zoo(
    dir: &Path,
    zoo: &Zoo,
    data: &Dataset,
    cfg: &ExplainConfig,
) -> Result<ExplanationIndex> {
    cfg.validate()?;
    let probes = probe_indices(data, cfg.n_probes)?;
    for sub in ["predictions", "maps"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(Error::io(&p))?;
    }
    let names = cfg.method_names();
    let trained: Vec<_> = zoo.trained().collect();
    let outcomes: Vec<(u64, Result<(), String>)> = trained
        .par_iter()
        .map(
            |(r, w)| match explain_model(r, w, zoo, data, &probes, cfg) {
                Ok(out) => {
                    write_matrix(&prediction_path(dir, r.model_id), &out.predictions)?;
                    for (name, m) in names.iter().zip(&out.maps) {
                        write_matrix(&map_path(dir, r.model_id, name), m)?;
                    }
                    Ok((r.model_id, Ok(())))
                }
                Err(reason) => Ok((r.model_id, Err(reason))),
            },
        )
        .collect::<Result<_>>()?;
    let mut models = Vec::new();
    let mut excluded: Vec<Excluded> = zoo
        .manifest
        .records
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| Excluded {
                model_id: r.model_id,
                reason: format!("training failed: {e}"),
            })
        })
        .collect();
    for (id, res) in outcomes {
        match res {
            Ok(()) => models.push(id),
            Err(reason) => excluded.push(Excluded {
                model_id: id,
                reason,
            }),
        }
    }
    excluded.sort_by_key(|e| e.model_id);
    let shape = zoo.manifest.config.arch.input_shape;
    let index = ExplanationIndex {
        zoo_id: zoo.manifest.zoo_id.clone(),
        probes,
        methods: names.iter().map(|s| s.to_string()).collect(),
        num_classes: zoo.manifest.config.arch.num_classes,
        height: shape.height,
        width: shape.width,
        models,
        excluded,
    };
    crate::store::write_json(&dir.join(INDEX), &index)?;
    Ok(index)
}

pub fn load_index(dir: &Path) -> Result<ExplanationIndex> {
    crate::store::read_json(&dir.join(INDEX))
}

fn load_table(
    index: &ExplanationIndex,
    dim: usize,
    path: impl Fn(u64) -> PathBuf + Sync,
) -> Result<OutcomeTable> {
    let mats: Vec<Matrix> = index
        .models
        .par_iter()
        .map(|&id| {
            let p = path(id);
            let m = read_matrix(&p)?;
            if m.rows != index.probes.len() || m.dim != dim {
                return Err(Error::format(
                    &p,
                    format!(
                        "model {id}: {}×{} matrix, expected {}×{dim}",
                        m.rows,
                        m.dim,
                        index.probes.len()
                    ),
                ));
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let values = mats.into_iter().flat_map(|m| m.values).collect();
    Ok(OutcomeTable::new(
        index.models.len(),
        index.probes.len(),
        dim,
        values,
    )?)
}

/// Class probabilities as `[model][probe][class]`, models in index order.
pub fn load_predictions(dir: &Path, index: &ExplanationIndex) -> Result<OutcomeTable> {
    load_table(index, index.num_classes, |id| prediction_path(dir, id))
}

/// Preprocessed maps of one method as `[model][probe][pixel]`.
pub fn load_maps(dir: &Path, index: &ExplanationIndex, method: &str) -> Result<OutcomeTable> {
    if !index.methods.iter().any(|m| m == method) {
        return Err(Error::Config(format!(
            "no `{method}` maps in the store; available: {}",
            index.methods.join(", ")
        )));
    }
    load_table(index, index.height * index.width, |id| {
        map_path(dir, id, method)
    })
}
