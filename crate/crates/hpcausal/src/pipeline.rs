//! The four pipeline stages and their chaining.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use hpcausal_core::analysis::{
    bucket_models, correlate_effects, kernel_level_effects, kernel_sensitivity,
    mediation_permutation, pair_points, CellLabel, EffectSpec, LevelEffects,
};
use hpcausal_core::causal::{Diagnostics, Kernel, Scope, Unit};
use hpcausal_core::hparams::HparamKey;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::explanations::{explain_zoo, load_index, load_maps, load_predictions, ExplanationIndex};
use crate::report::{
    bucket_label, read_csv, scatter_svg, sensitivity_records, violin_svg, write_csv, write_text,
    BucketRecord, CorrelationRecord, EffectRecord, MediationRecord, Panel, SensitivityRecord,
};
use crate::store::{require_stage, stage_hash, RunManifest, Staged, TOOL_VERSION};
use crate::zoo::{build_zoo, load_dataset, load_manifest, load_zoo, save_zoo, ZooManifest};

pub const ZOO_DIR: &str = "zoo";
pub const EXPLANATIONS_DIR: &str = "explanations";
pub const EFFECTS_DIR: &str = "effects";
pub const ANALYSIS_DIR: &str = "analysis";
pub const EFFECTS_CSV: &str = "effects.csv";
pub const BUCKETS_CSV: &str = "buckets.csv";

/// Where a run writes and whether it may replace existing stage outputs.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub force: bool,
}

impl RunOptions {
    pub fn stage(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Config hash of every stage; each chains the hash of the stage before it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageHashes {
    pub zoo: String,
    pub explain: String,
    pub effects: String,
    pub analyze: String,
}

impl StageHashes {
    pub fn of(cfg: &PipelineConfig) -> Self {
        let zoo = stage_hash(None, &cfg.zoo);
        let explain = stage_hash(Some(&zoo), &cfg.explain);
        let effects = stage_hash(Some(&explain), &cfg.effects);
        let analyze = stage_hash(Some(&effects), &cfg.analyze);
        Self {
            zoo,
            explain,
            effects,
            analyze,
        }
    }
}

fn run_manifest<T: Serialize>(
    stage: &str,
    hash: &str,
    upstream: Option<&str>,
    seeds: &[(&str, u64)],
    section: &T,
    warnings: Vec<String>,
) -> RunManifest {
    RunManifest {
        stage: stage.into(),
        tool_version: TOOL_VERSION.into(),
        config_hash: hash.into(),
        upstream_hash: upstream.map(Into::into),
        seeds: seeds.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        config: serde_json::to_value(section).expect("config types serialize"),
        files: BTreeMap::new(),
        warnings,
    }
}

pub fn cmd_zoo_build(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunManifest> {
    cfg.zoo.validate()?;
    let h = StageHashes::of(cfg);
    let data = load_dataset(&cfg.zoo.dataset, Path::new(""))?;
    let staged = Staged::begin(&opts.stage(ZOO_DIR), opts.force)?;
    let zoo = build_zoo(&cfg.zoo, &data)?;
    save_zoo(staged.path(), &zoo)?;
    let mut warnings = Vec::new();
    for r in &zoo.manifest.records {
        if let Some(e) = &r.error {
            warnings.push(format!("model {}: training failed: {e}", r.model_id));
        } else if r.diverged {
            warnings.push(format!("model {}: training diverged", r.model_id));
        }
    }
    let seeds = [
        ("sampling_seed", cfg.zoo.sampling_seed),
        ("train_seed", cfg.zoo.train_seed),
        ("generation_seed", cfg.zoo.dataset.generation_seed),
    ];
    staged.commit(run_manifest(
        "zoo-build",
        &h.zoo,
        None,
        &seeds,
        &cfg.zoo,
        warnings,
    ))
}

pub fn cmd_explain(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunManifest> {
    cfg.explain.validate()?;
    let h = StageHashes::of(cfg);
    let zoo_dir = opts.stage(ZOO_DIR);
    require_stage(&zoo_dir, "zoo", "zoo-build", &h.zoo)?;
    let zoo = load_zoo(&zoo_dir)?;
    let data = load_dataset(&zoo.manifest.config.dataset, Path::new(""))?;
    let staged = Staged::begin(&opts.stage(EXPLANATIONS_DIR), opts.force)?;
    let index = explain_zoo(staged.path(), &zoo, &data, &cfg.explain)?;
    let warnings = index
        .excluded
        .iter()
        .map(|e| format!("model {} excluded: {}", e.model_id, e.reason))
        .collect();
    let seeds: Vec<(&str, u64)> = cfg
        .explain
        .methods
        .iter()
        .filter_map(|m| match m {
            hpcausal_core::explain::ExplainMethod::SmoothGrad { noise_seed, .. } => {
                Some(("smoothgrad_noise_seed", *noise_seed))
            }
            _ => None,
        })
        .collect();
    staged.commit(run_manifest(
        "explain",
        &h.explain,
        Some(&h.zoo),
        &seeds,
        &cfg.explain,
        warnings,
    ))
}

/// Models with outputs as estimation units, with their performance buckets.
pub fn units(
    manifest: &ZooManifest,
    index: &ExplanationIndex,
    cfg: &PipelineConfig,
) -> Result<Vec<Unit>> {
    let by_id: HashMap<u64, usize> = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.model_id, i))
        .collect();
    let records: Vec<_> = index
        .models
        .iter()
        .map(|id| {
            by_id.get(id).map(|&i| &manifest.records[i]).ok_or_else(|| {
                Error::Config(format!(
                    "explanation store lists model {id}, which is not in the zoo"
                ))
            })
        })
        .collect::<Result<_>>()?;
    let acc: Vec<f64> = records.iter().map(|r| r.test_accuracy).collect();
    let buckets = bucket_models(&acc, &cfg.effects.buckets)?;
    Ok(records
        .iter()
        .zip(buckets)
        .map(|(r, b)| Unit {
            model_id: r.model_id,
            hparams: r.hparams.clone(),
            bucket: Some(b),
        })
        .collect())
}

pub fn scopes(cfg: &PipelineConfig) -> Vec<Scope> {
    let mut s = Vec::new();
    if cfg.effects.global {
        s.push(Scope::Global);
    }
    if cfg.effects.within_buckets {
        s.extend((0..cfg.effects.buckets.n_buckets()).map(Scope::WithinBucket));
    }
    s
}

fn scope_label(scope: Scope) -> String {
    match scope {
        Scope::Global => bucket_label(None),
        Scope::WithinBucket(b) => bucket_label(Some(b)),
    }
}

const PREDICTION: &str = "prediction";
const EXPLANATION: &str = "explanation";
const NO_METHOD: &str = "none";

fn control_label(cfg: &PipelineConfig, key: HparamKey) -> String {
    match &cfg.effects.control {
        crate::config::ControlChoice::Complement => "complement".into(),
        crate::config::ControlChoice::Baseline(map) => {
            let level = key.parse_level(&map[&key]).expect("validated baseline");
            format!("baseline:{}", level.label())
        }
    }
}

/// Kernelized effects of every configured query on one outcome table.
fn outcome_effects<O: hpcausal_core::causal::Outcomes + Sync>(
    cfg: &PipelineConfig,
    units: &[Unit],
    table: &O,
    n_instances: usize,
    scopes: &[Scope],
) -> Result<Vec<(Kernel, Vec<LevelEffects>, Vec<String>)>> {
    let groups = cfg.effects.control_groups()?;
    let instances: Vec<usize> = (0..n_instances).collect();
    cfg.effects
        .kernels
        .par_iter()
        .map(|&kernel| {
            let mut effects = Vec::new();
            let mut warnings = Vec::new();
            for (mode, keys) in &groups {
                let spec = EffectSpec {
                    keys,
                    control: *mode,
                    scopes,
                    marginalize: &cfg.effects.marginalize,
                };
                let report = kernel_level_effects(units, table, &instances, kernel, &spec)?;
                effects.extend(
                    report
                        .results
                        .into_iter()
                        .filter(|l| cfg.effects.wants_level(l.level.key, l.level.label())),
                );
                warnings.extend(report.warnings);
            }
            Ok((kernel, effects, warnings))
        })
        .collect()
}

pub fn cmd_effects(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunManifest> {
    cfg.effects.validate()?;
    let h = StageHashes::of(cfg);
    let zoo_dir = opts.stage(ZOO_DIR);
    let ex_dir = opts.stage(EXPLANATIONS_DIR);
    require_stage(&zoo_dir, "zoo", "zoo-build", &h.zoo)?;
    require_stage(&ex_dir, "explanation store", "explain", &h.explain)?;
    let manifest = load_manifest(&zoo_dir)?;
    let index = load_index(&ex_dir)?;
    let units = units(&manifest, &index, cfg)?;
    let scopes = scopes(cfg);
    let staged = Staged::begin(&opts.stage(EFFECTS_DIR), opts.force)?;

    let buckets: Vec<BucketRecord> = units
        .iter()
        .zip(
            index
                .models
                .iter()
                .map(|id| &manifest.records[*id as usize]),
        )
        .map(|(u, r)| {
            let b = u.bucket.expect("bucketed");
            BucketRecord {
                model_id: u.model_id,
                test_accuracy: r.test_accuracy,
                bucket: b,
                percentiles: cfg.effects.buckets.label(b),
            }
        })
        .collect();
    write_csv(&staged.join(BUCKETS_CSV), &buckets)?;

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut outcomes: Vec<(&str, &str)> = vec![(PREDICTION, NO_METHOD)];
    outcomes.extend(index.methods.iter().map(|m| (EXPLANATION, m.as_str())));
    for (kind, method) in outcomes {
        let table = if kind == PREDICTION {
            load_predictions(&ex_dir, &index)?
        } else {
            load_maps(&ex_dir, &index, method)?
        };
        for (kernel, effects, warns) in
            outcome_effects(cfg, &units, &table, index.probes.len(), &scopes)?
        {
            let tag = format!("{kind} {method} / {kernel}");
            warnings.extend(warns.into_iter().map(|w| format!("{tag}: {w}")));
            for l in effects {
                let control = control_label(cfg, l.level.key);
                for (i, &v) in l.values.iter().enumerate() {
                    if !v.is_finite() {
                        continue;
                    }
                    rows.push(EffectRecord {
                        instance_id: index.probes[i],
                        hparam_key: l.level.key.to_string(),
                        level: l.level.label().into(),
                        control_mode: control.clone(),
                        bucket: scope_label(l.scope),
                        outcome_kind: kind.into(),
                        method: method.into(),
                        kernel: kernel.to_string(),
                        value: v,
                    });
                }
            }
        }
    }
    if rows.is_empty() {
        warnings.push("no estimable effects: every query was skipped".into());
    }
    write_csv(&staged.join(EFFECTS_CSV), &rows)?;
    staged.commit(run_manifest(
        "effects",
        &h.effects,
        Some(&h.explain),
        &[],
        &cfg.effects,
        warnings,
    ))
}

/// Effect table regrouped as `(outcome, kernel) → per-level series`.
struct EffectSeries {
    kernels: Vec<Kernel>,
    /// Keyed by method (or `prediction`), then kernel position.
    series: BTreeMap<String, Vec<Vec<LevelEffects>>>,
}

impl EffectSeries {
    fn get(&self, outcome: &str, kernel: usize) -> &[LevelEffects] {
        self.series.get(outcome).map_or(&[], |v| &v[kernel])
    }
}

fn parse_scope(s: &str, path: &Path) -> Result<Scope> {
    if s == "global" {
        return Ok(Scope::Global);
    }
    s.parse()
        .map(Scope::WithinBucket)
        .map_err(|_| Error::format(path, format!("bad bucket `{s}`")))
}

fn regroup(
    rows: &[EffectRecord],
    cfg: &PipelineConfig,
    probes: &[usize],
    path: &Path,
) -> Result<EffectSeries> {
    let kernels = cfg.effects.kernels.clone();
    let kernel_names: Vec<String> = kernels.iter().map(|k| k.to_string()).collect();
    let position: HashMap<usize, usize> = probes.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut cells: BTreeMap<
        (String, usize),
        BTreeMap<(u8, usize, hpcausal_core::hparams::Level), (Scope, Vec<f64>)>,
    > = BTreeMap::new();
    for r in rows {
        let bad = |msg: String| Error::format(path, msg);
        let k = kernel_names
            .iter()
            .position(|n| *n == r.kernel)
            .ok_or_else(|| bad(format!("kernel `{}` not in the config", r.kernel)))?;
        let key: HparamKey = r
            .hparam_key
            .parse()
            .map_err(|e: hpcausal_core::Error| bad(e.to_string()))?;
        let level = key.parse_level(&r.level).map_err(|e| bad(e.to_string()))?;
        let scope = parse_scope(&r.bucket, path)?;
        let i = *position
            .get(&r.instance_id)
            .ok_or_else(|| bad(format!("instance {} is not a probe", r.instance_id)))?;
        let outcome = if r.outcome_kind == PREDICTION {
            PREDICTION.to_string()
        } else {
            r.method.clone()
        };
        let order = match scope {
            Scope::Global => (0, 0),
            Scope::WithinBucket(b) => (1, b),
        };
        let entry = cells
            .entry((outcome, k))
            .or_default()
            .entry((order.0, order.1, level))
            .or_insert_with(|| (scope, vec![f64::NAN; probes.len()]));
        entry.1[i] = r.value;
    }
    let mut series: BTreeMap<String, Vec<Vec<LevelEffects>>> = BTreeMap::new();
    for ((outcome, k), levels) in cells {
        let v = series
            .entry(outcome)
            .or_insert_with(|| vec![Vec::new(); kernels.len()]);
        v[k] = levels
            .into_iter()
            .map(|((_, _, level), (scope, values))| LevelEffects {
                scope,
                level,
                values,
                diagnostics: Diagnostics::default(),
            })
            .collect();
    }
    Ok(EffectSeries { kernels, series })
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn cmd_analyze(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunManifest> {
    cfg.analyze.validate()?;
    cfg.effects.validate()?;
    let h = StageHashes::of(cfg);
    let zoo_dir = opts.stage(ZOO_DIR);
    let ex_dir = opts.stage(EXPLANATIONS_DIR);
    let eff_dir = opts.stage(EFFECTS_DIR);
    require_stage(&eff_dir, "effect tables", "effects", &h.effects)?;
    require_stage(&ex_dir, "explanation store", "explain", &h.explain)?;
    require_stage(&zoo_dir, "zoo", "zoo-build", &h.zoo)?;
    let eff_path = eff_dir.join(EFFECTS_CSV);
    let rows: Vec<EffectRecord> = read_csv(&eff_path)?;
    if rows.is_empty() {
        return Err(Error::format(
            &eff_path,
            "effect table is empty; nothing to analyze",
        ));
    }
    let index = load_index(&ex_dir)?;
    let manifest = load_manifest(&zoo_dir)?;
    let units = units(&manifest, &index, cfg)?;
    let scopes = scopes(cfg);
    let series = regroup(&rows, cfg, &index.probes, &eff_path)?;
    let keys = &cfg.effects.keys;
    let methods = &index.methods;
    let boot = &cfg.analyze.bootstrap;
    let mut warnings = Vec::new();

    // correlation of ITE_Y with ITE_E per (method, key, kernel) over scopes
    let n_kernels = series.kernels.len();
    let cells: Vec<(usize, HparamKey, usize)> = (0..methods.len())
        .flat_map(|m| {
            keys.iter()
                .flat_map(move |&k| (0..n_kernels).map(move |j| (m, k, j)))
        })
        .collect();
    let reports = cells
        .par_iter()
        .map(|&(m, key, j)| {
            let label = CellLabel {
                method: &methods[m],
                key,
                kernel: series.kernels[j],
            };
            correlate_effects(
                label,
                series.get(PREDICTION, j),
                series.get(&methods[m], j),
                &scopes,
                boot,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut correlation = Vec::new();
    for r in reports {
        correlation.extend(r.results.iter().map(CorrelationRecord::from));
        warnings.extend(r.warnings.into_iter().map(|w| format!("correlation: {w}")));
    }

    // kernel sensitivity per (method, scope), pooled and per key
    let mut sensitivity: Vec<SensitivityRecord> = Vec::new();
    if series.kernels.len() >= 2 {
        let mut key_options: Vec<Option<HparamKey>> = vec![None];
        key_options.extend(keys.iter().map(|&k| Some(k)));
        for method in methods {
            let per_kernel: Vec<(Kernel, Vec<LevelEffects>)> = series
                .kernels
                .iter()
                .enumerate()
                .map(|(j, &k)| (k, series.get(method, j).to_vec()))
                .collect();
            for &scope in &scopes {
                for &key in &key_options {
                    match kernel_sensitivity(method, &per_kernel, scope, key) {
                        Ok(m) => sensitivity.extend(sensitivity_records(&m)),
                        Err(
                            e @ (hpcausal_core::Error::Estimation(_)
                            | hpcausal_core::Error::Input(_)),
                        ) => warnings.push(format!(
                            "sensitivity: {} / {method} / {}: {e}",
                            scope_label(scope),
                            key.map_or("all".into(), |k| k.to_string())
                        )),
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
    }

    // mediation on the raw outcomes
    let predictions = load_predictions(&ex_dir, &index)?;
    let instances: Vec<usize> = (0..index.probes.len()).collect();
    let groups = cfg.effects.control_groups()?;
    let mut mediation = Vec::new();
    for method in methods {
        let maps = load_maps(&ex_dir, &index, method)?;
        for (mode, gkeys) in &groups {
            let spec = EffectSpec {
                keys: gkeys,
                control: *mode,
                scopes: &scopes,
                marginalize: &cfg.effects.marginalize,
            };
            let r = mediation_permutation(
                method,
                cfg.analyze.kernel,
                &units,
                &predictions,
                &maps,
                &instances,
                &spec,
                &cfg.analyze.mediation,
            )?;
            mediation.extend(r.results.iter().map(MediationRecord::from));
            warnings.extend(r.warnings.into_iter().map(|w| format!("mediation: {w}")));
        }
    }

    let staged = Staged::begin(&opts.stage(ANALYSIS_DIR), opts.force)?;
    write_csv(&staged.join("correlation.csv"), &correlation)?;
    write_csv(&staged.join("mediation.csv"), &mediation)?;
    write_csv(&staged.join("kernel_sensitivity.csv"), &sensitivity)?;

    let plot_kernel = series
        .kernels
        .iter()
        .position(|k| *k == cfg.analyze.kernel)
        .unwrap_or(0);
    let kname = series.kernels[plot_kernel].to_string();
    let figs = staged.subdir("figures")?;
    for method in methods {
        let y = series.get(PREDICTION, plot_kernel);
        let e = series.get(method, plot_kernel);
        for &key in keys {
            let panels: Vec<Panel> = scopes
                .iter()
                .map(|&s| {
                    let (xs, ys) = pair_points(y, e, s, key);
                    Panel {
                        title: scope_label(s),
                        xs,
                        ys,
                    }
                })
                .filter(|p| !p.xs.is_empty())
                .collect();
            if panels.is_empty() {
                continue;
            }
            let svg = scatter_svg(
                &format!("{method} / {key} ({kname})"),
                "ITE_Y",
                "ITE_E",
                &panels,
            );
            write_text(
                &figs.join(format!("scatter_{}_{}.svg", file_safe(method), key)),
                &svg,
            )?;
        }
        let groups: Vec<(String, Vec<f64>)> = scopes
            .iter()
            .map(|&s| {
                let v = e
                    .iter()
                    .filter(|l| l.scope == s)
                    .flat_map(|l| l.values.iter().copied().filter(|v| v.is_finite()))
                    .collect();
                (scope_label(s), v)
            })
            .collect();
        let svg = violin_svg(
            &format!("ITE_E distribution: {method} ({kname})"),
            "ITE_E",
            &groups,
        );
        write_text(
            &figs.join(format!("violin_{}.svg", file_safe(method))),
            &svg,
        )?;
    }

    let seeds = [
        ("bootstrap_seed", cfg.analyze.bootstrap.seed),
        ("permutation_seed", cfg.analyze.mediation.permutation_seed),
    ];
    staged.commit(run_manifest(
        "analyze",
        &h.analyze,
        Some(&h.effects),
        &seeds,
        &cfg.analyze,
        warnings,
    ))
}

/// Runs all four stages in order.
pub fn cmd_reproduce(cfg: &PipelineConfig, opts: &RunOptions) -> Result<Vec<RunManifest>> {
    cfg.validate()?;
    Ok(vec![
        cmd_zoo_build(cfg, opts)?,
        cmd_explain(cfg, opts)?,
        cmd_effects(cfg, opts)?,
        cmd_analyze(cfg, opts)?,
    ])
}
