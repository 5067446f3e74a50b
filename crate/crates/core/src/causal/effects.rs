//! Individual treatment effects of hyperparameters on model outcomes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::kernel::{kernel_eval, Kernel};
use crate::error::{Error, Result};
use crate::hparams::{HparamKey, HyperparamVector, Level};

/// One zoo member as seen by the estimators.
#[derive(Clone, Debug, PartialEq)]
pub struct Unit {
    pub model_id: u64,
    pub hparams: HyperparamVector,
    pub bucket: Option<usize>,
}

/// Outcome vectors addressed by unit position and instance position.
pub trait Outcomes {
    fn dim(&self) -> usize;
    fn n_units(&self) -> usize;
    fn n_instances(&self) -> usize;
    fn outcome(&self, unit: usize, instance: usize) -> &[f64];
}

/// Dense `[unit][instance][dim]` outcome storage.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeTable {
    n_units: usize,
    n_instances: usize,
    dim: usize,
    values: Vec<f64>,
}

impl OutcomeTable {
    pub fn new(n_units: usize, n_instances: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_units * n_instances * dim || dim == 0 {
            return Err(Error::Input(format!(
                "{} outcome values do not fit {n_units} units × {n_instances} instances × {dim}",
                values.len()
            )));
        }
        Ok(Self {
            n_units,
            n_instances,
            dim,
            values,
        })
    }

    pub fn from_fn(
        n_units: usize,
        n_instances: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_units * n_instances * dim);
        for u in 0..n_units {
            for i in 0..n_instances {
                let v = f(u, i);
                if v.len() != dim {
                    return Err(Error::Input(format!(
                        "outcome ({u}, {i}) has dimension {}, expected {dim}",
                        v.len()
                    )));
                }
                values.extend_from_slice(&v);
            }
        }
        Self::new(n_units, n_instances, dim, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Outcomes for OutcomeTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_units(&self) -> usize {
        self.n_units
    }

    fn n_instances(&self) -> usize {
        self.n_instances
    }

    fn outcome(&self, unit: usize, instance: usize) -> &[f64] {
        let start = (unit * self.n_instances + instance) * self.dim;
        &self.values[start..start + self.dim]
    }
}

/// Outcomes re-paired across units: unit `u` at instance `i` reads the
/// outcome of unit `perm[i][u]`.
pub struct Repaired<'a, O: Outcomes> {
    pub base: &'a O,
    pub perm: &'a [Vec<usize>],
}

impl<O: Outcomes> Outcomes for Repaired<'_, O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn n_units(&self) -> usize {
        self.base.n_units()
    }

    fn n_instances(&self) -> usize {
        self.base.n_instances()
    }

    fn outcome(&self, unit: usize, instance: usize) -> &[f64] {
        self.base.outcome(self.perm[instance][unit], instance)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "level", rename_all = "snake_case")]
pub enum ControlMode {
    /// Every other level of the key.
    Complement,
    /// A single baseline level (by label).
    FixedBaseline(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scope", content = "bucket", rename_all = "snake_case")]
pub enum Scope {
    Global,
    WithinBucket(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub mode: ControlMode,
    pub scope: Scope,
}

impl ControlSpec {
    pub const fn complement() -> Self {
        Self {
            mode: ControlMode::Complement,
            scope: Scope::Global,
        }
    }

    pub const fn within_bucket(self, bucket: usize) -> Self {
        Self {
            mode: self.mode,
            scope: Scope::WithinBucket(bucket),
        }
    }

    pub fn mode_label(&self, key: HparamKey) -> String {
        match self.mode {
            ControlMode::Complement => "complement".into(),
            ControlMode::FixedBaseline(m) => format!("baseline:{}", key.level_labels()[m]),
        }
    }
}

/// Effect of `key = level` against `control`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreatmentQuery {
    pub level: Level,
    pub control: ControlSpec,
}

impl TreatmentQuery {
    pub fn new(level: Level, control: ControlSpec) -> Result<Self> {
        if let ControlMode::FixedBaseline(m) = control.mode {
            if m == level.index {
                return Err(Error::Config(format!(
                    "baseline level equals the treated level {level}"
                )));
            }
            if m >= level.key.level_labels().len() {
                return Err(Error::Config(format!(
                    "baseline level {m} does not exist for {}",
                    level.key
                )));
            }
        }
        Ok(Self { level, control })
    }

    pub fn key(&self) -> HparamKey {
        self.level.key
    }
}

/// Treated and control unit positions, each sorted by model id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Groups {
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
}

fn sort_by_id(units: &[Unit], idx: &mut [usize]) {
    idx.sort_by_key(|&i| (units[i].model_id, i));
}

/// Splits the in-scope units into treated (`key = level`) and control groups.
pub fn select_control(query: &TreatmentQuery, units: &[Unit]) -> Result<Groups> {
    let key = query.key();
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for (i, u) in units.iter().enumerate() {
        if let Scope::WithinBucket(b) = query.control.scope {
            match u.bucket {
                Some(ub) if ub == b => {}
                Some(_) => continue,
                None => {
                    return Err(Error::Config(format!(
                        "model {} has no bucket assignment",
                        u.model_id
                    )));
                }
            }
        }
        let level = u.hparams.level(key)?;
        if level == query.level {
            treated.push(i);
        } else {
            match query.control.mode {
                ControlMode::Complement => control.push(i),
                ControlMode::FixedBaseline(m) if level.index == m => control.push(i),
                ControlMode::FixedBaseline(_) => {}
            }
        }
    }
    let scope = match query.control.scope {
        Scope::Global => String::from("all models"),
        Scope::WithinBucket(b) => format!("bucket {b}"),
    };
    if treated.is_empty() {
        return Err(Error::Estimation(format!(
            "treatment group {} is empty in {scope}",
            query.level
        )));
    }
    if control.is_empty() {
        return Err(Error::Estimation(format!(
            "control group ({}) for {} is empty in {scope}",
            query.control.mode_label(key),
            query.level
        )));
    }
    sort_by_id(units, &mut treated);
    sort_by_id(units, &mut control);
    Ok(Groups { treated, control })
}

/// How two outcomes are contrasted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Contrast {
    /// Elementwise `Y_t − Y_c`.
    Difference,
    /// Squared RKHS distance under a kernel.
    Kernel(Kernel),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Effect {
    Map(Vec<f64>),
    Scalar(f64),
}

impl Effect {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Effect::Scalar(v) => Some(*v),
            Effect::Map(_) => None,
        }
    }

    pub fn map(&self) -> Option<&[f64]> {
        match self {
            Effect::Map(m) => Some(m),
            Effect::Scalar(_) => None,
        }
    }
}

/// Counters for pairs that needed special handling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub pairs: usize,
    /// Kernelized distances that came out negative and were clamped to 0.
    pub clamped: usize,
    /// Pairs the kernel is undefined on (cosine with a zero outcome).
    pub skipped: usize,
}

impl Diagnostics {
    pub fn merge(&mut self, other: Diagnostics) {
        self.pairs += other.pairs;
        self.clamped += other.clamped;
        self.skipped += other.skipped;
    }
}

/// Kernel values of each unit with itself; `None` where the kernel is undefined.
fn self_kernels<O: Outcomes>(
    kernel: &Kernel,
    outcomes: &O,
    instance: usize,
    idx: &[usize],
) -> Result<Vec<Option<f64>>> {
    idx.iter()
        .map(|&u| {
            let y = outcomes.outcome(u, instance);
            match kernel_eval(kernel, y, y) {
                Ok(v) => Ok(Some(v)),
                Err(Error::Domain(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Mean contrast over every (treated, control) pair.
pub fn cross_pair_effect<O: Outcomes>(
    outcomes: &O,
    instance: usize,
    treated: &[usize],
    control: &[usize],
    contrast: &Contrast,
) -> Result<(Effect, Diagnostics)> {
    if treated.is_empty() || control.is_empty() {
        return Err(Error::Estimation("cannot contrast an empty group".into()));
    }
    let mut diag = Diagnostics::default();
    match contrast {
        Contrast::Difference => {
            let mut acc = vec![0.0; outcomes.dim()];
            for &t in treated {
                let yt = outcomes.outcome(t, instance);
                for &c in control {
                    let yc = outcomes.outcome(c, instance);
                    for ((a, x), y) in acc.iter_mut().zip(yt).zip(yc) {
                        *a += x - y;
                    }
                }
            }
            diag.pairs = treated.len() * control.len();
            let n = diag.pairs as f64;
            Ok((Effect::Map(acc.into_iter().map(|a| a / n).collect()), diag))
        }
        Contrast::Kernel(kernel) => {
            let kt = self_kernels(kernel, outcomes, instance, treated)?;
            let kc = self_kernels(kernel, outcomes, instance, control)?;
            let mut sum = 0.0;
            for (&t, st) in treated.iter().zip(&kt) {
                let yt = outcomes.outcome(t, instance);
                for (&c, sc) in control.iter().zip(&kc) {
                    let (Some(st), Some(sc)) = (st, sc) else {
                        diag.skipped += 1;
                        continue;
                    };
                    let k = kernel_eval(kernel, yt, outcomes.outcome(c, instance))?;
                    let d = (st + sc) - 2.0 * k;
                    if d < 0.0 {
                        diag.clamped += 1;
                    } else {
                        sum += d;
                    }
                    diag.pairs += 1;
                }
            }
            if diag.pairs == 0 {
                return Err(Error::Estimation(format!(
                    "{kernel} kernel is undefined on every pair (all {} skipped)",
                    diag.skipped
                )));
            }
            Ok((Effect::Scalar(sum / diag.pairs as f64), diag))
        }
    }
}

/// `Y_h(x) − Y_h'(x)` (or its kernelized distance) for two exact
/// hyperparameter vectors. With several matching models the one with the
/// smallest id represents the vector.
pub fn ite_binary<O: Outcomes>(
    units: &[Unit],
    outcomes: &O,
    instance: usize,
    h: &HyperparamVector,
    h_prime: &HyperparamVector,
    contrast: &Contrast,
) -> Result<Effect> {
    let find = |target: &HyperparamVector, name: &str| {
        units
            .iter()
            .enumerate()
            .filter(|(_, u)| &u.hparams == target)
            .min_by_key(|(_, u)| u.model_id)
            .map(|(i, _)| i)
            .ok_or_else(|| {
                Error::Estimation(format!("no model trained with the {name} hyperparameters"))
            })
    };
    let t = find(h, "treatment")?;
    let c = find(h_prime, "control")?;
    Ok(cross_pair_effect(outcomes, instance, &[t], &[c], contrast)?.0)
}

/// Effect of `key = n` against the control levels, averaged over every
/// (treated model, control model) pair.
pub fn ite_nonbinary<O: Outcomes>(
    units: &[Unit],
    outcomes: &O,
    instance: usize,
    query: &TreatmentQuery,
    contrast: &Contrast,
) -> Result<(Effect, Diagnostics)> {
    let groups = select_control(query, units)?;
    cross_pair_effect(
        outcomes,
        instance,
        &groups.treated,
        &groups.control,
        contrast,
    )
}

/// Outer weight of each matched context.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextWeighting {
    /// Proportional to the number of models in the context.
    #[default]
    Empirical,
    /// Every context counts once.
    Uniform,
}

/// How the expectation over the remaining hyperparameters is taken.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Marginalization {
    /// Average every treated/control pair. Independent sampling makes the
    /// zoo's joint distribution of the other keys the product of marginals.
    #[default]
    Empirical,
    /// Contrast only models that agree on the discretized `context` keys
    /// (all other keys when empty), then average over contexts.
    Matched {
        #[serde(default)]
        context: Vec<HparamKey>,
        #[serde(default)]
        weighting: ContextWeighting,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalizeConfig {
    pub min_group_size: usize,
    #[serde(default)]
    pub marginalization: Marginalization,
}

impl Default for MarginalizeConfig {
    fn default() -> Self {
        Self {
            min_group_size: 5,
            marginalization: Marginalization::Empirical,
        }
    }
}

fn stratum_report(units: &[Unit], key: HparamKey, scope: Scope) -> Result<BTreeMap<Level, usize>> {
    let mut sizes = BTreeMap::new();
    for u in units {
        if let Scope::WithinBucket(b) = scope {
            if u.bucket != Some(b) {
                continue;
            }
        }
        *sizes.entry(u.hparams.level(key)?).or_insert(0) += 1;
    }
    Ok(sizes)
}

fn format_strata(sizes: &BTreeMap<Level, usize>) -> String {
    let parts: Vec<String> = sizes
        .iter()
        .map(|(l, n)| format!("{}: {n}", l.label()))
        .collect();
    parts.join(", ")
}

/// Treated and control models whose pairs are contrasted together.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub weight: f64,
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
}

/// The pairing behind one marginalized query: a single block of all
/// treated × control pairs, or one block per matched context.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub blocks: Vec<Block>,
}

impl Design {
    /// Validates group sizes and builds the blocks for `query`.
    pub fn new(units: &[Unit], query: &TreatmentQuery, cfg: &MarginalizeConfig) -> Result<Self> {
        let key = query.key();
        let sizes = stratum_report(units, key, query.control.scope)?;
        if sizes.len() < 2 {
            return Err(Error::Estimation(format!(
                "{key} takes a single level in scope ({}); no control exists",
                format_strata(&sizes)
            )));
        }
        let groups = select_control(query, units)?;
        if groups.treated.len() < cfg.min_group_size || groups.control.len() < cfg.min_group_size {
            return Err(Error::Estimation(format!(
                "strata for {key} below min_group_size {} (treated {}, control {}; per level: {})",
                cfg.min_group_size,
                groups.treated.len(),
                groups.control.len(),
                format_strata(&sizes)
            )));
        }
        match &cfg.marginalization {
            Marginalization::Empirical => Ok(Self {
                blocks: vec![Block {
                    weight: 1.0,
                    treated: groups.treated,
                    control: groups.control,
                }],
            }),
            Marginalization::Matched { context, weighting } => {
                let keys: Vec<HparamKey> = if context.is_empty() {
                    HparamKey::ALL
                        .iter()
                        .copied()
                        .filter(|&k| k != key)
                        .collect()
                } else if context.contains(&key) {
                    return Err(Error::Config(format!(
                        "context keys may not include the treated key {key}"
                    )));
                } else {
                    context.clone()
                };
                matched_blocks(units, &groups, &keys, *weighting)
            }
        }
    }

    /// Effect at one instance, evaluating outcomes directly.
    pub fn effect<O: Outcomes>(
        &self,
        outcomes: &O,
        instance: usize,
        contrast: &Contrast,
    ) -> Result<(Effect, Diagnostics)> {
        combine(self.blocks.iter().map(|b| {
            (
                b.weight,
                cross_pair_effect(outcomes, instance, &b.treated, &b.control, contrast),
            )
        }))
    }

    /// Kernelized effect at one instance from precomputed kernel values.
    /// With `perm`, unit `u` takes the outcome of unit `perm[u]`.
    pub fn gram_effect(&self, gram: &Gram, perm: Option<&[usize]>) -> Result<(f64, Diagnostics)> {
        let (effect, diag) = combine(
            self.blocks
                .iter()
                .map(|b| (b.weight, gram.cross_pair(&b.treated, &b.control, perm))),
        )?;
        Ok((effect.scalar().unwrap_or(f64::NAN), diag))
    }
}

fn matched_blocks(
    units: &[Unit],
    groups: &Groups,
    keys: &[HparamKey],
    weighting: ContextWeighting,
) -> Result<Design> {
    let context_of = |u: usize| -> Result<Vec<Level>> {
        keys.iter().map(|&k| units[u].hparams.level(k)).collect()
    };
    let mut contexts: BTreeMap<Vec<Level>, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for &t in &groups.treated {
        contexts.entry(context_of(t)?).or_default().0.push(t);
    }
    for &c in &groups.control {
        contexts.entry(context_of(c)?).or_default().1.push(c);
    }
    let blocks: Vec<Block> = contexts
        .into_values()
        .filter(|(t, c)| !t.is_empty() && !c.is_empty())
        .map(|(treated, control)| {
            let weight = match weighting {
                ContextWeighting::Empirical => (treated.len() + control.len()) as f64,
                ContextWeighting::Uniform => 1.0,
            };
            Block {
                weight,
                treated,
                control,
            }
        })
        .collect();
    if blocks.is_empty() {
        return Err(Error::Estimation(
            "no context of the remaining hyperparameters holds both a treated and a control model"
                .into(),
        ));
    }
    Ok(Design { blocks })
}

/// Weighted mean of block effects; blocks the contrast cannot evaluate are dropped.
fn combine(
    blocks: impl Iterator<Item = (f64, Result<(Effect, Diagnostics)>)>,
) -> Result<(Effect, Diagnostics)> {
    let mut diag = Diagnostics::default();
    let mut total_weight = 0.0;
    let mut map_acc: Option<Vec<f64>> = None;
    let mut scalar_acc = 0.0;
    let mut last_err = None;
    for (w, r) in blocks {
        let (effect, d) = match r {
            Ok(r) => r,
            Err(Error::Estimation(m)) => {
                last_err = Some(m);
                continue;
            }
            Err(e) => return Err(e),
        };
        diag.merge(d);
        total_weight += w;
        match effect {
            Effect::Scalar(v) => scalar_acc += w * v,
            Effect::Map(m) => {
                let acc = map_acc.get_or_insert_with(|| vec![0.0; m.len()]);
                for (a, v) in acc.iter_mut().zip(&m) {
                    *a += w * v;
                }
            }
        }
    }
    if total_weight == 0.0 {
        return Err(Error::Estimation(
            last_err.unwrap_or_else(|| "no block could be evaluated".into()),
        ));
    }
    let effect = match map_acc {
        Some(m) => Effect::Map(m.into_iter().map(|a| a / total_weight).collect()),
        None => Effect::Scalar(scalar_acc / total_weight),
    };
    Ok((effect, diag))
}

/// Effect of `key_i = n` against `key_i ≠ n` with the other hyperparameters
/// marginalized out.
pub fn ite_marginalized<O: Outcomes>(
    units: &[Unit],
    outcomes: &O,
    instance: usize,
    query: &TreatmentQuery,
    contrast: &Contrast,
    cfg: &MarginalizeConfig,
) -> Result<(Effect, Diagnostics)> {
    Design::new(units, query, cfg)?.effect(outcomes, instance, contrast)
}

/// Kernel values between the outcomes of unit pairs at one instance.
/// Entries involving an outcome the kernel is undefined on are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Gram {
    n: usize,
    values: Vec<f64>,
}

impl Gram {
    /// Fills the entries among `members` (all units when `None`).
    pub fn compute<O: Outcomes>(
        outcomes: &O,
        instance: usize,
        kernel: &Kernel,
        members: Option<&[usize]>,
    ) -> Result<Self> {
        let n = outcomes.n_units();
        let all: Vec<usize>;
        let members = match members {
            Some(m) => m,
            None => {
                all = (0..n).collect();
                &all
            }
        };
        let mut values = vec![f64::NAN; n * n];
        for (i, &u) in members.iter().enumerate() {
            let yu = outcomes.outcome(u, instance);
            for &v in &members[i..] {
                let k = match kernel_eval(kernel, yu, outcomes.outcome(v, instance)) {
                    Ok(k) => k,
                    Err(Error::Domain(_)) => f64::NAN,
                    Err(e) => return Err(e),
                };
                values[u * n + v] = k;
                values[v * n + u] = k;
            }
        }
        Ok(Self { n, values })
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }

    fn cross_pair(
        &self,
        treated: &[usize],
        control: &[usize],
        perm: Option<&[usize]>,
    ) -> Result<(Effect, Diagnostics)> {
        let map = |u: usize| perm.map_or(u, |p| p[u]);
        let mut diag = Diagnostics::default();
        let mut sum = 0.0;
        for &t in treated {
            let t = map(t);
            let st = self.get(t, t);
            for &c in control {
                let c = map(c);
                let sc = self.get(c, c);
                if st.is_nan() || sc.is_nan() {
                    diag.skipped += 1;
                    continue;
                }
                let d = (st + sc) - 2.0 * self.get(t, c);
                if d < 0.0 {
                    diag.clamped += 1;
                } else {
                    sum += d;
                }
                diag.pairs += 1;
            }
        }
        if diag.pairs == 0 {
            return Err(Error::Estimation(format!(
                "kernel is undefined on every pair (all {} skipped)",
                diag.skipped
            )));
        }
        Ok((Effect::Scalar(sum / diag.pairs as f64), diag))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffectRow {
    pub instance: usize,
    pub effect: Effect,
}

/// Per-instance effects of one query on one outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectTable {
    pub query: TreatmentQuery,
    pub contrast: Contrast,
    pub rows: Vec<EffectRow>,
    pub diagnostics: Diagnostics,
}

impl EffectTable {
    /// Average over instances (the ATE, or a CATE for a subset of instances).
    pub fn average(&self) -> Option<Effect> {
        let n = self.rows.len() as f64;
        let first = self.rows.first()?;
        Some(match &first.effect {
            Effect::Scalar(_) => Effect::Scalar(
                self.rows
                    .iter()
                    .filter_map(|r| r.effect.scalar())
                    .sum::<f64>()
                    / n,
            ),
            Effect::Map(m) => {
                let mut acc = vec![0.0; m.len()];
                for r in &self.rows {
                    for (a, v) in acc.iter_mut().zip(r.effect.map().unwrap_or(&[])) {
                        *a += v;
                    }
                }
                Effect::Map(acc.into_iter().map(|a| a / n).collect())
            }
        })
    }
}

/// Runs [`ite_marginalized`] for each listed instance.
pub fn effect_table<O: Outcomes>(
    units: &[Unit],
    outcomes: &O,
    instances: &[usize],
    query: &TreatmentQuery,
    contrast: &Contrast,
    cfg: &MarginalizeConfig,
) -> Result<EffectTable> {
    let mut diagnostics = Diagnostics::default();
    let mut rows = Vec::with_capacity(instances.len());
    for &instance in instances {
        let (effect, d) = ite_marginalized(units, outcomes, instance, query, contrast, cfg)?;
        diagnostics.merge(d);
        rows.push(EffectRow { instance, effect });
    }
    Ok(EffectTable {
        query: *query,
        contrast: *contrast,
        rows,
        diagnostics,
    })
}
