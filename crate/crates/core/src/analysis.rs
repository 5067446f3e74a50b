//! Performance buckets, ITE_Y vs ITE_E correlation and permutation-based
//! mediation analysis.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::causal::{
    ControlMode, ControlSpec, Design, Diagnostics, Gram, Kernel, MarginalizeConfig, Outcomes,
    Scope, TreatmentQuery, Unit,
};
use crate::error::{Error, Result};
use crate::hparams::{HparamKey, Level};
use crate::rng;
use crate::stats::{bootstrap_interval, pearson, spearman, BootstrapConfig, Interval};

/// Percentile edges splitting a zoo by test accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketScheme {
    pub percentile_edges: Vec<f64>,
}

impl Default for BucketScheme {
    fn default() -> Self {
        Self {
            percentile_edges: vec![0.0, 20.0, 40.0, 60.0, 80.0, 90.0, 95.0, 99.0, 100.0],
        }
    }
}

impl BucketScheme {
    pub fn three_bucket() -> Self {
        Self {
            percentile_edges: vec![0.0, 80.0, 99.0, 100.0],
        }
    }

    pub fn new(percentile_edges: Vec<f64>) -> Result<Self> {
        let s = Self { percentile_edges };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.percentile_edges;
        if e.len() < 2
            || e[0] != 0.0
            || e[e.len() - 1] != 100.0
            || e.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(Error::Config(format!(
                "bucket edges must increase strictly from 0 to 100, got {e:?}"
            )));
        }
        Ok(())
    }

    pub fn n_buckets(&self) -> usize {
        self.percentile_edges.len() - 1
    }

    /// `lo-hi` percentile label of a bucket.
    pub fn label(&self, bucket: usize) -> String {
        format!(
            "{}-{}",
            self.percentile_edges[bucket],
            self.percentile_edges[bucket + 1]
        )
    }
}

/// Bucket of each model, in input order. Models are ranked by accuracy
/// (tied models share the lowest rank) and rank `r` of `n` lands in the first
/// bucket whose upper edge covers the percentile `100·(r+1)/n`.
pub fn bucket_models(accuracies: &[f64], scheme: &BucketScheme) -> Result<Vec<usize>> {
    scheme.validate()?;
    let n = accuracies.len();
    if n == 0 {
        return Err(Error::Input("cannot bucket an empty zoo".into()));
    }
    if n < scheme.n_buckets() {
        return Err(Error::Config(format!(
            "{n} models cannot fill {} buckets",
            scheme.n_buckets()
        )));
    }
    if accuracies.iter().any(|a| a.is_nan()) {
        return Err(Error::Numerical("NaN accuracy".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| accuracies[a].total_cmp(&accuracies[b]));
    let mut out = vec![0; n];
    let mut rank = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && accuracies[i] != accuracies[order[pos - 1]] {
            rank = pos;
        }
        let pct = 100.0 * (rank + 1) as f64;
        out[i] = scheme.percentile_edges[1..]
            .iter()
            .position(|&edge| pct <= edge * n as f64)
            .unwrap_or(scheme.n_buckets() - 1);
    }
    Ok(out)
}

/// What to estimate: every level of each key against `control`, in each scope.
#[derive(Clone, Copy, Debug)]
pub struct EffectSpec<'a> {
    pub keys: &'a [HparamKey],
    pub control: ControlMode,
    pub scopes: &'a [Scope],
    pub marginalize: &'a MarginalizeConfig,
}

/// Kernelized ITE of one (scope, level) at every probe instance. Instances
/// where the kernel is undefined on every pair hold NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelEffects {
    pub scope: Scope,
    pub level: Level,
    pub values: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Results plus the cells that were skipped and why.
#[derive(Clone, Debug, PartialEq)]
pub struct Report<T> {
    pub results: Vec<T>,
    pub warnings: Vec<String>,
}

fn scope_name(scope: Scope) -> String {
    match scope {
        Scope::Global => "global".into(),
        Scope::WithinBucket(b) => format!("bucket {b}"),
    }
}

struct Plan {
    scope: Scope,
    level: Level,
    design: Design,
}

/// Designs for every estimable (scope, level); the rest become warnings.
fn plans(units: &[Unit], spec: &EffectSpec<'_>, warnings: &mut Vec<String>) -> Result<Vec<Plan>> {
    let mut out = Vec::new();
    for &scope in spec.scopes {
        for &key in spec.keys {
            for level in key.levels() {
                let Ok(query) = TreatmentQuery::new(
                    level,
                    ControlSpec {
                        mode: spec.control,
                        scope,
                    },
                ) else {
                    continue;
                };
                match Design::new(units, &query, spec.marginalize) {
                    Ok(design) => out.push(Plan {
                        scope,
                        level,
                        design,
                    }),
                    Err(Error::Estimation(m)) => {
                        warnings.push(format!(
                            "{}: {key} = {} skipped: {m}",
                            scope_name(scope),
                            level.label()
                        ));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(out)
}

fn evaluate(
    plan: &Plan,
    gram: &Gram,
    perm: Option<&[usize]>,
    diag: &mut Diagnostics,
) -> Result<f64> {
    match plan.design.gram_effect(gram, perm) {
        Ok((v, d)) => {
            diag.merge(d);
            Ok(v)
        }
        Err(Error::Estimation(_)) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Kernelized effects of every planned (scope, level) on one outcome. Kernel
/// values are computed once per instance and shared by all queries.
pub fn kernel_level_effects<O: Outcomes>(
    units: &[Unit],
    outcomes: &O,
    instances: &[usize],
    kernel: Kernel,
    spec: &EffectSpec<'_>,
) -> Result<Report<LevelEffects>> {
    kernel.validate()?;
    let mut warnings = Vec::new();
    let plans = plans(units, spec, &mut warnings)?;
    let mut results: Vec<LevelEffects> = plans
        .iter()
        .map(|p| LevelEffects {
            scope: p.scope,
            level: p.level,
            values: Vec::with_capacity(instances.len()),
            diagnostics: Diagnostics::default(),
        })
        .collect();
    if plans.is_empty() {
        return Ok(Report { results, warnings });
    }
    for &instance in instances {
        let gram = Gram::compute(outcomes, instance, &kernel, None)?;
        for (plan, out) in plans.iter().zip(&mut results) {
            let v = evaluate(plan, &gram, None, &mut out.diagnostics)?;
            out.values.push(v);
        }
    }
    for r in &results {
        let undefined = r.values.iter().filter(|v| v.is_nan()).count();
        if undefined > 0 {
            warnings.push(format!(
                "{}: {} = {}: {kernel} undefined at {undefined} instances",
                scope_name(r.scope),
                r.level.key,
                r.level.label()
            ));
        }
    }
    Ok(Report { results, warnings })
}

/// (ITE_Y, ITE_E) pairs of one scope and key over levels × instances.
pub fn pair_points(
    y: &[LevelEffects],
    e: &[LevelEffects],
    scope: Scope,
    key: HparamKey,
) -> (Vec<f64>, Vec<f64>) {
    let (mut ys, mut es) = (Vec::new(), Vec::new());
    for ly in y.iter().filter(|l| l.scope == scope && l.level.key == key) {
        let Some(le) = e.iter().find(|l| l.scope == scope && l.level == ly.level) else {
            continue;
        };
        for (&a, &b) in ly.values.iter().zip(&le.values) {
            if a.is_finite() && b.is_finite() {
                ys.push(a);
                es.push(b);
            }
        }
    }
    (ys, es)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub bucket: Option<usize>,
    pub method: String,
    pub hparam_key: HparamKey,
    pub kernel: Kernel,
    pub pearson: f64,
    pub pearson_ci: Interval,
    pub spearman: f64,
    pub spearman_ci: Interval,
    pub n_points: usize,
}

fn bucket_of(scope: Scope) -> Option<usize> {
    match scope {
        Scope::Global => None,
        Scope::WithinBucket(b) => Some(b),
    }
}

/// Canonical pair order, so results do not depend on how points were listed.
fn sorted_pairs(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pairs.into_iter().unzip()
}

/// Pearson and Spearman correlation of paired points with bootstrap
/// intervals. `stream` separates the resampling streams of different cells.
pub fn correlate_points(
    xs: &[f64],
    ys: &[f64],
    boot: &BootstrapConfig,
    stream: u64,
) -> Result<(f64, Interval, f64, Interval)> {
    let (xs, ys) = sorted_pairs(xs, ys);
    let p = pearson(&xs, &ys)?;
    let s = spearman(&xs, &ys)?;
    let pci = bootstrap_interval(&xs, &ys, p, pearson, boot, 2 * stream)?;
    let sci = bootstrap_interval(&xs, &ys, s, spearman, boot, 2 * stream + 1)?;
    Ok((p, pci, s, sci))
}

fn skippable(e: &Error) -> bool {
    matches!(e, Error::Estimation(_) | Error::Input(_))
}

/// Labels of one analysis cell.
#[derive(Clone, Copy, Debug)]
pub struct CellLabel<'a> {
    pub method: &'a str,
    pub key: HparamKey,
    pub kernel: Kernel,
}

/// Correlation of ITE_Y against ITE_E in each scope. Scopes with fewer than
/// three usable points (or a constant side) are skipped with a warning.
pub fn correlate_effects(
    label: CellLabel<'_>,
    y: &[LevelEffects],
    e: &[LevelEffects],
    scopes: &[Scope],
    boot: &BootstrapConfig,
) -> Result<Report<CorrelationResult>> {
    let mut results = Vec::new();
    let mut warnings = Vec::new();
    for (k, &scope) in scopes.iter().enumerate() {
        let (ys, es) = pair_points(y, e, scope, label.key);
        match correlate_points(&ys, &es, boot, k as u64) {
            Ok((p, pci, s, sci)) => results.push(CorrelationResult {
                bucket: bucket_of(scope),
                method: label.method.into(),
                hparam_key: label.key,
                kernel: label.kernel,
                pearson: p,
                pearson_ci: pci,
                spearman: s,
                spearman_ci: sci,
                n_points: ys.len(),
            }),
            Err(err) if skippable(&err) => {
                warnings.push(format!(
                    "{} skipped for {} / {}: {err}",
                    scope_name(scope),
                    label.method,
                    label.key
                ));
            }
            Err(err) => return Err(err),
        }
    }
    Ok(Report { results, warnings })
}

/// Which models a prediction may be swapped with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationScope {
    /// Within the analysed scope (the bucket).
    #[default]
    Analysis,
    /// Across the whole zoo.
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediationConfig {
    pub permutations: usize,
    pub permutation_seed: u64,
    #[serde(default)]
    pub scope: PermutationScope,
}

impl Default for MediationConfig {
    fn default() -> Self {
        Self {
            permutations: 20,
            permutation_seed: 0,
            scope: PermutationScope::Analysis,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediationResult {
    pub bucket: Option<usize>,
    pub method: String,
    pub hparam_key: HparamKey,
    pub kernel: Kernel,
    pub pearson_total: f64,
    pub pearson_permuted: f64,
    pub pearson_delta: f64,
    pub spearman_total: f64,
    pub spearman_permuted: f64,
    pub spearman_delta: f64,
    pub n_points: usize,
    pub permutations: usize,
    pub permutation_seed: u64,
}

/// Permutation of unit positions for one (permutation, instance); units
/// outside `members` keep their own outcome.
pub fn draw_permutation(
    n_units: usize,
    members: &[usize],
    seed: u64,
    permutation: usize,
    instance: usize,
) -> Vec<usize> {
    let mut r = rng::stream(
        rng::derive_seed(seed, permutation as u64),
        instance as u64,
        "permute",
    );
    let mut perm: Vec<usize> = (0..n_units).collect();
    let mut shuffled = members.to_vec();
    shuffled.shuffle(&mut r);
    for (&dst, &src) in members.iter().zip(&shuffled) {
        perm[dst] = src;
    }
    perm
}

/// Correlation of ITE_Y with ITE_E on the original pairing versus the mean
/// correlation after permuting predictions across models at each instance.
/// One result per (scope, key) of `spec`.
pub fn mediation_permutation<Y: Outcomes, E: Outcomes>(
    method: &str,
    kernel: Kernel,
    units: &[Unit],
    predictions: &Y,
    explanations: &E,
    instances: &[usize],
    spec: &EffectSpec<'_>,
    cfg: &MediationConfig,
) -> Result<Report<MediationResult>> {
    if cfg.permutations == 0 {
        return Err(Error::Config(
            "mediation needs at least one permutation".into(),
        ));
    }
    kernel.validate()?;
    let mut warnings = Vec::new();
    let plans = plans(units, spec, &mut warnings)?;
    let members: Vec<Vec<usize>> = spec
        .scopes
        .iter()
        .map(|&scope| match (cfg.scope, scope) {
            (PermutationScope::Analysis, Scope::WithinBucket(b)) => (0..units.len())
                .filter(|&u| units[u].bucket == Some(b))
                .collect(),
            _ => (0..units.len()).collect(),
        })
        .collect();
    let scope_index = |s: Scope| spec.scopes.iter().position(|&x| x == s).unwrap_or(0);
    let n_plans = plans.len();
    let mut diag = Diagnostics::default();
    let mut ite_e = vec![Vec::with_capacity(instances.len()); n_plans];
    let mut ite_y = vec![Vec::with_capacity(instances.len()); n_plans];
    let mut ite_yp = vec![vec![Vec::with_capacity(instances.len()); n_plans]; cfg.permutations];
    for &instance in instances {
        let gy = Gram::compute(predictions, instance, &kernel, None)?;
        let ge = Gram::compute(explanations, instance, &kernel, None)?;
        for (i, plan) in plans.iter().enumerate() {
            ite_e[i].push(evaluate(plan, &ge, None, &mut diag)?);
            ite_y[i].push(evaluate(plan, &gy, None, &mut diag)?);
        }
        for (p, per_plan) in ite_yp.iter_mut().enumerate() {
            let perms: Vec<Vec<usize>> = members
                .iter()
                .map(|m| draw_permutation(units.len(), m, cfg.permutation_seed, p, instance))
                .collect();
            for (i, plan) in plans.iter().enumerate() {
                let perm = &perms[scope_index(plan.scope)];
                per_plan[i].push(evaluate(plan, &gy, Some(perm), &mut diag)?);
            }
        }
    }
    let points = |ys: &[Vec<f64>], scope: Scope, key: HparamKey| {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for i in (0..plans.len()).filter(|&i| plans[i].scope == scope && plans[i].level.key == key)
        {
            for (&y, &e) in ys[i].iter().zip(&ite_e[i]) {
                if y.is_finite() && e.is_finite() {
                    a.push(y);
                    b.push(e);
                }
            }
        }
        (a, b)
    };
    let both = |ys: &[f64], es: &[f64]| -> Result<(f64, f64)> {
        Ok((pearson(ys, es)?, spearman(ys, es)?))
    };
    let mut results = Vec::new();
    for &scope in spec.scopes {
        'keys: for &key in spec.keys {
            let (ys, es) = points(&ite_y, scope, key);
            let total = match both(&ys, &es) {
                Ok(t) => t,
                Err(err) if skippable(&err) => {
                    warnings.push(format!(
                        "{} skipped for {method} / {key}: {err}",
                        scope_name(scope)
                    ));
                    continue;
                }
                Err(err) => return Err(err),
            };
            let (mut sum_p, mut sum_s) = (0.0, 0.0);
            for (p, yp) in ite_yp.iter().enumerate() {
                let (ys, es) = points(yp, scope, key);
                match both(&ys, &es) {
                    Ok((a, b)) => {
                        sum_p += a;
                        sum_s += b;
                    }
                    Err(err) if skippable(&err) => {
                        warnings.push(format!(
                            "{} skipped for {method} / {key}: permutation {p}: {err}",
                            scope_name(scope)
                        ));
                        continue 'keys;
                    }
                    Err(err) => return Err(err),
                }
            }
            let np = cfg.permutations as f64;
            let (pp, sp) = (sum_p / np, sum_s / np);
            results.push(MediationResult {
                bucket: bucket_of(scope),
                method: method.into(),
                hparam_key: key,
                kernel,
                pearson_total: total.0,
                pearson_permuted: pp,
                pearson_delta: total.0 - pp,
                spearman_total: total.1,
                spearman_permuted: sp,
                spearman_delta: total.1 - sp,
                n_points: ys.len(),
                permutations: cfg.permutations,
                permutation_seed: cfg.permutation_seed,
            });
        }
    }
    Ok(Report { results, warnings })
}

/// Pairwise Spearman correlations of kernelized ITE_E across kernels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMatrix {
    pub bucket: Option<usize>,
    pub method: String,
    /// `None` when points of all keys are pooled.
    pub hparam_key: Option<HparamKey>,
    pub kernels: Vec<Kernel>,
    /// Row-major `kernels × kernels`.
    pub values: Vec<f64>,
    pub n_points: usize,
}

impl SensitivityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.kernels.len() + j]
    }

    /// Smallest off-diagonal entry.
    pub fn min_off_diagonal(&self) -> f64 {
        let k = self.kernels.len();
        (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Spearman matrix across kernels of the ITE_E values in `scope`, over the
/// (level, instance) points every kernel could estimate. `key` of `None`
/// pools all keys.
pub fn kernel_sensitivity(
    method: &str,
    per_kernel: &[(Kernel, Vec<LevelEffects>)],
    scope: Scope,
    key: Option<HparamKey>,
) -> Result<SensitivityMatrix> {
    if per_kernel.len() < 2 {
        return Err(Error::Config(
            "kernel sensitivity needs at least two kernels".into(),
        ));
    }
    let selected = |effects: &[LevelEffects]| -> Vec<LevelEffects> {
        effects
            .iter()
            .filter(|l| l.scope == scope && key.is_none_or(|k| l.level.key == k))
            .cloned()
            .collect()
    };
    let base = selected(&per_kernel[0].1);
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); per_kernel.len()];
    for l0 in &base {
        let others: Option<Vec<&LevelEffects>> = per_kernel
            .iter()
            .map(|(_, effects)| {
                effects
                    .iter()
                    .find(|l| l.scope == scope && l.level == l0.level)
            })
            .collect();
        let Some(others) = others else { continue };
        for i in 0..l0.values.len() {
            if others
                .iter()
                .all(|l| l.values.get(i).is_some_and(|v| v.is_finite()))
            {
                for (s, l) in series.iter_mut().zip(&others) {
                    s.push(l.values[i]);
                }
            }
        }
    }
    let k = per_kernel.len();
    let mut values = vec![1.0; k * k];
    for i in 0..k {
        for j in i + 1..k {
            let s = spearman(&series[i], &series[j])?;
            values[i * k + j] = s;
            values[j * k + i] = s;
        }
    }
    Ok(SensitivityMatrix {
        bucket: bucket_of(scope),
        method: method.into(),
        hparam_key: key,
        kernels: per_kernel.iter().map(|(k, _)| *k).collect(),
        values,
        n_points: series[0].len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(assign: &[usize], k: usize) -> Vec<usize> {
        let mut s = vec![0; k];
        for &b in assign {
            s[b] += 1;
        }
        s
    }

    #[test]
    fn default_scheme_on_hundred_models() {
        let acc: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 / 100.0).collect();
        let b = bucket_models(&acc, &BucketScheme::default()).unwrap();
        assert_eq!(sizes(&b, 8), [20, 20, 20, 20, 10, 5, 4, 1]);
        let top = acc
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(b[top], 7);
    }

    #[test]
    fn ties_and_presets() {
        let b = bucket_models(&[0.5; 10], &BucketScheme::default()).unwrap();
        assert!(b.iter().all(|&x| x == 0));
        let acc: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let b = bucket_models(&acc, &BucketScheme::three_bucket()).unwrap();
        assert_eq!(sizes(&b, 3), [80, 19, 1]);
        assert!(matches!(
            bucket_models(&[0.1, 0.2], &BucketScheme::default()),
            Err(Error::Config(_))
        ));
        assert!(BucketScheme::new(vec![0.0, 50.0, 50.0, 100.0]).is_err());
        assert!(BucketScheme::new(vec![10.0, 100.0]).is_err());
    }

    #[test]
    fn permutation_touches_members_only() {
        let members = [1usize, 3, 4];
        for instance in 0..3 {
            let p = draw_permutation(6, &members, 9, 0, instance);
            assert_eq!((p[0], p[2], p[5]), (0, 2, 5));
            let mut m: Vec<usize> = members.iter().map(|&i| p[i]).collect();
            m.sort();
            assert_eq!(m, members);
            assert_eq!(p, draw_permutation(6, &members, 9, 0, instance));
        }
    }

    #[test]
    fn correlation_is_order_free() {
        let xs: Vec<f64> = (0..30).map(|i| libm::cos(i as f64 * 1.7)).collect();
        let ys: Vec<f64> = (0..30).map(|i| libm::sin(i as f64 * 0.3) + xs[i]).collect();
        let a = correlate_points(&xs, &ys, &BootstrapConfig::default(), 0).unwrap();
        let (rx, ry): (Vec<f64>, Vec<f64>) = xs
            .iter()
            .rev()
            .copied()
            .zip(ys.iter().rev().copied())
            .unzip();
        assert_eq!(
            a,
            correlate_points(&rx, &ry, &BootstrapConfig::default(), 0).unwrap()
        );
    }
}
