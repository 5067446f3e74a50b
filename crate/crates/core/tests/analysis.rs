//! Correlation, mediation and kernel-sensitivity analyses on synthetic zoos.

use hpcausal_core::analysis::{
    correlate_effects, correlate_points, kernel_level_effects, kernel_sensitivity,
    mediation_permutation, CellLabel, EffectSpec, MediationConfig,
};
use hpcausal_core::causal::{
    effect_table, Contrast, ControlMode, ControlSpec, Kernel, Marginalization, MarginalizeConfig,
    OutcomeTable, Scope, TreatmentQuery, Unit,
};
use hpcausal_core::hparams::{sample_hparams, HparamKey, HparamSpace, Level};
use hpcausal_core::stats::BootstrapConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const KEY: HparamKey = HparamKey::L2;

/// Sampled hyperparameters with the treated key assigned to equal-size groups.
fn zoo(n: usize, seed: u64) -> Vec<Unit> {
    (0..n)
        .map(|i| Unit {
            model_id: i as u64,
            hparams: sample_hparams(&HparamSpace::default(), i as u64, seed).with_level(Level {
                key: KEY,
                index: i % 4,
            }),
            bucket: Some(i % 3),
        })
        .collect()
}

/// Per-instance assignment of the offsets ±0.5, ±1.5 to the four levels,
/// so every instance sees the same spread of outcomes.
fn offsets(n_instances: usize, r: &mut ChaCha8Rng) -> Vec<[f64; 4]> {
    (0..n_instances)
        .map(|_| {
            let mut o = [-1.5, -0.5, 0.5, 1.5];
            o.shuffle(r);
            o
        })
        .collect()
}

struct Synthetic {
    units: Vec<Unit>,
    y: OutcomeTable,
    e: OutcomeTable,
}

fn through_prediction(n: usize, m: usize, seed: u64) -> Synthetic {
    let units = zoo(n, seed);
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let off = offsets(m, &mut r);
    let s: Vec<Vec<f64>> = units
        .iter()
        .map(|u| {
            let l = u.hparams.level(KEY).unwrap().index;
            (0..m)
                .map(|x| 0.5 + 0.1 * off[x][l] + 0.02 * r.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let y = OutcomeTable::from_fn(n, m, 2, |u, x| vec![s[u][x], 1.0 - s[u][x]]).unwrap();
    let e = OutcomeTable::from_fn(n, m, 4, |u, x| {
        let v = s[u][x];
        vec![v * v, v * (1.0 - v), (1.0 - v).powi(2), v]
    })
    .unwrap();
    Synthetic { units, y, e }
}

fn only_hyperparameters(n: usize, m: usize, seed: u64) -> Synthetic {
    let units = zoo(n, seed);
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let off = offsets(m, &mut r);
    let mut y = Vec::new();
    let mut e = Vec::new();
    for u in &units {
        let l = u.hparams.level(KEY).unwrap().index;
        for x in 0..m {
            let s = 0.5 + 0.05 * r.sample::<f64, _>(StandardNormal);
            y.extend([s, 1.0 - s]);
            let v = 0.5 + 0.1 * off[x][l] + 0.02 * r.sample::<f64, _>(StandardNormal);
            e.extend([v, v * v, 1.0 - v, 0.3]);
        }
    }
    Synthetic {
        units,
        y: OutcomeTable::new(n, m, 2, y).unwrap(),
        e: OutcomeTable::new(n, m, 4, e).unwrap(),
    }
}

fn mediation(s: &Synthetic, m: usize) -> hpcausal_core::analysis::MediationResult {
    let instances: Vec<usize> = (0..m).collect();
    let cfg = MarginalizeConfig::default();
    let spec = EffectSpec {
        keys: &[KEY],
        control: ControlMode::Complement,
        scopes: &[Scope::Global],
        marginalize: &cfg,
    };
    let med = MediationConfig {
        permutations: 20,
        permutation_seed: 5,
        ..Default::default()
    };
    let rep = mediation_permutation(
        "synthetic",
        Kernel::rbf(),
        &s.units,
        &s.y,
        &s.e,
        &instances,
        &spec,
        &med,
    )
    .unwrap();
    assert_eq!(rep.results.len(), 1, "{:?}", rep.warnings);
    rep.results[0].clone()
}

#[test]
fn mediated_influence_vanishes_under_permutation() {
    let s = through_prediction(200, 150, 1);
    let r = mediation(&s, 150);
    assert!(r.pearson_total.abs() > 0.8, "{r:?}");
    assert!(r.pearson_permuted.abs() < 0.1, "{r:?}");
    assert_eq!(r, mediation(&s, 150));
}

#[test]
fn direct_influence_survives_permutation() {
    let s = only_hyperparameters(200, 300, 2);
    let r = mediation(&s, 300);
    assert!(r.pearson_delta.abs() < 0.05, "{r:?}");
}

#[test]
fn gram_path_matches_direct_estimator() {
    let s = through_prediction(60, 4, 3);
    let instances: Vec<usize> = (0..4).collect();
    let scopes = [Scope::Global, Scope::WithinBucket(1)];
    let matched = MarginalizeConfig {
        min_group_size: 2,
        marginalization: Marginalization::Matched {
            context: vec![HparamKey::Activation],
            weighting: Default::default(),
        },
    };
    for cfg in [
        MarginalizeConfig {
            min_group_size: 2,
            ..Default::default()
        },
        matched,
    ] {
        let keys = [KEY, HparamKey::Optimizer];
        let spec = EffectSpec {
            keys: &keys,
            control: ControlMode::Complement,
            scopes: &scopes,
            marginalize: &cfg,
        };
        for kernel in Kernel::battery() {
            let rep = kernel_level_effects(&s.units, &s.e, &instances, kernel, &spec).unwrap();
            assert!(!rep.results.is_empty());
            for le in &rep.results {
                let q = TreatmentQuery::new(
                    le.level,
                    ControlSpec {
                        mode: ControlMode::Complement,
                        scope: le.scope,
                    },
                )
                .unwrap();
                let t = effect_table(
                    &s.units,
                    &s.e,
                    &instances,
                    &q,
                    &Contrast::Kernel(kernel),
                    &cfg,
                )
                .unwrap();
                let direct: Vec<f64> = t.rows.iter().map(|r| r.effect.scalar().unwrap()).collect();
                assert_eq!(le.values, direct);
            }
        }
    }
}

#[test]
fn injected_linear_dependence_is_perfect() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let y: Vec<f64> = (0..300).map(|_| r.random_range(0.0..1.0)).collect();
    let e: Vec<f64> = y.iter().map(|v| 3.5 * v).collect();
    let (p, pci, s, sci) = correlate_points(&y, &e, &BootstrapConfig::default(), 0).unwrap();
    assert!((p - 1.0).abs() < 1e-9 && (s - 1.0).abs() < 1e-9);
    assert!(pci.low <= p && p <= pci.high && sci.low <= s && s <= sci.high);
    let noise: Vec<f64> = (0..300).map(|_| r.random_range(0.0..1.0)).collect();
    let (p, _, _, _) = correlate_points(&y, &noise, &BootstrapConfig::default(), 0).unwrap();
    assert!(p.abs() < 0.2);
}

#[test]
fn correlation_over_scopes() {
    let s = through_prediction(90, 20, 6);
    let instances: Vec<usize> = (0..20).collect();
    let cfg = MarginalizeConfig::default();
    let scopes = [
        Scope::Global,
        Scope::WithinBucket(0),
        Scope::WithinBucket(7),
    ];
    let spec = EffectSpec {
        keys: &[KEY],
        control: ControlMode::Complement,
        scopes: &scopes,
        marginalize: &cfg,
    };
    let y = kernel_level_effects(&s.units, &s.y, &instances, Kernel::Linear, &spec).unwrap();
    let e = kernel_level_effects(&s.units, &s.e, &instances, Kernel::Linear, &spec).unwrap();
    let label = CellLabel {
        method: "synthetic",
        key: KEY,
        kernel: Kernel::Linear,
    };
    let rep = correlate_effects(
        label,
        &y.results,
        &e.results,
        &scopes,
        &BootstrapConfig::default(),
    )
    .unwrap();
    assert_eq!(rep.results.len(), 2);
    assert!(rep.warnings.iter().any(|w| w.contains("bucket 7")));
    for c in &rep.results {
        assert!(
            (-1.0..=1.0).contains(&c.pearson)
                && c.pearson_ci.low <= c.pearson
                && c.pearson <= c.pearson_ci.high
        );
        assert!(c.pearson > 0.8);
    }
}

#[test]
fn kernel_sensitivity_identities() {
    let s = only_hyperparameters(80, 30, 8);
    let instances: Vec<usize> = (0..30).collect();
    let cfg = MarginalizeConfig::default();
    let spec = EffectSpec {
        keys: &[KEY],
        control: ControlMode::Complement,
        scopes: &[Scope::Global],
        marginalize: &cfg,
    };
    let effects = |k: Kernel| {
        (
            k,
            kernel_level_effects(&s.units, &s.e, &instances, k, &spec)
                .unwrap()
                .results,
        )
    };
    let same = kernel_sensitivity(
        "m",
        &[effects(Kernel::Linear), effects(Kernel::Linear)],
        Scope::Global,
        Some(KEY),
    )
    .unwrap();
    assert_eq!(same.values, vec![1.0; 4]);
    let tiny = Kernel::Rbf { gamma: Some(1e-6) };
    let m = kernel_sensitivity(
        "m",
        &[effects(Kernel::Linear), effects(tiny)],
        Scope::Global,
        None,
    )
    .unwrap();
    assert!(m.get(0, 1) > 0.999, "{m:?}");
    assert_eq!(m.get(0, 1), m.get(1, 0));
}
