//! Treatment effects against direct enumeration of their definitions.

use hpcausal_core::causal::{
    cross_pair_effect, ite_marginalized, ite_nonbinary, kte_distance, Contrast, ControlSpec,
    Effect, Kernel, Marginalization, MarginalizeConfig, OutcomeTable, TreatmentQuery, Unit,
};
use hpcausal_core::hparams::{sample_hparams, HparamKey, HparamSpace, Level};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// KTE written out from each kernel's closed form.
fn oracle_kte(kernel: &Kernel, a: &[f64], b: &[f64]) -> f64 {
    let d = a.len() as f64;
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let sq: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
    match kernel {
        Kernel::Linear => sq,
        Kernel::Rbf { gamma } => 2.0 - 2.0 * (-gamma.unwrap_or(1.0 / d) * sq).exp(),
        Kernel::Polynomial { gamma } => {
            let g = gamma.unwrap_or(1.0 / d);
            let k = |x: &[f64], y: &[f64]| (g * dot(x, y) + 1.0).powi(3);
            k(a, a) - 2.0 * k(a, b) + k(b, b)
        }
        Kernel::Cosine => 2.0 - 2.0 * dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt()),
    }
}

/// Zoo with one model per cell of `key_a × key_b`; everything else fixed.
fn enumerated_zoo(key_a: HparamKey, key_b: HparamKey) -> Vec<Unit> {
    let base = sample_hparams(&HparamSpace::default(), 0, 1);
    let mut units = Vec::new();
    for a in key_a.levels() {
        for b in key_b.levels() {
            let hparams = base.clone().with_level(a).with_level(b);
            units.push(Unit {
                model_id: units.len() as u64 * 7 + 3,
                hparams,
                bucket: None,
            });
        }
    }
    units
}

fn random_outcomes(n_units: usize, n_instances: usize, dim: usize, seed: u64) -> OutcomeTable {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    OutcomeTable::from_fn(n_units, n_instances, dim, |_, _| {
        (0..dim).map(|_| r.random_range(0.0..1.0)).collect()
    })
    .unwrap()
}

/// E over the other key's levels of E over m ≠ n of the contrast.
fn brute_force(
    units: &[Unit],
    y: &OutcomeTable,
    instance: usize,
    key: HparamKey,
    n: usize,
    other: HparamKey,
    contrast: &Contrast,
) -> Vec<f64> {
    use hpcausal_core::causal::Outcomes;
    let find = |a: Level, b: Level| {
        units
            .iter()
            .position(|u| {
                u.hparams.level(a.key).unwrap() == a && u.hparams.level(b.key).unwrap() == b
            })
            .unwrap()
    };
    let n_level = Level { key, index: n };
    let mut outer = vec![
        0.0;
        if matches!(contrast, Contrast::Difference) {
            y.dim()
        } else {
            1
        }
    ];
    let contexts: Vec<Level> = other.levels().collect();
    for &ctx in &contexts {
        let treated = y.outcome(find(n_level, ctx), instance);
        let others: Vec<Level> = key.levels().filter(|l| l.index != n).collect();
        let mut inner = vec![0.0; outer.len()];
        for &m in &others {
            let control = y.outcome(find(m, ctx), instance);
            match contrast {
                Contrast::Difference => {
                    for (i, v) in inner.iter_mut().enumerate() {
                        *v += treated[i] - control[i];
                    }
                }
                Contrast::Kernel(k) => inner[0] += oracle_kte(k, treated, control),
            }
        }
        for (o, v) in outer.iter_mut().zip(&inner) {
            *o += v / others.len() as f64;
        }
    }
    outer.iter().map(|v| v / contexts.len() as f64).collect()
}

fn effect_values(e: &Effect) -> Vec<f64> {
    match e {
        Effect::Map(m) => m.clone(),
        Effect::Scalar(s) => vec![*s],
    }
}

#[test]
fn marginalized_effect_matches_enumeration() {
    let pairs = [
        (HparamKey::L2, HparamKey::Dropout),
        (HparamKey::Optimizer, HparamKey::W0Std),
        (HparamKey::Activation, HparamKey::SplitFraction),
    ];
    let cfg = MarginalizeConfig {
        min_group_size: 1,
        marginalization: Marginalization::Matched {
            context: Vec::new(),
            weighting: Default::default(),
        },
    };
    for (seed, (key, other)) in pairs.into_iter().enumerate() {
        let units = enumerated_zoo(key, other);
        let y = random_outcomes(units.len(), 3, 5, seed as u64);
        let mut contrasts = vec![Contrast::Difference];
        contrasts.extend(Kernel::battery().map(Contrast::Kernel));
        for level in key.levels() {
            let q = TreatmentQuery::new(level, ControlSpec::complement()).unwrap();
            for contrast in &contrasts {
                for inst in 0..3 {
                    let (got, _) = ite_marginalized(&units, &y, inst, &q, contrast, &cfg).unwrap();
                    let want = brute_force(&units, &y, inst, key, level.index, other, contrast);
                    for (a, b) in effect_values(&got).iter().zip(&want) {
                        assert!((a - b).abs() <= 1e-12, "{key} {contrast:?}: {a} vs {b}");
                    }
                }
            }
        }
    }
}

#[test]
fn nine_pair_average() {
    let units: Vec<Unit> = (0..6)
        .map(|i| {
            let h = sample_hparams(&HparamSpace::default(), 0, 0).with_level(Level {
                key: HparamKey::Activation,
                index: usize::from(i >= 3),
            });
            Unit {
                model_id: i,
                hparams: h,
                bucket: None,
            }
        })
        .collect();
    let ys = [
        [0.7, 0.3],
        [0.6, 0.4],
        [0.9, 0.1],
        [0.2, 0.8],
        [0.5, 0.5],
        [0.1, 0.9],
    ];
    let table = OutcomeTable::from_fn(6, 1, 2, |u, _| ys[u].to_vec()).unwrap();
    let q = TreatmentQuery::new(
        Level {
            key: HparamKey::Activation,
            index: 0,
        },
        ControlSpec::complement(),
    )
    .unwrap();
    for kernel in Kernel::battery() {
        let (e, d) = ite_nonbinary(&units, &table, 0, &q, &Contrast::Kernel(kernel)).unwrap();
        let mut want = 0.0;
        for t in &ys[..3] {
            for c in &ys[3..] {
                want += oracle_kte(&kernel, t, c);
            }
        }
        assert_eq!(d.pairs, 9);
        assert!((e.scalar().unwrap() - want / 9.0).abs() < 1e-12);
    }
}

#[test]
fn pairwise_difference_is_group_mean_difference() {
    let mut r = ChaCha8Rng::seed_from_u64(77);
    for row in 0..100 {
        let n_t = r.random_range(1..12);
        let n_c = r.random_range(1..12);
        let y = random_outcomes(n_t + n_c, 1, 6, 1000 + row);
        let t: Vec<usize> = (0..n_t).collect();
        let c: Vec<usize> = (n_t..n_t + n_c).collect();
        let (e, _) = cross_pair_effect(&y, 0, &t, &c, &Contrast::Difference).unwrap();
        use hpcausal_core::causal::Outcomes;
        for (i, v) in effect_values(&e).iter().enumerate() {
            let mt = t.iter().map(|&u| y.outcome(u, 0)[i]).sum::<f64>() / n_t as f64;
            let mc = c.iter().map(|&u| y.outcome(u, 0)[i]).sum::<f64>() / n_c as f64;
            assert!((v - (mt - mc)).abs() <= 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn kte_identities(a in prop::collection::vec(-3.0f64..3.0, 1..40), seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| r.random_range(-3.0..3.0)).collect();
        let lin = kte_distance(&Kernel::Linear, &a, &b).unwrap();
        let sq: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        prop_assert!((lin - sq).abs() <= 1e-10 * sq.max(1.0));
        for k in Kernel::battery() {
            if k == Kernel::Cosine && (a.iter().all(|&v| v == 0.0) || b.iter().all(|&v| v == 0.0)) {
                continue;
            }
            prop_assert_eq!(kte_distance(&k, &a, &a).unwrap(), 0.0);
            prop_assert_eq!(kte_distance(&k, &a, &b).unwrap(), kte_distance(&k, &b, &a).unwrap());
            prop_assert!(kte_distance(&k, &a, &b).unwrap() >= 0.0);
        }
    }

    #[test]
    fn unit_order_does_not_matter(seed in 0u64..500, shift in 1usize..39) {
        let units: Vec<Unit> = (0..40)
            .map(|i| Unit { model_id: i, hparams: sample_hparams(&HparamSpace::default(), i, seed), bucket: None })
            .collect();
        let y = random_outcomes(40, 1, 4, seed);
        let mut order: Vec<usize> = (0..40).collect();
        order.rotate_left(shift);
        let units2: Vec<Unit> = order.iter().map(|&i| units[i].clone()).collect();
        use hpcausal_core::causal::Outcomes;
        let y2 = OutcomeTable::from_fn(40, 1, 4, |u, i| y.outcome(order[u], i).to_vec()).unwrap();
        let q = TreatmentQuery::new(Level { key: HparamKey::Optimizer, index: 1 }, ControlSpec::complement()).unwrap();
        let cfg = MarginalizeConfig { min_group_size: 1, ..Default::default() };
        for contrast in [Contrast::Difference, Contrast::Kernel(Kernel::rbf())] {
            let a = ite_marginalized(&units, &y, 0, &q, &contrast, &cfg);
            let b = ite_marginalized(&units2, &y2, 0, &q, &contrast, &cfg);
            prop_assert_eq!(a, b);
        }
    }
}
