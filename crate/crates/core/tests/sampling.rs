//! Distributional checks on hyperparameter sampling.

use hpcausal_core::hparams::{sample_hparams, HparamSpace, HyperparamVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const N: u64 = 4000;

fn zoo(seed: u64) -> Vec<HyperparamVector> {
    let space = HparamSpace::default();
    (0..N).map(|i| sample_hparams(&space, i, seed)).collect()
}

fn chi_square_p(counts: &[f64], expected: &[f64]) -> f64 {
    let stat: f64 = counts
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = (counts.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

fn uniform_counts(values: impl Iterator<Item = usize>, k: usize) -> f64 {
    let mut c = vec![0.0; k];
    for v in values {
        c[v] += 1.0;
    }
    chi_square_p(&c, &vec![N as f64 / k as f64; k])
}

/// Kolmogorov-Smirnov distance of a sample from U(0, 1).
fn ks_uniform(mut u: Vec<f64>) -> f64 {
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

#[test]
fn categorical_choices_are_uniform() {
    let z = zoo(11);
    assert!(uniform_counts(z.iter().map(|h| h.optimizer as usize), 3) > 1e-3);
    assert!(uniform_counts(z.iter().map(|h| h.activation as usize), 2) > 1e-3);
    assert!(uniform_counts(z.iter().map(|h| h.w0_type as usize), 3) > 1e-3);
    assert!(uniform_counts(z.iter().map(|h| h.b0_type as usize), 3) > 1e-3);
    let split = |s: f64| [0.5, 0.7, 0.9].iter().position(|&v| v == s).unwrap();
    assert!(uniform_counts(z.iter().map(|h| split(h.split_fraction)), 3) > 1e-3);
}

#[test]
fn continuous_ranges_follow_their_laws() {
    let z = zoo(12);
    let crit = 1.63 / (N as f64).sqrt();
    let log_u = |v: f64, lo: f64, hi: f64| (v.ln() - lo.ln()) / (hi.ln() - lo.ln());
    assert!(
        ks_uniform(
            z.iter()
                .map(|h| log_u(h.learning_rate, 5e-4, 5e-2))
                .collect()
        ) < crit
    );
    assert!(ks_uniform(z.iter().map(|h| log_u(h.l2, 1e-8, 1e-2)).collect()) < crit);
    assert!(ks_uniform(z.iter().map(|h| log_u(h.w0_std, 1e-3, 0.5)).collect()) < crit);
    assert!(ks_uniform(z.iter().map(|h| h.dropout / 0.7).collect()) < crit);
}

#[test]
fn fields_are_independent() {
    let z = zoo(13);
    let mut table = [[0.0; 2]; 3];
    for h in &z {
        table[h.optimizer as usize][h.activation as usize] += 1.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..2).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut stat = 0.0;
    for i in 0..3 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / N as f64;
            stat += (table[i][j] - e) * (table[i][j] - e) / e;
        }
    }
    assert!(1.0 - ChiSquared::new(2.0).unwrap().cdf(stat) > 1e-3);
}

#[test]
fn sampling_is_reproducible_and_index_stable() {
    let space = HparamSpace::default();
    assert_eq!(sample_hparams(&space, 17, 5), sample_hparams(&space, 17, 5));
    assert_ne!(sample_hparams(&space, 17, 5), sample_hparams(&space, 17, 6));
}
