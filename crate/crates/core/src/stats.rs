//! Correlation coefficients and bootstrap intervals.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::Input(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::Input(format!(
            "correlation needs at least 3 points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite value in correlation input".into(),
        ));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pearson_unchecked(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Estimation(
            "correlation is undefined for a constant input".into(),
        ));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson_unchecked(xs, ys)
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson_unchecked(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resamples == 0 || !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "bootstrap needs resamples ≥ 1 and level in (0, 1), got {} and {}",
                self.resamples, self.level
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

/// Percentile interval of `stat` over pair resamples, widened if needed so
/// that it contains `point`. Degenerate resamples (constant inputs) are
/// dropped.
pub fn bootstrap_interval(
    xs: &[f64],
    ys: &[f64],
    point: f64,
    stat: fn(&[f64], &[f64]) -> Result<f64>,
    cfg: &BootstrapConfig,
    stream: u64,
) -> Result<Interval> {
    cfg.validate()?;
    let n = xs.len();
    let mut r = rng::stream(cfg.seed, stream, "bootstrap");
    let mut stats = Vec::with_capacity(cfg.resamples);
    let (mut bx, mut by) = (alloc::vec![0.0; n], alloc::vec![0.0; n]);
    for _ in 0..cfg.resamples {
        for k in 0..n {
            let j = r.random_range(0..n);
            bx[k] = xs[j];
            by[k] = ys[j];
        }
        if let Ok(s) = stat(&bx, &by) {
            stats.push(s);
        }
    }
    if stats.is_empty() {
        return Ok(Interval {
            low: point,
            high: point,
        });
    }
    stats.sort_by(f64::total_cmp);
    let m = (stats.len() - 1) as f64;
    let alpha = (1.0 - cfg.level) / 2.0;
    let low = stats[libm::floor(alpha * m) as usize];
    let high = stats[libm::ceil((1.0 - alpha) * m) as usize];
    Ok(Interval {
        low: low.min(point),
        high: high.max(point),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(
            (pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15
        );
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Estimation(_))
        ));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 8.0, 27.0]).unwrap(), 1.0);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn interval_brackets_point() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| libm::sin(*x)).collect();
        let p = pearson(&xs, &ys).unwrap();
        let ci = bootstrap_interval(&xs, &ys, p, pearson, &BootstrapConfig::default(), 0).unwrap();
        assert!(ci.low <= p && p <= ci.high);
        assert!(ci.low >= -1.0 && ci.high <= 1.0);
        let again =
            bootstrap_interval(&xs, &ys, p, pearson, &BootstrapConfig::default(), 0).unwrap();
        assert_eq!(ci, again);
    }
}
