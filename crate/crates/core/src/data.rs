//! Datasets: a fixed held-out test set plus a train pool whose used prefix
//! is selected by the `split_fraction` hyperparameter.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Shape;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    SyntheticShapes16x16,
    SyntheticBlobs2d,
    External,
}

fn default_test_fraction() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub num_classes: usize,
    pub size: usize,
    pub generation_seed: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_path: Option<String>,
}

impl DatasetSpec {
    pub fn shapes(num_classes: usize, size: usize, generation_seed: u64) -> Self {
        Self {
            kind: DatasetKind::SyntheticShapes16x16,
            num_classes,
            size,
            generation_seed,
            test_fraction: default_test_fraction(),
            external_path: None,
        }
    }

    pub fn blobs(num_classes: usize, size: usize, generation_seed: u64) -> Self {
        Self {
            kind: DatasetKind::SyntheticBlobs2d,
            ..Self::shapes(num_classes, size, generation_seed)
        }
    }

    pub fn input_shape(&self) -> Option<Shape> {
        match self.kind {
            DatasetKind::SyntheticShapes16x16 => Some(Shape::new(16, 16, 1)),
            DatasetKind::SyntheticBlobs2d => Some(Shape::new(1, 1, 2)),
            DatasetKind::External => None,
        }
    }

    pub fn test_size(&self) -> usize {
        let t = libm::round(self.size as f64 * self.test_fraction) as usize;
        t.clamp(1, self.size.saturating_sub(1).max(1))
    }
}

/// Inputs in HWC order, one row per sample; `[0, test_start)` is the train
/// pool and `[test_start, len)` the fixed test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub shape: Shape,
    pub num_classes: usize,
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub test_start: usize,
}

impl Dataset {
    pub fn new(
        shape: Shape,
        num_classes: usize,
        inputs: Vec<f64>,
        labels: Vec<usize>,
        test_start: usize,
    ) -> Result<Self> {
        if inputs.len() != labels.len() * shape.len() {
            return Err(Error::Input(format!(
                "{} input values do not fit {} samples of shape {:?}",
                inputs.len(),
                labels.len(),
                shape
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Input(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if test_start == 0 || test_start >= labels.len() {
            return Err(Error::Input(
                "both the train pool and the test set must be non-empty".into(),
            ));
        }
        Ok(Self {
            shape,
            num_classes,
            inputs,
            labels,
            test_start,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let n = self.shape.len();
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn train_pool(&self) -> Range<usize> {
        0..self.test_start
    }

    pub fn test_indices(&self) -> Range<usize> {
        self.test_start..self.len()
    }

    /// Prefix of the train pool used under a given split fraction.
    pub fn train_indices(&self, split_fraction: f64) -> Range<usize> {
        let n = libm::round(self.test_start as f64 * split_fraction) as usize;
        0..n.clamp(1, self.test_start)
    }
}

fn validate(spec: &DatasetSpec) -> Result<()> {
    if spec.num_classes < 2 {
        return Err(Error::Config("datasets need at least 2 classes".into()));
    }
    if spec.size < 2 * spec.num_classes {
        return Err(Error::Config(format!(
            "dataset size {} too small for {} classes",
            spec.size, spec.num_classes
        )));
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Config("test_fraction must lie in (0, 1)".into()));
    }
    Ok(())
}

/// Balanced labels (`i mod k`) in a seeded shuffled order.
fn shuffled_labels(spec: &DatasetSpec) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..spec.size).map(|i| i % spec.num_classes).collect();
    labels.shuffle(&mut rng::stream(spec.generation_seed, 0, "label-order"));
    labels
}

pub const SHAPE_GLYPHS: usize = 6;

fn render_glyph(class: usize, seed: u64, index: u64, out: &mut [f64]) {
    let mut r = rng::stream(seed, index, "glyph");
    let jitter = Uniform::new_inclusive(-1.5, 1.5).expect("valid bounds");
    let size = Uniform::new_inclusive(3.0, 5.5).expect("valid bounds");
    let cx = 7.5 + jitter.sample(&mut r);
    let cy = 7.5 + jitter.sample(&mut r);
    let s = size.sample(&mut r);
    let aspect = Uniform::new_inclusive(0.6, 1.0)
        .expect("valid bounds")
        .sample(&mut r);
    for y in 0..16 {
        for x in 0..16 {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let (ax, ay) = (libm::fabs(dx), libm::fabs(dy));
            let on = match class {
                // rectangle outline
                0 => {
                    let (hx, hy) = (s, s * aspect);
                    (ax <= hx + 0.5 && ay <= hy + 0.5)
                        && (libm::fabs(ax - hx) < 0.5 || libm::fabs(ay - hy) < 0.5)
                }
                // ellipse outline
                1 => {
                    let q =
                        libm::sqrt((dx / s) * (dx / s) + (dy / (s * aspect)) * (dy / (s * aspect)));
                    libm::fabs(q - 1.0) * s < 0.6
                }
                // plus
                2 => (ax < 0.6 && ay <= s) || (ay < 0.6 && ax <= s),
                // diagonal cross
                3 => libm::fabs(ax - ay) < 0.6 && ax <= s,
                // three horizontal bars
                4 => {
                    ax <= s
                        && [-s * aspect, 0.0, s * aspect]
                            .iter()
                            .any(|&b| libm::fabs(dy - b) < 0.5)
                }
                // filled disk
                _ => dx * dx + dy * dy <= s * s * aspect,
            };
            out[y * 16 + x] = if on { 1.0 } else { 0.0 };
        }
    }
    let noise = Normal::new(0.0, 0.1).expect("valid sd");
    for v in out.iter_mut() {
        *v += noise.sample(&mut r);
    }
}

fn blob_point(class: usize, num_classes: usize, seed: u64, index: u64, out: &mut [f64]) {
    let mut r = rng::stream(seed, index, "blob");
    let angle = 2.0 * core::f64::consts::PI * class as f64 / num_classes as f64;
    let noise = Normal::new(0.0, 0.5).expect("valid sd");
    out[0] = 3.0 * libm::cos(angle) + noise.sample(&mut r);
    out[1] = 3.0 * libm::sin(angle) + noise.sample(&mut r);
}

/// Deterministic synthetic dataset for `(kind, num_classes, size, generation_seed)`.
pub fn generate_synthetic(spec: &DatasetSpec) -> Result<Dataset> {
    validate(spec)?;
    let shape = spec
        .input_shape()
        .ok_or_else(|| Error::Config("external datasets must be loaded from a file".into()))?;
    if spec.kind == DatasetKind::SyntheticShapes16x16 && spec.num_classes > SHAPE_GLYPHS {
        return Err(Error::Config(format!(
            "synthetic_shapes_16x16 supports at most {SHAPE_GLYPHS} classes"
        )));
    }
    let labels = shuffled_labels(spec);
    let mut inputs = vec![0.0; spec.size * shape.len()];
    for (i, (&label, row)) in labels
        .iter()
        .zip(inputs.chunks_exact_mut(shape.len()))
        .enumerate()
    {
        match spec.kind {
            DatasetKind::SyntheticShapes16x16 => {
                render_glyph(label, spec.generation_seed, i as u64, row)
            }
            _ => blob_point(label, spec.num_classes, spec.generation_seed, i as u64, row),
        }
    }
    let test_start = spec.size - spec.test_size();
    Dataset::new(shape, spec.num_classes, inputs, labels, test_start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_bit_deterministic() {
        let spec = DatasetSpec::shapes(4, 200, 11);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.labels, b.labels);
        assert!(a
            .inputs
            .iter()
            .zip(&b.inputs)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = generate_synthetic(&DatasetSpec::shapes(4, 200, 12)).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }

    #[test]
    fn labels_are_balanced() {
        for k in 2..=6 {
            let d = generate_synthetic(&DatasetSpec::shapes(k, 203, 5)).unwrap();
            let counts: Vec<usize> = (0..k)
                .map(|c| d.labels.iter().filter(|&&l| l == c).count())
                .collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
        }
    }

    #[test]
    fn splits_keep_test_set_fixed() {
        let d = generate_synthetic(&DatasetSpec::blobs(2, 100, 1)).unwrap();
        assert_eq!(d.test_indices(), 75..100);
        assert_eq!(d.train_indices(0.5), 0..38);
        assert_eq!(d.train_indices(0.9), 0..68);
        assert_eq!(d.shape, Shape::new(1, 1, 2));
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate_synthetic(&DatasetSpec::shapes(7, 100, 0)).is_err());
        assert!(generate_synthetic(&DatasetSpec::shapes(1, 100, 0)).is_err());
        let mut ext = DatasetSpec::shapes(2, 100, 0);
        ext.kind = DatasetKind::External;
        assert!(matches!(generate_synthetic(&ext), Err(Error::Config(_))));
    }

    #[test]
    fn glyph_classes_differ() {
        let d = generate_synthetic(&DatasetSpec::shapes(6, 60, 3)).unwrap();
        let mean = |c: usize| {
            let idx: Vec<usize> = (0..d.len()).filter(|&i| d.labels[i] == c).collect();
            let mut m = vec![0.0; 256];
            for &i in &idx {
                for (a, b) in m.iter_mut().zip(d.input(i)) {
                    *a += b / idx.len() as f64;
                }
            }
            m
        };
        let m0 = mean(0);
        let m2 = mean(2);
        let dist: f64 = m0.iter().zip(&m2).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!(dist > 1.0);
    }
}
