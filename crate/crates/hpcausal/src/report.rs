//! CSV tables and static SVG figures.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hpcausal_core::analysis::{CorrelationResult, MediationResult, SensitivityMatrix};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

/// One kernelized effect value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectRecord {
    pub instance_id: usize,
    pub hparam_key: String,
    pub level: String,
    pub control_mode: String,
    /// `global` or a bucket number.
    pub bucket: String,
    /// `prediction` or `explanation`.
    pub outcome_kind: String,
    /// Explanation method; `none` for predictions.
    pub method: String,
    pub kernel: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRecord {
    pub model_id: u64,
    pub test_accuracy: f64,
    pub bucket: usize,
    pub percentiles: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRecord {
    pub bucket: String,
    pub method: String,
    pub hparam_key: String,
    pub kernel: String,
    pub pearson: f64,
    pub pearson_low: f64,
    pub pearson_high: f64,
    pub spearman: f64,
    pub spearman_low: f64,
    pub spearman_high: f64,
    pub n_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediationRecord {
    pub bucket: String,
    pub method: String,
    pub hparam_key: String,
    pub kernel: String,
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

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRecord {
    pub bucket: String,
    pub method: String,
    /// `all` when keys are pooled.
    pub hparam_key: String,
    pub kernel_a: String,
    pub kernel_b: String,
    pub spearman: f64,
    pub n_points: usize,
}

pub fn bucket_label(bucket: Option<usize>) -> String {
    bucket.map_or_else(|| "global".into(), |b| b.to_string())
}

impl From<&CorrelationResult> for CorrelationRecord {
    fn from(r: &CorrelationResult) -> Self {
        Self {
            bucket: bucket_label(r.bucket),
            method: r.method.clone(),
            hparam_key: r.hparam_key.to_string(),
            kernel: r.kernel.to_string(),
            pearson: r.pearson,
            pearson_low: r.pearson_ci.low,
            pearson_high: r.pearson_ci.high,
            spearman: r.spearman,
            spearman_low: r.spearman_ci.low,
            spearman_high: r.spearman_ci.high,
            n_points: r.n_points,
        }
    }
}

impl From<&MediationResult> for MediationRecord {
    fn from(r: &MediationResult) -> Self {
        Self {
            bucket: bucket_label(r.bucket),
            method: r.method.clone(),
            hparam_key: r.hparam_key.to_string(),
            kernel: r.kernel.to_string(),
            pearson_total: r.pearson_total,
            pearson_permuted: r.pearson_permuted,
            pearson_delta: r.pearson_delta,
            spearman_total: r.spearman_total,
            spearman_permuted: r.spearman_permuted,
            spearman_delta: r.spearman_delta,
            n_points: r.n_points,
            permutations: r.permutations,
            permutation_seed: r.permutation_seed,
        }
    }
}

/// Upper triangle of a sensitivity matrix, one row per kernel pair.
pub fn sensitivity_records(m: &SensitivityMatrix) -> Vec<SensitivityRecord> {
    let k = m.kernels.len();
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            out.push(SensitivityRecord {
                bucket: bucket_label(m.bucket),
                method: m.method.clone(),
                hparam_key: m.hparam_key.map_or_else(|| "all".into(), |h| h.to_string()),
                kernel_a: m.kernels[i].to_string(),
                kernel_b: m.kernels[j].to_string(),
                spearman: m.get(i, j),
                n_points: m.n_points,
            });
        }
    }
    out
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let csv_err = |source| Error::Csv {
        path: path.into(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

/// Points of one scatter panel.
pub struct Panel {
    pub title: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

const PANEL: f64 = 220.0;
const MARGIN: f64 = 40.0;

fn range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(w: f64, h: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" font-family=\"sans-serif\" font-size=\"10\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"8\" y=\"16\" font-size=\"13\">{}</text>\n",
        escape(title)
    )
}

/// ITE_Y (x) against ITE_E (y), one panel per scope.
pub fn scatter_svg(title: &str, x_label: &str, y_label: &str, panels: &[Panel]) -> String {
    let n = panels.len().max(1) as f64;
    let width = n * (PANEL + MARGIN) + MARGIN;
    let height = PANEL + 2.5 * MARGIN;
    let mut s = header(width, height, title);
    for (p, panel) in panels.iter().enumerate() {
        let x0 = MARGIN + p as f64 * (PANEL + MARGIN);
        let y0 = 1.5 * MARGIN;
        let (xl, xh) = range(&panel.xs);
        let (yl, yh) = range(&panel.ys);
        let _ = writeln!(
            s,
            "<g><rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{PANEL:.0}\" height=\"{PANEL:.0}\" fill=\"none\" stroke=\"#444\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\">{} (n={})</text>",
            x0,
            y0 - 4.0,
            escape(&panel.title),
            panel.xs.len()
        );
        for (&x, &y) in panel.xs.iter().zip(&panel.ys) {
            let px = x0 + (x - xl) / (xh - xl) * PANEL;
            let py = y0 + PANEL - (y - yl) / (yh - yl) * PANEL;
            let _ = writeln!(s, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"1.5\" fill=\"#1f77b4\" fill-opacity=\"0.5\"/>");
        }
        let _ = writeln!(
            s,
            "<text x=\"{x0:.2}\" y=\"{:.2}\">{xl:.3}</text><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{xh:.3}</text>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{yh:.3}</text><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{yl:.3}</text>\n\
             <text transform=\"translate({:.2},{:.2}) rotate(-90)\" text-anchor=\"middle\">{}</text></g>",
            y0 + PANEL + 12.0,
            x0 + PANEL,
            y0 + PANEL + 12.0,
            x0 + PANEL / 2.0,
            y0 + PANEL + 26.0,
            escape(x_label),
            x0 - 2.0,
            y0 + 8.0,
            x0 - 2.0,
            y0 + PANEL,
            x0 - 28.0,
            y0 + PANEL / 2.0,
            escape(y_label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Gaussian kernel density of `v` on `grid` points spanning `[lo, hi]`.
fn density(v: &[f64], lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let bw = (1.06 * sd * n.powf(-0.2)).max((hi - lo) * 1e-3).max(1e-12);
    (0..grid)
        .map(|g| {
            let t = lo + (hi - lo) * g as f64 / (grid - 1) as f64;
            v.iter()
                .map(|x| (-0.5 * ((t - x) / bw).powi(2)).exp())
                .sum::<f64>()
        })
        .collect()
}

/// Mirrored density outline of each group, side by side.
pub fn violin_svg(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    const W: f64 = 70.0;
    const H: f64 = 260.0;
    const GRID: usize = 48;
    let all: Vec<f64> = groups.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let (lo, hi) = range(&all);
    let width = MARGIN * 2.0 + W * groups.len().max(1) as f64;
    let mut s = header(width, H + 3.0 * MARGIN, title);
    let y0 = 1.5 * MARGIN;
    let y_of = |v: f64| y0 + H - (v - lo) / (hi - lo) * H;
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{hi:.3}</text><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{lo:.3}</text>\n\
         <text transform=\"translate(10,{:.2}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        MARGIN - 2.0,
        y0 + 8.0,
        MARGIN - 2.0,
        y0 + H,
        y0 + H / 2.0,
        escape(y_label)
    );
    for (g, (name, v)) in groups.iter().enumerate() {
        let cx = MARGIN + W * (g as f64 + 0.5);
        let _ = writeln!(
            s,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{} (n={})</text>",
            y0 + H + 16.0,
            escape(name),
            v.len()
        );
        if v.is_empty() {
            continue;
        }
        let d = density(v, lo, hi, GRID);
        let peak = d.iter().copied().fold(0.0, f64::max).max(1e-300);
        let mut pts = Vec::with_capacity(2 * GRID);
        for (i, dv) in d.iter().enumerate() {
            let y = y_of(lo + (hi - lo) * i as f64 / (GRID - 1) as f64);
            pts.push(format!("{:.2},{y:.2}", cx + dv / peak * W * 0.45));
        }
        for (i, dv) in d.iter().enumerate().rev() {
            let y = y_of(lo + (hi - lo) * i as f64 / (GRID - 1) as f64);
            pts.push(format!("{:.2},{y:.2}", cx - dv / peak * W * 0.45));
        }
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let _ = writeln!(
            s,
            "<polygon points=\"{}\" fill=\"#9ecae1\" stroke=\"#3182bd\"/>\n<line x1=\"{:.2}\" x2=\"{:.2}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            pts.join(" "),
            cx - W * 0.2,
            cx + W * 0.2,
            y_of(median),
            y_of(median)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(Error::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_floats_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let rows = vec![EffectRecord {
            instance_id: 3,
            hparam_key: "l2".into(),
            level: "1e-4".into(),
            control_mode: "complement".into(),
            bucket: "global".into(),
            outcome_kind: "explanation".into(),
            method: "gradient".into(),
            kernel: "rbf".into(),
            value: 0.1 + 0.2,
        }];
        write_csv(&path, &rows).unwrap();
        assert_eq!(read_csv::<EffectRecord>(&path).unwrap(), rows);
    }

    #[test]
    fn figures_are_well_formed() {
        let s = scatter_svg(
            "a<b",
            "x",
            "y",
            &[Panel {
                title: "global".into(),
                xs: vec![0.0, 1.0],
                ys: vec![1.0, 1.0],
            }],
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n") && s.contains("a&lt;b"));
        assert_eq!(s.matches("<circle").count(), 2);
        let v = violin_svg(
            "v",
            "y",
            &[
                ("global".into(), vec![0.1, 0.2, 0.2, 0.5]),
                ("0".into(), vec![]),
            ],
        );
        assert_eq!(v.matches("<polygon").count(), 1);
    }
}
