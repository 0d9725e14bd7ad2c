//! Map-level forensic statistics: discrepancy masks, local variance, the
//! two-sample Kolmogorov-Smirnov test and per-image feature vectors.

use serde::{Deserialize, Serialize};

use crate::alignment::bin_index;
use crate::defocus::DefocusMap;
use crate::imgcore::{box_mean, GrayImage};
use crate::{Error, Result};

/// Threshold slack so that differences meant to be exactly at the threshold
/// (e.g. `0.3 - 0.2`) are not lost to rounding.
pub const THRESHOLD_SLACK: f64 = 1e-12;

pub const DEFAULT_MASK_THRESHOLD: f64 = 0.1;
pub const DEFAULT_VARIANCE_WINDOW: usize = 7;
pub const FEATURE_HIST_BINS: usize = 16;
pub const FEATURE_COUNT: usize = 8 + FEATURE_HIST_BINS;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl BinaryMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// 0/1 raster, suitable for a 0/255 PNG.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::new(
            self.width,
            self.height,
            self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )
        .expect("non-empty mask")
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("threshold must be positive, got {t}")))
    }
}

/// Pixels where the normalised maps differ by at least `threshold`.
pub fn discrepancy_mask(a: &DefocusMap, b: &DefocusMap, threshold: f64) -> Result<BinaryMask> {
    a.ensure_same_dims(b)?;
    check_threshold(threshold)?;
    let mask = a
        .normalized()
        .iter()
        .zip(b.normalized())
        .map(|(x, y)| (x - y).abs() >= threshold - THRESHOLD_SLACK)
        .collect();
    Ok(BinaryMask {
        width: a.width(),
        height: a.height(),
        mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    /// Mean activated-pixel count over the pairs swept.
    pub activated: f64,
}

/// Activated-pixel count of one pair at each threshold.
pub fn threshold_sweep(a: &DefocusMap, b: &DefocusMap, thresholds: &[f64]) -> Result<Vec<SweepPoint>> {
    mean_threshold_sweep(&[(a, b)], thresholds)
}

/// Mean activated-pixel count over several pairs at each threshold.
pub fn mean_threshold_sweep(pairs: &[(&DefocusMap, &DefocusMap)], thresholds: &[f64]) -> Result<Vec<SweepPoint>> {
    if pairs.is_empty() {
        return Err(Error::Parameter("threshold sweep needs at least one pair".into()));
    }
    for &t in thresholds {
        check_threshold(t)?;
    }
    let mut diffs = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        a.ensure_same_dims(b)?;
        let d: Vec<f64> = a
            .normalized()
            .iter()
            .zip(b.normalized())
            .map(|(x, y)| (x - y).abs())
            .collect();
        diffs.push(d);
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let total: usize = diffs
                .iter()
                .map(|d| d.iter().filter(|&&v| v >= t - THRESHOLD_SLACK).count())
                .sum();
            SweepPoint {
                threshold: t,
                activated: total as f64 / pairs.len() as f64,
            }
        })
        .collect())
}

/// Per-pixel variance of the normalised defocus in a square window.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceMap {
    values: GrayImage,
    window: usize,
}

impl VarianceMap {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn values(&self) -> &GrayImage {
        &self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    pub fn mean(&self) -> f64 {
        self.values.mean()
    }
}

/// `E[x^2] - E[x]^2` over a `window x window` neighbourhood (odd, >= 3) with
/// replicate padding, clamped at zero.
pub fn local_variance(map: &DefocusMap, window: usize) -> Result<VarianceMap> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "variance window must be odd and >= 3, got {window}"
        )));
    }
    let radius = window / 2;
    let values = map.normalized_image();
    let mean = box_mean(&values, radius);
    let mean_sq = box_mean(&values.map(|v| v * v), radius);
    let var = mean_sq.zip_map(&mean, |s, m| (s - m * m).max(0.0))?;
    Ok(VarianceMap { values: var, window })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d_statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

fn sorted_sample(xs: &[f64], name: &str) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::Parameter(format!("KS sample {name} is empty")));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter(format!("KS sample {name} has non-finite values")));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Largest gap between the two empirical CDFs.
pub fn ks_statistic(x: &[f64], y: &[f64]) -> Result<f64> {
    let xs = sorted_sample(x, "x")?;
    let ys = sorted_sample(y, "y")?;
    let (n1, n2) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        // step both ECDFs past the next pooled value, ties included
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    Ok(d)
}

/// Asymptotic Kolmogorov tail with Stephens' small-sample correction:
/// `2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)`, where
/// `lambda = (sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) d` and `ne = n1 n2 / (n1 + n2)`.
///
/// At most 100 terms are summed; if the series has not settled by then
/// (very small `lambda`) the tail is 1.
pub fn kolmogorov_p_value(d: f64, n1: usize, n2: usize) -> f64 {
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    let root = ne.sqrt();
    let lambda = (root + 0.12 + 0.11 / root) * d;
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (a2 * (k * k) as f64).exp();
        sum += term;
        if term.abs() <= 1e-12 * sum.abs().max(1e-300) || term.abs() < 1e-300 {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    1.0
}

pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsResult> {
    let d = ks_statistic(x, y)?;
    Ok(KsResult {
        d_statistic: d,
        p_value: kolmogorov_p_value(d, x.len(), y.len()),
        n1: x.len(),
        n2: y.len(),
    })
}

/// Column names of [`FeatureVector`] in order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "defocus_mean",
    "defocus_std",
    "defocus_min",
    "defocus_max",
    "defocus_median",
    "lvar_mean",
    "lvar_std",
    "lvar_max",
    "hist_00",
    "hist_01",
    "hist_02",
    "hist_03",
    "hist_04",
    "hist_05",
    "hist_06",
    "hist_07",
    "hist_08",
    "hist_09",
    "hist_10",
    "hist_11",
    "hist_12",
    "hist_13",
    "hist_14",
    "hist_15",
];

/// Per-image summary of a defocus map and its local variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn histogram(&self) -> &[f64] {
        &self.0[8..]
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Defocus mean/std/min/max/median, local-variance mean/std/max and a
/// 16-bin histogram of the normalised defocus (last bin closed at 1).
pub fn extract_features(map: &DefocusMap, var: &VarianceMap) -> Result<FeatureVector> {
    if map.dims() != var.dims() {
        return Err(Error::Shape(format!(
            "defocus map {:?} vs variance map {:?}",
            map.dims(),
            var.dims()
        )));
    }
    let d = map.normalized();
    let (mean, std) = mean_std(d);
    let (lo, hi) = d
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let lv = var.values().data();
    let (lv_mean, lv_std) = mean_std(lv);
    let lv_max = lv.iter().copied().fold(0.0, f64::max);

    let mut f = [0.0; FEATURE_COUNT];
    f[..8].copy_from_slice(&[mean, std, lo, hi, median(d), lv_mean, lv_std, lv_max]);
    let unit = 1.0 / d.len() as f64;
    for &v in d {
        f[8 + bin_index(v, FEATURE_HIST_BINS)] += unit;
    }
    Ok(FeatureVector(f))
}
