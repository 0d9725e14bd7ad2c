//! Defocus/saliency alignment: weighted histograms of the fake image's
//! defocus, weighted either by the real/fake defocus difference or by the
//! clipped saliency, compared by min-overlap and KL divergence.

use serde::{Deserialize, Serialize};

use crate::defocus::DefocusMap;
use crate::imgcore::GrayImage;
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 20;
pub const DEFAULT_EPSILON: f64 = 1e-10;

/// Bin of `v` in `[0, 1]` split into `n` equal bins, last bin closed at 1.
pub fn bin_index(v: f64, n: usize) -> usize {
    ((v * n as f64).floor().max(0.0) as usize).min(n - 1)
}

/// Signed per-pixel attribution map.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap(GrayImage);

impl SaliencyMap {
    pub fn new(values: GrayImage) -> Result<Self> {
        if values.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("saliency map has non-finite values".into()));
        }
        Ok(Self(values))
    }

    pub fn image(&self) -> &GrayImage {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
}

pub fn clip_negatives(s: &SaliencyMap) -> SaliencyMap {
    SaliencyMap(s.0.map(|v| v.max(0.0)))
}

/// `|d_fake - d_real|` on the normalised maps.
pub fn diff_map(d_fake: &DefocusMap, d_real: &DefocusMap) -> Result<GrayImage> {
    d_fake.ensure_same_dims(d_real)?;
    GrayImage::new(
        d_fake.width(),
        d_fake.height(),
        d_fake
            .normalized()
            .iter()
            .zip(d_real.normalized())
            .map(|(a, b)| (a - b).abs())
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedHistogram {
    pub n_bins: usize,
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Total mass was zero and `normalized` fell back to uniform.
    pub degenerate: bool,
}

impl WeightedHistogram {
    fn empty(n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::Parameter(format!("need at least 2 bins, got {n_bins}")));
        }
        Ok(Self {
            n_bins,
            edges: (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect(),
            mass: vec![0.0; n_bins],
            normalized: vec![1.0 / n_bins as f64; n_bins],
            degenerate: true,
        })
    }

    fn accumulate(&mut self, binning: &[f64], weights: &[f64]) -> Result<()> {
        if binning.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} binning values vs {} weights",
                binning.len(),
                weights.len()
            )));
        }
        for (&v, &wt) in binning.iter().zip(weights) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parameter(format!("binning value {v} outside [0, 1]")));
            }
            if !(wt >= 0.0 && wt.is_finite()) {
                return Err(Error::Parameter(format!("weight {wt} is negative or non-finite")));
            }
            self.mass[bin_index(v, self.n_bins)] += wt;
        }
        Ok(())
    }

    fn renormalize(&mut self) {
        let total: f64 = self.mass.iter().sum();
        self.degenerate = total.is_nan() || total <= 0.0;
        self.normalized = if self.degenerate {
            vec![1.0 / self.n_bins as f64; self.n_bins]
        } else {
            self.mass.iter().map(|m| m / total).collect()
        };
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Sums each pixel's weight into the bin holding its binning value.
pub fn weighted_histogram(binning: &[f64], weights: &[f64], n_bins: usize) -> Result<WeightedHistogram> {
    let mut h = WeightedHistogram::empty(n_bins)?;
    h.accumulate(binning, weights)?;
    h.renormalize();
    Ok(h)
}

fn same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Shape(format!("histograms with {} and {} bins", p.len(), q.len())));
    }
    Ok(())
}

/// `sum_i min(p_i, q_i)` over normalised histograms.
pub fn alignment_score(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    Ok(p.iter().zip(q).map(|(a, b)| a.min(*b)).sum())
}

/// `sum_i p_i ln((p_i + eps) / (q_i + eps))`.
pub fn kl_divergence(p: &[f64], q: &[f64], epsilon: f64) -> Result<f64> {
    same_len(p, q)?;
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(p.iter()
        .zip(q)
        .map(|(a, b)| a * ((a + epsilon) / (b + epsilon)).ln())
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub n_bins: usize,
    pub epsilon: f64,
    pub log_base: String,
    pub pairs: usize,
    pub h_diff: WeightedHistogram,
    pub h_shap: WeightedHistogram,
    pub alignment: f64,
    pub kl: f64,
}

fn finish(h_diff: WeightedHistogram, h_shap: WeightedHistogram, pairs: usize, epsilon: f64) -> Result<AlignmentReport> {
    let alignment = alignment_score(&h_shap.normalized, &h_diff.normalized)?;
    let kl = kl_divergence(&h_shap.normalized, &h_diff.normalized, epsilon)?;
    Ok(AlignmentReport {
        n_bins: h_diff.n_bins,
        epsilon,
        log_base: "e".into(),
        pairs,
        h_diff,
        h_shap,
        alignment,
        kl,
    })
}

/// One real/fake pair with the saliency of the fake image.
pub fn analyze_alignment(
    d_real: &DefocusMap,
    d_fake: &DefocusMap,
    saliency: &SaliencyMap,
    n_bins: usize,
    epsilon: f64,
) -> Result<AlignmentReport> {
    analyze_alignment_pooled(&[(d_real, d_fake, saliency)], n_bins, epsilon)
}

/// Accumulates the mass of every pair into one pair of histograms before
/// normalising.
pub fn analyze_alignment_pooled(
    pairs: &[(&DefocusMap, &DefocusMap, &SaliencyMap)],
    n_bins: usize,
    epsilon: f64,
) -> Result<AlignmentReport> {
    if pairs.is_empty() {
        return Err(Error::Parameter("alignment needs at least one pair".into()));
    }
    let mut h_diff = WeightedHistogram::empty(n_bins)?;
    let mut h_shap = WeightedHistogram::empty(n_bins)?;
    for (d_real, d_fake, saliency) in pairs {
        if saliency.dims() != d_fake.dims() {
            return Err(Error::Shape(format!(
                "saliency {:?} vs defocus {:?}",
                saliency.dims(),
                d_fake.dims()
            )));
        }
        let diff = diff_map(d_fake, d_real)?;
        let clipped = clip_negatives(saliency);
        h_diff.accumulate(d_fake.normalized(), diff.data())?;
        h_shap.accumulate(d_fake.normalized(), clipped.image().data())?;
    }
    h_diff.renormalize();
    h_shap.renormalize();
    finish(h_diff, h_shap, pairs.len(), epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(w: usize, h: usize, values: Vec<f64>) -> DefocusMap {
        DefocusMap::from_normalized(w, h, values).unwrap()
    }

    fn saliency(w: usize, h: usize, values: Vec<f64>) -> SaliencyMap {
        SaliencyMap::new(GrayImage::new(w, h, values).unwrap()).unwrap()
    }

    #[test]
    fn clipping() {
        let s = clip_negatives(&saliency(2, 1, vec![-0.2, 0.3]));
        assert_eq!(s.image().data(), &[0.0, 0.3]);
        assert!(clip_negatives(&saliency(2, 1, vec![-1.0, -2.0])).image().data().iter().all(|&v| v == 0.0));
        let pos = saliency(2, 1, vec![0.5, 0.0]);
        assert_eq!(clip_negatives(&pos), pos);
    }

    #[test]
    fn diff_of_complement() {
        let d: Vec<f64> = vec![0.0, 0.2, 0.5, 0.9];
        let real = map(2, 2, d.clone());
        let fake = map(2, 2, d.iter().map(|v| 1.0 - v).collect());
        let m = diff_map(&fake, &real).unwrap();
        for (got, v) in m.data().iter().zip(&d) {
            assert!((got - (1.0 - 2.0 * v).abs()).abs() < 1e-15);
        }
        assert_eq!(m, diff_map(&real, &fake).unwrap());
        assert!(diff_map(&real, &real).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(diff_map(&real, &map(4, 1, d)).is_err());
    }

    #[test]
    fn single_bin_concentration() {
        let h = weighted_histogram(&[0.3; 4], &[0.5; 4], 4).unwrap();
        assert_eq!(h.mass, vec![0.0, 2.0, 0.0, 0.0]);
        assert_eq!(h.edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn hand_binning() {
        let h = weighted_histogram(&[0.1, 0.3, 0.6, 0.9], &[1.0; 4], 4).unwrap();
        assert_eq!(h.mass, vec![1.0; 4]);
        assert_eq!(h.normalized, vec![0.25; 4]);
        assert!(!h.degenerate);
    }

    #[test]
    fn one_lands_in_the_last_bin() {
        let h = weighted_histogram(&[1.0, 0.0], &[1.0, 1.0], 5).unwrap();
        assert_eq!(h.mass, vec![1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn histogram_errors() {
        assert!(weighted_histogram(&[0.5], &[1.0], 1).is_err());
        assert!(weighted_histogram(&[0.5], &[1.0, 2.0], 4).is_err());
        assert!(weighted_histogram(&[1.5], &[1.0], 4).is_err());
    }

    #[test]
    fn zero_mass_is_uniform_and_flagged() {
        let h = weighted_histogram(&[0.2, 0.7], &[0.0, 0.0], 4).unwrap();
        assert!(h.degenerate);
        assert_eq!(h.normalized, vec![0.25; 4]);
    }

    #[test]
    fn overlap_worked_cases() {
        assert_eq!(alignment_score(&[0.5, 0.5, 0.0], &[0.25, 0.25, 0.5]).unwrap(), 0.5);
        assert_eq!(alignment_score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(alignment_score(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn kl_worked_cases() {
        let kl = kl_divergence(&[1.0, 0.0], &[0.5, 0.5], 1e-10).unwrap();
        assert!((kl - 2f64.ln()).abs() < 1e-6);
        let back = kl_divergence(&[0.5, 0.5], &[1.0, 0.0], 1e-10).unwrap();
        assert!((back - kl).abs() > 1.0);
        assert!(kl_divergence(&[0.5, 0.5], &[0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn saliency_proportional_to_difference_aligns_perfectly() {
        let real = map(3, 3, vec![0.1, 0.4, 0.2, 0.9, 0.3, 0.5, 0.6, 0.0, 0.8]);
        let fake = map(3, 3, vec![0.3, 0.1, 0.9, 0.2, 0.35, 1.0, 0.6, 0.5, 0.05]);
        let diff = diff_map(&fake, &real).unwrap();
        let s = SaliencyMap::new(diff.map(|v| 7.5 * v)).unwrap();
        let r = analyze_alignment(&real, &fake, &s, 4, DEFAULT_EPSILON).unwrap();
        assert!((r.alignment - 1.0).abs() < 1e-9);
        assert!(r.kl.abs() < 1e-9);
    }

    #[test]
    fn uniform_saliency_against_concentrated_difference() {
        // D_fake spans all four bins; only the pixel in bin 2 differs from D_real
        let fake = map(4, 1, vec![0.1, 0.3, 0.6, 0.9]);
        let real = map(4, 1, vec![0.1, 0.3, 0.2, 0.9]);
        let s = saliency(4, 1, vec![1.0; 4]);
        let r = analyze_alignment(&real, &fake, &s, 4, DEFAULT_EPSILON).unwrap();
        assert_eq!(r.h_diff.normalized, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(r.alignment, r.h_shap.normalized[2]);
        assert_eq!(r.alignment, 0.25);
    }

    #[test]
    fn blank_saliency_uses_uniform_reference() {
        let fake = map(2, 2, vec![0.1, 0.3, 0.6, 0.9]);
        let real = map(2, 2, vec![0.0; 4]);
        let r = analyze_alignment(&real, &fake, &saliency(2, 2, vec![0.0; 4]), 4, 1e-10).unwrap();
        assert!(r.h_shap.degenerate);
        let expected = alignment_score(&[0.25; 4], &r.h_diff.normalized).unwrap();
        assert_eq!(r.alignment, expected);
    }

    #[test]
    fn pooled_over_identical_pairs_matches_single() {
        let fake = map(2, 2, vec![0.1, 0.3, 0.6, 0.9]);
        let real = map(2, 2, vec![0.2, 0.2, 0.2, 0.2]);
        let s = saliency(2, 2, vec![0.1, -0.5, 2.0, 0.4]);
        let single = analyze_alignment(&real, &fake, &s, 4, 1e-10).unwrap();
        let pooled = analyze_alignment_pooled(&[(&real, &fake, &s); 10], 4, 1e-10).unwrap();
        assert_eq!(pooled.pairs, 10);
        for (a, b) in single.h_shap.normalized.iter().zip(&pooled.h_shap.normalized) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((single.alignment - pooled.alignment).abs() < 1e-12);
    }

    fn probs(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn overlap_properties(p in probs(8), q in probs(8)) {
            let a = alignment_score(&p, &q).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&a));
            prop_assert_eq!(a, alignment_score(&q, &p).unwrap());
            prop_assert!((alignment_score(&p, &p).unwrap() - 1.0).abs() < 1e-9);
            prop_assert!(kl_divergence(&p, &p, 1e-10).unwrap().abs() <= 1e-12);
            prop_assert!(kl_divergence(&p, &q, 1e-10).unwrap() >= -10.0 * 1e-10 * 8.0);
        }

        #[test]
        fn mass_is_conserved(
            vals in prop::collection::vec((0.0f64..=1.0, 0.0f64..10.0), 1..100),
            n in 2usize..30,
        ) {
            let (b, w): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
            let h = weighted_histogram(&b, &w, n).unwrap();
            let total: f64 = w.iter().sum();
            prop_assert!((h.total_mass() - total).abs() <= 1e-9 * total.max(1.0));
            let counts = weighted_histogram(&b, &vec![1.0; b.len()], n).unwrap();
            prop_assert_eq!(counts.total_mass(), b.len() as f64);
        }

        #[test]
        fn saliency_scale_cancels(
            vals in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, -1.0f64..1.0), 9),
            scale in 1e-3f64..1e3,
        ) {
            let real = map(3, 3, vals.iter().map(|v| v.0).collect());
            let fake = map(3, 3, vals.iter().map(|v| v.1).collect());
            let s = saliency(3, 3, vals.iter().map(|v| v.2).collect());
            let scaled = saliency(3, 3, vals.iter().map(|v| v.2 * scale).collect());
            let a = analyze_alignment(&real, &fake, &s, 5, 1e-10).unwrap();
            let b = analyze_alignment(&real, &fake, &scaled, 5, 1e-10).unwrap();
            prop_assert!((a.alignment - b.alignment).abs() < 1e-9);
        }
    }
}
