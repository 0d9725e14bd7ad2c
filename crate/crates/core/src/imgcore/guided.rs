//! Guided filter (He et al.) on box means with replicate padding.

use serde::{Deserialize, Serialize};

use super::{box_mean, GrayImage};
use crate::{Error, Result};

/// Exact filter, or the subsampled approximation that computes the linear
/// coefficients on a grid `subsample` times coarser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GuidedFilterMode {
    #[default]
    Exact,
    Fast { subsample: usize },
}

fn check_args(input: &GrayImage, guide: &GrayImage, radius: usize, eps: f64) -> Result<()> {
    input.ensure_same_dims(guide)?;
    if radius == 0 {
        return Err(Error::Parameter("guided filter radius must be >= 1".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Parameter(format!(
            "guided filter eps must be positive, got {eps}"
        )));
    }
    Ok(())
}

fn subsample_image(img: &GrayImage, s: usize) -> GrayImage {
    let w = img.width().div_ceil(s);
    let h = img.height().div_ceil(s);
    GrayImage::from_fn(w, h, |x, y| img.get(x * s, y * s))
}

fn bilinear_at(img: &GrayImage, fx: f64, fy: f64) -> f64 {
    let x0 = fx.floor().clamp(0.0, (img.width() - 1) as f64);
    let y0 = fy.floor().clamp(0.0, (img.height() - 1) as f64);
    let tx = (fx - x0).clamp(0.0, 1.0);
    let ty = (fy - y0).clamp(0.0, 1.0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let p00 = img.get_clamped(x0, y0);
    let p10 = img.get_clamped(x0 + 1, y0);
    let p01 = img.get_clamped(x0, y0 + 1);
    let p11 = img.get_clamped(x0 + 1, y0 + 1);
    let top = p00 + (p10 - p00) * tx;
    let bottom = p01 + (p11 - p01) * tx;
    top + (bottom - top) * ty
}

/// A guided filter with the guide's window statistics computed once, so
/// several inputs can be filtered against the same guide.
#[derive(Debug, Clone)]
pub struct GuidedFilter {
    guide: GrayImage,
    // guide at the working resolution, equal to `guide` unless subsampled
    work_guide: GrayImage,
    mean_i: GrayImage,
    var_i: GrayImage,
    radius: usize,
    eps: f64,
    subsample: usize,
}

impl GuidedFilter {
    pub fn new(guide: &GrayImage, radius: usize, eps: f64, mode: GuidedFilterMode) -> Result<Self> {
        check_args(guide, guide, radius, eps)?;
        let subsample = match mode {
            GuidedFilterMode::Exact => 1,
            GuidedFilterMode::Fast { subsample } => subsample.max(1),
        };
        let (work_guide, work_radius) = if subsample > 1 {
            (subsample_image(guide, subsample), (radius / subsample).max(1))
        } else {
            (guide.clone(), radius)
        };
        let mean_i = box_mean(&work_guide, work_radius);
        let corr_ii = box_mean(&work_guide.map(|i| i * i), work_radius);
        let var_i = corr_ii
            .zip_map(&mean_i, |c, m| (c - m * m).max(0.0))
            .expect("same dims");
        Ok(Self {
            guide: guide.clone(),
            work_guide,
            mean_i,
            var_i,
            radius: work_radius,
            eps,
            subsample,
        })
    }

    pub fn guide(&self) -> &GrayImage {
        &self.guide
    }

    /// Local linear coefficients `(mean_a, mean_b)` at the working resolution.
    fn coefficients(&self, input: &GrayImage) -> (GrayImage, GrayImage) {
        let r = self.radius;
        let mean_p = box_mean(input, r);
        let corr_ip = box_mean(&self.work_guide.zip_map(input, |i, p| i * p).expect("same dims"), r);
        let n = input.len();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for k in 0..n {
            let mi = self.mean_i.data()[k];
            let mp = mean_p.data()[k];
            let cov = corr_ip.data()[k] - mi * mp;
            a[k] = cov / (self.var_i.data()[k] + self.eps);
            b[k] = mp - a[k] * mi;
        }
        let (w, h) = input.dims();
        let a = GrayImage::new(w, h, a).expect("same dims");
        let b = GrayImage::new(w, h, b).expect("same dims");
        (box_mean(&a, r), box_mean(&b, r))
    }

    pub fn apply(&self, input: &GrayImage) -> Result<GrayImage> {
        input.ensure_same_dims(&self.guide)?;
        if self.subsample == 1 {
            let (mean_a, mean_b) = self.coefficients(input);
            let q = mean_a
                .data()
                .iter()
                .zip(mean_b.data())
                .zip(self.guide.data())
                .map(|((&a, &b), &i)| a * i + b)
                .collect();
            return GrayImage::new(self.guide.width(), self.guide.height(), q);
        }
        let (mean_a, mean_b) = self.coefficients(&subsample_image(input, self.subsample));
        let s = self.subsample as f64;
        Ok(GrayImage::from_fn(self.guide.width(), self.guide.height(), |x, y| {
            let (fx, fy) = (x as f64 / s, y as f64 / s);
            bilinear_at(&mean_a, fx, fy) * self.guide.get(x, y) + bilinear_at(&mean_b, fx, fy)
        }))
    }
}

/// `q = mean(a) * guide + mean(b)`, with `a = cov(guide, input) / (var(guide) + eps)`
/// and `b = mean(input) - a * mean(guide)` over `(2r+1)^2` windows.
pub fn guided_filter(input: &GrayImage, guide: &GrayImage, radius: usize, eps: f64) -> Result<GrayImage> {
    check_args(input, guide, radius, eps)?;
    GuidedFilter::new(guide, radius, eps, GuidedFilterMode::Exact)?.apply(input)
}

/// Fast guided filter: coefficients from a `subsample`-times coarser grid,
/// bilinearly upsampled and applied to the full-resolution guide.
pub fn guided_filter_fast(
    input: &GrayImage,
    guide: &GrayImage,
    radius: usize,
    eps: f64,
    subsample_factor: usize,
) -> Result<GrayImage> {
    check_args(input, guide, radius, eps)?;
    let mode = GuidedFilterMode::Fast {
        subsample: subsample_factor,
    };
    GuidedFilter::new(guide, radius, eps, mode)?.apply(input)
}

impl GuidedFilterMode {
    pub fn apply(self, input: &GrayImage, guide: &GrayImage, radius: usize, eps: f64) -> Result<GrayImage> {
        check_args(input, guide, radius, eps)?;
        GuidedFilter::new(guide, radius, eps, self)?.apply(input)
    }
}
