//! Single-image defocus blur estimation.
//!
//! Blur at an edge is recovered from how much the edge's gradient drops
//! between two Gaussian reblur scales `sigma1 < sigma2`. For an edge already
//! blurred by `sigma`, the gradient ratio is
//!
//! ```text
//! R = sqrt((sigma^2 + sigma2^2) / (sigma^2 + sigma1^2))
//! ```
//!
//! and inverting it gives
//!
//! ```text
//! sigma = sqrt(max((R^2 sigma1^2 - sigma2^2) / (1 - R^2 + eps), 0))
//! ```
//!
//! The estimator runs four timed stages: `rgb_to_gray`, `edge_map`,
//! `sparse_blur_map` and `propagation`.

mod edges;
mod matting;
mod propagate;
mod sparse;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::imgcore::{rgb_to_gray, GrayImage, GuidedFilterMode, RgbImage};
use crate::{Error, Result};

pub use edges::{detect_edges, EDGE_SIGMA};
pub use matting::{conjugate_gradient, MattingLaplacian, MATTING_EPS};
pub use propagate::propagate;
pub use sparse::{blur_from_ratio, sparse_blur};

/// Stage names in pipeline order.
pub const STAGE_NAMES: [&str; 4] = ["rgb_to_gray", "edge_map", "sparse_blur_map", "propagation"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Propagation {
    #[default]
    GuidedFilter,
    MattingLaplacian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefocusParams {
    /// Smaller reblur scale, pixels.
    pub sigma1: f64,
    /// Larger reblur scale, pixels.
    pub sigma2: f64,
    /// Stabiliser in the ratio and in the inversion denominator.
    pub epsilon: f64,
    /// Clamp ceiling in pixels; also the normalisation denominator.
    pub sigma_max: f64,
    /// Hysteresis thresholds as fractions of the image's peak gradient.
    pub canny_low: f64,
    pub canny_high: f64,
    pub propagation: Propagation,
    pub gf_radius: usize,
    pub gf_eps: f64,
    pub gf_mode: GuidedFilterMode,
    /// Data-fidelity weight of the matting solve.
    pub matting_lambda: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for DefocusParams {
    fn default() -> Self {
        Self {
            sigma1: 1.5,
            sigma2: 2.0,
            epsilon: 1e-6,
            sigma_max: 5.0,
            canny_low: 0.05,
            canny_high: 0.15,
            propagation: Propagation::GuidedFilter,
            gf_radius: 15,
            gf_eps: 1e-3,
            gf_mode: GuidedFilterMode::Exact,
            matting_lambda: 1e-3,
            cg_tol: 1e-5,
            cg_max_iter: 2000,
        }
    }
}

impl DefocusParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if !(self.sigma1 > 0.0 && self.sigma1 < self.sigma2 && self.sigma2.is_finite()) {
            return fail(format!(
                "need 0 < sigma1 < sigma2, got ({}, {})",
                self.sigma1, self.sigma2
            ));
        }
        if !(self.epsilon > 0.0 && self.sigma_max > 0.0 && self.sigma_max.is_finite()) {
            return fail("epsilon and sigma_max must be positive".into());
        }
        if !(self.canny_low > 0.0 && self.canny_low < self.canny_high) {
            return fail(format!(
                "need 0 < canny_low < canny_high, got ({}, {})",
                self.canny_low, self.canny_high
            ));
        }
        if self.gf_radius == 0 || self.gf_eps <= 0.0 {
            return fail("guided filter radius and eps must be positive".into());
        }
        if let GuidedFilterMode::Fast { subsample: 0 } = self.gf_mode {
            return fail("fast guided filter subsample must be >= 1".into());
        }
        if !(self.matting_lambda > 0.0 && self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return fail("matting lambda, cg_tol and cg_max_iter must be positive".into());
        }
        Ok(())
    }
}

/// Boolean edge raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl EdgeMask {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::Shape(format!(
                "{} mask samples for {width}x{height}",
                mask.len()
            )));
        }
        Ok(Self { width, height, mask })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::new(
            self.width,
            self.height,
            self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )
        .expect("non-empty mask")
    }
}

/// Blur known only on edge pixels; zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBlurEstimate {
    pub mask: EdgeMask,
    pub sigma_at_edges: Vec<f64>,
    /// Edge pixels whose ratio sat within epsilon of 1 and were clamped.
    pub degenerate_pixels: usize,
}

impl SparseBlurEstimate {
    pub fn values_image(&self) -> GrayImage {
        GrayImage::new(self.mask.width, self.mask.height, self.sigma_at_edges.clone())
            .expect("mask-shaped values")
    }
}

/// Dense per-pixel blur in pixels, with its normalised view.
#[derive(Debug, Clone, PartialEq)]
pub struct DefocusMap {
    width: usize,
    height: usize,
    sigma: Vec<f64>,
    normalized: Vec<f64>,
    sigma_max: f64,
}

impl DefocusMap {
    /// `normalized = sigma / sigma_max`. Values must lie in `[0, sigma_max]`.
    pub fn new(width: usize, height: usize, sigma: Vec<f64>, sigma_max: f64) -> Result<Self> {
        if !(sigma_max > 0.0 && sigma_max.is_finite()) {
            return Err(Error::Parameter(format!("sigma_max must be positive, got {sigma_max}")));
        }
        if width == 0 || height == 0 || sigma.len() != width * height {
            return Err(Error::Shape(format!(
                "{} samples for a {width}x{height} defocus map",
                sigma.len()
            )));
        }
        if let Some(v) = sigma
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > sigma_max)
        {
            return Err(Error::Parameter(format!(
                "defocus value {v} outside [0, {sigma_max}]"
            )));
        }
        let normalized = sigma.iter().map(|&s| s / sigma_max).collect();
        Ok(Self {
            width,
            height,
            sigma,
            normalized,
            sigma_max,
        })
    }

    /// Clamps into `[0, sigma_max]` first; non-finite samples become 0.
    pub fn from_sigma_clamped(width: usize, height: usize, sigma: Vec<f64>, sigma_max: f64) -> Result<Self> {
        let sigma = sigma
            .into_iter()
            .map(|v| if v.is_finite() { v.clamp(0.0, sigma_max) } else { 0.0 })
            .collect();
        Self::new(width, height, sigma, sigma_max)
    }

    /// A map that is already normalised (`sigma_max = 1`).
    pub fn from_normalized(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(width, height, values, 1.0)
    }

    /// Per-image min-max normalisation instead of `sigma / sigma_max`.
    /// A flat map normalises to all zeros.
    pub fn with_minmax_normalization(&self) -> Self {
        let (lo, hi) = self
            .sigma
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let span = hi - lo;
        let normalized = self
            .sigma
            .iter()
            .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect();
        Self {
            normalized,
            ..self.clone()
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn sigma_image(&self) -> GrayImage {
        GrayImage::new(self.width, self.height, self.sigma.clone()).expect("valid map")
    }

    pub fn normalized_image(&self) -> GrayImage {
        GrayImage::new(self.width, self.height, self.normalized.clone()).expect("valid map")
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "defocus maps {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
    /// Scratch buffers allocated by the stage, estimated from their sizes.
    pub peak_mb: f64,
}

/// Non-fatal conditions met while estimating one image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub edge_pixels: usize,
    pub degenerate_ratio_pixels: usize,
    pub empty_edge_mask: bool,
    pub cg_iterations: Option<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DefocusEstimate {
    pub map: DefocusMap,
    pub timings: Vec<StageTiming>,
    pub diagnostics: Diagnostics,
}

const MB: f64 = 1024.0 * 1024.0;

fn f64_buffers_mb(count: usize, pixels: usize) -> f64 {
    (count * pixels * std::mem::size_of::<f64>()) as f64 / MB
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Gray conversion, edges, sparse blur and propagation, timed per stage.
pub fn estimate_defocus(img: &RgbImage, params: &DefocusParams) -> Result<DefocusEstimate> {
    params.validate()?;
    let n = img.width() * img.height();
    let mut timings = Vec::with_capacity(STAGE_NAMES.len());
    let mut push = |stage: &str, start: Instant, peak_mb: f64| {
        timings.push(StageTiming {
            stage: stage.to_string(),
            ms: elapsed_ms(start),
            peak_mb,
        })
    };

    let t = Instant::now();
    let gray = rgb_to_gray(img);
    push(STAGE_NAMES[0], t, f64_buffers_mb(1, n));

    let t = Instant::now();
    let edges = detect_edges(&gray, params)?;
    // gx, gy, their shared row pass and the magnitude; mask bytes are minor
    push(STAGE_NAMES[1], t, f64_buffers_mb(4, n) + 2.0 * n as f64 / MB);

    let t = Instant::now();
    let sparse = sparse_blur(&gray, &edges, params)?;
    push(STAGE_NAMES[2], t, f64_buffers_mb(1, n) + n as f64 / MB);

    let t = Instant::now();
    let (map, mut diagnostics) = propagate::propagate_with_diagnostics(&sparse, &gray, params)?;
    let prop_buffers = match params.propagation {
        // numerator and denominator filters, eight rasters each
        Propagation::GuidedFilter => 16,
        // 25-point stencil plus five solver vectors
        Propagation::MattingLaplacian => 30,
    };
    push(STAGE_NAMES[3], t, f64_buffers_mb(prop_buffers, n));

    diagnostics.edge_pixels = edges.count();
    diagnostics.degenerate_ratio_pixels = sparse.degenerate_pixels;
    Ok(DefocusEstimate {
        map,
        timings,
        diagnostics,
    })
}
