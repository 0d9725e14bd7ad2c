//! Pixel buffers and the numeric filters everything else is built from.

mod filter;
mod guided;
pub mod io;

pub use filter::{
    box_mean, convolve_separable, gaussian_derivative_kernel, gaussian_kernel, gradient,
    gradient_at, gradient_magnitude, Kernel1D, DEFAULT_TRUNCATE,
};
pub use guided::{guided_filter, guided_filter_fast, GuidedFilter, GuidedFilterMode};

use crate::{Error, Result};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major single channel raster with nominal range [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty raster {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{} samples for a {width}x{height} raster",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite sample at index {i}")));
        }
        Ok(Self { width, height, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty raster");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty raster");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
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
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Replicate-padded read.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_dims(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Row-major interleaved RGB raster with samples in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty raster {width}x{height}")));
        }
        if data.len() != 3 * width * height {
            return Err(Error::Shape(format!(
                "{} samples for a {width}x{height} RGB raster",
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::Parameter(format!(
                "RGB sample {} at index {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Replicates a gray raster into three channels.
    pub fn from_gray(gray: &GrayImage) -> Result<Self> {
        let data = gray.data().iter().flat_map(|&v| [v, v, v]).collect();
        Self::new(gray.width(), gray.height(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// BT.601 luma.
pub fn rgb_to_gray(img: &RgbImage) -> GrayImage {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}
