use super::{DefocusParams, EdgeMask, SparseBlurEstimate};
use crate::imgcore::{gaussian_derivative_kernel, gaussian_kernel, gradient_at, GrayImage, DEFAULT_TRUNCATE};
use crate::{Error, Result};

/// Inverts a gradient ratio `r` into a blur sigma:
/// `sqrt(max((r^2 s1^2 - s2^2) / (1 - r^2 + eps), 0))`.
///
/// Returns `None` when `1 - r^2 + eps >= 0`, i.e. the ratio is within `eps`
/// of 1 (or below it) and the inversion has no finite answer.
pub fn blur_from_ratio(r: f64, sigma1: f64, sigma2: f64, eps: f64) -> Option<f64> {
    let r2 = r * r;
    let denom = 1.0 - r2 + eps;
    if denom.is_nan() || denom >= 0.0 {
        return None;
    }
    let num = r2 * sigma1 * sigma1 - sigma2 * sigma2;
    Some((num / denom).max(0.0).sqrt())
}

/// Blur at each edge pixel from the ratio of gradient magnitudes at the two
/// reblur scales. Degenerate ratios are clamped to `sigma_max` and counted.
pub fn sparse_blur(img: &GrayImage, edges: &EdgeMask, params: &DefocusParams) -> Result<SparseBlurEstimate> {
    if img.dims() != edges.dims() {
        return Err(Error::Shape(format!(
            "image {}x{} vs edge mask {}x{}",
            img.width(),
            img.height(),
            edges.width(),
            edges.height()
        )));
    }
    let s1 = gaussian_kernel(params.sigma1, DEFAULT_TRUNCATE)?;
    let d1 = gaussian_derivative_kernel(params.sigma1, DEFAULT_TRUNCATE)?;
    let s2 = gaussian_kernel(params.sigma2, DEFAULT_TRUNCATE)?;
    let d2 = gaussian_derivative_kernel(params.sigma2, DEFAULT_TRUNCATE)?;

    let w = img.width();
    let mut sigma = vec![0.0; img.len()];
    let mut degenerate = 0;
    // only edge pixels are needed, so evaluate the two gradients pointwise
    for (i, _) in edges.as_slice().iter().enumerate().filter(|(_, &e)| e) {
        let (x, y) = (i % w, i / w);
        let (ax, ay) = gradient_at(img, x, y, &s1, &d1);
        let (bx, by) = gradient_at(img, x, y, &s2, &d2);
        let ratio = ax.hypot(ay) / (bx.hypot(by) + params.epsilon);
        sigma[i] = match blur_from_ratio(ratio, params.sigma1, params.sigma2, params.epsilon) {
            Some(s) => s.min(params.sigma_max),
            None => {
                degenerate += 1;
                params.sigma_max
            }
        };
    }
    Ok(SparseBlurEstimate {
        mask: edges.clone(),
        sigma_at_edges: sigma,
        degenerate_pixels: degenerate,
    })
}
