use std::collections::VecDeque;

use super::{DefocusParams, EdgeMask};
use crate::imgcore::{gradient, GrayImage};
use crate::Result;

/// Scale of the Gaussian-derivative gradient used for edge detection.
pub const EDGE_SIGMA: f64 = 1.0;

// tan(22.5 deg)
const TAN_22_5: f64 = 0.414_213_562_373_095_1;

/// Neighbour offsets across the edge for a gradient `(gx, gy)`.
///
/// Quantised to 0/45/90/135 degrees without trigonometry so that `(gx, gy)`
/// and `(-gx, -gy)` always select the same pair.
fn across_offsets(gx: f64, gy: f64) -> [(isize, isize); 2] {
    let (ax, ay) = (gx.abs(), gy.abs());
    if ay <= TAN_22_5 * ax {
        [(-1, 0), (1, 0)]
    } else if ax <= TAN_22_5 * ay {
        [(0, -1), (0, 1)]
    } else if (gx > 0.0) == (gy > 0.0) {
        [(-1, -1), (1, 1)]
    } else {
        [(1, -1), (-1, 1)]
    }
}

/// Canny edges: gradient at [`EDGE_SIGMA`], non-maximum suppression along the
/// quantised gradient direction, then hysteresis with `canny_low`/`canny_high`
/// taken as fractions of the peak gradient magnitude.
///
/// A flat image yields an empty mask.
pub fn detect_edges(img: &GrayImage, params: &DefocusParams) -> Result<EdgeMask> {
    let (w, h) = img.dims();
    let (gx, gy) = gradient(img, EDGE_SIGMA)?;
    let mag: Vec<f64> = gx
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&a, &b)| a.hypot(b))
        .collect();
    let peak = mag.iter().copied().fold(0.0, f64::max);
    if peak <= 1e-12 {
        return Ok(EdgeMask::empty(w, h));
    }
    let high = params.canny_high * peak;
    let low = params.canny_low * peak;

    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };

    // 0 = suppressed, 1 = weak, 2 = strong
    let mut class = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m < low {
                continue;
            }
            let [(ax, ay), (bx, by)] = across_offsets(gx.data()[i], gy.data()[i]);
            let (xi, yi) = (x as isize, y as isize);
            // strict on one side so a two-pixel plateau keeps exactly one pixel
            if m > at(xi + ax, yi + ay) && m >= at(xi + bx, yi + by) {
                class[i] = if m >= high { 2 } else { 1 };
            }
        }
    }

    let mut mask = vec![false; w * h];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, &c) in class.iter().enumerate() {
        if c == 2 {
            mask[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !mask[j] && class[j] == 1 {
                    mask[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    EdgeMask::new(w, h, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(w: usize, h: usize, col: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, _| if x >= col { 0.8 } else { 0.2 })
    }

    #[test]
    fn flat_image_has_no_edges() {
        let mask = detect_edges(&GrayImage::filled(16, 16, 0.4), &DefocusParams::default()).unwrap();
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn vertical_step_gives_a_one_pixel_line() {
        let (w, h) = (24, 20);
        let mask = detect_edges(&step(w, h, 12), &DefocusParams::default()).unwrap();
        let mut cols = Vec::new();
        for y in 0..h {
            let row: Vec<usize> = (0..w).filter(|&x| mask.get(x, y)).collect();
            assert!(row.len() <= 1, "row {y}: {row:?}");
            cols.extend(row);
        }
        assert!(cols.len() + 2 >= h && cols.len() <= h);
        // the edge sits between columns 11 and 12
        assert!(cols.iter().all(|&c| c == 11 || c == 12));
        assert!(cols.windows(2).all(|p| p[0] == p[1]));
    }

    #[test]
    fn inversion_keeps_the_mask() {
        let img = GrayImage::from_fn(30, 30, |x, y| {
            let d = ((x as f64 - 14.5).powi(2) + (y as f64 - 15.0).powi(2)).sqrt();
            if d < 9.0 { 0.9 } else { 0.1 + 0.01 * (x % 5) as f64 }
        });
        let p = DefocusParams::default();
        let a = detect_edges(&img, &p).unwrap();
        let b = detect_edges(&img.map(|v| 1.0 - v), &p).unwrap();
        assert_eq!(a, b);
        assert!(a.count() > 20);
    }

    #[test]
    fn direction_quantisation_is_sign_symmetric() {
        for &(gx, gy) in &[(1.0, 0.1), (0.2, -1.0), (1.0, 1.0), (-0.7, 0.8), (0.0, 0.0)] {
            assert_eq!(across_offsets(gx, gy), across_offsets(-gx, -gy));
        }
    }
}
