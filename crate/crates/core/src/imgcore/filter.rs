use super::GrayImage;
use crate::{Error, Result};

/// Gaussian support in multiples of sigma.
pub const DEFAULT_TRUNCATE: f64 = 4.0;

/// Odd-length 1-D filter centred on tap `radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    radius: usize,
    taps: Vec<f64>,
}

impl Kernel1D {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.len().is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "kernel needs an odd number of taps, got {}",
                taps.len()
            )));
        }
        Ok(Self {
            radius: taps.len() / 2,
            taps,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }
}

fn check_sigma(sigma: f64, truncate: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(truncate > 0.0 && truncate.is_finite()) {
        return Err(Error::Parameter(format!(
            "truncate must be positive, got {truncate}"
        )));
    }
    Ok(())
}

/// Sampled Gaussian with radius `ceil(truncate * sigma)`, normalised to unit sum.
pub fn gaussian_kernel(sigma: f64, truncate: f64) -> Result<Kernel1D> {
    check_sigma(sigma, truncate)?;
    let radius = (truncate * sigma).ceil() as usize;
    let r = radius as isize;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    Ok(Kernel1D { radius, taps })
}

/// First derivative of the sampled Gaussian, `-i / sigma^2 * g(i)`, with the
/// mean tap subtracted so the taps sum to zero.
pub fn gaussian_derivative_kernel(sigma: f64, truncate: f64) -> Result<Kernel1D> {
    let smooth = gaussian_kernel(sigma, truncate)?;
    let r = smooth.radius as isize;
    let mut taps: Vec<f64> = smooth
        .taps
        .iter()
        .zip(-r..=r)
        .map(|(&g, i)| -(i as f64) / (sigma * sigma) * g)
        .collect();
    let mean = taps.iter().sum::<f64>() / taps.len() as f64;
    taps.iter_mut().for_each(|t| *t -= mean);
    Ok(Kernel1D {
        radius: smooth.radius,
        taps,
    })
}

/// Separable convolution `out(x, y) = sum ky(j) kx(i) in(x - i, y - j)` with
/// replicate padding. Output has the input's dimensions.
pub fn convolve_separable(img: &GrayImage, kx: &Kernel1D, ky: &Kernel1D) -> GrayImage {
    let (w, h) = img.dims();
    let src = img.data();
    let mut tmp = vec![0.0; w * h];
    let rx = kx.radius as isize;
    let r = kx.radius;
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            if x >= r && x + r < w {
                // tap k reads column x + r - k
                for (&t, &v) in kx.taps.iter().zip(row[x - r..=x + r].iter().rev()) {
                    acc += t * v;
                }
            } else {
                for (k, &t) in kx.taps.iter().enumerate() {
                    let sx = (x as isize - (k as isize - rx)).clamp(0, w as isize - 1) as usize;
                    acc += t * row[sx];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let ry = ky.radius as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &t) in ky.taps.iter().enumerate() {
            let sy = (y as isize - (k as isize - ry)).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, &s) in dst_row.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
    GrayImage::new(w, h, out).expect("dimensions preserved")
}

/// Gaussian-derivative responses `(gx, gy)` at scale `sigma`.
pub fn gradient(img: &GrayImage, sigma: f64) -> Result<(GrayImage, GrayImage)> {
    let smooth = gaussian_kernel(sigma, DEFAULT_TRUNCATE)?;
    let deriv = gaussian_derivative_kernel(sigma, DEFAULT_TRUNCATE)?;
    Ok((
        convolve_separable(img, &deriv, &smooth),
        convolve_separable(img, &smooth, &deriv),
    ))
}

pub fn gradient_magnitude(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    let (gx, gy) = gradient(img, sigma)?;
    gx.zip_map(&gy, f64::hypot)
}

/// Gradient at a single pixel, evaluated as the direct 2-D sum of the
/// separable kernels. Equal to sampling [`gradient`] at `(x, y)`.
pub fn gradient_at(
    img: &GrayImage,
    x: usize,
    y: usize,
    smooth: &Kernel1D,
    deriv: &Kernel1D,
) -> (f64, f64) {
    debug_assert_eq!(smooth.radius, deriv.radius);
    let r = smooth.radius as isize;
    let (x, y) = (x as isize, y as isize);
    let (w, h) = (img.width() as isize, img.height() as isize);
    if x >= r && y >= r && x + r < w && y + r < h {
        return gradient_at_interior(img, x as usize, y as usize, smooth, deriv);
    }
    let (mut gx, mut gy) = (0.0, 0.0);
    for (j, (&sj, &dj)) in smooth.taps.iter().zip(&deriv.taps).enumerate() {
        let sy = y - (j as isize - r);
        let (mut hx, mut hy) = (0.0, 0.0);
        for (i, (&si, &di)) in smooth.taps.iter().zip(&deriv.taps).enumerate() {
            let v = img.get_clamped(x - (i as isize - r), sy);
            hx += di * v;
            hy += si * v;
        }
        gx += sj * hx;
        gy += dj * hy;
    }
    (gx, gy)
}

// Same sums as `gradient_at` when no tap needs clamping.
fn gradient_at_interior(img: &GrayImage, x: usize, y: usize, smooth: &Kernel1D, deriv: &Kernel1D) -> (f64, f64) {
    let r = smooth.radius;
    let w = img.width();
    let data = img.data();
    let (mut gx, mut gy) = (0.0, 0.0);
    for (j, (&sj, &dj)) in smooth.taps.iter().zip(&deriv.taps).enumerate() {
        let sy = y + r - j;
        // kernel tap i reads column x + r - i
        let row = &data[sy * w + x - r..=sy * w + x + r];
        let (mut hx, mut hy) = (0.0, 0.0);
        for ((&si, &di), &v) in smooth.taps.iter().zip(&deriv.taps).zip(row.iter().rev()) {
            hx += di * v;
            hy += si * v;
        }
        gx += sj * hx;
        gy += dj * hy;
    }
    (gx, gy)
}

/// Mean over the `(2r+1)^2` window with replicate padding, by running sums
/// along rows and then down columns.
pub fn box_mean(img: &GrayImage, radius: usize) -> GrayImage {
    let (w, h) = img.dims();
    let src = img.data();
    let r = radius as isize;
    let clamp_x = |x: isize| x.clamp(0, w as isize - 1) as usize;
    let clamp_y = |y: isize| y.clamp(0, h as isize - 1) as usize;

    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut rows[y * w..(y + 1) * w];
        let mut acc: f64 = (-r..=r).map(|i| row[clamp_x(i)]).sum();
        out[0] = acc;
        for x in 1..w as isize {
            acc += row[clamp_x(x + r)] - row[clamp_x(x - r - 1)];
            out[x as usize] = acc;
        }
    }

    let norm = 1.0 / ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let mut col = vec![0.0; w];
    for j in -r..=r {
        let sy = clamp_y(j);
        for (c, &v) in col.iter_mut().zip(&rows[sy * w..(sy + 1) * w]) {
            *c += v;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        if y > 0 {
            let (add, sub) = (clamp_y(y + r), clamp_y(y - r - 1));
            for x in 0..w {
                col[x] += rows[add * w + x] - rows[sub * w + x];
            }
        }
        let dst = &mut out[y as usize * w..(y as usize + 1) * w];
        for (d, &c) in dst.iter_mut().zip(&col) {
            *d = c * norm;
        }
    }
    GrayImage::new(w, h, out).expect("dimensions preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_2d(img: &GrayImage, kx: &Kernel1D, ky: &Kernel1D) -> GrayImage {
        let (rx, ry) = (kx.radius() as isize, ky.radius() as isize);
        GrayImage::from_fn(img.width(), img.height(), |x, y| {
            let mut acc = 0.0;
            for j in -ry..=ry {
                for i in -rx..=rx {
                    let k = kx.taps()[(i + rx) as usize] * ky.taps()[(j + ry) as usize];
                    acc += k * img.get_clamped(x as isize - i, y as isize - j);
                }
            }
            acc
        })
    }

    fn max_abs_diff(a: &GrayImage, b: &GrayImage) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }

    fn rotate90(img: &GrayImage) -> GrayImage {
        let (w, h) = img.dims();
        GrayImage::from_fn(h, w, |x, y| img.get(y, h - 1 - x))
    }

    #[test]
    fn kernel_radius_and_normalisation() {
        let k = gaussian_kernel(1.5, 4.0).unwrap();
        assert_eq!(k.radius(), 6);
        assert_eq!(k.taps().len(), 13);
        assert!((k.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn narrow_kernel_is_nearly_a_delta() {
        let k = gaussian_kernel(0.1, 4.0).unwrap();
        let c = k.radius();
        assert!((k.taps()[c] - 1.0).abs() < 1e-12);
        assert!(k.taps()[c - 1] < 1e-20 && k.taps()[c + 1] < 1e-20);
    }

    #[test]
    fn kernel_is_symmetric() {
        let k = gaussian_kernel(2.0, 4.0).unwrap();
        let n = k.taps().len();
        for i in 0..n {
            assert_eq!(k.taps()[i], k.taps()[n - 1 - i]);
        }
    }

    #[test]
    fn derivative_kernel_sums_to_zero() {
        for s in [0.7, 1.0, 1.5, 2.0, 3.3] {
            assert!(gaussian_derivative_kernel(s, 4.0).unwrap().sum().abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_non_positive_sigma() {
        assert!(gaussian_kernel(0.0, 4.0).is_err());
        assert!(gaussian_kernel(-1.0, 4.0).is_err());
        assert!(gaussian_kernel(1.0, 0.0).is_err());
        assert!(gradient_magnitude(&GrayImage::filled(3, 3, 0.0), 0.0).is_err());
        assert!(Kernel1D::new(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn smoothing_a_constant_is_identity() {
        let img = GrayImage::filled(9, 7, 0.37);
        let k = gaussian_kernel(1.5, 4.0).unwrap();
        let out = convolve_separable(&img, &k, &k);
        assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn impulse_imprints_the_kernel() {
        let mut img = GrayImage::filled(15, 15, 0.0);
        img.set(7, 7, 1.0);
        let k = gaussian_kernel(1.0, 4.0).unwrap();
        let out = convolve_separable(&img, &k, &k);
        for dy in -4isize..=4 {
            for dx in -4isize..=4 {
                let expect = k.taps()[(dx + 4) as usize] * k.taps()[(dy + 4) as usize];
                let got = out.get((7 + dx) as usize, (7 + dy) as usize);
                assert!((got - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn smoothing_preserves_mean_of_ramps() {
        let k = gaussian_kernel(1.5, 4.0).unwrap();
        let ramp = GrayImage::from_fn(40, 40, |x, _| x as f64 / 39.0);
        let out = convolve_separable(&ramp, &k, &k);
        // replicate padding is exact on a ramp away from the borders
        for y in 0..40 {
            for x in 7..33 {
                assert!((out.get(x, y) - ramp.get(x, y)).abs() < 1e-4);
            }
        }
        assert!((out.mean() - ramp.mean()).abs() < 1e-4);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = gradient_magnitude(&GrayImage::filled(12, 12, 0.8), 1.5).unwrap();
        assert!(g.data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn step_edge_peak_matches_analytic_gaussian() {
        // unit step through pixel centre 16: peak of the smoothed derivative
        // is 1 / (sqrt(2 pi) sigma)
        let img = GrayImage::from_fn(32, 8, |x, _| match x {
            x if x < 16 => 0.0,
            16 => 0.5,
            _ => 1.0,
        });
        let g = gradient_magnitude(&img, 1.5).unwrap();
        let peak = (0..8).map(|y| g.get(16, y)).fold(0.0, f64::max);
        let analytic = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * 1.5);
        assert!((analytic - 0.2660).abs() < 1e-4);
        assert!(((peak - analytic) / analytic).abs() < 0.05, "{peak}");
    }

    #[test]
    fn gradient_magnitude_commutes_with_rotation() {
        let img = GrayImage::from_fn(11, 8, |x, y| ((x * 7 + y * 13) % 17) as f64 / 17.0);
        let a = rotate90(&gradient_magnitude(&img, 1.2).unwrap());
        let b = gradient_magnitude(&rotate90(&img), 1.2).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-6);
    }

    #[test]
    fn gradient_ignores_intensity_offsets() {
        let img = GrayImage::from_fn(10, 10, |x, y| ((x * 3 + y * 5) % 11) as f64 / 16.0);
        let a = gradient_magnitude(&img, 1.5).unwrap();
        let b = gradient_magnitude(&img.map(|v| v + 0.25), 1.5).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn pointwise_gradient_matches_full_raster() {
        let img = GrayImage::from_fn(13, 9, |x, y| ((x * x + 3 * y) % 7) as f64 / 7.0);
        let smooth = gaussian_kernel(1.5, 4.0).unwrap();
        let deriv = gaussian_derivative_kernel(1.5, 4.0).unwrap();
        let (gx, gy) = gradient(&img, 1.5).unwrap();
        for (x, y) in [(0, 0), (6, 4), (12, 8), (3, 7)] {
            let (px, py) = gradient_at(&img, x, y, &smooth, &deriv);
            assert!((px - gx.get(x, y)).abs() < 1e-12);
            assert!((py - gy.get(x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_matches_direct_on_5x5() {
        let img = GrayImage::from_fn(5, 5, |x, y| ((x * 31 + y * 17) % 23) as f64 / 23.0);
        let kx = gaussian_kernel(0.8, 4.0).unwrap();
        let ky = gaussian_derivative_kernel(1.1, 4.0).unwrap();
        let fast = convolve_separable(&img, &kx, &ky);
        assert!(max_abs_diff(&fast, &brute_force_2d(&img, &kx, &ky)) < 1e-6);
    }

    #[test]
    fn box_mean_of_constant_is_constant() {
        let out = box_mean(&GrayImage::filled(6, 4, 2.0), 3);
        assert!(out.data().iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn separable_equals_brute_force(
            w in 1usize..=16,
            h in 1usize..=16,
            seed in any::<u64>(),
            sx in 0.3f64..2.5,
            sy in 0.3f64..2.5,
        ) {
            let mut state = seed;
            let img = GrayImage::from_fn(w, h, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            });
            let kx = gaussian_kernel(sx, 4.0).unwrap();
            let ky = gaussian_derivative_kernel(sy, 4.0).unwrap();
            let fast = convolve_separable(&img, &kx, &ky);
            prop_assert!(max_abs_diff(&fast, &brute_force_2d(&img, &kx, &ky)) < 1e-6);
        }

        #[test]
        fn box_mean_matches_naive_window(
            w in 1usize..=12, h in 1usize..=12, r in 1usize..=4, seed in any::<u64>(),
        ) {
            let mut state = seed;
            let img = GrayImage::from_fn(w, h, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            });
            let fast = box_mean(&img, r);
            let ri = r as isize;
            let naive = GrayImage::from_fn(w, h, |x, y| {
                let mut acc = 0.0;
                for dy in -ri..=ri {
                    for dx in -ri..=ri {
                        acc += img.get_clamped(x as isize + dx, y as isize + dy);
                    }
                }
                acc / ((2 * r + 1) * (2 * r + 1)) as f64
            });
            prop_assert!(max_abs_diff(&fast, &naive) < 1e-12);
        }
    }
}
