//! Thin-lens depth-of-field renderer and a seeded procedural corpus.
//!
//! A scene point at distance `d` imaged by a lens of focal length `f`,
//! f-number `N` and focus distance `F` spreads over a circle of confusion of
//! diameter `(f / N) * f * |d - F| / (d * (F - f))` on the sensor. Dividing
//! by the pixel pitch gives pixels, and `coc_to_sigma` maps the disk to a
//! Gaussian sigma.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imgcore::io::{write_atomic, write_gray_png, FloatMap};
use crate::imgcore::{convolve_separable, gaussian_kernel, GrayImage, DEFAULT_TRUNCATE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraParams {
    /// mm
    pub focal_length: f64,
    pub f_number: f64,
    /// mm
    pub focus_distance: f64,
    /// mm per pixel
    pub pixel_pitch: f64,
    /// Gaussian sigma per pixel of CoC diameter.
    pub coc_to_sigma: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            focal_length: 50.0,
            f_number: 2.8,
            focus_distance: 2000.0,
            pixel_pitch: 0.01,
            coc_to_sigma: 0.25,
        }
    }
}

impl CameraParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.focal_length > 0.0
            && self.f_number > 0.0
            && self.focus_distance > self.focal_length
            && self.pixel_pitch > 0.0
            && self.coc_to_sigma > 0.0
            && [self.focal_length, self.f_number, self.focus_distance, self.pixel_pitch, self.coc_to_sigma]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "invalid optics (need positive values and focus distance beyond the focal length): {self:?}"
            )))
        }
    }

    pub fn aperture_diameter(&self) -> f64 {
        self.focal_length / self.f_number
    }
}

/// Per-pixel scene distance in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap(GrayImage);

impl DepthMap {
    pub fn new(depth: GrayImage) -> Result<Self> {
        if let Some(d) = depth.data().iter().find(|&&d| d <= 0.0) {
            return Err(Error::Parameter(format!("depth must be positive, got {d}")));
        }
        Ok(Self(depth))
    }

    pub fn uniform(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::new(GrayImage::filled(width, height, depth))
    }

    pub fn image(&self) -> &GrayImage {
        &self.0
    }
}

/// Exact per-pixel blur sigma in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBlur(GrayImage);

impl GroundTruthBlur {
    pub fn image(&self) -> &GrayImage {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.mean()
    }
}

/// Gaussian blur sigma, in pixels, for a point at `depth` mm.
pub fn coc_sigma(depth: f64, cam: &CameraParams) -> Result<f64> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::Parameter(format!("depth must be positive, got {depth}")));
    }
    let coc_mm = cam.aperture_diameter() * cam.focal_length * (depth - cam.focus_distance).abs()
        / (depth * (cam.focus_distance - cam.focal_length));
    Ok(coc_mm / cam.pixel_pitch * cam.coc_to_sigma)
}

fn blur_or_copy(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    if sigma <= 0.0 {
        return Ok(img.clone());
    }
    let k = gaussian_kernel(sigma, DEFAULT_TRUNCATE)?;
    Ok(convolve_separable(img, &k, &k))
}

/// Layered depth-of-field rendering.
///
/// The sigma field is quantised to `layers` evenly spaced levels between its
/// minimum and maximum (a single level, the mean, when `layers == 1`). Each
/// level blurs the whole image once and contributes the pixels assigned to
/// it. The returned ground truth is the unquantised field.
pub fn render_dof(
    sharp: &GrayImage,
    depth: &DepthMap,
    cam: &CameraParams,
    layers: usize,
) -> Result<(GrayImage, GroundTruthBlur)> {
    cam.validate()?;
    sharp.ensure_same_dims(depth.image())?;
    if layers == 0 {
        return Err(Error::Parameter("need at least one blur layer".into()));
    }
    let sigma: Vec<f64> = depth
        .image()
        .data()
        .iter()
        .map(|&d| coc_sigma(d, cam))
        .collect::<Result<_>>()?;
    let (lo, hi) = sigma
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &s| (l.min(s), h.max(s)));

    let (levels, assignment): (Vec<f64>, Vec<usize>) = if layers == 1 || hi == lo {
        let level = if hi == lo { lo } else { sigma.iter().sum::<f64>() / sigma.len() as f64 };
        (vec![level], vec![0; sigma.len()])
    } else {
        let step = (hi - lo) / (layers - 1) as f64;
        let levels = (0..layers).map(|k| lo + k as f64 * step).collect();
        let assignment = sigma
            .iter()
            .map(|&s| (((s - lo) / step).round() as usize).min(layers - 1))
            .collect();
        (levels, assignment)
    };

    let mut out = vec![0.0; sharp.len()];
    for (k, &level) in levels.iter().enumerate() {
        if !assignment.contains(&k) {
            continue;
        }
        let blurred = blur_or_copy(sharp, level)?;
        for (i, _) in assignment.iter().enumerate().filter(|(_, &a)| a == k) {
            out[i] = blurred.data()[i];
        }
    }
    let (w, h) = sharp.dims();
    Ok((
        GrayImage::new(w, h, out)?,
        GroundTruthBlur(GrayImage::new(w, h, sigma)?),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// Positive class is fake.
    pub fn as_binary(self) -> u8 {
        match self {
            Self::Real => 0,
            Self::Fake => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Real => "real",
            Self::Fake => "fake",
        }
    }
}

/// How an item was rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderStyle {
    /// Depth-dependent thin-lens blur.
    DepthOfField,
    AllInFocus,
    /// One blur level everywhere regardless of depth.
    UniformBlur,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub layers: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 96,
            height: 96,
            layers: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub id: String,
    pub label: Label,
    pub style: RenderStyle,
    pub image: GrayImage,
    pub gt_blur: GroundTruthBlur,
}

/// One line of `manifest.jsonl`; paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub label: Label,
    pub image: String,
    pub gt_blur: String,
}

struct Plane {
    depth: f64,
    texture: Texture,
    // x0, y0, x1, y1 (exclusive); the background covers the frame
    rect: (usize, usize, usize, usize),
}

enum Texture {
    Checker { period: usize, a: f64, b: f64 },
    Blocks { cell: usize, seed: u64 },
    Stripes { period: usize, a: f64, b: f64, vertical: bool },
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        // two tones at least 0.3 apart so every texture edge is visible
        let tones = |rng: &mut ChaCha8Rng| {
            let a: f64 = rng.random_range(0.05..0.65);
            (a, rng.random_range(a + 0.3..0.95))
        };
        match rng.random_range(0..3) {
            0 => {
                let (a, b) = tones(rng);
                Self::Checker {
                    period: rng.random_range(8..=16),
                    a,
                    b,
                }
            }
            1 => Self::Blocks {
                cell: rng.random_range(8..=16),
                seed: rng.random(),
            },
            _ => {
                let (a, b) = tones(rng);
                Self::Stripes {
                    period: rng.random_range(8..=16),
                    a,
                    b,
                    vertical: rng.random(),
                }
            }
        }
    }

    fn sample(&self, x: usize, y: usize) -> f64 {
        match *self {
            Self::Checker { period, a, b } => {
                if ((x / period) + (y / period)).is_multiple_of(2) {
                    a
                } else {
                    b
                }
            }
            Self::Blocks { cell, seed } => {
                let key = ((x / cell) as u64) << 32 | (y / cell) as u64;
                let mut z = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
                z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
                z ^= z >> 31;
                0.05 + 0.9 * (z >> 11) as f64 / (1u64 << 53) as f64
            }
            Self::Stripes { period, a, b, vertical } => {
                let t = if vertical { x } else { y };
                if (t / period) % 2 == 0 {
                    a
                } else {
                    b
                }
            }
        }
    }
}

/// Random 2-4 plane scene: a far textured background and textured
/// rectangles in front of it, one of them on the focal plane.
fn random_scene(rng: &mut ChaCha8Rng, cam: &CameraParams, scene: &SceneConfig) -> (GrayImage, DepthMap) {
    let (w, h) = (scene.width, scene.height);
    let focus = cam.focus_distance;
    let n_planes = rng.random_range(2..=4);
    let mut planes = vec![Plane {
        depth: focus * rng.random_range(1.4..1.9),
        texture: Texture::random(rng),
        rect: (0, 0, w, h),
    }];
    for k in 1..n_planes {
        let depth = if k == 1 { focus } else { focus * rng.random_range(1.0..1.4) };
        let rw = rng.random_range(w * 3 / 10..=w * 6 / 10).max(1);
        let rh = rng.random_range(h * 3 / 10..=h * 6 / 10).max(1);
        let x0 = rng.random_range(0..=w - rw);
        let y0 = rng.random_range(0..=h - rh);
        planes.push(Plane {
            depth,
            texture: Texture::random(rng),
            rect: (x0, y0, x0 + rw, y0 + rh),
        });
    }
    // painter's order: far to near
    planes[1..].sort_by(|a, b| b.depth.total_cmp(&a.depth));

    let mut image = GrayImage::filled(w, h, 0.0);
    let mut depth = GrayImage::filled(w, h, 1.0);
    for plane in &planes {
        let (x0, y0, x1, y1) = plane.rect;
        for y in y0..y1 {
            for x in x0..x1 {
                image.set(x, y, plane.texture.sample(x, y));
                depth.set(x, y, plane.depth);
            }
        }
    }
    (image, DepthMap::new(depth).expect("positive plane depths"))
}

/// Item seeds are `seed + index` so items can be generated independently.
pub fn make_item(
    seed: u64,
    index: usize,
    label: Label,
    cam: &CameraParams,
    scene: &SceneConfig,
) -> Result<CorpusItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let (sharp, depth) = random_scene(&mut rng, cam, scene);
    let (style, image, gt_blur) = match label {
        Label::Real => {
            let (img, gt) = render_dof(&sharp, &depth, cam, scene.layers)?;
            (RenderStyle::DepthOfField, img, gt)
        }
        Label::Fake if rng.random_bool(0.5) => {
            let gt = GroundTruthBlur(GrayImage::filled(scene.width, scene.height, 0.0));
            (RenderStyle::AllInFocus, sharp, gt)
        }
        Label::Fake => {
            let fake_depth = cam.focus_distance * rng.random_range(1.2..1.9);
            let sigma = coc_sigma(fake_depth, cam)?;
            let img = blur_or_copy(&sharp, sigma)?;
            let gt = GroundTruthBlur(GrayImage::filled(scene.width, scene.height, sigma));
            (RenderStyle::UniformBlur, img, gt)
        }
    };
    let id = format!("{}_{:04}", label.as_str(), index);
    Ok(CorpusItem {
        id,
        label,
        style,
        image,
        gt_blur,
    })
}

/// `n_real` depth-of-field renders followed by `n_fake` all-in-focus or
/// uniformly blurred renders of scenes from the same generator.
pub fn make_corpus(
    seed: u64,
    n_real: usize,
    n_fake: usize,
    cam: &CameraParams,
    scene: &SceneConfig,
) -> Result<Vec<CorpusItem>> {
    cam.validate()?;
    if n_real == 0 || n_fake == 0 {
        return Err(Error::Parameter("corpus needs at least one item per label".into()));
    }
    if scene.width < 8 || scene.height < 8 || scene.layers == 0 {
        return Err(Error::Parameter(format!("scene too small: {scene:?}")));
    }
    (0..n_real + n_fake)
        .map(|i| {
            let label = if i < n_real { Label::Real } else { Label::Fake };
            make_item(seed, i, label, cam, scene)
        })
        .collect()
}

/// Writes `images/<id>.png`, `gt/<id>.fmap` and `manifest.jsonl` under `dir`.
pub fn write_corpus(dir: &Path, items: &[CorpusItem]) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("gt"))?;
    let mut manifest = String::new();
    let mut entries = Vec::with_capacity(items.len());
    for item in items {
        let entry = ManifestEntry {
            id: item.id.clone(),
            label: item.label,
            image: format!("images/{}.png", item.id),
            gt_blur: format!("gt/{}.fmap", item.id),
        };
        write_gray_png(&dir.join(&entry.image), &item.image)?;
        FloatMap::from_gray(item.gt_blur.image()).write(&dir.join(&entry.gt_blur))?;
        manifest.push_str(&serde_json::to_string(&entry).expect("plain struct"));
        manifest.push('\n');
        entries.push(entry);
    }
    write_atomic(&dir.join("manifest.jsonl"), manifest.as_bytes())?;
    Ok(entries)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            serde_json::from_str(line).map_err(|e| Error::Format {
                kind: "manifest",
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", n + 1),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraParams {
        CameraParams::default()
    }

    fn texture(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| ((x / 3 + y / 4) % 2) as f64 * 0.7 + 0.1)
    }

    #[test]
    fn focal_plane_is_sharp() {
        assert_eq!(coc_sigma(2000.0, &cam()).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_circle_of_confusion() {
        let s = coc_sigma(4000.0, &cam()).unwrap();
        let aperture: f64 = 50.0 / 2.8;
        assert!((aperture - 17.857).abs() < 1e-3);
        let coc = aperture * 50.0 * 2000.0 / (4000.0 * 1950.0);
        assert!((coc - 0.22894).abs() < 1e-5);
        // 5.7236 when the intermediate CoC is rounded to 0.22894 mm
        assert!((s - 5.7236).abs() < 2e-4, "{s}");
        assert!((s - 22.893_772 * 0.25).abs() < 1e-6, "{s}");
    }

    #[test]
    fn stopping_down_halves_blur() {
        let wide = coc_sigma(3100.0, &cam()).unwrap();
        let narrow = coc_sigma(3100.0, &CameraParams { f_number: 5.6, ..cam() }).unwrap();
        assert!((wide / narrow - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bad_depth_and_optics_are_rejected() {
        assert!(coc_sigma(0.0, &cam()).is_err());
        assert!(coc_sigma(-3.0, &cam()).is_err());
        assert!(CameraParams { focus_distance: 40.0, ..cam() }.validate().is_err());
        assert!(DepthMap::uniform(2, 2, 0.0).is_err());
    }

    #[test]
    fn blur_grows_with_inverse_depth_offset() {
        let c = cam();
        let mut samples: Vec<(f64, f64)> = (1..200)
            .map(|k| 300.0 + 40.0 * k as f64)
            .map(|d| ((1.0 / d - 1.0 / c.focus_distance).abs(), coc_sigma(d, &c).unwrap()))
            .collect();
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in samples.windows(2) {
            if pair[1].0 > pair[0].0 {
                assert!(pair[1].1 > pair[0].1);
            }
        }
        // continuity across the focal plane
        let eps = 1e-6;
        assert!(coc_sigma(2000.0 + eps, &c).unwrap() < 1e-6);
        assert!(coc_sigma(2000.0 - eps, &c).unwrap() < 1e-6);
    }

    #[test]
    fn in_focus_render_is_identity() {
        let img = texture(20, 16);
        let depth = DepthMap::uniform(20, 16, 2000.0).unwrap();
        let (out, gt) = render_dof(&img, &depth, &cam(), 4).unwrap();
        assert_eq!(out, img);
        assert!(gt.image().data().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn uniform_depth_equals_global_gaussian() {
        let img = texture(24, 20);
        let depth = DepthMap::uniform(24, 20, 2600.0).unwrap();
        let sigma = coc_sigma(2600.0, &cam()).unwrap();
        let k = gaussian_kernel(sigma, DEFAULT_TRUNCATE).unwrap();
        let expect = convolve_separable(&img, &k, &k);
        for layers in [1, 5] {
            let (out, _) = render_dof(&img, &depth, &cam(), layers).unwrap();
            let dev = out.data().iter().zip(expect.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dev < 1e-6);
        }
    }

    #[test]
    fn two_plane_scene_blurs_only_the_background() {
        let img = texture(30, 30);
        let depth = DepthMap::new(GrayImage::from_fn(30, 30, |x, _| if x < 15 { 2000.0 } else { 3000.0 })).unwrap();
        let (out, gt) = render_dof(&img, &depth, &cam(), 6).unwrap();
        assert_eq!(gt.image().get(3, 3), 0.0);
        assert!(gt.image().get(25, 3) > 0.0);
        assert_eq!(out.get(3, 3), img.get(3, 3));
    }

    #[test]
    fn ground_truth_ignores_image_content() {
        let depth = DepthMap::new(GrayImage::from_fn(16, 16, |x, y| 1500.0 + 50.0 * (x + y) as f64)).unwrap();
        let (_, a) = render_dof(&texture(16, 16), &depth, &cam(), 3).unwrap();
        let (_, b) = render_dof(&GrayImage::filled(16, 16, 0.3), &depth, &cam(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let scene = SceneConfig { width: 32, height: 32, layers: 4 };
        let a = make_corpus(7, 10, 10, &cam(), &scene).unwrap();
        let b = make_corpus(7, 10, 10, &cam(), &scene).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a.iter().filter(|i| i.label == Label::Real).count(), 10);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.image, y.image);
            assert_eq!(x.gt_blur, y.gt_blur);
        }
        let c = make_corpus(8, 10, 10, &cam(), &scene).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.image != y.image));
    }

    #[test]
    fn real_style_carries_more_blur_than_all_in_focus_fakes() {
        let scene = SceneConfig { width: 32, height: 32, layers: 4 };
        let items = make_corpus(3, 12, 12, &cam(), &scene).unwrap();
        let mean_of = |pred: &dyn Fn(&CorpusItem) -> bool| {
            let v: Vec<f64> = items.iter().filter(|i| pred(i)).map(|i| i.gt_blur.mean()).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let real = mean_of(&|i| i.label == Label::Real);
        let focused = mean_of(&|i| i.style == RenderStyle::AllInFocus);
        assert!(items.iter().any(|i| i.style == RenderStyle::AllInFocus));
        assert!(real > focused);
        assert_eq!(focused, 0.0);
    }

    #[test]
    fn corpus_rejects_empty_classes() {
        assert!(make_corpus(1, 0, 3, &cam(), &SceneConfig::default()).is_err());
    }
}
