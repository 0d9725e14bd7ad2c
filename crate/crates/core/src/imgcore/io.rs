//! PNG decode/encode and the lossless `FMAP` float raster format.
//!
//! `FMAP` layout: the magic `FMAP1\n`, an ASCII header `<width> <height>\n`,
//! then `width * height` little-endian IEEE-754 `f32` values in row-major
//! order. Nothing follows the payload.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Luma};

use super::{GrayImage, RgbImage};
use crate::{Error, Result};

pub const FMAP_MAGIC: &[u8] = b"FMAP1\n";

/// Raw float raster as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatMap {
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_gray(&self) -> Result<GrayImage> {
        GrayImage::new(
            self.width,
            self.height,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = format!("{} {}\n", self.width, self.height);
        let mut out = Vec::with_capacity(FMAP_MAGIC.len() + header.len() + 4 * self.data.len());
        out.extend_from_slice(FMAP_MAGIC);
        out.extend_from_slice(header.as_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            kind: "FMAP",
            path: path.to_path_buf(),
            reason,
        };
        let rest = bytes
            .strip_prefix(FMAP_MAGIC)
            .ok_or_else(|| bad("missing FMAP1 magic".into()))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("unterminated header".into()))?;
        let header = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not ASCII".into()))?;
        let mut fields = header.split(' ');
        let mut dim = |name: &str| -> Result<usize> {
            fields
                .next()
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&d| d > 0)
                .ok_or_else(|| bad(format!("bad {name} in header {header:?}")))
        };
        let width = dim("width")?;
        let height = dim("height")?;
        if fields.next().is_some() {
            return Err(bad(format!("trailing header fields in {header:?}")));
        }
        let payload = &rest[nl + 1..];
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| bad("dimensions overflow".into()))?;
        if payload.len() != expected {
            return Err(bad(format!(
                "payload is {} bytes, expected {expected}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { width, height, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Parameter(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Decodes any PNG into RGB samples in [0, 1] (value / 255).
pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect();
    RgbImage::new(w as usize, h as usize, data)
}

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect();
    GrayImage::new(w as usize, h as usize, data)
}

/// Quantises to 8 bits after clamping to [0, 1].
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_gray_png(img: &GrayImage) -> Result<Vec<u8>> {
    let buf: image::ImageBuffer<Luma<u8>, Vec<u8>> = image::ImageBuffer::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.data().iter().map(|&v| to_u8(v)).collect(),
    )
    .expect("buffer sized from image");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn write_gray_png(path: &Path, img: &GrayImage) -> Result<()> {
    write_atomic(path, &encode_gray_png(img)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let m = FloatMap {
            width: 2,
            height: 1,
            data: vec![1.0, -0.0],
        };
        let bytes = m.encode();
        assert_eq!(&bytes[..10], b"FMAP1\n2 1\n");
        assert_eq!(bytes.len(), 10 + 8);
        assert_eq!(&bytes[10..14], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_truncated_and_padded_payloads() {
        let m = FloatMap {
            width: 3,
            height: 2,
            data: vec![0.5; 6],
        };
        let bytes = m.encode();
        let p = Path::new("x.fmap");
        assert!(FloatMap::decode(&bytes[..bytes.len() - 1], p).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(FloatMap::decode(&longer, p).is_err());
        assert!(FloatMap::decode(b"FMAP2\n3 2\n", p).is_err());
        assert!(FloatMap::decode(b"FMAP1\n0 2\n", p).is_err());
    }

    #[test]
    fn png_quantises_to_eight_bits() {
        let img = GrayImage::from_fn(4, 3, |x, y| (x + 4 * y) as f64 / 11.0);
        let dir = std::env::temp_dir().join(format!("fmap-png-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("g.png");
        write_gray_png(&path, &img).unwrap();
        let back = read_gray(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        let rgb = read_rgb(&path).unwrap();
        assert_eq!(rgb.pixel(1, 0), [back.get(1, 0); 3]);
        fs::remove_dir_all(dir).unwrap();
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(w in 1usize..20, h in 1usize..20, bits in prop::collection::vec(any::<u32>(), 400)) {
            let data: Vec<f32> = bits.iter().take(w * h).map(|&b| f32::from_bits(b)).collect();
            let m = FloatMap { width: w, height: h, data };
            let back = FloatMap::decode(&m.encode(), Path::new("p")).unwrap();
            prop_assert_eq!(back.width, w);
            prop_assert_eq!(back.height, h);
            let a: Vec<u32> = m.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
