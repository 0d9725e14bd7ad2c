#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use defocus_core::imgcore::io::{write_gray_png, FloatMap};
use defocus_core::imgcore::GrayImage;
use serde_json::Value;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_defocus"))
}

/// Runs the binary and returns (exit code, stdout, stderr).
pub fn run_bin(args: &[&str]) -> (i32, String, String) {
    let Output { status, stdout, stderr } = bin().args(args).output().expect("spawn defocus");
    (
        status.code().unwrap_or(-1),
        String::from_utf8_lossy(&stdout).into_owned(),
        String::from_utf8_lossy(&stderr).into_owned(),
    )
}

pub fn run(args: &[&str]) -> i32 {
    defocus_cli::run(std::iter::once("defocus").chain(args.iter().copied()))
}

pub fn s(p: &Path) -> String {
    p.display().to_string()
}

pub fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).expect("valid JSON")
}

/// Checkerboard with a blurred-looking ramp so the estimator finds edges.
pub fn test_image(w: usize, h: usize, seed: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |x, y| {
        let cell = 6 + seed % 5;
        if ((x / cell) + (y / cell)).is_multiple_of(2) {
            0.2
        } else {
            0.8
        }
    })
}

pub fn write_png(path: &Path, img: &GrayImage) {
    write_gray_png(path, img).expect("write png");
}

pub fn write_fmap(path: &Path, w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> PathBuf {
    FloatMap::from_gray(&GrayImage::from_fn(w, h, f)).write(path).expect("write fmap");
    path.to_path_buf()
}

/// Every JSON report carries its schema version and the effective config.
pub fn assert_envelope(doc: &Value, command: &str) {
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["command"], command);
    assert!(doc["config"]["defocus"]["sigma_max"].is_number(), "config echo missing");
    assert!(doc["config"]["seed"].is_number());
}

pub fn sorted_names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .expect("read dir")
        .map(|e| e.expect("entry").file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}
