mod common;

use common::*;
use defocus_core::synthcam::read_manifest;
use sha2::{Digest, Sha256};

fn manifest_digest(dir: &std::path::Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(dir.join("manifest.jsonl")).unwrap()).to_vec()
}

#[test]
fn same_seed_gives_an_identical_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |d: &str| {
        vec![
            "synth".to_string(),
            "--n-real".into(),
            "5".into(),
            "--n-fake".into(),
            "5".into(),
            "--seed".into(),
            "7".into(),
            "--out-dir".into(),
            s(&tmp.path().join(d)),
        ]
    };
    for d in ["a", "b"] {
        let a = args(d);
        assert_eq!(run(&a.iter().map(String::as_str).collect::<Vec<_>>()), 0);
    }
    assert_eq!(manifest_digest(&tmp.path().join("a")), manifest_digest(&tmp.path().join("b")));
    for id in ["real_0000", "fake_0009"] {
        let a = std::fs::read(tmp.path().join(format!("a/images/{id}.png"))).unwrap();
        let b = std::fs::read(tmp.path().join(format!("b/images/{id}.png"))).unwrap();
        assert_eq!(a, b, "{id}");
    }
}

#[test]
fn wider_aperture_gives_more_ground_truth_blur() {
    let tmp = tempfile::tempdir().unwrap();
    let mut means = Vec::new();
    for f in ["2.8", "11"] {
        let out = tmp.path().join(f);
        assert_eq!(
            run(&["synth", "--n-real", "6", "--n-fake", "2", "--f-number", f, "--seed", "3", "--out-dir", &s(&out)]),
            0
        );
        let doc = read_json(&out.join("synth.json"));
        assert_envelope(&doc, "synth");
        assert_eq!(doc["config"]["camera"]["f_number"].as_f64().unwrap(), f.parse::<f64>().unwrap());
        means.push(doc["mean_gt_sigma"].as_f64().unwrap());
    }
    assert!(means[0] > means[1], "{means:?}");
}

#[test]
fn manifest_lines_parse_and_point_at_files() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["synth", "--n-real", "3", "--n-fake", "2", "--out-dir", &s(tmp.path())]), 0);
    let entries = read_manifest(&tmp.path().join("manifest.jsonl")).unwrap();
    assert_eq!(entries.len(), 5);
    for e in &entries {
        assert!(tmp.path().join(&e.image).is_file(), "{}", e.image);
        assert!(tmp.path().join(&e.gt_blur).is_file(), "{}", e.gt_blur);
    }
    assert_eq!(entries.iter().filter(|e| e.label.as_binary() == 1).count(), 2);
}

#[test]
fn focus_inside_the_focal_length_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = run_bin(&[
        "synth",
        "--focal-length",
        "50",
        "--focus-distance",
        "40",
        "--out-dir",
        &s(tmp.path()),
    ]);
    assert_eq!(code, 2, "{err}");
    assert!(!tmp.path().join("manifest.jsonl").exists());
}
