use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use defocus_core::alignment::SaliencyMap;
use defocus_core::analysis::{FeatureVector, FEATURE_NAMES};
use defocus_core::classify::{Dataset, Row};
use defocus_core::defocus::DefocusMap;
use defocus_core::imgcore::io::{read_gray, write_atomic, FloatMap};
use defocus_core::synthcam::read_manifest;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::UsageError;

pub const MANIFEST: &str = "manifest.jsonl";

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn files_with_ext(dir: &Path, exts: &[&str]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && exts.iter().any(|e| has_ext(&path, e)) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Expands files, PNG directories and corpus directories (via their
/// manifest) into a list of image paths, in a stable order.
pub fn discover_images(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut images = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let manifest = input.join(MANIFEST);
            if manifest.is_file() {
                for entry in read_manifest(&manifest)? {
                    images.push(input.join(entry.image));
                }
            } else {
                images.extend(files_with_ext(input, &["png"])?);
            }
        } else if input.exists() {
            images.push(input.clone());
        } else {
            bail!(UsageError(format!("no such input: {}", input.display())));
        }
    }
    if images.is_empty() {
        bail!(UsageError("no inputs".into()));
    }
    Ok(images)
}

/// A single file keyed by its stem, or every file with one of `exts` in a
/// directory.
pub fn discover_by_stem(path: &Path, exts: &[&str]) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let files = if path.is_dir() {
        files_with_ext(path, exts)?
    } else if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        bail!(UsageError(format!("no such input: {}", path.display())));
    };
    Ok(files.into_iter().map(|p| (stem(&p), p)).collect())
}

/// Pairs two stem maps, failing with the list of unmatched stems.
pub fn pair_by_stem(
    left: &BTreeMap<String, PathBuf>,
    right: &BTreeMap<String, PathBuf>,
    what: (&str, &str),
) -> anyhow::Result<Vec<(String, PathBuf, PathBuf)>> {
    // single files pair with each other whatever their names
    if left.len() == 1 && right.len() == 1 {
        let (ls, lp) = left.iter().next().expect("one entry");
        let (_, rp) = right.iter().next().expect("one entry");
        return Ok(vec![(ls.clone(), lp.clone(), rp.clone())]);
    }
    let mut offenders: Vec<String> = left
        .keys()
        .filter(|k| !right.contains_key(*k))
        .map(|k| format!("{k} (no {})", what.1))
        .collect();
    offenders.extend(
        right
            .keys()
            .filter(|k| !left.contains_key(*k))
            .map(|k| format!("{k} (no {})", what.0)),
    );
    if !offenders.is_empty() {
        bail!(UsageError(format!("unpaired inputs: {}", offenders.join(", "))));
    }
    if left.is_empty() {
        bail!(UsageError("no inputs".into()));
    }
    Ok(left
        .iter()
        .map(|(k, lp)| (k.clone(), lp.clone(), right[k].clone()))
        .collect())
}

pub fn thread_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")
}

/// `{"schema_version", "command", "config", ...payload}`.
pub fn envelope(command: &str, cfg: &RunConfig, payload: impl Serialize) -> anyhow::Result<Value> {
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg,
    });
    match serde_json::to_value(payload)? {
        Value::Object(fields) => doc.as_object_mut().expect("object").extend(fields),
        Value::Null => {}
        other => {
            doc["result"] = other;
        }
    }
    Ok(doc)
}

pub fn write_json(path: &Path, value: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

/// A defocus map stored as sigma in pixels.
pub fn read_defocus_map(path: &Path, sigma_max: f64, minmax: bool) -> anyhow::Result<DefocusMap> {
    let fm = FloatMap::read(path)?;
    let img = fm.to_gray()?;
    let map = DefocusMap::new(img.width(), img.height(), img.into_data(), sigma_max)
        .with_context(|| format!("{} is not a defocus map for sigma_max {sigma_max}", path.display()))?;
    Ok(if minmax {
        map.with_minmax_normalization()
    } else {
        map
    })
}

pub fn write_defocus_map(path: &Path, map: &DefocusMap) -> anyhow::Result<()> {
    FloatMap::from_gray(&map.sigma_image()).write(path)?;
    Ok(())
}

pub fn read_saliency(path: &Path, png_signed: bool) -> anyhow::Result<SaliencyMap> {
    let img = if has_ext(path, "png") {
        let g = read_gray(path)?;
        if png_signed {
            g.map(|v| v - 0.5)
        } else {
            g
        }
    } else {
        FloatMap::read(path)?.to_gray()?
    };
    Ok(SaliencyMap::new(img)?)
}

/// `id,label,<24 features>` with label 0 = real, 1 = fake.
pub fn write_features_csv(path: &Path, rows: &[(String, u8, FeatureVector)]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id", "label"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for (id, label, f) in rows {
        let mut rec = vec![id.clone(), label.to_string()];
        rec.extend(f.as_slice().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
    write_atomic(path, &bytes)?;
    Ok(())
}

/// The dataset and its feature column names.
pub fn read_features_csv(path: &Path) -> anyhow::Result<(Dataset, Vec<String>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "label" {
        bail!("{}: expected columns id,label,<features>", path.display());
    }
    let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let label: u8 = rec[1]
            .parse()
            .with_context(|| format!("{}:{line}: bad label {:?}", path.display(), &rec[1]))?;
        let features = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}:{line}: bad feature value", path.display()))?;
        rows.push(Row {
            id: rec[0].to_string(),
            features,
            label,
        });
    }
    if rows.is_empty() {
        bail!(UsageError(format!("{}: no rows", path.display())));
    }
    let ds = Dataset::new(rows).with_context(|| path.display().to_string())?;
    if ds.dim() != names.len() {
        bail!("{}: {} feature columns but rows of length {}", path.display(), names.len(), ds.dim());
    }
    Ok((ds, names))
}
