use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use defocus_core::defocus::{estimate_defocus, DefocusEstimate, DefocusParams, Diagnostics, StageTiming, STAGE_NAMES};
use defocus_core::imgcore::io::{read_rgb, write_gray_png};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::util::{discover_images, envelope, stem, thread_pool, write_defocus_map, write_json};
use crate::{Outcome, UsageError};

pub const TIMINGS_FILE: &str = "timings.json";

/// Decodes one image and runs the estimator, returning the wall time too.
pub fn estimate_file(path: &Path, params: &DefocusParams) -> anyhow::Result<(DefocusEstimate, f64)> {
    let img = read_rgb(path)?;
    let t = Instant::now();
    let est = estimate_defocus(&img, params)?;
    Ok((est, t.elapsed().as_secs_f64() * 1e3))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub input: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preview: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<StageTiming>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub stage: String,
    pub mean_ms: f64,
    pub peak_mb: f64,
}

/// Per-stage means over `records[discarded..]` of the successful records.
#[derive(Debug, Clone, Serialize)]
pub struct TimingSummary {
    pub warmup: usize,
    pub discarded: usize,
    pub measured: usize,
    pub stages: Vec<StageSummary>,
    pub total_ms: f64,
    pub stage_sum_ms: f64,
}

/// Stage means over a run of estimates; peaks are the maximum seen.
pub fn summarize(runs: &[(&[StageTiming], f64)], warmup: usize, discarded: usize) -> TimingSummary {
    let n = runs.len().max(1) as f64;
    let stages: Vec<StageSummary> = STAGE_NAMES
        .iter()
        .map(|&name| {
            let mut sum = 0.0;
            let mut peak: f64 = 0.0;
            for (timings, _) in runs {
                if let Some(t) = timings.iter().find(|t| t.stage == name) {
                    sum += t.ms;
                    peak = peak.max(t.peak_mb);
                }
            }
            StageSummary {
                stage: name.to_string(),
                mean_ms: sum / n,
                peak_mb: peak,
            }
        })
        .collect();
    TimingSummary {
        warmup,
        discarded,
        measured: runs.len(),
        stage_sum_ms: stages.iter().map(|s| s.mean_ms).sum(),
        stages,
        total_ms: runs.iter().map(|(_, t)| t).sum::<f64>() / n,
    }
}

#[derive(Debug, Serialize)]
struct TimingsDoc<'a> {
    #[serde(flatten)]
    summary: &'a TimingSummary,
    files: &'a [FileRecord],
}

fn process(path: &Path, out_dir: &Path, params: &DefocusParams) -> (FileRecord, Option<(Vec<StageTiming>, f64)>) {
    let s = stem(path);
    let map_path = out_dir.join(format!("{s}.fmap"));
    let preview_path = out_dir.join(format!("{s}_preview.png"));
    let result = estimate_file(path, params).and_then(|(est, total)| {
        write_defocus_map(&map_path, &est.map)?;
        write_gray_png(&preview_path, &est.map.normalized_image())?;
        Ok((est, total))
    });
    let input = path.display().to_string();
    match result {
        Ok((est, total)) => (
            FileRecord {
                input,
                ok: true,
                map: Some(map_path.display().to_string()),
                preview: Some(preview_path.display().to_string()),
                error: None,
                diagnostics: Some(est.diagnostics),
                stages: Some(est.timings.clone()),
                total_ms: Some(total),
            },
            Some((est.timings, total)),
        ),
        Err(e) => (
            FileRecord {
                input,
                ok: false,
                map: None,
                preview: None,
                error: Some(format!("{e:#}")),
                diagnostics: None,
                stages: None,
                total_ms: None,
            },
            None,
        ),
    }
}

/// Writes `<stem>.fmap` and `<stem>_preview.png` per input plus
/// `timings.json`. Fails only when every input fails.
pub fn run(inputs: &[PathBuf], cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let images = discover_images(inputs)?;
    let mut stems = BTreeSet::new();
    for p in &images {
        if !stems.insert(stem(p)) {
            bail!(UsageError(format!("two inputs share the stem {:?}", stem(p))));
        }
    }
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;

    let pool = thread_pool(cfg.jobs)?;
    let results: Vec<_> = pool.install(|| {
        images
            .par_iter()
            .map(|p| process(p, &cfg.out_dir, &cfg.defocus))
            .collect()
    });

    let ok: Vec<(&[StageTiming], f64)> = results
        .iter()
        .filter_map(|(_, t)| t.as_ref().map(|(s, total)| (s.as_slice(), *total)))
        .collect();
    let discarded = cfg.timing.warmup.min(ok.len().saturating_sub(1));
    let summary = summarize(&ok[discarded..], cfg.timing.warmup, discarded);
    let records: Vec<FileRecord> = results.into_iter().map(|(r, _)| r).collect();
    let failed = records.iter().filter(|r| !r.ok).count();

    let doc = envelope(
        "estimate",
        cfg,
        TimingsDoc {
            summary: &summary,
            files: &records,
        },
    )?;
    write_json(&cfg.out_dir.join(TIMINGS_FILE), &doc)?;

    for r in records.iter().filter(|r| !r.ok) {
        eprintln!("{}: {}", r.input, r.error.as_deref().unwrap_or("failed"));
    }
    if failed == records.len() {
        bail!("all {} inputs failed", records.len());
    }
    Ok(Outcome {
        failed,
        total: records.len(),
    })
}
