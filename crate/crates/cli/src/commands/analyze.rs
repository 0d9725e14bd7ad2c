use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use defocus_core::analysis::{
    discrepancy_mask, extract_features, ks_two_sample, local_variance, mean_threshold_sweep, threshold_sweep,
    FeatureVector, KsResult, SweepPoint,
};
use defocus_core::defocus::DefocusMap;
use defocus_core::imgcore::io::{write_gray_png, FloatMap};
use defocus_core::synthcam::{read_manifest, Label};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::estimate::estimate_file;
use crate::config::RunConfig;
use crate::util::{
    discover_by_stem, envelope, pair_by_stem, read_defocus_map, thread_pool, write_defocus_map, write_features_csv,
    write_json, MANIFEST,
};
use crate::UsageError;

pub const FEATURES_FILE: &str = "features.csv";
pub const KS_FILE: &str = "ks.json";
pub const SWEEP_FILE: &str = "sweep.json";

#[derive(Debug, Clone, Serialize)]
pub struct KsReport {
    /// Per-image statistic compared between the groups.
    pub statistic: String,
    pub n_real: usize,
    pub n_fake: usize,
    pub mean_real: f64,
    pub mean_fake: f64,
    pub d_statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusReport {
    pub n_items: usize,
    pub features: PathBuf,
    pub ks: KsReport,
}

struct Analyzed {
    id: String,
    label: Label,
    map: DefocusMap,
    variance: FloatMap,
    variance_mean: f64,
    features: FeatureVector,
}

fn analyze_item(corpus: &Path, id: &str, label: Label, image: &str, cfg: &RunConfig) -> anyhow::Result<Analyzed> {
    let (est, _) = estimate_file(&corpus.join(image), &cfg.defocus).with_context(|| format!("item {id}"))?;
    let map = if cfg.analysis.minmax_normalize {
        est.map.with_minmax_normalization()
    } else {
        est.map
    };
    let var = local_variance(&map, cfg.analysis.variance_window)?;
    let features = extract_features(&map, &var)?;
    Ok(Analyzed {
        id: id.to_string(),
        label,
        variance: FloatMap::from_gray(var.values()),
        variance_mean: var.mean(),
        map,
        features,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Estimates every corpus image, then writes `maps/`, `variance/`,
/// `features.csv` and the real-vs-fake KS test on mean local variance.
pub fn run_corpus(corpus: &Path, cfg: &RunConfig) -> anyhow::Result<CorpusReport> {
    let manifest = corpus.join(MANIFEST);
    if !manifest.is_file() {
        bail!(UsageError(format!("{} has no {MANIFEST}", corpus.display())));
    }
    let entries = read_manifest(&manifest)?;
    if entries.is_empty() {
        bail!(UsageError("no inputs".into()));
    }
    let pool = thread_pool(cfg.jobs)?;
    let items: Vec<Analyzed> = pool.install(|| {
        entries
            .par_iter()
            .map(|e| analyze_item(corpus, &e.id, e.label, &e.image, cfg))
            .collect::<anyhow::Result<_>>()
    })?;

    let maps_dir = cfg.out_dir.join("maps");
    let var_dir = cfg.out_dir.join("variance");
    fs::create_dir_all(&maps_dir)?;
    fs::create_dir_all(&var_dir)?;
    for it in &items {
        write_defocus_map(&maps_dir.join(format!("{}.fmap", it.id)), &it.map)?;
        it.variance.write(&var_dir.join(format!("{}.fmap", it.id)))?;
        let gray = it.variance.to_gray()?;
        // stretch for viewing; variance of [0, 1] data is at most 0.25
        let (_, hi) = gray.min_max();
        let scale = if hi > 0.0 { 1.0 / hi } else { 0.0 };
        write_gray_png(&var_dir.join(format!("{}_preview.png", it.id)), &gray.map(|v| v * scale))?;
    }

    let rows: Vec<(String, u8, FeatureVector)> = items
        .iter()
        .map(|it| (it.id.clone(), it.label.as_binary(), it.features))
        .collect();
    let features = cfg.out_dir.join(FEATURES_FILE);
    write_features_csv(&features, &rows)?;

    let group = |l: Label| -> Vec<f64> {
        items
            .iter()
            .filter(|it| it.label == l)
            .map(|it| it.variance_mean)
            .collect()
    };
    let (real, fake) = (group(Label::Real), group(Label::Fake));
    if real.is_empty() || fake.is_empty() {
        bail!(UsageError("KS test needs both real and fake items in the corpus".into()));
    }
    let KsResult {
        d_statistic, p_value, ..
    } = ks_two_sample(&real, &fake)?;
    let ks = KsReport {
        statistic: "mean_local_variance".into(),
        n_real: real.len(),
        n_fake: fake.len(),
        mean_real: mean(&real),
        mean_fake: mean(&fake),
        d_statistic,
        p_value,
    };
    write_json(&cfg.out_dir.join(KS_FILE), &envelope("analyze", cfg, &ks)?)?;
    Ok(CorpusReport {
        n_items: items.len(),
        features,
        ks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub id: String,
    pub mask: String,
    pub activated: usize,
    pub sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairsReport {
    pub threshold: f64,
    pub pairs: Vec<PairReport>,
    pub mean_sweep: Vec<SweepPoint>,
}

/// Discrepancy masks under `masks/` and `sweep.json` for maps paired by stem.
pub fn run_pairs(real: &Path, fake: &Path, cfg: &RunConfig) -> anyhow::Result<PairsReport> {
    let pairs = pair_by_stem(
        &discover_by_stem(real, &["fmap"])?,
        &discover_by_stem(fake, &["fmap"])?,
        ("real", "fake"),
    )?;
    let (sigma_max, minmax) = (cfg.defocus.sigma_max, cfg.analysis.minmax_normalize);
    let maps = pairs
        .iter()
        .map(|(id, r, f)| Ok((id.clone(), read_defocus_map(r, sigma_max, minmax)?, read_defocus_map(f, sigma_max, minmax)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mask_dir = cfg.out_dir.join("masks");
    fs::create_dir_all(&mask_dir)?;
    let thresholds = &cfg.analysis.sweep_thresholds;
    let mut reports = Vec::with_capacity(maps.len());
    for (id, r, f) in &maps {
        let mask = discrepancy_mask(r, f, cfg.analysis.mask_threshold).with_context(|| format!("pair {id}"))?;
        let path = mask_dir.join(format!("{id}_mask.png"));
        write_gray_png(&path, &mask.to_image())?;
        reports.push(PairReport {
            id: id.clone(),
            mask: path.display().to_string(),
            activated: mask.count(),
            sweep: threshold_sweep(r, f, thresholds)?,
        });
    }
    let refs: Vec<(&DefocusMap, &DefocusMap)> = maps.iter().map(|(_, r, f)| (r, f)).collect();
    let report = PairsReport {
        threshold: cfg.analysis.mask_threshold,
        pairs: reports,
        mean_sweep: mean_threshold_sweep(&refs, thresholds)?,
    };
    write_json(&cfg.out_dir.join(SWEEP_FILE), &envelope("analyze", cfg, &report)?)?;
    Ok(report)
}
