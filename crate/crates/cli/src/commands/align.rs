use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use defocus_core::alignment::{analyze_alignment, analyze_alignment_pooled, AlignmentReport, SaliencyMap};
use defocus_core::defocus::DefocusMap;
use serde::Serialize;

use crate::config::RunConfig;
use crate::util::{discover_by_stem, envelope, pair_by_stem, read_defocus_map, read_saliency, write_json};

pub const ALIGN_FILE: &str = "align.json";

/// One histogram bin with both normalised series, ready for a bar chart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotBin {
    pub lo: f64,
    pub hi: f64,
    pub defocus_diff: f64,
    pub saliency: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedReport {
    pub id: String,
    #[serde(flatten)]
    pub report: AlignmentReport,
    pub plot: Vec<PlotBin>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignOutput {
    pub mode: String,
    pub pairs: usize,
    pub reports: Vec<NamedReport>,
}

fn plot(r: &AlignmentReport) -> Vec<PlotBin> {
    (0..r.n_bins)
        .map(|i| PlotBin {
            lo: r.h_diff.edges[i],
            hi: r.h_diff.edges[i + 1],
            defocus_diff: r.h_diff.normalized[i],
            saliency: r.h_shap.normalized[i],
        })
        .collect()
}

fn named(id: String, report: AlignmentReport) -> NamedReport {
    NamedReport {
        id,
        plot: plot(&report),
        report,
    }
}

/// Alignment of fake-image saliency with `|D_fake - D_real|`, per pair or
/// pooled over all pairs, written to `align.json`.
pub fn run(real: &Path, fake: &Path, saliency: &Path, cfg: &RunConfig) -> anyhow::Result<AlignOutput> {
    let maps = pair_by_stem(
        &discover_by_stem(real, &["fmap"])?,
        &discover_by_stem(fake, &["fmap"])?,
        ("real", "fake"),
    )?;
    let map_stems: BTreeMap<String, std::path::PathBuf> =
        maps.iter().map(|(id, r, _)| (id.clone(), r.clone())).collect();
    let sal = pair_by_stem(&map_stems, &discover_by_stem(saliency, &["fmap", "png"])?, ("maps", "saliency"))?;

    let sigma_max = cfg.defocus.sigma_max;
    let minmax = cfg.analysis.minmax_normalize;
    let mut loaded: Vec<(String, DefocusMap, DefocusMap, SaliencyMap)> = Vec::with_capacity(maps.len());
    for ((id, r, f), (_, _, s)) in maps.iter().zip(&sal) {
        loaded.push((
            id.clone(),
            read_defocus_map(r, sigma_max, minmax)?,
            read_defocus_map(f, sigma_max, minmax)?,
            read_saliency(s, cfg.alignment.png_signed)?,
        ));
    }

    let (n_bins, eps) = (cfg.alignment.n_bins, cfg.alignment.epsilon);
    let reports = if cfg.alignment.pooled {
        let refs: Vec<_> = loaded.iter().map(|(_, r, f, s)| (r, f, s)).collect();
        vec![named("pooled".into(), analyze_alignment_pooled(&refs, n_bins, eps)?)]
    } else {
        loaded
            .iter()
            .map(|(id, r, f, s)| {
                let rep = analyze_alignment(r, f, s, n_bins, eps).with_context(|| format!("pair {id}"))?;
                Ok(named(id.clone(), rep))
            })
            .collect::<anyhow::Result<_>>()?
    };
    let out = AlignOutput {
        mode: if cfg.alignment.pooled { "pooled" } else { "per-pair" }.into(),
        pairs: loaded.len(),
        reports,
    };
    fs::create_dir_all(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join(ALIGN_FILE), &envelope("align", cfg, &out)?)?;
    Ok(out)
}
