use anyhow::Context;
use defocus_core::synthcam::{make_corpus, write_corpus, Label, RenderStyle};
use serde::Serialize;

use crate::config::RunConfig;
use crate::util::{envelope, write_json, MANIFEST};

pub const SYNTH_FILE: &str = "synth.json";

#[derive(Debug, Clone, Serialize)]
pub struct SynthItem {
    pub id: String,
    pub label: Label,
    pub style: RenderStyle,
    pub image: String,
    pub gt_blur: String,
    pub mean_gt_sigma: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub manifest: String,
    pub mean_gt_sigma: f64,
    pub items: Vec<SynthItem>,
}

/// Renders the corpus into the output directory: `images/`, `gt/`,
/// `manifest.jsonl` and a `synth.json` summary.
pub fn run(cfg: &RunConfig) -> anyhow::Result<SynthSummary> {
    let items = make_corpus(cfg.seed, cfg.corpus.n_real, cfg.corpus.n_fake, &cfg.camera, &cfg.scene)?;
    let entries = write_corpus(&cfg.out_dir, &items)
        .with_context(|| format!("writing corpus to {}", cfg.out_dir.display()))?;
    let summary_items: Vec<SynthItem> = items
        .iter()
        .zip(entries)
        .map(|(item, entry)| SynthItem {
            id: entry.id,
            label: entry.label,
            style: item.style,
            image: entry.image,
            gt_blur: entry.gt_blur,
            mean_gt_sigma: item.gt_blur.mean(),
        })
        .collect();
    let mean = summary_items.iter().map(|i| i.mean_gt_sigma).sum::<f64>() / summary_items.len() as f64;
    let summary = SynthSummary {
        manifest: MANIFEST.to_string(),
        mean_gt_sigma: mean,
        items: summary_items,
    };
    write_json(&cfg.out_dir.join(SYNTH_FILE), &envelope("synth", cfg, &summary)?)?;
    Ok(summary)
}
