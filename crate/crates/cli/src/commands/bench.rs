use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::bail;
use defocus_core::imgcore::io::write_atomic;
use serde::Serialize;

use crate::commands::estimate::{estimate_file, summarize, TimingSummary};
use crate::config::RunConfig;
use crate::util::{discover_images, envelope, write_json};
use crate::UsageError;

pub const BENCH_JSON: &str = "bench.json";
pub const BENCH_TXT: &str = "bench.txt";

#[derive(Debug, Clone, Serialize)]
pub struct BenchOutput {
    pub reps: usize,
    #[serde(flatten)]
    pub summary: TimingSummary,
    pub table: String,
}

impl BenchOutput {
    pub fn measured(&self) -> usize {
        self.summary.measured
    }
}

/// Aligned text table; the total row has no memory figure.
pub fn render_table(s: &TimingSummary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "{:<18} {:>12} {:>10}", "stage", "mean_ms", "peak_mb");
    for st in &s.stages {
        let _ = writeln!(t, "{:<18} {:>12.3} {:>10.2}", st.stage, st.mean_ms, st.peak_mb);
    }
    let _ = writeln!(t, "{:<18} {:>12.3} {:>10}", "total", s.total_ms, "--");
    let _ = writeln!(
        t,
        "({} warm-up items discarded, mean over {} items, single thread)",
        s.discarded, s.measured
    );
    t
}

/// Runs the estimator serially over the inputs, discards the first
/// `warmup` items and averages the next `reps` (or as many as remain).
pub fn run(inputs: &[PathBuf], cfg: &RunConfig) -> anyhow::Result<BenchOutput> {
    let images = discover_images(inputs)?;
    let (warmup, reps) = (cfg.timing.warmup, cfg.timing.reps);
    if reps == 0 {
        bail!(UsageError("bench needs reps >= 1".into()));
    }
    if images.len() < warmup + 1 {
        bail!(UsageError(format!(
            "bench needs at least {} inputs for warmup {warmup}, got {}",
            warmup + 1,
            images.len()
        )));
    }
    let end = images.len().min(warmup + reps);
    let mut runs = Vec::with_capacity(end - warmup);
    for (i, path) in images[..end].iter().enumerate() {
        let (est, total) = estimate_file(path, &cfg.defocus)?;
        if i >= warmup {
            runs.push((est.timings, total));
        }
    }
    let refs: Vec<_> = runs.iter().map(|(t, total)| (t.as_slice(), *total)).collect();
    let summary = summarize(&refs, warmup, warmup);
    let table = render_table(&summary);

    let out = BenchOutput { reps, summary, table };
    fs::create_dir_all(&cfg.out_dir)?;
    let mut bench_cfg = cfg.clone();
    bench_cfg.jobs = 1;
    write_json(&cfg.out_dir.join(BENCH_JSON), &envelope("bench", &bench_cfg, &out)?)?;
    write_atomic(&cfg.out_dir.join(BENCH_TXT), out.table.as_bytes())?;
    Ok(out)
}
