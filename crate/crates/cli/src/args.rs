use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use defocus_core::defocus::Propagation;

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "defocus", version, about = "Defocus blur maps and forensic analyses")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate defocus maps for images or directories of PNGs.
    Estimate(EstimateArgs),
    /// Render a synthetic depth-of-field corpus.
    Synth(SynthArgs),
    /// Discrepancy masks for map pairs, or variance/KS/features for a corpus.
    Analyze(AnalyzeArgs),
    /// Defocus/saliency alignment report.
    Align(AlignArgs),
    /// Train the logistic baseline on a features CSV.
    Train(TrainArgs),
    /// Evaluate a trained model on one split of a features CSV.
    Eval(EvalArgs),
    /// Per-stage timing table with warm-up.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PropagationArg {
    GuidedFilter,
    MattingLaplacian,
}

impl From<PropagationArg> for Propagation {
    fn from(p: PropagationArg) -> Self {
        match p {
            PropagationArg::GuidedFilter => Propagation::GuidedFilter,
            PropagationArg::MattingLaplacian => Propagation::MattingLaplacian,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct DefocusFlags {
    #[arg(long, value_enum)]
    pub propagation: Option<PropagationArg>,
    #[arg(long)]
    pub sigma1: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub sigma_max: Option<f64>,
    #[arg(long)]
    pub gf_radius: Option<usize>,
    #[arg(long)]
    pub gf_eps: Option<f64>,
}

impl DefocusFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.defocus;
        if let Some(p) = self.propagation {
            d.propagation = p.into();
        }
        set(&mut d.sigma1, self.sigma1);
        set(&mut d.sigma2, self.sigma2);
        set(&mut d.sigma_max, self.sigma_max);
        set(&mut d.gf_radius, self.gf_radius);
        set(&mut d.gf_eps, self.gf_eps);
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_flag(slot: &mut bool, flag: bool) {
    if flag {
        *slot = true;
    }
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// PNG files or directories containing them.
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub defocus: DefocusFlags,
    /// Leading images excluded from the timing averages.
    #[arg(long)]
    pub warmup: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_real: Option<usize>,
    #[arg(long)]
    pub n_fake: Option<usize>,
    #[arg(long)]
    pub f_number: Option<f64>,
    /// Millimetres.
    #[arg(long)]
    pub focal_length: Option<f64>,
    /// Millimetres.
    #[arg(long)]
    pub focus_distance: Option<f64>,
    /// Millimetres per pixel.
    #[arg(long)]
    pub pixel_pitch: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Corpus directory holding `manifest.jsonl`.
    #[arg(long, conflicts_with_all = ["real", "fake"])]
    pub corpus: Option<PathBuf>,
    /// Real-image defocus map (FMAP) or a directory of them.
    #[arg(long, requires = "fake")]
    pub real: Option<PathBuf>,
    /// Fake-image defocus map (FMAP) or a directory of them.
    #[arg(long, requires = "real")]
    pub fake: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Per-map min-max normalisation instead of sigma / sigma_max.
    #[arg(long)]
    pub minmax: bool,
    #[command(flatten)]
    pub defocus: DefocusFlags,
}

#[derive(Debug, Clone, Args)]
pub struct AlignArgs {
    /// Real-image defocus map (FMAP) or a directory of them.
    #[arg(long)]
    pub real: PathBuf,
    /// Fake-image defocus map (FMAP) or a directory of them.
    #[arg(long)]
    pub fake: PathBuf,
    /// Saliency of the fake image (FMAP or PNG) or a directory of them.
    #[arg(long)]
    pub saliency: PathBuf,
    /// One report over all pairs instead of one per pair.
    #[arg(long)]
    pub pooled: bool,
    #[arg(long)]
    pub n_bins: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Read PNG saliency as `value - 0.5`.
    #[arg(long)]
    pub png_signed: bool,
    #[arg(long)]
    pub sigma_max: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// PNG files, directories of PNGs, or corpus directories.
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[command(flatten)]
    pub defocus: DefocusFlags,
}

impl GlobalArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.jobs, self.jobs);
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
    }
}

impl Command {
    /// Writes this command's flags into `cfg`.
    pub fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Estimate(a) => {
                a.defocus.apply(cfg);
                set(&mut cfg.timing.warmup, a.warmup);
            }
            Command::Synth(a) => {
                set(&mut cfg.corpus.n_real, a.n_real);
                set(&mut cfg.corpus.n_fake, a.n_fake);
                set(&mut cfg.camera.f_number, a.f_number);
                set(&mut cfg.camera.focal_length, a.focal_length);
                set(&mut cfg.camera.focus_distance, a.focus_distance);
                set(&mut cfg.camera.pixel_pitch, a.pixel_pitch);
                set(&mut cfg.scene.width, a.width);
                set(&mut cfg.scene.height, a.height);
                set(&mut cfg.scene.layers, a.layers);
            }
            Command::Analyze(a) => {
                a.defocus.apply(cfg);
                set(&mut cfg.analysis.mask_threshold, a.threshold);
                set(&mut cfg.analysis.variance_window, a.window);
                set_flag(&mut cfg.analysis.minmax_normalize, a.minmax);
            }
            Command::Align(a) => {
                set(&mut cfg.alignment.n_bins, a.n_bins);
                set(&mut cfg.alignment.epsilon, a.epsilon);
                set_flag(&mut cfg.alignment.pooled, a.pooled);
                set_flag(&mut cfg.alignment.png_signed, a.png_signed);
                set(&mut cfg.defocus.sigma_max, a.sigma_max);
            }
            Command::Train(a) => {
                if a.split_seed.is_some() {
                    cfg.classify.split_seed = a.split_seed;
                }
                set(&mut cfg.classify.train.lr, a.lr);
                set(&mut cfg.classify.train.epochs, a.epochs);
                set(&mut cfg.classify.train.l2, a.l2);
            }
            Command::Eval(a) => set(&mut cfg.classify.threshold, a.threshold),
            Command::Bench(a) => {
                a.defocus.apply(cfg);
                set(&mut cfg.timing.warmup, a.warmup);
                set(&mut cfg.timing.reps, a.reps);
            }
        }
    }
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn effective_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.global.config.as_deref())?;
        self.global.apply(&mut cfg);
        self.command.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}
