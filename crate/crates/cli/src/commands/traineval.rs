use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use defocus_core::classify::{evaluate_scores, predict, train_logistic, Dataset, EvalReport, LogisticModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::args::SplitArg;
use crate::config::RunConfig;
use crate::util::{envelope, read_features_csv, write_json};

pub const MODEL_FILE: &str = "model.json";
pub const EVAL_FILE: &str = "eval.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn ids(&self, which: SplitArg) -> Vec<&str> {
        let parts: Vec<&Vec<String>> = match which {
            SplitArg::Train => vec![&self.train],
            SplitArg::Validation => vec![&self.validation],
            SplitArg::Test => vec![&self.test],
            SplitArg::All => vec![&self.train, &self.validation, &self.test],
        };
        parts.into_iter().flatten().map(String::as_str).collect()
    }
}

/// Sorts the ids, shuffles them with `seed` and cuts 70/15/15.
pub fn split_ids(ids: &[String], seed: u64) -> Split {
    let mut ids: Vec<String> = ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = ((0.7 * n as f64).round() as usize).min(n);
    let n_val = ((0.15 * n as f64).round() as usize).min(n - n_train);
    let test = ids.split_off(n_train + n_val);
    let validation = ids.split_off(n_train);
    Split {
        seed,
        train: ids,
        validation,
        test,
    }
}

/// Rows of `data` whose id is in `ids`, in `ids` order.
pub fn subset(data: &Dataset, ids: &[&str]) -> anyhow::Result<Dataset> {
    let rows = ids
        .iter()
        .map(|id| {
            data.rows
                .iter()
                .find(|r| r.id == *id)
                .cloned()
                .with_context(|| format!("id {id} missing from the features file"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Dataset::new(rows)?)
}

fn check_classes(data: &Dataset, split: &Split) -> anyhow::Result<()> {
    for (name, which) in [
        ("train", SplitArg::Train),
        ("validation", SplitArg::Validation),
        ("test", SplitArg::Test),
    ] {
        let part = subset(data, &split.ids(which))?;
        let (real, fake) = part.class_counts();
        if real == 0 || fake == 0 {
            bail!(
                "the {name} split ({} rows) lacks a class (real {real}, fake {fake}); use a larger corpus or another split seed",
                part.len()
            );
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutput {
    pub feature_names: Vec<String>,
    pub split: Split,
    pub model: LogisticModel,
}

/// Splits the features file, fits the baseline on the train split and
/// writes `model.json`.
pub fn run_train(features: &Path, cfg: &RunConfig) -> anyhow::Result<TrainOutput> {
    let (data, feature_names) = read_features_csv(features)?;
    let ids: Vec<String> = data.rows.iter().map(|r| r.id.clone()).collect();
    if ids.iter().collect::<HashSet<_>>().len() != ids.len() {
        bail!("{}: duplicate ids", features.display());
    }
    let split = split_ids(&ids, cfg.split_seed());
    check_classes(&data, &split)?;
    let train = subset(&data, &split.ids(SplitArg::Train))?;
    let model = train_logistic(&train, &cfg.classify.train)?;
    let out = TrainOutput {
        feature_names,
        split,
        model,
    };
    fs::create_dir_all(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join(MODEL_FILE), &envelope("train", cfg, &out)?)?;
    Ok(out)
}

pub fn read_model(path: &Path) -> anyhow::Result<TrainOutput> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a model file", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Score {
    pub id: String,
    pub label: u8,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub split: SplitArg,
    pub report: EvalReport,
    pub scores: Vec<Score>,
}

pub fn evaluate_split(model: &TrainOutput, data: &Dataset, which: SplitArg, threshold: f64) -> anyhow::Result<EvalOutput> {
    let part = subset(data, &model.split.ids(which))?;
    let scores = part
        .rows
        .iter()
        .map(|r| {
            Ok(Score {
                id: r.id.clone(),
                label: r.label,
                score: predict(&model.model, &r.features)?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let s: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let report = evaluate_scores(&s, &part.labels(), threshold)?;
    Ok(EvalOutput {
        split: which,
        report,
        scores,
    })
}

/// Scores one split of the features file with a saved model and writes
/// `eval.json`.
pub fn run_eval(model: &Path, features: &Path, which: SplitArg, cfg: &RunConfig) -> anyhow::Result<EvalOutput> {
    let model = read_model(model)?;
    let (data, names) = read_features_csv(features)?;
    if names != model.feature_names {
        bail!("{} has different feature columns than the model", features.display());
    }
    let out = evaluate_split(&model, &data, which, cfg.classify.threshold)?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join(EVAL_FILE), &envelope("eval", cfg, &out)?)?;
    Ok(out)
}

/// Train then evaluate on the held-out test split.
pub fn cmd_traineval(features: &Path, cfg: &RunConfig) -> anyhow::Result<(TrainOutput, EvalOutput)> {
    let trained = run_train(features, cfg)?;
    let model_path = cfg.out_dir.join(MODEL_FILE);
    let eval = run_eval(&model_path, features, SplitArg::Test, cfg)?;
    Ok((trained, eval))
}
