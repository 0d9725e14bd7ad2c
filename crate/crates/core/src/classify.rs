//! Logistic baseline over analysis features, Mann-Whitney AUC and DeLong
//! confidence intervals. Fake is the positive class (label 1).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;
const STD_FLOOR: f64 = 1e-12;
const MAX_BACKOFF: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub features: Vec<f64>,
    /// 0 = real, 1 = fake.
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<Row>,
}

impl Dataset {
    pub fn new(rows: Vec<Row>) -> Result<Self> {
        if let Some(first) = rows.first() {
            let dim = first.features.len();
            for r in &rows {
                if r.features.len() != dim {
                    return Err(Error::Shape(format!(
                        "row {} has {} features, expected {dim}",
                        r.id,
                        r.features.len()
                    )));
                }
                if r.label > 1 {
                    return Err(Error::Parameter(format!("row {} has label {}", r.id, r.label)));
                }
                if r.features.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parameter(format!("row {} has non-finite features", r.id)));
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.features.len())
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// (real, fake) counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let fake = self.rows.iter().filter(|r| r.label == 1).count();
        (self.rows.len() - fake, fake)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            lr: 0.5,
            epochs: 2000,
            l2: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub schema_version: u32,
    /// Length of the raw feature vectors the model accepts.
    pub n_features: usize,
    /// Raw feature indices that survived standardisation, in order.
    pub kept: Vec<usize>,
    /// Zero-variance features dropped at training time.
    pub dropped: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub final_loss: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean logistic loss plus `l2/2 |w|^2` and its gradient. `params` holds
/// the weights followed by the bias; the bias is not penalised.
pub fn loss_and_gradient(xs: &[Vec<f64>], ys: &[f64], params: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let (w, b) = (&params[..d], params[d]);
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (x, &y) in xs.iter().zip(ys) {
        let z = b + x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, xi) in grad[..d].iter_mut().zip(x) {
            *g += r * xi;
        }
        grad[d] += r;
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    let mut penalty = 0.0;
    for (g, wi) in grad[..d].iter_mut().zip(w) {
        *g += l2 * wi;
        penalty += wi * wi;
    }
    (loss + 0.5 * l2 * penalty, grad)
}

/// Full-batch gradient descent from zero; the step is halved whenever it
/// would raise the loss. Returns the model and the loss after each epoch.
pub fn train_logistic_with_history(train: &Dataset, params: &TrainParams) -> Result<(LogisticModel, Vec<f64>)> {
    if params.lr.is_nan() || params.lr <= 0.0 || params.l2.is_nan() || params.l2 < 0.0 {
        return Err(Error::Parameter(format!(
            "lr must be positive and l2 non-negative (lr {}, l2 {})",
            params.lr, params.l2
        )));
    }
    let (n_real, n_fake) = train.class_counts();
    if n_real == 0 || n_fake == 0 {
        return Err(Error::Degenerate(format!(
            "training needs both classes (real {n_real}, fake {n_fake})"
        )));
    }
    let dim = train.dim();
    let n = train.len() as f64;
    let (mut kept, mut dropped, mut mean, mut std) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for j in 0..dim {
        let m = train.rows.iter().map(|r| r.features[j]).sum::<f64>() / n;
        let v = train.rows.iter().map(|r| (r.features[j] - m).powi(2)).sum::<f64>() / n;
        if v.sqrt() > STD_FLOOR {
            kept.push(j);
            mean.push(m);
            std.push(v.sqrt());
        } else {
            dropped.push(j);
        }
    }
    let xs: Vec<Vec<f64>> = train
        .rows
        .iter()
        .map(|r| {
            kept.iter()
                .enumerate()
                .map(|(k, &j)| (r.features[j] - mean[k]) / std[k])
                .collect()
        })
        .collect();
    let ys: Vec<f64> = train.rows.iter().map(|r| r.label as f64).collect();

    let mut theta = vec![0.0; kept.len() + 1];
    let (mut loss, mut grad) = loss_and_gradient(&xs, &ys, &theta, params.l2);
    let mut lr = params.lr;
    let mut history = Vec::with_capacity(params.epochs);
    'epochs: for _ in 0..params.epochs {
        let mut halvings = 0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - lr * g).collect();
            let (cand_loss, cand_grad) = loss_and_gradient(&xs, &ys, &cand, params.l2);
            if cand_loss <= loss {
                theta = cand;
                loss = cand_loss;
                grad = cand_grad;
                break;
            }
            lr *= 0.5;
            halvings += 1;
            if halvings > MAX_BACKOFF {
                break 'epochs;
            }
        }
        history.push(loss);
    }
    let bias = theta.pop().expect("bias slot");
    let model = LogisticModel {
        schema_version: MODEL_SCHEMA_VERSION,
        n_features: dim,
        kept,
        dropped,
        mean,
        std,
        weights: theta,
        bias,
        final_loss: loss,
    };
    Ok((model, history))
}

pub fn train_logistic(train: &Dataset, params: &TrainParams) -> Result<LogisticModel> {
    train_logistic_with_history(train, params).map(|(m, _)| m)
}

/// Probability that `features` come from a fake image.
pub fn predict(model: &LogisticModel, features: &[f64]) -> Result<f64> {
    if features.len() != model.n_features {
        return Err(Error::Shape(format!(
            "model expects {} features, got {}",
            model.n_features,
            features.len()
        )));
    }
    let z = model.bias
        + model
            .kept
            .iter()
            .enumerate()
            .map(|(k, &j)| model.weights[k] * (features[j] - model.mean[k]) / model.std[k])
            .sum::<f64>();
    Ok(sigmoid(z))
}

fn check_scores(scores: &[f64], labels: &[u8], min_per_class: usize) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Parameter("scores must be finite".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Parameter("labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos < min_per_class || neg < min_per_class {
        return Err(Error::Degenerate(format!(
            "need at least {min_per_class} samples per class (fake {pos}, real {neg})"
        )));
    }
    Ok((pos, neg))
}

/// 1-based ranks with ties sharing their mean rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Fraction of (fake, real) pairs ranked correctly, ties counting half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_scores(scores, labels, 1)?;
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Placement values: for each fake sample the fraction of real samples it
/// outranks, and for each real sample the fraction of fakes outranking it.
pub fn placements(scores: &[f64], labels: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (pos, neg) = check_scores(scores, labels, 1)?;
    let all = midranks(scores);
    let split = |cls: u8| -> (Vec<f64>, Vec<f64>) {
        let idx: Vec<usize> = (0..scores.len()).filter(|&i| labels[i] == cls).collect();
        let own = midranks(&idx.iter().map(|&i| scores[i]).collect::<Vec<_>>());
        (idx.iter().map(|&i| all[i]).collect(), own)
    };
    let (pos_all, pos_own) = split(1);
    let (neg_all, neg_own) = split(0);
    let v10 = pos_all.iter().zip(&pos_own).map(|(a, o)| (a - o) / neg as f64).collect();
    let v01 = neg_all
        .iter()
        .zip(&neg_own)
        .map(|(a, o)| 1.0 - (a - o) / pos as f64)
        .collect();
    Ok((v10, v01))
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

/// DeLong variance of the AUC: `S10 / n_fake + S01 / n_real`.
pub fn delong_variance(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_scores(scores, labels, 2)?;
    let (v10, v01) = placements(scores, labels)?;
    Ok(sample_variance(&v10) / v10.len() as f64 + sample_variance(&v01) / v01.len() as f64)
}

/// Normal-approximation interval around the AUC, clamped to `[0, 1]`.
pub fn delong_ci(scores: &[f64], labels: &[u8], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let auc = roc_auc(scores, labels)?;
    let var = delong_variance(scores, labels)?;
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let half = z * var.max(0.0).sqrt();
    Ok(((auc - half).max(0.0), (auc + half).min(1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub n_real: usize,
    pub n_fake: usize,
    /// Scores at or above the threshold are called fake.
    pub threshold: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub auc: f64,
    pub auc_ci_95: (f64, f64),
}

pub fn evaluate_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Result<EvalReport> {
    let (pos, neg) = check_scores(scores, labels, 2)?;
    let mut correct = 0;
    let mut hits = 0;
    for (&s, &l) in scores.iter().zip(labels) {
        let called_fake = s >= threshold;
        if called_fake == (l == 1) {
            correct += 1;
            if l == 1 {
                hits += 1;
            }
        }
    }
    Ok(EvalReport {
        n: scores.len(),
        n_real: neg,
        n_fake: pos,
        threshold,
        accuracy: correct as f64 / scores.len() as f64,
        recall: hits as f64 / pos as f64,
        auc: roc_auc(scores, labels)?,
        auc_ci_95: delong_ci(scores, labels, 0.95)?,
    })
}

pub fn evaluate(model: &LogisticModel, test: &Dataset, threshold: f64) -> Result<EvalReport> {
    let scores = test
        .rows
        .iter()
        .map(|r| predict(model, &r.features))
        .collect::<Result<Vec<_>>>()?;
    evaluate_scores(&scores, &test.labels(), threshold)
}
