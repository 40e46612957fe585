use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::model::{log_sum_exp, softmax_rows, Arch, ProxyModel};
use crate::artifact::{CoresetResult, FeatureMatrix, LabelVector, TrainingTrace};
use crate::error::{CoresetError, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// `lr · (1 + cos(π e / E)) / 2` at epoch `e` (0-based).
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub lr_schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
            lr_schedule: LrSchedule::Cosine,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CoresetError::arg("epochs and batch size must be at least 1"));
        }
        // lr = 0 is allowed: it freezes the parameters.
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(CoresetError::arg(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(CoresetError::arg("momentum must lie in [0, 1) and weight decay be >= 0"));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => self.lr * 0.5 * (1.0 + (PI * epoch as f64 / self.epochs as f64).cos()),
        }
    }
}

/// Rescales per-sample weights to mean 1. `None` when every weight is
/// equal, which is then exactly the unweighted objective.
fn normalize_weights(weights: &[f32], n: usize) -> Result<Option<Vec<f64>>> {
    if weights.len() != n {
        return Err(CoresetError::arg(format!("{} weights for {n} samples", weights.len())));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(CoresetError::arg(format!("invalid sample weight {w}")));
    }
    if weights.windows(2).all(|w| w[0] == w[1]) {
        if weights.first().is_some_and(|&w| w == 0.0) {
            return Err(CoresetError::arg("all sample weights are zero"));
        }
        return Ok(None);
    }
    let mean = weights.iter().map(|&w| f64::from(w)).sum::<f64>() / n as f64;
    Ok(Some(weights.iter().map(|&w| f64::from(w) / mean).collect()))
}

/// Mini-batch SGD with momentum; `on_epoch` runs after every epoch with
/// the 1-based epoch number.
fn fit<F>(
    model: &mut ProxyModel,
    x: &Array2<f64>,
    labels: &[usize],
    weights: Option<&[f64]>,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<()>
where
    F: FnMut(usize, &ProxyModel) -> Result<()>,
{
    cfg.validate()?;
    let n = labels.len();
    let mut shuffle = rng::stream(cfg.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..n).collect();
    let mut velocity = model.zero_gradients();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut shuffle);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let wb: Option<Vec<f64>> = weights.map(|w| chunk.iter().map(|&i| w[i]).collect());
            let (grads, loss) = model.gradients(xb.view(), &yb, wb.as_deref(), cfg.weight_decay);
            if !loss.is_finite() {
                return Err(CoresetError::Numerical(format!(
                    "non-finite loss at epoch {} batch {batch} (learning rate {lr})",
                    epoch + 1
                )));
            }
            for (v, g) in velocity.slices_mut().into_iter().zip(grads.slices()) {
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi = cfg.momentum * *vi + gi;
                }
            }
            for (p, v) in model.parameters_mut().into_iter().zip(velocity.slices()) {
                for (pi, vi) in p.iter_mut().zip(v) {
                    *pi -= lr * vi;
                }
            }
        }
        if !model.is_finite() {
            return Err(CoresetError::Numerical(format!(
                "parameters diverged in epoch {}",
                epoch + 1
            )));
        }
        on_epoch(epoch + 1, model)?;
    }
    Ok(())
}

/// Trains a fresh model seeded by `cfg.seed`. Optional per-sample weights
/// are renormalized to mean 1.
pub fn train(
    arch: Arch,
    features: &FeatureMatrix,
    labels: &LabelVector,
    weights: Option<&[f32]>,
    cfg: &TrainConfig,
) -> Result<ProxyModel> {
    if features.n() != labels.len() {
        return Err(CoresetError::arg("features and labels disagree on n"));
    }
    let weights = match weights {
        Some(w) => normalize_weights(w, labels.len())?,
        None => None,
    };
    let mut model = ProxyModel::new(arch, features.d(), labels.num_classes(), cfg.seed)?;
    fit(&mut model, &features.to_f64(), labels.as_slice(), weights.as_deref(), cfg, |_, _| Ok(()))?;
    Ok(model)
}

/// Trace outputs of `model` on a dataset.
fn snapshot(model: &ProxyModel, x: ArrayView2<'_, f64>, labels: &[usize], correctness: Array2<u8>, reference_epoch: usize) -> TrainingTrace {
    let (penultimate, logits) = model.forward(x);
    let softmax = softmax_rows(&logits).mapv(|p| p as f32);
    let mut error_vectors = softmax.clone();
    for (mut row, &y) in error_vectors.outer_iter_mut().zip(labels) {
        row[y] = (f64::from(row[y]) - 1.0) as f32;
    }
    let losses = Array1::from_iter(
        logits
            .outer_iter()
            .zip(labels)
            .map(|(row, &y)| (log_sum_exp(row) - row[y]).max(0.0) as f32),
    );
    TrainingTrace {
        correctness,
        softmax,
        losses,
        error_vectors,
        penultimate: penultimate.mapv(|v| v as f32),
        reference_epoch,
    }
}

#[derive(Debug, Clone)]
pub struct RecordedTrace {
    pub train: TrainingTrace,
    pub validation: Option<TrainingTrace>,
    /// Model state at the reference epoch.
    pub reference_model: ProxyModel,
}

/// Trains on the full dataset logging per-epoch correctness, and
/// snapshots softmax, losses, error vectors and penultimate features at
/// `reference_epoch`.
pub fn record_trace(
    arch: Arch,
    features: &FeatureMatrix,
    labels: &LabelVector,
    cfg: &TrainConfig,
    reference_epoch: usize,
) -> Result<TrainingTrace> {
    Ok(record_trace_with_validation(arch, features, labels, None, cfg, reference_epoch)?.train)
}

/// Like [`record_trace`], also evaluating a held-out split with the same
/// model at every epoch.
pub fn record_trace_with_validation(
    arch: Arch,
    features: &FeatureMatrix,
    labels: &LabelVector,
    validation: Option<(&FeatureMatrix, &LabelVector)>,
    cfg: &TrainConfig,
    reference_epoch: usize,
) -> Result<RecordedTrace> {
    cfg.validate()?;
    if reference_epoch == 0 || reference_epoch > cfg.epochs {
        return Err(CoresetError::arg(format!(
            "reference epoch {reference_epoch} outside [1, {}]",
            cfg.epochs
        )));
    }
    if features.n() != labels.len() {
        return Err(CoresetError::arg("features and labels disagree on n"));
    }
    let x = features.to_f64();
    let val_x = validation.map(|(f, _)| f.to_f64());
    let mut correct = Array2::<u8>::zeros((cfg.epochs, labels.len()));
    let mut val_correct = validation.map(|(_, l)| Array2::<u8>::zeros((cfg.epochs, l.len())));
    let mut reference = None;

    let mut model = ProxyModel::new(arch, features.d(), labels.num_classes(), cfg.seed)?;
    fit(&mut model, &x, labels.as_slice(), None, cfg, |epoch, m| {
        let record = |x: &Array2<f64>, y: &[usize], out: &mut Array2<u8>| {
            for (i, (p, t)) in m.predict(x.view()).into_iter().zip(y).enumerate() {
                out[[epoch - 1, i]] = u8::from(p == *t);
            }
        };
        record(&x, labels.as_slice(), &mut correct);
        if let (Some(vx), Some(vc), Some((_, vl))) = (&val_x, &mut val_correct, validation) {
            record(vx, vl.as_slice(), vc);
        }
        if epoch == reference_epoch {
            reference = Some(m.clone());
        }
        Ok(())
    })?;

    let reference_model = reference.expect("reference epoch reached");
    let train = snapshot(&reference_model, x.view(), labels.as_slice(), correct, reference_epoch);
    let validation = match (val_x, val_correct, validation) {
        (Some(vx), Some(vc), Some((_, vl))) => {
            Some(snapshot(&reference_model, vx.view(), vl.as_slice(), vc, reference_epoch))
        }
        _ => None,
    };
    Ok(RecordedTrace {
        train,
        validation,
        reference_model,
    })
}

/// Trains a fresh model on the coreset (weights renormalized to mean 1)
/// and returns its accuracy on the test split.
pub fn evaluate_coreset(
    result: &CoresetResult,
    features: &FeatureMatrix,
    labels: &LabelVector,
    test_features: &FeatureMatrix,
    test_labels: &LabelVector,
    arch: Arch,
    cfg: &TrainConfig,
) -> Result<f64> {
    if let Some(&i) = result.indices.iter().find(|&&i| i >= features.n()) {
        return Err(CoresetError::arg(format!(
            "coreset index {i} out of range for n = {}",
            features.n()
        )));
    }
    if result.is_empty() || result.weights.len() != result.len() {
        return Err(CoresetError::arg("coreset is empty or its weights are malformed"));
    }
    if test_features.d() != features.d() || test_labels.num_classes() != labels.num_classes() {
        return Err(CoresetError::arg("test split does not match the training data"));
    }
    let sub_x = features.select(&result.indices);
    let sub_y = labels.select(&result.indices);
    let model = train(arch, &sub_x, &sub_y, Some(&result.weights), cfg)?;
    Ok(model.accuracy(test_features.to_f64().view(), test_labels.as_slice()))
}
