//! Decision-boundary scores: contrastive neighbor divergence (CAL) and
//! DeepFool perturbation size.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use crate::artifact::{FeatureMatrix, TrainingTrace};
use crate::error::{CoresetError, Result};
use crate::metrics::{euclidean, kl_divergence};
use crate::scores::ScoreVector;
use crate::trainer::ProxyModel;

pub const DEFAULT_KNN: usize = 10;
pub const DEFAULT_OVERSHOOT: f64 = 0.02;
pub const DEFAULT_MAX_ITERS: usize = 50;

/// Mean `KL(p_neighbor ‖ p_self)` over the `k_neighbors` nearest samples in
/// feature space (euclidean, self excluded, ties to the lower index).
pub fn cal_scores(features: &FeatureMatrix, trace: &TrainingTrace, k_neighbors: usize) -> Result<ScoreVector> {
    let n = features.n();
    if k_neighbors == 0 || k_neighbors >= n {
        return Err(CoresetError::arg(format!(
            "k_neighbors must lie in [1, {}), got {k_neighbors}",
            n
        )));
    }
    if trace.n() != n {
        return Err(CoresetError::arg("trace and features disagree on n"));
    }
    let x = features.to_f64();
    let p = trace.softmax.mapv(f64::from);
    let scores = (0..n)
        .map(|i| {
            let mut others: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, euclidean(x.row(i), x.row(j))))
                .collect();
            others.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            others[..k_neighbors]
                .iter()
                .map(|&(j, _)| kl_divergence(p.row(j), p.row(i)))
                .sum::<f64>()
                / k_neighbors as f64
        })
        .collect();
    ScoreVector::new("cal", scores, true)
}

fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Exact distance from each penultimate row to the nearest decision
/// boundary of the linear head `W f + b` (W is C×h), measured against the
/// predicted class. Smaller scores are selected first.
pub fn deepfool_margin_linear(
    weight: ArrayView2<'_, f64>,
    bias: ArrayView1<'_, f64>,
    penultimate: ArrayView2<'_, f64>,
) -> Result<ScoreVector> {
    let (c, h) = weight.dim();
    if c < 2 || bias.len() != c || penultimate.ncols() != h {
        return Err(CoresetError::arg(format!(
            "linear head is {c}x{h} with {} biases; penultimate width {}",
            bias.len(),
            penultimate.ncols()
        )));
    }
    let logits = penultimate.dot(&weight.t()) + bias;
    let mut scores = Vec::with_capacity(penultimate.nrows());
    for (i, row) in logits.outer_iter().enumerate() {
        let top = argmax(row);
        let mut best = f64::INFINITY;
        for other in (0..c).filter(|&o| o != top) {
            let w = &weight.row(top) - &weight.row(other);
            let norm = w.dot(&w).sqrt();
            if norm == 0.0 {
                continue;
            }
            best = best.min((row[top] - row[other]).abs() / norm);
        }
        if !best.is_finite() {
            return Err(CoresetError::Numerical(format!(
                "sample {i}: every class pair has identical weight rows"
            )));
        }
        scores.push(best);
    }
    ScoreVector::new("deepfool", scores, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepFoolOutcome {
    pub scores: ScoreVector,
    /// Samples whose prediction never flipped within the iteration budget.
    pub unflipped: usize,
    /// Score assigned to unflipped samples.
    pub unflipped_score: f64,
}

/// Iterative DeepFool on a proxy model's input space.
///
/// Each step linearizes the logits at `x0 + (1 + overshoot)·r`, moves to the
/// nearest linearized boundary of the original prediction, and accumulates
/// the step into `r`. The score is `‖r‖₂` once the prediction flips.
/// Samples that never flip get ten times the largest flipped score.
pub fn deepfool_iterative(
    model: &ProxyModel,
    inputs: ArrayView2<'_, f64>,
    max_iters: usize,
    overshoot: f64,
) -> Result<DeepFoolOutcome> {
    if max_iters == 0 {
        return Err(CoresetError::arg("max_iters must be at least 1"));
    }
    if inputs.ncols() != model.input_dim() {
        return Err(CoresetError::arg("input width does not match the model"));
    }
    let c = model.num_classes();
    let mut raw: Vec<Option<f64>> = Vec::with_capacity(inputs.nrows());
    for x0 in inputs.outer_iter() {
        let logits_at = |x: &Array1<f64>| model.logits(x.view().insert_axis(Axis(0))).row(0).to_owned();
        let original = argmax(logits_at(&x0.to_owned()).view());
        let mut r = Array1::<f64>::zeros(x0.len());
        let mut outcome = None;
        for _ in 0..max_iters {
            let x = &x0 + &(&r * (1.0 + overshoot));
            let logits = logits_at(&x);
            if argmax(logits.view()) != original {
                outcome = Some(r.dot(&r).sqrt());
                break;
            }
            let jac = model.input_jacobian(x.view());
            let mut step: Option<(f64, f64, Array1<f64>)> = None;
            for other in (0..c).filter(|&o| o != original) {
                let w = &jac.row(other) - &jac.row(original);
                let norm_sq = w.dot(&w);
                if norm_sq == 0.0 {
                    continue;
                }
                let f = logits[other] - logits[original];
                let ratio = f.abs() / norm_sq.sqrt();
                if step.as_ref().is_none_or(|(best, _, _)| ratio < *best) {
                    step = Some((ratio, f.abs() / norm_sq, w));
                }
            }
            match step {
                None => break,
                Some((0.0, _, _)) => {
                    // Already on a boundary.
                    outcome = Some(r.dot(&r).sqrt());
                    break;
                }
                Some((_, scale, w)) => r.scaled_add(scale, &w),
            }
        }
        if outcome.is_none() {
            let x = &x0 + &(&r * (1.0 + overshoot));
            if argmax(logits_at(&x).view()) != original {
                outcome = Some(r.dot(&r).sqrt());
            }
        }
        raw.push(outcome);
    }
    let max_flipped = raw.iter().flatten().copied().fold(0.0f64, f64::max);
    let unflipped_score = if max_flipped > 0.0 { 10.0 * max_flipped } else { 1.0 };
    let unflipped = raw.iter().filter(|s| s.is_none()).count();
    let scores = raw.into_iter().map(|s| s.unwrap_or(unflipped_score)).collect();
    Ok(DeepFoolOutcome {
        scores: ScoreVector::new("deepfool", scores, false)?,
        unflipped,
        unflipped_score,
    })
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    use super::*;
    use crate::trainer::{generate_synthetic, train, Arch, SyntheticSpec, TrainConfig};

    fn trace_with_softmax(p: Array2<f32>) -> TrainingTrace {
        let n = p.nrows();
        TrainingTrace {
            correctness: Array2::ones((2, n)),
            error_vectors: p.clone(),
            softmax: p,
            losses: Array1::zeros(n),
            penultimate: Array2::ones((n, 1)),
            reference_epoch: 1,
        }
    }

    #[test]
    fn cal_identical_predictions_score_zero() {
        let f = FeatureMatrix::new(array![[0.0f32], [1.0], [3.0], [4.0]]).unwrap();
        let t = trace_with_softmax(Array2::from_elem((4, 2), 0.5));
        let s = cal_scores(&f, &t, 2).unwrap();
        assert!(s.scores.iter().all(|&v| v == 0.0));
        assert!(cal_scores(&f, &t, 4).is_err());
    }

    #[test]
    fn cal_outlier_scores_highest() {
        let f = FeatureMatrix::new(array![[0.0f32], [1.0], [2.0], [3.0], [4.0]]).unwrap();
        let mut p = Array2::from_elem((5, 2), 0.5f32);
        p.row_mut(2).assign(&array![0.95, 0.05]);
        let s = cal_scores(&f, &trace_with_softmax(p), 2).unwrap();
        let top = (0..5).max_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b])).unwrap();
        assert_eq!(top, 2);
        assert!(s.scores.iter().enumerate().all(|(i, &v)| i == 2 || v < s.scores[2]));
    }

    #[test]
    fn cal_three_points_all_neighbors() {
        let f = FeatureMatrix::new(array![[0.0f32], [1.0], [5.0]]).unwrap();
        let p = array![[0.7f32, 0.3], [0.4, 0.6], [0.2, 0.8]];
        let s = cal_scores(&f, &trace_with_softmax(p.clone()), 2).unwrap();
        let q = p.mapv(f64::from);
        // Hand evaluation of the neighbor-to-self KL.
        let kl = |a: usize, b: usize| -> f64 { (0..2).map(|j| q[[a, j]] * (q[[a, j]] / q[[b, j]]).ln()).sum() };
        for i in 0..3 {
            let expected: f64 = (0..3).filter(|&j| j != i).map(|j| kl(j, i)).sum::<f64>() / 2.0;
            assert!((s.scores[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_margin_examples() {
        let w = array![[1.0, 0.0], [-1.0, 0.0]];
        let b = array![0.0, 0.0];
        let s = deepfool_margin_linear(w.view(), b.view(), array![[2.0, 0.0], [0.0, 3.0]].view()).unwrap();
        assert!((s.scores[0] - 2.0).abs() < 1e-12);
        assert_eq!(s.scores[1], 0.0);
        assert!(!s.higher_is_better);
        let dup = array![[1.0, 0.0], [1.0, 0.0]];
        assert!(deepfool_margin_linear(dup.view(), b.view(), array![[1.0, 1.0]].view()).is_err());
    }

    proptest! {
        #[test]
        fn linear_margin_scale_and_rotation_invariant(
            w in proptest::collection::vec(-3.0f64..3.0, 6),
            b in proptest::collection::vec(-1.0f64..1.0, 3),
            f in proptest::collection::vec(-3.0f64..3.0, 8),
            c in 0.1f64..10.0,
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let w = Array2::from_shape_vec((3, 2), w).unwrap();
            let b = Array1::from(b);
            let f = Array2::from_shape_vec((4, 2), f).unwrap();
            let base = deepfool_margin_linear(w.view(), b.view(), f.view()).unwrap();
            let scaled = deepfool_margin_linear((&w * c).view(), (&b * c).view(), f.view()).unwrap();
            let rot = array![[angle.cos(), -angle.sin()], [angle.sin(), angle.cos()]];
            let rotated = deepfool_margin_linear(w.dot(&rot.t()).view(), b.view(), f.dot(&rot.t()).view()).unwrap();
            for i in 0..4 {
                let tol = 1e-9 * (1.0 + base.scores[i]);
                prop_assert!((base.scores[i] - scaled.scores[i]).abs() < tol);
                prop_assert!((base.scores[i] - rotated.scores[i]).abs() < tol);
            }
        }
    }

    #[test]
    fn iterative_matches_closed_form_on_linear_model() {
        let mut spec: SyntheticSpec = "c4-n30-d5-sep3".parse().unwrap();
        spec.seed = 11;
        let data = generate_synthetic(&spec).unwrap();
        let cfg = TrainConfig { epochs: 10, ..TrainConfig::default() };
        let model = train(Arch::Linear, &data.train_features, &data.train_labels, None, &cfg).unwrap();
        let x = data.train_features.to_f64();
        let iter = deepfool_iterative(&model, x.view(), 1, DEFAULT_OVERSHOOT).unwrap();
        let closed = deepfool_margin_linear(model.output.weight.view(), model.output.bias.view(), x.view()).unwrap();
        assert_eq!(iter.unflipped, 0);
        for (a, b) in iter.scores.scores.iter().zip(&closed.scores) {
            assert!((a - b).abs() <= 1e-3 * b.abs().max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn iterative_terminates_on_mlp() {
        let mut spec: SyntheticSpec = "c3-n40-d6-sep4".parse().unwrap();
        spec.seed = 12;
        let data = generate_synthetic(&spec).unwrap();
        let cfg = TrainConfig { epochs: 15, ..TrainConfig::default() };
        let model = train(Arch::Mlp1 { hidden: 16 }, &data.train_features, &data.train_labels, None, &cfg).unwrap();
        let out = deepfool_iterative(&model, data.train_features.to_f64().view(), DEFAULT_MAX_ITERS, DEFAULT_OVERSHOOT)
            .unwrap();
        assert_eq!(out.scores.len(), data.train_labels.len());
        assert_eq!(out.unflipped, 0);
        assert!(out.scores.scores.iter().all(|&s| s > 0.0));
    }
}
