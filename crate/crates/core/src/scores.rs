//! Per-sample scores computed from a training trace, and selection by
//! score ranking or by loss-proportional sampling.

use rand::Rng;
use rand::seq::index;

use crate::artifact::{CoresetResult, LabelVector, TrainingTrace};
use crate::error::{CoresetError, Result};
use crate::selection::{select_in_pools, Selection};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    /// Selection takes the largest scores first when true, the smallest
    /// otherwise.
    pub higher_is_better: bool,
    pub method: String,
}

impl ScoreVector {
    pub fn new(method: &str, scores: Vec<f64>, higher_is_better: bool) -> Result<Self> {
        if let Some((i, s)) = scores.iter().enumerate().find(|(_, s)| !s.is_finite()) {
            return Err(CoresetError::Numerical(format!("{method}: score {i} is {s}")));
        }
        Ok(Self {
            scores,
            higher_is_better,
            method: method.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Elementwise arithmetic mean of score vectors from independent runs.
    pub fn mean(runs: &[ScoreVector]) -> Result<Self> {
        let first = runs
            .first()
            .ok_or_else(|| CoresetError::arg("no score vectors to average"))?;
        if runs
            .iter()
            .any(|r| r.len() != first.len() || r.higher_is_better != first.higher_is_better)
        {
            return Err(CoresetError::arg("score vectors from different runs disagree in shape"));
        }
        let count = runs.len() as f64;
        let scores = (0..first.len())
            .map(|i| runs.iter().map(|r| r.scores[i]).sum::<f64>() / count)
            .collect();
        Self::new(&first.method, scores, first.higher_is_better)
    }
}

fn softmax_rows(trace: &TrainingTrace) -> impl Iterator<Item = Vec<f64>> + '_ {
    trace
        .softmax
        .outer_iter()
        .map(|row| row.iter().map(|&p| f64::from(p)).collect())
}

/// `1 - max_j p_j`.
pub fn least_confidence(trace: &TrainingTrace) -> Result<ScoreVector> {
    let scores = softmax_rows(trace)
        .map(|p| 1.0 - p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    ScoreVector::new("lc", scores, true)
}

/// Shannon entropy in nats, `0 ln 0 = 0`.
pub fn entropy_score(trace: &TrainingTrace) -> Result<ScoreVector> {
    let scores = softmax_rows(trace)
        .map(|p| {
            -p.iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| v * v.ln())
                .sum::<f64>()
        })
        .map(|h: f64| h.max(0.0))
        .collect();
    ScoreVector::new("entropy", scores, true)
}

/// `1 - (p_top - p_second)`, the top class being the softmax argmax.
pub fn margin_score(trace: &TrainingTrace) -> Result<ScoreVector> {
    if trace.softmax.ncols() < 2 {
        return Err(CoresetError::arg("margin needs at least two classes"));
    }
    let scores = softmax_rows(trace)
        .map(|p| {
            let (mut top, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for v in p {
                if v > top {
                    second = top;
                    top = v;
                } else if v > second {
                    second = v;
                }
            }
            1.0 - (top - second)
        })
        .collect();
    ScoreVector::new("margin", scores, true)
}

/// Number of correct-to-incorrect transitions between consecutive epochs.
/// Samples never classified correctly score `E`.
pub fn forgetting_count(trace: &TrainingTrace) -> Result<ScoreVector> {
    let epochs = trace.num_epochs();
    if epochs < 2 {
        return Err(CoresetError::arg(format!(
            "forgetting needs at least 2 recorded epochs, trace has {epochs}"
        )));
    }
    let scores = trace
        .correctness
        .columns()
        .into_iter()
        .map(|col| {
            if col.iter().all(|&c| c == 0) {
                return epochs as f64;
            }
            col.windows(2)
                .into_iter()
                .filter(|w| w[0] == 1 && w[1] == 0)
                .count() as f64
        })
        .collect();
    ScoreVector::new("forgetting", scores, true)
}

fn row_norm(row: ndarray::ArrayView1<'_, f32>) -> f64 {
    row.iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

/// `‖p - y‖₂` from the stored error vectors.
pub fn el2n_score(trace: &TrainingTrace) -> Result<ScoreVector> {
    let scores = trace.error_vectors.outer_iter().map(row_norm).collect();
    ScoreVector::new("el2n", scores, true)
}

/// Norm of the final linear layer's gradient, using
/// `‖(p - y) [f; 1]ᵀ‖_F = ‖p - y‖ · sqrt(‖f‖² + 1)`.
pub fn grand_score(trace: &TrainingTrace, include_bias: bool) -> Result<ScoreVector> {
    let bias = if include_bias { 1.0 } else { 0.0 };
    let scores = trace
        .error_vectors
        .outer_iter()
        .zip(trace.penultimate.outer_iter())
        .map(|(e, f)| {
            let f = row_norm(f);
            row_norm(e) * (f * f + bias).sqrt()
        })
        .collect();
    ScoreVector::new("grand", scores, true)
}

/// Loss-proportional sampling probabilities `ℓ_i / Σ ℓ`.
pub fn sensitivity_probabilities(losses: &[f64]) -> Result<Vec<f64>> {
    if let Some(l) = losses.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(CoresetError::arg(format!("invalid loss {l}")));
    }
    let total: f64 = losses.iter().sum();
    if total <= 0.0 {
        return Err(CoresetError::Numerical(
            "all losses are zero; sensitivity is degenerate".into(),
        ));
    }
    Ok(losses.iter().map(|l| l / total).collect())
}

/// Ranks each pool by score (ties to the lower index) and keeps its quota.
pub fn select_by_score(
    scores: &ScoreVector,
    labels: &LabelVector,
    sel: Selection,
) -> Result<CoresetResult> {
    if scores.len() != labels.len() {
        return Err(CoresetError::arg(format!(
            "{} scores for {} samples",
            scores.len(),
            labels.len()
        )));
    }
    select_in_pools(&scores.method, labels, sel, |pool, _| {
        let mut order = pool.indices.clone();
        let s = &scores.scores;
        if scores.higher_is_better {
            order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        } else {
            order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
        }
        Ok(order.into_iter().take(pool.quota).map(|i| (i, 1.0)).collect())
    })
}

/// Draws each pool's quota without replacement with probability
/// proportional to loss, renormalizing after every draw. When fewer samples
/// than the quota carry positive loss, the rest is drawn uniformly and the
/// count is recorded under `uniform_fallback` in the metadata.
pub fn importance_sample(
    trace: &TrainingTrace,
    labels: &LabelVector,
    sel: Selection,
) -> Result<CoresetResult> {
    let losses: Vec<f64> = trace.losses.iter().map(|&l| f64::from(l)).collect();
    let mut fallback = 0usize;
    let result = select_in_pools("importance", labels, sel, |pool, rng| {
        let mut mass: Vec<f64> = pool.indices.iter().map(|&i| losses[i]).collect();
        let mut picked = Vec::with_capacity(pool.quota);
        let mut taken = vec![false; mass.len()];
        while picked.len() < pool.quota {
            let total: f64 = mass.iter().sum();
            if total <= 0.0 {
                break;
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut choice = None;
            for (j, &m) in mass.iter().enumerate() {
                if m <= 0.0 {
                    continue;
                }
                acc += m;
                choice = Some(j);
                if u < acc {
                    break;
                }
            }
            let j = choice.expect("positive total mass");
            taken[j] = true;
            mass[j] = 0.0;
            picked.push(pool.indices[j]);
        }
        let missing = pool.quota - picked.len();
        if missing > 0 {
            fallback += missing;
            let rest: Vec<usize> = (0..mass.len()).filter(|&j| !taken[j]).collect();
            for r in index::sample(rng, rest.len(), missing) {
                picked.push(pool.indices[rest[r]]);
            }
        }
        Ok(picked.into_iter().map(|i| (i, 1.0)).collect())
    })?;
    Ok(result.with_metadata("uniform_fallback", fallback))
}

#[cfg(test)]
mod tests {
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;

    use super::*;

    /// Builds a trace from softmax rows; labels default to the argmax.
    fn trace_from(softmax: &[&[f32]], labels: &[usize]) -> TrainingTrace {
        let n = softmax.len();
        let c = softmax[0].len();
        let sm = Array2::from_shape_fn((n, c), |(i, j)| softmax[i][j]);
        let err = Array2::from_shape_fn((n, c), |(i, j)| sm[[i, j]] - if labels[i] == j { 1.0 } else { 0.0 });
        TrainingTrace {
            correctness: Array2::ones((2, n)),
            softmax: sm,
            losses: Array1::ones(n),
            error_vectors: err,
            penultimate: Array2::ones((n, 1)),
            reference_epoch: 1,
        }
    }

    #[test]
    fn uncertainty_examples() {
        let t = trace_from(&[&[1.0, 0.0, 0.0, 0.0], &[0.25; 4], &[0.5, 0.3, 0.2, 0.0]], &[0, 0, 0]);
        let lc = least_confidence(&t).unwrap();
        assert_eq!(lc.scores[0], 0.0);
        assert_eq!(lc.scores[1], 0.75);
        assert!((lc.scores[2] - 0.5).abs() < 1e-7);
        let h = entropy_score(&t).unwrap();
        assert_eq!(h.scores[0], 0.0);
        assert!((h.scores[1] - 4f64.ln()).abs() < 1e-12);
        assert!((h.scores[2] - 1.029653).abs() < 1e-6);
        let m = margin_score(&t).unwrap();
        assert_eq!(m.scores[0], 0.0);
        assert!((m.scores[2] - 0.8).abs() < 1e-7);
        let tie = trace_from(&[&[0.5, 0.5, 0.0]], &[0]);
        assert_eq!(margin_score(&tie).unwrap().scores[0], 1.0);
    }

    #[test]
    fn forgetting_examples() {
        let mut t = trace_from(&[&[0.5f32, 0.5][..]; 3], &[0, 0, 0]);
        t.correctness = ndarray::array![[1, 1, 0], [1, 0, 0], [1, 1, 0], [1, 0, 0]];
        let f = forgetting_count(&t).unwrap();
        assert_eq!(f.scores, vec![0.0, 2.0, 4.0]);
        t.correctness = ndarray::array![[1, 1, 0]];
        assert!(forgetting_count(&t).is_err());
    }

    #[test]
    fn el2n_and_grand_examples() {
        let mut t = trace_from(&[&[1.0, 0.0], &[0.6, 0.4], &[0.5, 0.5]], &[0, 0, 0]);
        let e = el2n_score(&t).unwrap();
        assert_eq!(e.scores[0], 0.0);
        assert!((e.scores[1] - 0.565685).abs() < 1e-6);
        assert!((e.scores[2] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);

        // ‖p - y‖ = 0.5 with ‖f‖ = 2.
        t = trace_from(&[&[0.75, 0.25]], &[0]);
        t.error_vectors = ndarray::array![[-0.5, 0.0]];
        t.penultimate = ndarray::array![[0.0, 2.0]];
        assert!((grand_score(&t, false).unwrap().scores[0] - 1.0).abs() < 1e-12);
        assert!((grand_score(&t, true).unwrap().scores[0] - 1.118034).abs() < 1e-6);
    }

    #[test]
    fn sensitivity_examples() {
        assert_eq!(sensitivity_probabilities(&[1.0, 1.0, 2.0]).unwrap(), vec![0.25, 0.25, 0.5]);
        assert_eq!(sensitivity_probabilities(&[0.0, 0.0, 5.0]).unwrap(), vec![0.0, 0.0, 1.0]);
        assert!(sensitivity_probabilities(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn select_by_score_examples() {
        let labels = LabelVector::new(vec![0, 0, 1], 2).unwrap();
        let s = ScoreVector::new("x", vec![3.0, 1.0, 2.0], true).unwrap();
        assert_eq!(select_by_score(&s, &labels, Selection::new(2, false, 0)).unwrap().indices, vec![0, 2]);

        let labels = LabelVector::new(vec![0, 0, 1, 1], 2).unwrap();
        let s = ScoreVector::new("x", vec![3.0, 1.0, 2.0, 0.0], true).unwrap();
        assert_eq!(select_by_score(&s, &labels, Selection::new(2, true, 0)).unwrap().indices, vec![0, 2]);

        let s = ScoreVector::new("x", vec![1.0; 4], true).unwrap();
        assert_eq!(select_by_score(&s, &labels, Selection::new(1, false, 0)).unwrap().indices, vec![0]);

        let s = ScoreVector::new("x", vec![3.0, 1.0, 2.0, 0.0], false).unwrap();
        assert_eq!(select_by_score(&s, &labels, Selection::new(1, false, 0)).unwrap().indices, vec![3]);
        assert!(select_by_score(&s, &labels, Selection::new(5, false, 0)).is_err());
    }

    #[test]
    fn importance_examples() {
        let labels = LabelVector::new(vec![0, 1, 0], 2).unwrap();
        let mut t = trace_from(&[&[0.5f32, 0.5][..]; 3], &[0, 1, 0]);
        let all = importance_sample(&t, &labels, Selection::new(3, false, 1)).unwrap();
        assert_eq!(all.indices, vec![0, 1, 2]);

        t.losses = ndarray::array![0.0, 0.0, 5.0];
        for seed in 0..20 {
            let r = importance_sample(&t, &labels, Selection::new(1, false, seed)).unwrap();
            assert_eq!(r.indices, vec![2]);
        }
        let r = importance_sample(&t, &labels, Selection::new(2, false, 9)).unwrap();
        assert!(r.indices.contains(&2));
        assert_eq!(r.metadata["uniform_fallback"], 1);
        assert_eq!(r, importance_sample(&t, &labels, Selection::new(2, false, 9)).unwrap());
    }

    #[test]
    fn importance_follows_mass() {
        let n = 4;
        let labels = LabelVector::new(vec![0, 1, 0, 1], 2).unwrap();
        let mut t = trace_from(&[&[0.5f32, 0.5][..]; 4], &[0, 1, 0, 1]);
        t.losses = ndarray::array![1.0, 1.0, 1.0, 7.0];
        let hits = (0..2000)
            .filter(|&s| importance_sample(&t, &labels, Selection::new(1, false, s)).unwrap().indices[0] == n - 1)
            .count();
        // Expected 0.7 of draws.
        assert!((1250..1550).contains(&hits), "{hits}");
    }

    fn random_softmax(n: usize, c: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
        proptest::collection::vec(proptest::collection::vec(0.0f32..1.0, c), n).prop_map(|rows| {
            rows.into_iter()
                .map(|r| {
                    let e: Vec<f32> = r.iter().map(|v| (3.0 * v).exp()).collect();
                    let s: f32 = e.iter().sum();
                    e.into_iter().map(|v| v / s).collect()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn uncertainty_bounds(rows in random_softmax(8, 4)) {
            let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
            let t = trace_from(&refs, &[0; 8]);
            let c = 4.0f64;
            for s in least_confidence(&t).unwrap().scores {
                prop_assert!((-1e-7..=1.0 - 1.0 / c + 1e-7).contains(&s));
            }
            for s in entropy_score(&t).unwrap().scores {
                prop_assert!((0.0..=c.ln() + 1e-6).contains(&s));
            }
            for s in margin_score(&t).unwrap().scores {
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }

        #[test]
        fn permutation_equivariance(rows in random_softmax(6, 3), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
            let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
            let labels: Vec<usize> = (0..6).map(|i| i % 3).collect();
            let t = trace_from(&refs, &labels);
            let permuted: Vec<&[f32]> = perm.iter().map(|&i| refs[i]).collect();
            let plabels: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
            let tp = trace_from(&permuted, &plabels);
            for f in [least_confidence, entropy_score, margin_score, el2n_score] {
                let a = f(&t).unwrap();
                let b = f(&tp).unwrap();
                for (pi, &src) in perm.iter().enumerate() {
                    prop_assert_eq!(b.scores[pi], a.scores[src]);
                }
            }
        }

        #[test]
        fn sensitivity_monotone(losses in proptest::collection::vec(0.01f64..5.0, 2..10), bump in 0.01f64..3.0, which in 0usize..10) {
            let which = which % losses.len();
            let p0 = sensitivity_probabilities(&losses).unwrap();
            prop_assert!((p0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let mut raised = losses.clone();
            raised[which] += bump;
            let p1 = sensitivity_probabilities(&raised).unwrap();
            prop_assert!(p1[which] > p0[which]);
            for j in (0..losses.len()).filter(|&j| j != which) {
                prop_assert!(p1[j] <= p0[j]);
            }
        }

        #[test]
        fn balanced_quota_exact(scores in proptest::collection::vec(-1.0f64..1.0, 30), k in 0usize..=15) {
            let labels = LabelVector::new((0..30).map(|i| i % 3).collect(), 3).unwrap();
            let s = ScoreVector::new("x", scores, true).unwrap();
            let r = select_by_score(&s, &labels, Selection::new(k, true, 0)).unwrap();
            let quotas = crate::selection::class_quotas(k, 3);
            for (c, q) in quotas.into_iter().enumerate() {
                prop_assert_eq!(r.indices.iter().filter(|&&i| labels.get(i) == c).count(), q);
            }
        }
    }
}
