//! Geometry-based selection: herding, k-center greedy and contextual
//! diversity (k-center greedy in symmetric-KL prediction space).

use ndarray::{Array1, ArrayView2};
use rand::Rng;

use crate::artifact::{CoresetResult, FeatureMatrix, LabelVector, TrainingTrace};
use crate::error::{CoresetError, Result};
use crate::metrics::{euclidean, pairwise_distance_f64, sym_kl, DistanceMetric};
use crate::selection::{argmax_by, argmin_by, select_in_pools, Selection};

/// Greedy mean matching on the rows of `points`. Returns row indices in
/// pick order.
///
/// With σ the running sum of the `m` rows chosen so far and μ the mean of
/// all rows, step `m + 1` picks the unselected row `x` minimizing
/// `‖(m + 1)μ − σ − x‖₂`, i.e. the row that brings the coreset mean closest
/// to μ.
pub fn herding_order(points: ArrayView2<'_, f64>, k: usize) -> Vec<usize> {
    let (n, d) = points.dim();
    let mean = points.mean_axis(ndarray::Axis(0)).unwrap_or_else(|| Array1::zeros(d));
    let mut running = Array1::<f64>::zeros(d);
    let mut taken = vec![false; n];
    let mut order = Vec::with_capacity(k);
    for m in 0..k.min(n) {
        let target = &mean * (m as f64 + 1.0) - &running;
        let best = argmin_by(
            (0..n)
                .filter(|&j| !taken[j])
                .map(|j| (j, euclidean(target.view(), points.row(j)))),
        )
        .expect("k <= n");
        taken[best] = true;
        running += &points.row(best);
        order.push(best);
    }
    order
}

pub fn herding(features: &FeatureMatrix, labels: &LabelVector, sel: Selection) -> Result<CoresetResult> {
    let all = features.to_f64();
    select_in_pools("herding", labels, sel, |pool, _| {
        let points = all.select(ndarray::Axis(0), &pool.indices);
        Ok(herding_order(points.view(), pool.quota)
            .into_iter()
            .map(|j| (pool.indices[j], 1.0))
            .collect())
    })
}

/// Farthest-first traversal over `m` points from `initial`. Keeps each
/// point's distance to its nearest selected center, so each step costs
/// `m` distance evaluations. Returns local indices in pick order.
pub fn farthest_first<D>(m: usize, k: usize, initial: usize, dist: D) -> Vec<usize>
where
    D: Fn(usize, usize) -> f64,
{
    if k == 0 {
        return Vec::new();
    }
    let mut nearest: Vec<f64> = (0..m).map(|j| dist(initial, j)).collect();
    let mut taken = vec![false; m];
    taken[initial] = true;
    let mut order = vec![initial];
    while order.len() < k.min(m) {
        let next = argmax_by((0..m).filter(|&j| !taken[j]).map(|j| (j, nearest[j])))
            .expect("unselected point remains");
        taken[next] = true;
        order.push(next);
        for (j, slot) in nearest.iter_mut().enumerate() {
            if !taken[j] {
                let d = dist(next, j);
                if d < *slot {
                    *slot = d;
                }
            }
        }
    }
    order
}

/// Largest distance from any of the `m` points to its nearest center.
pub fn covering_radius<D>(m: usize, centers: &[usize], dist: D) -> f64
where
    D: Fn(usize, usize) -> f64,
{
    (0..m)
        .map(|j| centers.iter().map(|&c| dist(c, j)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// k-center greedy on `points` from a forced first center.
pub fn k_center_from(
    points: ArrayView2<'_, f64>,
    k: usize,
    initial: usize,
    metric: DistanceMetric,
) -> Result<Vec<usize>> {
    let m = points.nrows();
    if k > m {
        return Err(CoresetError::Budget {
            k,
            available: m,
            context: None,
        });
    }
    if initial >= m {
        return Err(CoresetError::arg(format!("initial index {initial} out of range")));
    }
    // Validates rows for the chosen metric.
    pairwise_distance_f64(points.slice(ndarray::s![0..1, ..]), points, metric)?;
    let f = match metric {
        DistanceMetric::Euclidean => euclidean,
        DistanceMetric::Cosine => crate::metrics::cosine_distance,
        DistanceMetric::SymKl => sym_kl,
    };
    Ok(farthest_first(m, k, initial, |a, b| f(points.row(a), points.row(b))))
}

fn k_center_pools(
    method: &str,
    points: ndarray::Array2<f64>,
    labels: &LabelVector,
    sel: Selection,
    metric: DistanceMetric,
) -> Result<CoresetResult> {
    select_in_pools(method, labels, sel, |pool, rng| {
        let local = points.select(ndarray::Axis(0), &pool.indices);
        let initial = rng.random_range(0..pool.indices.len());
        Ok(k_center_from(local.view(), pool.quota, initial, metric)?
            .into_iter()
            .map(|j| (pool.indices[j], 1.0))
            .collect())
    })
}

/// k-center greedy in feature space under `metric` (euclidean by default);
/// the first center of each pool is drawn uniformly from the seeded
/// selection stream.
pub fn k_center_greedy(
    features: &FeatureMatrix,
    labels: &LabelVector,
    sel: Selection,
    metric: DistanceMetric,
) -> Result<CoresetResult> {
    k_center_pools("kcenter", features.to_f64(), labels, sel, metric)
}

/// k-center greedy over softmax outputs with symmetric KL distance.
pub fn contextual_diversity(
    trace: &TrainingTrace,
    labels: &LabelVector,
    sel: Selection,
) -> Result<CoresetResult> {
    k_center_pools("cd", trace.softmax.mapv(f64::from), labels, sel, DistanceMetric::SymKl)
}

#[cfg(test)]
mod tests {
    use itertools::Itertools;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    use super::*;

    fn col(v: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
    }

    #[test]
    fn herding_examples() {
        assert_eq!(herding_order(col(&[0.0, 2.0]).view(), 1), vec![0]);
        assert_eq!(herding_order(col(&[0.0, 1.0, 5.0]).view(), 1), vec![1]);
        assert_eq!(herding_order(col(&[3.0; 5]).view(), 3), vec![0, 1, 2]);
    }

    #[test]
    fn k_center_examples() {
        let pts = col(&[0.0, 1.0, 2.0, 10.0]);
        let mut two = k_center_from(pts.view(), 2, 0, DistanceMetric::Euclidean).unwrap();
        two.sort();
        assert_eq!(two, vec![0, 3]);
        let mut three = k_center_from(pts.view(), 3, 0, DistanceMetric::Euclidean).unwrap();
        three.sort();
        assert_eq!(three, vec![0, 2, 3]);
        assert!(k_center_from(pts.view(), 5, 0, DistanceMetric::Euclidean).is_err());
    }

    #[test]
    fn k_center_full_budget_any_seed() {
        let features = FeatureMatrix::new(array![[0.0f32], [1.0], [2.0], [10.0]]).unwrap();
        let labels = LabelVector::new(vec![0, 1, 0, 1], 2).unwrap();
        for seed in 0..5 {
            let r = k_center_greedy(&features, &labels, Selection::new(4, false, seed), DistanceMetric::Euclidean)
                .unwrap();
            assert_eq!(r.indices, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn contextual_diversity_examples() {
        // Identical predictions: initial point, then lowest indices.
        let p = Array2::from_elem((5, 2), 0.5);
        let order = k_center_from(p.view(), 3, 2, DistanceMetric::SymKl).unwrap();
        assert_eq!(order, vec![2, 0, 1]);

        // Two prediction clusters.
        let p = array![[0.9, 0.1], [0.85, 0.15], [0.88, 0.12], [0.1, 0.9], [0.15, 0.85]];
        let order = k_center_from(p.view(), 2, 1, DistanceMetric::SymKl).unwrap();
        assert!(order[1] >= 3, "{order:?}");
        // Brute force: the second pick maximizes min distance to the first.
        let d = |a: usize, b: usize| sym_kl(p.row(a), p.row(b));
        let best = (0..5).filter(|&j| j != 1).max_by(|&a, &b| d(1, a).total_cmp(&d(1, b))).unwrap();
        assert_eq!(order[1], best);
    }

    #[test]
    fn balanced_kcenter_quota() {
        let features = FeatureMatrix::new(Array2::from_shape_fn((12, 2), |(i, j)| (i * 3 + j) as f32 % 7.0)).unwrap();
        let labels = LabelVector::new((0..12).map(|i| i % 3).collect(), 3).unwrap();
        let r = k_center_greedy(&features, &labels, Selection::new(7, true, 1), DistanceMetric::Euclidean).unwrap();
        let counts = r.indices.iter().fold(vec![0; 3], |mut acc, &i| {
            acc[labels.get(i)] += 1;
            acc
        });
        assert_eq!(counts, vec![3, 2, 2]);
        let h = herding(&features, &labels, Selection::new(7, true, 1)).unwrap();
        assert_eq!(h.len(), 7);
    }

    fn points() -> impl Strategy<Value = Array2<f64>> {
        (2usize..=10, 1usize..=3).prop_flat_map(|(n, d)| {
            proptest::collection::vec(-10.0f64..10.0, n * d)
                .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn radius_nonincreasing_and_two_approx(pts in points(), k in 1usize..=3) {
            let n = pts.nrows();
            let k = k.min(n);
            let d = |a: usize, b: usize| euclidean(pts.row(a), pts.row(b));
            let optimum = (0..n)
                .combinations(k)
                .map(|c| covering_radius(n, &c, d))
                .fold(f64::INFINITY, f64::min);
            for initial in 0..n {
                let order = farthest_first(n, k, initial, d);
                let mut prev = f64::INFINITY;
                for m in 1..=order.len() {
                    let r = covering_radius(n, &order[..m], d);
                    prop_assert!(r <= prev);
                    prev = r;
                }
                prop_assert!(prev <= 2.0 * optimum + 1e-12);
            }
        }

        // Integer coordinates, integer shifts and power-of-two sizes keep
        // every intermediate exact, so ties resolve identically.
        #[test]
        fn translation_invariant(
            (pts, shift) in (0u32..4, 1usize..=3).prop_flat_map(|(p, d)| {
                let n = 1usize << p;
                (
                    proptest::collection::vec(-10i32..10, n * d)
                        .prop_map(move |v| Array2::from_shape_vec((n, d), v.into_iter().map(f64::from).collect()).unwrap()),
                    -50i32..50,
                )
            }),
            k in 1usize..=4,
        ) {
            let k = k.min(pts.nrows());
            let moved = pts.mapv(|v| v + f64::from(shift));
            prop_assert_eq!(herding_order(pts.view(), k), herding_order(moved.view(), k));
            prop_assert_eq!(
                k_center_from(pts.view(), k, 0, DistanceMetric::Euclidean).unwrap(),
                k_center_from(moved.view(), k, 0, DistanceMetric::Euclidean).unwrap()
            );
        }

        #[test]
        fn herding_first_pick_closest_to_mean(pts in points()) {
            let mean = pts.mean_axis(ndarray::Axis(0)).unwrap();
            let first = herding_order(pts.view(), 1)[0];
            let best = (0..pts.nrows()).map(|j| euclidean(mean.view(), pts.row(j))).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(euclidean(mean.view(), pts.row(first)), best);
        }
    }
}
