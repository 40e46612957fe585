//! Distance and similarity kernels.
//!
//! Inputs are stored as `f32`; every kernel accumulates in `f64` with a
//! fixed per-row summation order so results do not depend on scheduling.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::artifact::FeatureMatrix;
use crate::error::{CoresetError, Result};

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;
/// Probability rows must sum to one within this tolerance.
const PROB_SUM_TOL: f64 = 1e-4;
/// Largest ground set for which a dense n×n similarity matrix is built.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMetric {
    Euclidean,
    Cosine,
    SymKl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    CosineShifted,
    Rbf,
    NegEuclideanShifted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub values: Array2<f64>,
    pub metric: DistanceMetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Array2<f64>,
    pub kind: SimilarityKind,
}

/// Symmetric nonnegative similarities, possibly computed on demand.
pub trait Similarity {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn sim(&self, i: usize, j: usize) -> f64;
}

impl Similarity for SimilarityMatrix {
    fn len(&self) -> usize {
        self.values.nrows()
    }

    fn sim(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }
}

impl SimilarityMatrix {
    /// Wraps a precomputed matrix, checking symmetry and nonnegativity.
    pub fn from_values(values: Array2<f64>, kind: SimilarityKind) -> Result<Self> {
        let (n, m) = values.dim();
        if n != m {
            return Err(CoresetError::arg(format!("similarity matrix is {n}x{m}")));
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[[i, j]];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(CoresetError::arg(format!("similarity ({i}, {j}) = {v}")));
                }
                if (v - values[[j, i]]).abs() > 1e-9 {
                    return Err(CoresetError::arg(format!("similarity not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { values, kind })
    }
}

pub fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn norm(a: ArrayView1<'_, f64>) -> f64 {
    a.dot(&a).sqrt()
}

pub fn cosine_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    (1.0 - a.dot(&b) / (norm(a) * norm(b))).max(0.0)
}

/// KL(p ‖ q) with both distributions floored at [`PROB_FLOOR`].
pub fn kl_divergence(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>) -> f64 {
    p.iter()
        .zip(q.iter())
        .map(|(&pi, &qi)| {
            if pi <= 0.0 {
                0.0
            } else {
                pi * (pi.max(PROB_FLOOR).ln() - qi.max(PROB_FLOOR).ln())
            }
        })
        .sum()
}

pub fn sym_kl(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>) -> f64 {
    (kl_divergence(p, q) + kl_divergence(q, p)).max(0.0)
}

fn check_probability_rows(rows: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    for (i, row) in rows.outer_iter().enumerate() {
        let sum: f64 = row.sum();
        if row.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(CoresetError::arg(format!(
                "{what} row {i} is not a probability vector (sum {sum})"
            )));
        }
    }
    Ok(())
}

fn check_nonzero_rows(rows: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    match rows.outer_iter().position(|r| norm(r) == 0.0) {
        Some(i) => Err(CoresetError::arg(format!(
            "{what} row {i} has zero norm; cosine is undefined"
        ))),
        None => Ok(()),
    }
}

/// Distances between every row of `a` and every row of `b`, in `f64`.
pub fn pairwise_distance_f64(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    metric: DistanceMetric,
) -> Result<DistanceMatrix> {
    if a.ncols() != b.ncols() {
        return Err(CoresetError::arg(format!(
            "dimension mismatch: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    match metric {
        DistanceMetric::SymKl => {
            check_probability_rows(a, "left")?;
            check_probability_rows(b, "right")?;
        }
        DistanceMetric::Cosine => {
            check_nonzero_rows(a, "left")?;
            check_nonzero_rows(b, "right")?;
        }
        DistanceMetric::Euclidean => {}
    }
    let f = match metric {
        DistanceMetric::Euclidean => euclidean,
        DistanceMetric::Cosine => cosine_distance,
        DistanceMetric::SymKl => sym_kl,
    };
    let values = Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| f(a.row(i), b.row(j)));
    Ok(DistanceMatrix { values, metric })
}

pub fn pairwise_distance(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    metric: DistanceMetric,
) -> Result<DistanceMatrix> {
    pairwise_distance_f64(a.to_f64().view(), b.to_f64().view(), metric)
}

/// Cosine-shifted similarity `(1 + cos) / 2` computed on demand from
/// L2-normalized rows.
#[derive(Debug, Clone)]
pub struct CosineKernel {
    unit_rows: Array2<f64>,
}

impl CosineKernel {
    pub fn new(rows: ArrayView2<'_, f64>) -> Result<Self> {
        check_nonzero_rows(rows, "feature")?;
        let mut unit_rows = rows.to_owned();
        for mut row in unit_rows.outer_iter_mut() {
            let n = norm(row.view());
            row.mapv_inplace(|v| v / n);
        }
        Ok(Self { unit_rows })
    }
}

impl Similarity for CosineKernel {
    fn len(&self) -> usize {
        self.unit_rows.nrows()
    }

    fn sim(&self, i: usize, j: usize) -> f64 {
        let c = self.unit_rows.row(i).dot(&self.unit_rows.row(j));
        ((1.0 + c) / 2.0).clamp(0.0, 1.0)
    }
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

/// Dense similarity matrix over `rows`.
///
/// * `CosineShifted`: `(1 + cos(a, b)) / 2`.
/// * `Rbf`: `exp(-‖a - b‖² / (2σ²))`, σ the median strict-upper-triangle
///   distance (falls back to the largest distance when the median is zero;
///   all ones when every row coincides).
/// * `NegEuclideanShifted`: `max_dist - dist`.
pub fn similarity_matrix(rows: ArrayView2<'_, f64>, kind: SimilarityKind) -> Result<SimilarityMatrix> {
    let n = rows.nrows();
    if n == 0 {
        return Err(CoresetError::arg("similarity of an empty set"));
    }
    let values = match kind {
        SimilarityKind::CosineShifted => {
            let kernel = CosineKernel::new(rows)?;
            let mut values = Array2::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let s = kernel.sim(i, j);
                    values[[i, j]] = s;
                    values[[j, i]] = s;
                }
            }
            // Keep the diagonal maximal despite rounding in the dot product.
            for i in 0..n {
                let row_max = values.row(i).fold(0.0f64, |m, &v| m.max(v));
                values[[i, i]] = row_max;
            }
            values
        }
        SimilarityKind::Rbf | SimilarityKind::NegEuclideanShifted => {
            let dist = pairwise_distance_f64(rows, rows, DistanceMetric::Euclidean)?.values;
            // Force exact symmetry.
            let dist = Array2::from_shape_fn((n, n), |(i, j)| {
                if i <= j {
                    dist[[i, j]]
                } else {
                    dist[[j, i]]
                }
            });
            let upper: Vec<f64> = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .map(|(i, j)| dist[[i, j]])
                .collect();
            let max_dist = upper.iter().copied().fold(0.0f64, f64::max);
            match kind {
                SimilarityKind::Rbf => {
                    let sigma = match median(upper) {
                        Some(m) if m > 0.0 => m,
                        _ => max_dist,
                    };
                    if sigma == 0.0 {
                        Array2::ones((n, n))
                    } else {
                        dist.mapv(|d| (-d * d / (2.0 * sigma * sigma)).exp())
                    }
                }
                _ => {
                    let mut s = dist.mapv(|d| max_dist - d);
                    s.diag_mut().fill(max_dist);
                    s
                }
            }
        }
    };
    Ok(SimilarityMatrix { values, kind })
}

pub fn similarity_from_features(a: &FeatureMatrix, kind: SimilarityKind) -> Result<SimilarityMatrix> {
    similarity_matrix(a.to_f64().view(), kind)
}
