//! Gradient matching: CRAIG, GradMatch (orthogonal matching pursuit) and
//! GLISTER's validation-likelihood greedy.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::artifact::{CoresetResult, DatasetArtifact, LabelVector, TrainingTrace};
use crate::error::{CoresetError, Result};
use crate::metrics::{euclidean, Similarity, DEFAULT_DENSE_CAP};
use crate::selection::{argmax_by, select_in_pools, Selection};
use crate::submodular::{greedy_maximize, Objective, ObjectiveKind};

pub const DEFAULT_OMP_LAMBDA: f64 = 1.0;
pub const DEFAULT_GLISTER_ETA: f64 = 0.1;
const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientSpace {
    /// `p - y`
    #[default]
    ErrorVector,
    /// `(p - y) ⊗ [f; 1]`, flattened row-major (C × (h + 1)).
    FullLastLayer,
}

impl GradientSpace {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ErrorVector => "error_vector",
            Self::FullLastLayer => "full_last_layer",
        }
    }
}

impl std::str::FromStr for GradientSpace {
    type Err = CoresetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error_vector" | "error-vector" => Ok(Self::ErrorVector),
            "full_last_layer" | "full-last-layer" => Ok(Self::FullLastLayer),
            _ => Err(CoresetError::arg(format!(
                "unknown gradient space `{s}` (expected error_vector or full_last_layer)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub grads: Array2<f64>,
    pub mean_grad: Array1<f64>,
    pub space: GradientSpace,
}

impl GradientSet {
    pub fn new(grads: Array2<f64>, space: GradientSpace) -> Result<Self> {
        if grads.nrows() == 0 {
            return Err(CoresetError::arg("empty gradient set"));
        }
        if grads.iter().any(|v| !v.is_finite()) {
            return Err(CoresetError::Numerical("non-finite gradient entry".into()));
        }
        let mean_grad = grads.mean_axis(Axis(0)).expect("nonempty");
        Ok(Self { grads, mean_grad, space })
    }

    pub fn n(&self) -> usize {
        self.grads.nrows()
    }
}

/// Row `i` of `(p - y) ⊗ [f; 1]` flattened row-major.
fn outer_with_bias(e: ArrayView1<'_, f64>, f: ArrayView1<'_, f64>) -> Array1<f64> {
    let h = f.len();
    let mut out = Array1::zeros(e.len() * (h + 1));
    for (c, &ec) in e.iter().enumerate() {
        let block = &mut out.as_slice_mut().expect("contiguous")[c * (h + 1)..(c + 1) * (h + 1)];
        for (slot, &fv) in block.iter_mut().zip(f.iter()) {
            *slot = ec * fv;
        }
        block[h] = ec;
    }
    out
}

fn last_layer_rows(errors: ArrayView2<'_, f64>, penultimate: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, c) = errors.dim();
    let width = c * (penultimate.ncols() + 1);
    let mut out = Array2::zeros((n, width));
    for (mut row, (e, f)) in out.outer_iter_mut().zip(errors.outer_iter().zip(penultimate.outer_iter())) {
        row.assign(&outer_with_bias(e, f));
    }
    out
}

pub fn build_gradient_set(trace: &TrainingTrace, space: GradientSpace) -> Result<GradientSet> {
    let errors = trace.error_vectors.mapv(f64::from);
    let grads = match space {
        GradientSpace::ErrorVector => errors,
        GradientSpace::FullLastLayer => last_layer_rows(errors.view(), trace.penultimate.mapv(f64::from).view()),
    };
    GradientSet::new(grads, space)
}

/// `K - ‖g_i - g_j‖` with `K` the largest pairwise distance.
struct ShiftedDistance {
    rows: Array2<f64>,
    shift: f64,
    dense: Option<Array2<f64>>,
}

impl ShiftedDistance {
    fn new(rows: Array2<f64>) -> Self {
        let n = rows.nrows();
        let dist = |i: usize, j: usize| euclidean(rows.row(i), rows.row(j));
        if n <= DEFAULT_DENSE_CAP {
            let mut d = Array2::zeros((n, n));
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = dist(i, j);
                    d[[i, j]] = v;
                    d[[j, i]] = v;
                }
            }
            let shift = d.iter().copied().fold(0.0, f64::max);
            Self {
                rows,
                shift,
                dense: Some(d),
            }
        } else {
            let mut shift = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    shift = shift.max(dist(i, j));
                }
            }
            Self { rows, shift, dense: None }
        }
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        match &self.dense {
            Some(d) => d[[i, j]],
            None if i == j => 0.0,
            None => euclidean(self.rows.row(i), self.rows.row(j)),
        }
    }
}

impl Similarity for ShiftedDistance {
    fn len(&self) -> usize {
        self.rows.nrows()
    }

    fn sim(&self, i: usize, j: usize) -> f64 {
        (self.shift - self.distance(i, j)).max(0.0)
    }
}

/// Facility-location medoids of the gradient rows and their cluster sizes.
/// Returns local `(index, weight)` pairs in pick order.
pub fn craig_medoids(grads: ArrayView2<'_, f64>, k: usize) -> Result<Vec<(usize, f32)>> {
    let kernel = ShiftedDistance::new(grads.to_owned());
    let order = greedy_maximize(Objective::new(ObjectiveKind::FacilityLocation, &kernel)?, k, true)?.order;
    let mut sizes = vec![0usize; order.len()];
    // (index, pick position), ascending by index for tie-breaks.
    let mut by_index: Vec<(usize, usize)> = order.iter().enumerate().map(|(p, &j)| (j, p)).collect();
    by_index.sort_unstable();
    for i in 0..grads.nrows() {
        let slot = match by_index.binary_search_by_key(&i, |&(j, _)| j) {
            Ok(at) => by_index[at].1,
            Err(_) => {
                // Nearest selected point, lowest index on ties.
                by_index
                    .iter()
                    .map(|&(j, p)| (p, kernel.distance(i, j)))
                    .fold(None, |best: Option<(usize, f64)>, (p, d)| match best {
                        Some((_, bd)) if d >= bd => best,
                        _ => Some((p, d)),
                    })
                    .expect("k >= 1")
                    .0
            }
        };
        sizes[slot] += 1;
    }
    Ok(order.into_iter().zip(sizes).map(|(j, s)| (j, s as f32)).collect())
}

/// CRAIG: per pool, facility location on `K - ‖g_i - g_j‖`; each medoid is
/// weighted by the number of pool members closest to it.
pub fn craig_select(gs: &GradientSet, labels: &LabelVector, sel: Selection) -> Result<CoresetResult> {
    check_rows(gs, labels)?;
    let mut result = select_in_pools("craig", labels, sel, |pool, _| {
        let rows = gs.grads.select(Axis(0), &pool.indices);
        Ok(craig_medoids(rows.view(), pool.quota)?
            .into_iter()
            .map(|(j, w)| (pool.indices[j], w))
            .collect())
    })?;
    result.metadata.insert("grad_space".into(), gs.space.name().into());
    Ok(result)
}

fn check_rows(gs: &GradientSet, labels: &LabelVector) -> Result<()> {
    if gs.n() != labels.len() {
        return Err(CoresetError::arg(format!(
            "{} gradient rows for {} labels",
            gs.n(),
            labels.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpOutcome {
    /// Picked rows in order, padding included.
    pub order: Vec<usize>,
    /// Weight of each entry of `order`; padding rows get 0.
    pub weights: Vec<f64>,
    /// Residual norm after each solve.
    pub residual_norms: Vec<f64>,
}

fn ridge_solve(columns: &DMatrix<f64>, target: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let s = columns.ncols();
    let gram = columns.transpose() * columns + DMatrix::identity(s, s) * lambda;
    let rhs = columns.transpose() * target;
    if let Some(chol) = gram.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    gram.lu()
        .solve(&rhs)
        .filter(|w| w.iter().all(|v| v.is_finite()))
        .ok_or_else(|| CoresetError::Numerical("singular ridge system; use lambda > 0".into()))
}

/// Orthogonal matching pursuit of `target` by the rows of `grads`.
///
/// Each step adds the row most correlated (in absolute value) with the
/// residual, then refits `min_w ‖G_Sᵀ w − b‖² + λ‖w‖²` over the chosen rows,
/// clamping negative weights to zero when `nonneg`. Once the residual
/// vanishes the remaining slots are filled by residual correlation with
/// weight 0.
pub fn omp(
    grads: ArrayView2<'_, f64>,
    target: ArrayView1<'_, f64>,
    k: usize,
    lambda: f64,
    nonneg: bool,
) -> Result<OmpOutcome> {
    let (m, g) = grads.dim();
    if k > m {
        return Err(CoresetError::Budget {
            k,
            available: m,
            context: Some("omp".into()),
        });
    }
    if target.len() != g {
        return Err(CoresetError::arg("target width does not match the gradients"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(CoresetError::arg(format!("lambda must be >= 0, got {lambda}")));
    }
    let b = DVector::from_iterator(g, target.iter().copied());
    let mut residual = target.to_owned();
    let mut taken = vec![false; m];
    let mut order = Vec::with_capacity(k);
    let mut weights = Vec::new();
    let mut residual_norms = Vec::new();
    let correlation = |r: &Array1<f64>, taken: &[bool]| {
        argmax_by((0..m).filter(|&j| !taken[j]).map(|j| (j, grads.row(j).dot(r).abs())))
    };
    while order.len() < k {
        if residual.dot(&residual).sqrt() < RESIDUAL_TOL {
            break;
        }
        let j = correlation(&residual, &taken).expect("k <= m");
        taken[j] = true;
        order.push(j);
        let columns = DMatrix::from_fn(g, order.len(), |r, c| grads[[order[c], r]]);
        let mut w = ridge_solve(&columns, &b, lambda)?;
        if nonneg {
            w.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let fitted = &columns * &w;
        residual = Array1::from_iter((0..g).map(|r| b[r] - fitted[r]));
        residual_norms.push(residual.dot(&residual).sqrt());
        weights = w.iter().copied().collect();
    }
    while order.len() < k {
        let j = correlation(&residual, &taken).expect("k <= m");
        taken[j] = true;
        order.push(j);
        weights.push(0.0);
    }
    Ok(OmpOutcome {
        order,
        weights,
        residual_norms,
    })
}

/// GradMatch: per pool, OMP towards the pool's mean gradient. Weights are
/// rescaled to sum to the pool size (uniform if every weight is zero).
pub fn omp_gradmatch(
    gs: &GradientSet,
    labels: &LabelVector,
    sel: Selection,
    lambda: f64,
    nonneg: bool,
) -> Result<CoresetResult> {
    check_rows(gs, labels)?;
    let mut degenerate = 0usize;
    let mut result = select_in_pools("gradmatch", labels, sel, |pool, _| {
        let rows = gs.grads.select(Axis(0), &pool.indices);
        let target = rows.mean_axis(Axis(0)).expect("nonempty pool");
        let out = omp(rows.view(), target.view(), pool.quota, lambda, nonneg)?;
        let total: f64 = out.weights.iter().sum();
        let scale = pool.indices.len() as f64 / total;
        let weights: Vec<f32> = if total > 0.0 && scale.is_finite() {
            out.weights.iter().map(|&w| (w * scale) as f32).collect()
        } else {
            degenerate += 1;
            vec![1.0; out.order.len()]
        };
        Ok(out.order.iter().zip(weights).map(|(&j, w)| (pool.indices[j], w)).collect())
    })?;
    result.metadata.insert("grad_space".into(), gs.space.name().into());
    result.metadata.insert("lambda".into(), serde_json::json!(lambda));
    result.metadata.insert("nonneg".into(), nonneg.into());
    if degenerate > 0 {
        result.metadata.insert("uniform_weight_pools".into(), degenerate.into());
    }
    Ok(result)
}

/// Positions of the `count` largest `η⟨g_j, v⟩` among `candidates`, ties to
/// the lower position.
pub fn glister_block(grads: ArrayView2<'_, f64>, v: ArrayView1<'_, f64>, eta: f64, candidates: &[usize], count: usize) -> Vec<usize> {
    let mut gains: Vec<(usize, f64)> = candidates.iter().map(|&j| (j, eta * grads.row(j).dot(&v))).collect();
    gains.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    gains.into_iter().take(count).map(|(j, _)| j).collect()
}

/// Last-layer state for re-linearization: `ln p`, one-hot labels and the
/// bias-augmented penultimate features.
struct LinearizedHead {
    log_p: Array2<f64>,
    onehot: Array2<f64>,
    features: Array2<f64>,
}

impl LinearizedHead {
    fn new(trace: &TrainingTrace, labels: &LabelVector) -> Self {
        let (n, c) = trace.softmax.dim();
        let log_p = trace.softmax.mapv(|p| f64::from(p).max(crate::metrics::PROB_FLOOR).ln());
        let mut onehot = Array2::zeros((n, c));
        for (i, &y) in labels.as_slice().iter().enumerate() {
            onehot[[i, y]] = 1.0;
        }
        Self {
            log_p,
            onehot,
            features: trace.penultimate.mapv(f64::from),
        }
    }

    /// Per-sample log-likelihood gradients `(y - p') ⊗ [f; 1]` under the
    /// last-layer shift `delta` (C × (h + 1)).
    fn ll_grads(&self, delta: &Array2<f64>) -> Array2<f64> {
        let h = self.features.ncols();
        let mut logits = self.log_p.clone();
        logits += &self.features.dot(&delta.slice(ndarray::s![.., ..h]).t());
        logits += &delta.column(h);
        for mut row in logits.outer_iter_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        let residual = &self.onehot - &logits;
        last_layer_rows(residual.view(), self.features.view())
    }
}

/// GLISTER: greedy maximization of the validation log-likelihood after a
/// one-step update on the chosen subset, linearized in the last layer.
/// Blocks of `block` picks (default `max(1, quota / 10)`) share one
/// linearization; after each block the last layer takes an `eta` ascent
/// step on the block's mean log-likelihood gradient.
pub fn glister_select(
    artifact: &DatasetArtifact,
    sel: Selection,
    eta: f64,
    block: Option<usize>,
) -> Result<CoresetResult> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(CoresetError::arg(format!("eta must be > 0, got {eta}")));
    }
    if block == Some(0) {
        return Err(CoresetError::arg("glister block size must be at least 1"));
    }
    let trace = artifact.require_trace()?;
    let val = artifact.require_validation()?;
    let train_head = LinearizedHead::new(trace, &artifact.labels);
    let val_head = LinearizedHead::new(&val.trace, &val.labels);
    let (c, h) = (artifact.num_classes(), trace.hidden_dim());

    let mut result = select_in_pools("glister", &artifact.labels, sel, |pool, _| {
        let r = block.unwrap_or((pool.quota / 10).max(1));
        let mut delta = Array2::<f64>::zeros((c, h + 1));
        let mut remaining = pool.indices.clone();
        let mut picked = Vec::with_capacity(pool.quota);
        while picked.len() < pool.quota {
            let grads = train_head.ll_grads(&delta);
            let v = val_head.ll_grads(&delta).sum_axis(Axis(0));
            let chosen = glister_block(grads.view(), v.view(), eta, &remaining, r.min(pool.quota - picked.len()));
            let step = chosen
                .iter()
                .fold(Array1::<f64>::zeros(v.len()), |acc, &j| acc + grads.row(j))
                / chosen.len() as f64;
            delta += &(step * eta).into_shape_with_order((c, h + 1)).expect("gradient layout");
            remaining.retain(|j| !chosen.contains(j));
            picked.extend(chosen);
        }
        Ok(picked.into_iter().map(|j| (j, 1.0)).collect())
    })?;
    result.metadata.insert("eta".into(), serde_json::json!(eta));
    Ok(result)
}
