//! Dataset artifact: features, labels, an optional training trace and an
//! optional validation split, stored as a directory of DCTF tensors plus a
//! JSON manifest.

pub mod dctf;
mod io;

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{CoresetError, Result};

pub use io::{load_artifact, save_artifact, Manifest, TensorEntry};

/// Softmax rows must sum to one within this tolerance.
pub const SOFTMAX_SUM_TOL: f64 = 1e-4;
/// Allowed deviation between stored error vectors and softmax minus one-hot.
pub const ERROR_VECTOR_TOL: f64 = 1e-6;

/// n×d row-major embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f32>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f32>) -> Result<Self> {
        Self::checked(data, "features.dctf")
    }

    pub(crate) fn checked(data: Array2<f32>, file: &str) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 {
            return Err(CoresetError::invalid(file, "n", "sample count must be at least 1"));
        }
        if d == 0 {
            return Err(CoresetError::invalid(file, "d", "feature dimension must be at least 1"));
        }
        if let Some((idx, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(CoresetError::invalid(
                file,
                "data",
                format!("row {} column {} is not finite ({v})", idx / d, idx % d),
            ));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(CoresetError::arg("ragged feature rows"));
        }
        let flat: Vec<f32> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| CoresetError::arg(e.to_string()))?;
        Self::new(data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f32> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.data.row(i)
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    /// Rows `indices` as a new matrix.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            data: self.data.select(ndarray::Axis(0), indices),
        }
    }

    pub fn into_inner(self) -> Array2<f32> {
        self.data
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::checked(labels, num_classes, "labels.dctf")
    }

    pub(crate) fn checked(labels: Vec<usize>, num_classes: usize, file: &str) -> Result<Self> {
        if num_classes < 2 {
            return Err(CoresetError::invalid(
                file,
                "C",
                format!("need at least 2 classes, got {num_classes}"),
            ));
        }
        if labels.is_empty() {
            return Err(CoresetError::invalid(file, "n", "sample count must be at least 1"));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(CoresetError::invalid(
                file,
                "labels",
                format!("label {y} at index {i} outside [0, {num_classes})"),
            ));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Sample indices grouped by class, each group in ascending order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut pools = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            pools[y].push(i);
        }
        pools
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Per-sample outputs of a (proxy) model. Correctness covers every epoch;
/// the remaining fields are snapshots at `reference_epoch` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    /// E×n, 1 = correctly classified after that epoch.
    pub correctness: Array2<u8>,
    /// n×C
    pub softmax: Array2<f32>,
    pub losses: Array1<f32>,
    /// n×C, softmax minus one-hot label.
    pub error_vectors: Array2<f32>,
    /// n×h, input of the final fully-connected layer.
    pub penultimate: Array2<f32>,
    pub reference_epoch: usize,
}

impl TrainingTrace {
    pub fn num_epochs(&self) -> usize {
        self.correctness.nrows()
    }

    pub fn n(&self) -> usize {
        self.softmax.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.penultimate.ncols()
    }

    /// Checks every trace invariant against `labels`. `prefix` is "" for
    /// the training split and "val_" for the validation split.
    pub fn validate(&self, labels: &LabelVector, prefix: &str) -> Result<()> {
        let n = labels.len();
        let c = labels.num_classes();
        let file = |name: &str| format!("{prefix}{name}.dctf");

        let shape_err = |name: &str, got: &[usize], want: String| {
            CoresetError::invalid(file(name), "shape", format!("got {got:?}, expected {want}"))
        };
        if self.correctness.ncols() != n || self.correctness.nrows() == 0 {
            return Err(shape_err(
                "correctness",
                self.correctness.shape(),
                format!("[E >= 1, {n}]"),
            ));
        }
        if self.softmax.dim() != (n, c) {
            return Err(shape_err("softmax", self.softmax.shape(), format!("[{n}, {c}]")));
        }
        if self.losses.len() != n {
            return Err(shape_err("losses", self.losses.shape(), format!("[{n}]")));
        }
        if self.error_vectors.dim() != (n, c) {
            return Err(shape_err(
                "error_vectors",
                self.error_vectors.shape(),
                format!("[{n}, {c}]"),
            ));
        }
        if self.penultimate.nrows() != n || self.penultimate.ncols() == 0 {
            return Err(shape_err(
                "penultimate",
                self.penultimate.shape(),
                format!("[{n}, h >= 1]"),
            ));
        }
        let epochs = self.num_epochs();
        if self.reference_epoch == 0 || self.reference_epoch > epochs {
            return Err(CoresetError::invalid(
                "manifest.json",
                "reference_epoch",
                format!("{} outside [1, {epochs}]", self.reference_epoch),
            ));
        }
        if let Some(((t, i), v)) = self.correctness.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(CoresetError::invalid(
                file("correctness"),
                "correctness",
                format!("entry ({t}, {i}) is {v}, expected 0 or 1"),
            ));
        }
        for (i, row) in self.softmax.outer_iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(CoresetError::invalid(
                    file("softmax"),
                    "softmax",
                    format!("row {i} has invalid probability {v}"),
                ));
            }
            let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
            if (sum - 1.0).abs() > SOFTMAX_SUM_TOL {
                return Err(CoresetError::invalid(
                    file("softmax"),
                    "softmax",
                    format!("softmax row {i} sums to {}", (sum * 1e6).round() / 1e6),
                ));
            }
        }
        if let Some((i, v)) = self
            .losses
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(CoresetError::invalid(
                file("losses"),
                "losses",
                format!("loss {i} is {v}, expected finite and >= 0"),
            ));
        }
        for (i, (err_row, p_row)) in self
            .error_vectors
            .outer_iter()
            .zip(self.softmax.outer_iter())
            .enumerate()
        {
            let y = labels.get(i);
            for (j, (&e, &p)) in err_row.iter().zip(p_row.iter()).enumerate() {
                let expected = f64::from(p) - if j == y { 1.0 } else { 0.0 };
                let diff = (f64::from(e) - expected).abs();
                if !(diff <= ERROR_VECTOR_TOL) {
                    return Err(CoresetError::invalid(
                        file("error_vectors"),
                        "error_vectors",
                        format!(
                            "error_vectors row {i} deviates from softmax - one-hot by {diff:.3e} at class {j}"
                        ),
                    ));
                }
            }
        }
        if let Some(((i, j), v)) = self.penultimate.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(CoresetError::invalid(
                file("penultimate"),
                "penultimate",
                format!("entry ({i}, {j}) is not finite ({v})"),
            ));
        }
        Ok(())
    }
}

/// Held-out split used by bilevel methods.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSplit {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub trace: TrainingTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetArtifact {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub trace: Option<TrainingTrace>,
    pub validation: Option<ValidationSplit>,
}

impl DatasetArtifact {
    pub fn new(
        features: FeatureMatrix,
        labels: LabelVector,
        trace: Option<TrainingTrace>,
        validation: Option<ValidationSplit>,
    ) -> Result<Self> {
        let artifact = Self {
            features,
            labels,
            trace,
            validation,
        };
        artifact.validate()?;
        Ok(artifact)
    }

    pub fn validate(&self) -> Result<()> {
        // Re-run the constructors' checks: fields are public.
        FeatureMatrix::checked(self.features.data.clone(), "features.dctf")?;
        LabelVector::checked(self.labels.labels.clone(), self.labels.num_classes, "labels.dctf")?;
        if self.labels.len() != self.features.n() {
            return Err(CoresetError::invalid(
                "labels.dctf",
                "n",
                format!(
                    "{} labels for {} feature rows",
                    self.labels.len(),
                    self.features.n()
                ),
            ));
        }
        if let Some(trace) = &self.trace {
            trace.validate(&self.labels, "")?;
        }
        if let Some(val) = &self.validation {
            FeatureMatrix::checked(val.features.data.clone(), "val_features.dctf")?;
            if val.labels.len() != val.features.n() {
                return Err(CoresetError::invalid(
                    "val_labels.dctf",
                    "n",
                    format!(
                        "{} labels for {} feature rows",
                        val.labels.len(),
                        val.features.n()
                    ),
                ));
            }
            if val.labels.num_classes() != self.labels.num_classes() {
                return Err(CoresetError::invalid(
                    "val_labels.dctf",
                    "C",
                    "validation class count differs from training",
                ));
            }
            if val.features.d() != self.features.d() {
                return Err(CoresetError::invalid(
                    "val_features.dctf",
                    "d",
                    "validation feature dimension differs from training",
                ));
            }
            val.trace.validate(&val.labels, "val_")?;
            if let Some(trace) = &self.trace {
                if trace.hidden_dim() != val.trace.hidden_dim() {
                    return Err(CoresetError::invalid(
                        "val_penultimate.dctf",
                        "h",
                        "validation penultimate width differs from training",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.features.n()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    pub fn require_trace(&self) -> Result<&TrainingTrace> {
        self.trace.as_ref().ok_or_else(|| {
            CoresetError::Missing(
                "training trace (correctness/softmax/losses/error_vectors/penultimate)".into(),
            )
        })
    }

    pub fn require_validation(&self) -> Result<&ValidationSplit> {
        self.validation
            .as_ref()
            .ok_or_else(|| CoresetError::Missing("validation split (val_* tensors)".into()))
    }
}

/// Selected indices with per-sample weights; the output of every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetResult {
    pub method: String,
    pub fraction: f64,
    pub seed: u64,
    /// Sorted, unique.
    pub indices: Vec<usize>,
    pub weights: Vec<f32>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl CoresetResult {
    /// Builds a result from `(index, weight)` pairs in any order. `n` is the
    /// ground-set size, used for range checks and the stored fraction.
    pub fn from_pairs(
        method: &str,
        n: usize,
        seed: u64,
        mut pairs: Vec<(usize, f32)>,
    ) -> Result<Self> {
        pairs.sort_by_key(|&(i, _)| i);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(CoresetError::Numerical(format!(
                "{method}: index {} selected twice",
                w[0].0
            )));
        }
        if let Some(&(i, _)) = pairs.iter().find(|(i, _)| *i >= n) {
            return Err(CoresetError::Numerical(format!(
                "{method}: index {i} out of range for n = {n}"
            )));
        }
        if let Some(&(i, w)) = pairs.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(CoresetError::Numerical(format!(
                "{method}: weight {w} for index {i} is not finite and nonnegative"
            )));
        }
        let (indices, weights) = pairs.into_iter().unzip();
        Ok(Self {
            method: method.to_string(),
            fraction: 0.0,
            seed,
            indices,
            weights,
            metadata: BTreeMap::new(),
        }
        .with_fraction_of(n))
    }

    /// Uniform-weight result.
    pub fn uniform(method: &str, n: usize, seed: u64, indices: Vec<usize>) -> Result<Self> {
        Self::from_pairs(method, n, seed, indices.into_iter().map(|i| (i, 1.0)).collect())
    }

    fn with_fraction_of(mut self, n: usize) -> Self {
        self.fraction = if n == 0 {
            0.0
        } else {
            self.indices.len() as f64 / n as f64
        };
        self
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn with_metadata(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }
}

/// Number of samples for a selection fraction: `round(fraction * n)`
/// clamped to `[1, n]`.
pub fn budget_from_fraction(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CoresetError::arg(format!("fraction {fraction} outside (0, 1]")));
    }
    if n == 0 {
        return Err(CoresetError::arg("cannot budget an empty dataset"));
    }
    let k = (fraction * n as f64).round() as usize;
    Ok(k.clamp(1, n))
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn labels() -> LabelVector {
        LabelVector::new(vec![0, 1], 2).unwrap()
    }

    fn trace_with(softmax: Array2<f32>, errors: Array2<f32>) -> TrainingTrace {
        TrainingTrace {
            correctness: array![[1u8, 0], [1, 1]],
            softmax,
            losses: array![0.1f32, 0.2],
            error_vectors: errors,
            penultimate: array![[1.0f32], [2.0]],
            reference_epoch: 2,
        }
    }

    #[test]
    fn budget_examples() {
        assert_eq!(budget_from_fraction(50_000, 0.001).unwrap(), 50);
        assert_eq!(budget_from_fraction(10, 1.0).unwrap(), 10);
        assert_eq!(budget_from_fraction(7, 0.1).unwrap(), 1);
        assert!(budget_from_fraction(10, 0.0).is_err());
        assert!(budget_from_fraction(10, 1.5).is_err());
        assert!(budget_from_fraction(10, f64::NAN).is_err());
    }

    #[test]
    fn budget_monotone() {
        let mut prev = 0;
        for step in 1..=100 {
            let k = budget_from_fraction(37, step as f64 / 100.0).unwrap();
            assert!(k >= prev);
            prev = k;
        }
        let mut prev = 0;
        for n in 1..200 {
            let k = budget_from_fraction(n, 0.13).unwrap();
            assert!(k >= prev);
            prev = k;
        }
    }

    #[test]
    fn empty_and_nonfinite_features_rejected() {
        assert!(FeatureMatrix::new(Array2::zeros((0, 3))).is_err());
        assert!(FeatureMatrix::new(Array2::zeros((3, 0))).is_err());
        let err = FeatureMatrix::new(array![[1.0, f32::NAN]]).unwrap_err();
        assert!(err.to_string().contains("row 0 column 1"), "{err}");
    }

    #[test]
    fn label_range_checked() {
        assert!(LabelVector::new(vec![0, 2], 2).is_err());
        assert!(LabelVector::new(vec![0, 0], 1).is_err());
    }

    #[test]
    fn softmax_normalization_error_names_row() {
        let trace = trace_with(array![[0.9, 0.2], [0.5, 0.5]], array![[-0.1, 0.2], [0.5, -0.5]]);
        let err = trace.validate(&labels(), "").unwrap_err().to_string();
        assert!(err.contains("softmax row 0 sums to 1.1"), "{err}");
    }

    #[test]
    fn error_vector_consistency_checked() {
        let trace = trace_with(array![[0.5, 0.5], [0.5, 0.5]], array![[-0.5, 0.5], [0.5, 0.0]]);
        let err = trace.validate(&labels(), "val_").unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
        assert!(err.contains("val_error_vectors.dctf"), "{err}");
    }

    #[test]
    fn coreset_result_sorted_and_checked() {
        let r = CoresetResult::from_pairs("m", 5, 0, vec![(3, 1.0), (1, 2.0)]).unwrap();
        assert_eq!(r.indices, vec![1, 3]);
        assert_eq!(r.weights, vec![2.0, 1.0]);
        assert!((r.fraction - 0.4).abs() < 1e-12);
        assert!(CoresetResult::from_pairs("m", 5, 0, vec![(1, 1.0), (1, 1.0)]).is_err());
        assert!(CoresetResult::from_pairs("m", 5, 0, vec![(5, 1.0)]).is_err());
        assert!(CoresetResult::from_pairs("m", 5, 0, vec![(0, -1.0)]).is_err());
    }
}
