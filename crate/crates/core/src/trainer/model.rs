use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{CoresetError, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// Softmax regression on raw features; the penultimate representation
    /// is the input itself.
    Linear,
    /// One ReLU hidden layer of the given width.
    Mlp1 { hidden: usize },
}

impl Arch {
    pub const DEFAULT_HIDDEN: usize = 32;

    pub fn name(&self) -> &'static str {
        match self {
            Arch::Linear => "linear",
            Arch::Mlp1 { .. } => "mlp1",
        }
    }
}

/// `y = W x + b` with `W` stored as out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    fn init(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((out_dim, in_dim), || rng.random_range(-bound..bound));
        let bias = Array1::from_shape_simple_fn(out_dim, || rng.random_range(-bound..bound));
        Self { weight, bias }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyModel {
    pub arch: Arch,
    pub hidden: Option<DenseLayer>,
    /// Final fully-connected layer, C×h.
    pub output: DenseLayer,
    pub seed: u64,
}

/// Parameter gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hidden: Option<DenseLayer>,
    pub output: DenseLayer,
}

impl ProxyModel {
    /// Randomly initialized model (uniform ±1/√fan_in, seeded init stream).
    pub fn new(arch: Arch, input_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || num_classes < 2 {
            return Err(CoresetError::arg("model needs input_dim >= 1 and at least 2 classes"));
        }
        let mut rng = rng::stream(seed, Stream::Init);
        let (hidden, width) = match arch {
            Arch::Linear => (None, input_dim),
            Arch::Mlp1 { hidden } => {
                if hidden == 0 {
                    return Err(CoresetError::arg("hidden width must be at least 1"));
                }
                (Some(DenseLayer::init(hidden, input_dim, &mut rng)), hidden)
            }
        };
        let output = DenseLayer::init(num_classes, width, &mut rng);
        Ok(Self {
            arch,
            hidden,
            output,
            seed,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.output.weight.nrows()
    }

    pub fn input_dim(&self) -> usize {
        match &self.hidden {
            Some(h) => h.weight.ncols(),
            None => self.output.weight.ncols(),
        }
    }

    pub fn penultimate_dim(&self) -> usize {
        self.output.weight.ncols()
    }

    /// Returns `(pre-activation, penultimate, logits)`; the pre-activation
    /// is `None` for the linear architecture.
    fn forward_full(&self, x: ArrayView2<'_, f64>) -> (Option<Array2<f64>>, Array2<f64>, Array2<f64>) {
        match &self.hidden {
            Some(layer) => {
                let z = layer.apply(x);
                let a = z.mapv(|v| v.max(0.0));
                let logits = self.output.apply(a.view());
                (Some(z), a, logits)
            }
            None => {
                let logits = self.output.apply(x);
                (None, x.to_owned(), logits)
            }
        }
    }

    /// `(penultimate, logits)` for a batch of inputs.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let (_, a, logits) = self.forward_full(x);
        (a, logits)
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward_full(x).2
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        self.logits(x).outer_iter().map(|row| argmax(row)).collect()
    }

    pub fn accuracy(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
        let correct = self
            .predict(x)
            .iter()
            .zip(labels)
            .filter(|(p, y)| p == y)
            .count();
        correct as f64 / labels.len() as f64
    }

    /// Jacobian of the logits with respect to one input, C×d.
    pub fn input_jacobian(&self, x: ArrayView1<'_, f64>) -> Array2<f64> {
        match &self.hidden {
            None => self.output.weight.clone(),
            Some(layer) => {
                let z = layer.weight.dot(&x) + &layer.bias;
                let mut masked = self.output.weight.clone();
                for (j, &zj) in z.iter().enumerate() {
                    if zj <= 0.0 {
                        masked.column_mut(j).fill(0.0);
                    }
                }
                masked.dot(&layer.weight)
            }
        }
    }

    /// Weighted cross-entropy `(1/B) Σ wᵢ ℓᵢ + (λ/2)‖W‖²` over the batch,
    /// weight decay applied to weight matrices only. `weights = None` means
    /// all ones.
    pub fn loss(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
        weights: Option<&[f64]>,
        weight_decay: f64,
    ) -> f64 {
        let logits = self.logits(x);
        let b = labels.len() as f64;
        let data: f64 = logits
            .outer_iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (row, &y))| weights.map_or(1.0, |w| w[i]) * (log_sum_exp(row) - row[y]))
            .sum::<f64>()
            / b;
        data + 0.5 * weight_decay * self.weight_norm_sq()
    }

    fn weight_norm_sq(&self) -> f64 {
        let out = self.output.weight.iter().map(|v| v * v).sum::<f64>();
        out + self
            .hidden
            .as_ref()
            .map_or(0.0, |h| h.weight.iter().map(|v| v * v).sum::<f64>())
    }

    /// Analytic gradient of [`ProxyModel::loss`]; also returns the data
    /// loss (without the decay term).
    pub fn gradients(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
        weights: Option<&[f64]>,
        weight_decay: f64,
    ) -> (Gradients, f64) {
        let (z, a, logits) = self.forward_full(x);
        let b = labels.len() as f64;
        let mut dlogits = softmax_rows(&logits);
        let mut loss = 0.0;
        for (i, (mut row, &y)) in dlogits.outer_iter_mut().zip(labels).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            loss += w * (log_sum_exp(logits.row(i)) - logits[[i, y]]);
            row[y] -= 1.0;
            row.mapv_inplace(|v| v * w / b);
        }
        let mut output = DenseLayer {
            weight: dlogits.t().dot(&a),
            bias: dlogits.sum_axis(Axis(0)),
        };
        output.weight.scaled_add(weight_decay, &self.output.weight);

        let hidden = match (&self.hidden, z) {
            (Some(layer), Some(z)) => {
                let mut dz = dlogits.dot(&self.output.weight);
                dz.zip_mut_with(&z, |g, &zv| {
                    if zv <= 0.0 {
                        *g = 0.0;
                    }
                });
                let mut grad = DenseLayer {
                    weight: dz.t().dot(&x),
                    bias: dz.sum_axis(Axis(0)),
                };
                grad.weight.scaled_add(weight_decay, &layer.weight);
                Some(grad)
            }
            _ => None,
        };
        (Gradients { hidden, output }, loss / b)
    }

    /// Mutable views of every parameter array, in a fixed order.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(h) = &mut self.hidden {
            out.push(h.weight.as_slice_mut().expect("standard layout"));
            out.push(h.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.output.weight.as_slice_mut().expect("standard layout"));
        out.push(self.output.bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn is_finite(&self) -> bool {
        let layer_ok = |l: &DenseLayer| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite());
        layer_ok(&self.output) && self.hidden.as_ref().is_none_or(layer_ok)
    }

    pub(crate) fn zero_gradients(&self) -> Gradients {
        Gradients {
            hidden: self.hidden.as_ref().map(DenseLayer::zeros_like),
            output: self.output.zeros_like(),
        }
    }
}

impl Gradients {
    /// Flattened in the same order as [`ProxyModel::parameters_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(h) = &self.hidden {
            out.push(h.weight.as_slice().expect("standard layout"));
            out.push(h.bias.as_slice().expect("standard layout"));
        }
        out.push(self.output.weight.as_slice().expect("standard layout"));
        out.push(self.output.bias.as_slice().expect("standard layout"));
        out
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(h) = &mut self.hidden {
            out.push(h.weight.as_slice_mut().expect("standard layout"));
            out.push(h.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.output.weight.as_slice_mut().expect("standard layout"));
        out.push(self.output.bias.as_slice_mut().expect("standard layout"));
        out
    }
}

pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn log_sum_exp(row: ArrayView1<'_, f64>) -> f64 {
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}
