use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::artifact::{FeatureMatrix, LabelVector};
use crate::error::{CoresetError, Result};
use crate::rng::{self, Stream};

/// Gaussian-cluster dataset description.
///
/// Parses from `c<C>-n<per class>-d<dim>-sep<separation>[-sig<sigma>]`, for
/// example `c4-n200-d16-sep8`. The seed is supplied separately.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub cluster_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub const DEFAULT_SIGMA: f64 = 1.0;

    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 || self.dim == 0 {
            return Err(CoresetError::arg("synthetic spec needs n >= 1 and d >= 1"));
        }
        if self.num_classes < 2 {
            return Err(CoresetError::arg("synthetic spec needs at least 2 classes"));
        }
        if !(self.cluster_separation >= 0.0) || !self.cluster_separation.is_finite() {
            return Err(CoresetError::arg("separation must be finite and >= 0"));
        }
        if !(self.noise_sigma > 0.0) || !self.noise_sigma.is_finite() {
            return Err(CoresetError::arg("sigma must be finite and > 0"));
        }
        Ok(())
    }
}

impl FromStr for SyntheticSpec {
    type Err = CoresetError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CoresetError::arg(format!("cannot parse synthetic spec `{s}`"));
        let mut spec = SyntheticSpec {
            n_per_class: 0,
            num_classes: 0,
            dim: 0,
            cluster_separation: f64::NAN,
            noise_sigma: Self::DEFAULT_SIGMA,
            seed: 0,
        };
        for part in s.split('-') {
            if let Some(v) = part.strip_prefix("sep") {
                spec.cluster_separation = v.parse().map_err(|_| bad())?;
            } else if let Some(v) = part.strip_prefix("sig") {
                spec.noise_sigma = v.parse().map_err(|_| bad())?;
            } else if let Some(v) = part.strip_prefix('c') {
                spec.num_classes = v.parse().map_err(|_| bad())?;
            } else if let Some(v) = part.strip_prefix('n') {
                spec.n_per_class = v.parse().map_err(|_| bad())?;
            } else if let Some(v) = part.strip_prefix('d') {
                spec.dim = v.parse().map_err(|_| bad())?;
            } else {
                return Err(bad());
            }
        }
        if spec.cluster_separation.is_nan() {
            return Err(bad());
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train_features: FeatureMatrix,
    pub train_labels: LabelVector,
    pub test_features: FeatureMatrix,
    pub test_labels: LabelVector,
}

/// Draws `C` Gaussian clusters whose means have norm `separation` and
/// random directions, with isotropic noise. Sample `g` (in generation
/// order) belongs to class `g mod C`; every fifth sample (`g mod 5 == 4`)
/// goes to the test split.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Stream::DataGen);
    let (c, d) = (spec.num_classes, spec.dim);
    let means: Vec<Array1<f64>> = (0..c)
        .map(|_| {
            let dir = Array1::from_shape_simple_fn(d, || rng.sample::<f64, _>(StandardNormal));
            let norm = dir.dot(&dir).sqrt().max(f64::MIN_POSITIVE);
            dir * (spec.cluster_separation / norm)
        })
        .collect();

    let total = spec.n_per_class * c;
    let (mut train_x, mut train_y, mut test_x, mut test_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for g in 0..total {
        let class = g % c;
        let row = means[class].iter().map(|&m| {
            let noise: f64 = rng.sample(StandardNormal);
            (m + spec.noise_sigma * noise) as f32
        });
        if g % 5 == 4 {
            test_x.extend(row);
            test_y.push(class);
        } else {
            train_x.extend(row);
            train_y.push(class);
        }
    }
    let matrix = |rows: Vec<f32>, n: usize| {
        FeatureMatrix::new(Array2::from_shape_vec((n, d), rows).expect("row count"))
    };
    let (n_train, n_test) = (train_y.len(), test_y.len());
    if n_test == 0 {
        return Err(CoresetError::arg("synthetic spec too small for a test split"));
    }
    Ok(SyntheticData {
        train_features: matrix(train_x, n_train)?,
        train_labels: LabelVector::new(train_y, c)?,
        test_features: matrix(test_x, n_test)?,
        test_labels: LabelVector::new(test_y, c)?,
    })
}
