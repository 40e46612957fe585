use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::dctf::{DType, Tensor, TensorData};
use super::{DatasetArtifact, FeatureMatrix, LabelVector, TrainingTrace, ValidationSplit};
use crate::error::{CoresetError, Result};

pub const SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const TRACE_FIELDS: [&str; 5] = [
    "correctness",
    "softmax",
    "losses",
    "error_vectors",
    "penultimate",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub file: String,
    pub dtype: String,
    pub shape: Vec<usize>,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "C")]
    pub num_classes: usize,
    /// Penultimate width; absent without a trace.
    pub h: Option<usize>,
    #[serde(rename = "E")]
    pub epochs: Option<usize>,
    pub reference_epoch: Option<usize>,
    #[serde(default)]
    pub val_n: Option<usize>,
    #[serde(default)]
    pub val_epochs: Option<usize>,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    fn entry(&self, file: &str) -> Option<&TensorEntry> {
        self.tensors.iter().find(|t| t.file == file)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CoresetError + '_ {
    move |source| CoresetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn f32_tensor(a: &Array2<f32>) -> Tensor {
    Tensor {
        shape: a.shape().to_vec(),
        data: TensorData::F32(a.iter().copied().collect()),
    }
}

fn features_to_tensor(f: &FeatureMatrix) -> Tensor {
    f32_tensor(&f.data)
}

fn labels_to_tensor(l: &LabelVector) -> Tensor {
    Tensor {
        shape: vec![l.len()],
        data: TensorData::I32(l.as_slice().iter().map(|&y| y as i32).collect()),
    }
}

fn trace_tensors(t: &TrainingTrace) -> [(&'static str, Tensor); 5] {
    [
        (
            "correctness",
            Tensor {
                shape: t.correctness.shape().to_vec(),
                data: TensorData::U8(t.correctness.iter().copied().collect()),
            },
        ),
        ("softmax", f32_tensor(&t.softmax)),
        (
            "losses",
            Tensor {
                shape: vec![t.losses.len()],
                data: TensorData::F32(t.losses.to_vec()),
            },
        ),
        ("error_vectors", f32_tensor(&t.error_vectors)),
        ("penultimate", f32_tensor(&t.penultimate)),
    ]
}

/// Validates `artifact` and writes it to `dir` (created if needed).
pub fn save_artifact(artifact: &DatasetArtifact, dir: &Path) -> Result<()> {
    artifact.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut files: Vec<(String, Tensor)> = vec![
        ("features.dctf".into(), features_to_tensor(&artifact.features)),
        ("labels.dctf".into(), labels_to_tensor(&artifact.labels)),
    ];
    if let Some(trace) = &artifact.trace {
        for (name, t) in trace_tensors(trace) {
            files.push((format!("{name}.dctf"), t));
        }
    }
    if let Some(val) = &artifact.validation {
        files.push(("val_features.dctf".into(), features_to_tensor(&val.features)));
        files.push(("val_labels.dctf".into(), labels_to_tensor(&val.labels)));
        for (name, t) in trace_tensors(&val.trace) {
            files.push((format!("val_{name}.dctf"), t));
        }
    }

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        n: artifact.n(),
        d: artifact.features.d(),
        num_classes: artifact.num_classes(),
        h: artifact.trace.as_ref().map(TrainingTrace::hidden_dim),
        epochs: artifact.trace.as_ref().map(TrainingTrace::num_epochs),
        reference_epoch: artifact.trace.as_ref().map(|t| t.reference_epoch),
        val_n: artifact.validation.as_ref().map(|v| v.features.n()),
        val_epochs: artifact.validation.as_ref().map(|v| v.trace.num_epochs()),
        tensors: files
            .iter()
            .map(|(file, t)| TensorEntry {
                file: file.clone(),
                dtype: t.dtype().name().to_string(),
                shape: t.shape.clone(),
            })
            .collect(),
    };

    for (file, tensor) in &files {
        tensor.write(&dir.join(file))?;
    }
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    let path = dir.join(MANIFEST);
    fs::write(&path, json).map_err(io_err(&path))
}

struct Reader<'a> {
    dir: &'a Path,
    manifest: &'a Manifest,
}

impl Reader<'_> {
    fn has(&self, file: &str) -> bool {
        self.manifest.entry(file).is_some()
    }

    fn read(&self, file: &str, dtype: DType, shape: &[Option<usize>]) -> Result<Tensor> {
        let entry = self
            .manifest
            .entry(file)
            .ok_or_else(|| CoresetError::format(MANIFEST, format!("no entry for {file}")))?;
        if entry.dtype != dtype.name() {
            return Err(CoresetError::format(
                MANIFEST,
                format!("{file} declared as {}, expected {}", entry.dtype, dtype.name()),
            ));
        }
        let path = self.dir.join(file);
        if !path.is_file() {
            return Err(CoresetError::format(file, "missing file"));
        }
        let tensor = Tensor::read(&path)?;
        if tensor.dtype() != dtype {
            return Err(CoresetError::format(
                file,
                format!("dtype {} in header, expected {}", tensor.dtype().name(), dtype.name()),
            ));
        }
        if tensor.shape != entry.shape {
            return Err(CoresetError::format(
                file,
                format!(
                    "header shape {:?} disagrees with manifest shape {:?}",
                    tensor.shape, entry.shape
                ),
            ));
        }
        let fits = tensor.shape.len() == shape.len()
            && tensor
                .shape
                .iter()
                .zip(shape)
                .all(|(&got, want)| want.is_none_or(|w| w == got));
        if !fits {
            let want: Vec<String> = shape
                .iter()
                .map(|s| s.map_or("*".to_string(), |v| v.to_string()))
                .collect();
            return Err(CoresetError::format(
                file,
                format!("shape {:?} disagrees with manifest [{}]", tensor.shape, want.join(", ")),
            ));
        }
        Ok(tensor)
    }

    fn f32_matrix(&self, file: &str, rows: Option<usize>, cols: Option<usize>) -> Result<Array2<f32>> {
        let t = self.read(file, DType::Float32, &[rows, cols])?;
        let TensorData::F32(data) = t.data else { unreachable!() };
        Ok(Array2::from_shape_vec((t.shape[0], t.shape[1]), data).expect("shape checked"))
    }

    fn labels(&self, file: &str, n: usize, num_classes: usize) -> Result<LabelVector> {
        let t = self.read(file, DType::Int32, &[Some(n)])?;
        let TensorData::I32(raw) = t.data else { unreachable!() };
        let mut labels = Vec::with_capacity(raw.len());
        for (i, y) in raw.into_iter().enumerate() {
            let y = usize::try_from(y).map_err(|_| {
                CoresetError::invalid(file, "labels", format!("negative label {y} at index {i}"))
            })?;
            labels.push(y);
        }
        LabelVector::checked(labels, num_classes, file)
    }

    fn trace(&self, prefix: &str, n: usize, epochs: usize, reference_epoch: usize) -> Result<TrainingTrace> {
        let m = self.manifest;
        let file = |name: &str| format!("{prefix}{name}.dctf");
        let correctness = {
            let t = self.read(&file("correctness"), DType::UInt8, &[Some(epochs), Some(n)])?;
            let TensorData::U8(data) = t.data else { unreachable!() };
            Array2::from_shape_vec((epochs, n), data).expect("shape checked")
        };
        let losses = {
            let t = self.read(&file("losses"), DType::Float32, &[Some(n)])?;
            let TensorData::F32(data) = t.data else { unreachable!() };
            Array1::from(data)
        };
        Ok(TrainingTrace {
            correctness,
            softmax: self.f32_matrix(&file("softmax"), Some(n), Some(m.num_classes))?,
            losses,
            error_vectors: self.f32_matrix(&file("error_vectors"), Some(n), Some(m.num_classes))?,
            penultimate: self.f32_matrix(&file("penultimate"), Some(n), m.h)?,
            reference_epoch,
        })
    }

    /// All five trace tensors or none.
    fn trace_present(&self, prefix: &str) -> Result<bool> {
        let present: Vec<bool> = TRACE_FIELDS
            .iter()
            .map(|f| self.has(&format!("{prefix}{f}.dctf")))
            .collect();
        if present.iter().all(|&p| p) {
            return Ok(true);
        }
        if let Some(i) = present.iter().position(|&p| !p).filter(|_| present.iter().any(|&p| p)) {
            return Err(CoresetError::format(
                format!("{prefix}{}.dctf", TRACE_FIELDS[i]),
                "missing file (trace tensors must be complete)",
            ));
        }
        Ok(false)
    }
}

/// Reads and fully validates the artifact in `dir`.
pub fn load_artifact(dir: &Path) -> Result<DatasetArtifact> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CoresetError::format(MANIFEST, e.to_string()))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(CoresetError::format(
            MANIFEST,
            format!("unsupported schema_version {}", manifest.schema_version),
        ));
    }
    let reader = Reader {
        dir,
        manifest: &manifest,
    };
    let (n, d, c) = (manifest.n, manifest.d, manifest.num_classes);

    let features = FeatureMatrix::checked(
        reader.f32_matrix("features.dctf", Some(n), Some(d))?,
        "features.dctf",
    )?;
    let labels = reader.labels("labels.dctf", n, c)?;

    let trace_meta = |what: &str, v: Option<usize>| {
        v.ok_or_else(|| CoresetError::invalid(MANIFEST, what, "required when trace tensors are present"))
    };
    let trace = if reader.trace_present("")? {
        let epochs = trace_meta("E", manifest.epochs)?;
        let reference_epoch = trace_meta("reference_epoch", manifest.reference_epoch)?;
        trace_meta("h", manifest.h)?;
        Some(reader.trace("", n, epochs, reference_epoch)?)
    } else {
        None
    };

    let validation = if reader.has("val_features.dctf") {
        let val_n = trace_meta("val_n", manifest.val_n)?;
        let val_epochs = trace_meta("val_epochs", manifest.val_epochs)?;
        let reference_epoch = trace_meta("reference_epoch", manifest.reference_epoch)?;
        if !reader.trace_present("val_")? {
            return Err(CoresetError::format(
                "val_softmax.dctf",
                "missing file (validation split requires a trace)",
            ));
        }
        let features = FeatureMatrix::checked(
            reader.f32_matrix("val_features.dctf", Some(val_n), Some(d))?,
            "val_features.dctf",
        )?;
        let labels = reader.labels("val_labels.dctf", val_n, c)?;
        let trace = reader.trace("val_", val_n, val_epochs, reference_epoch)?;
        Some(ValidationSplit {
            features,
            labels,
            trace,
        })
    } else {
        None
    };

    DatasetArtifact::new(features, labels, trace, validation)
}
