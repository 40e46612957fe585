//! Coreset selection over a model-agnostic dataset artifact.
//!
//! The crate is organized by method family:
//!
//! * [`artifact`] – data model, DCTF tensor files and validation.
//! * [`metrics`] – distance and similarity kernels.
//! * [`scores`] – per-sample scores (uncertainty, forgetting, GraNd/EL2N,
//!   sensitivity) and score-driven selection.
//! * [`geometry`] – herding, k-center greedy and contextual diversity.
//! * [`boundary`] – CAL and DeepFool.
//! * [`submodular`] – facility location / graph cut with greedy maximizers.
//! * [`matching`] – CRAIG, GradMatch (OMP) and GLISTER.
//! * [`trainer`] – the small proxy model, trace recording and evaluation.
//!
//! Every selection routine returns a [`CoresetResult`].

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod boundary;
mod error;
pub mod geometry;
pub mod matching;
pub mod metrics;
pub mod rng;
pub mod scores;
pub mod selection;
pub mod submodular;
pub mod trainer;

pub use artifact::{
    budget_from_fraction, load_artifact, save_artifact, CoresetResult, DatasetArtifact,
    FeatureMatrix, LabelVector, TrainingTrace, ValidationSplit,
};
pub use error::{CoresetError, Result};
pub use selection::Selection;
