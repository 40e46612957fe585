//! Desk-scale proxy models: multinomial logistic regression or a
//! one-hidden-layer ReLU network, trained with mini-batch SGD.

mod csv;
mod model;
mod sgd;
mod synthetic;

pub use self::csv::load_csv;
pub use model::{Arch, DenseLayer, Gradients, ProxyModel};
pub use sgd::{
    evaluate_coreset, record_trace, record_trace_with_validation, train, LrSchedule, RecordedTrace,
    TrainConfig,
};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
