//! Linear probing of a frozen MAE encoder on its final CLS embedding.

mod head;
mod loss;
mod probe;

pub use head::{FeatureNorm, LinearHead, SEQUENCE_CLASSES};
pub use loss::{cross_entropy, cross_entropy_value};
pub use probe::{
    argmax, cls_features, evaluate_accuracy, evaluate_features, train_linear_probe, train_on_features,
    AccuracyReport, ProbeConfig,
};
