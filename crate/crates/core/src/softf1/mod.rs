//! Small linear classifier for comparing the macro double soft-F1 loss
//! against cross-entropy, with analytic gradients and AdamW.
//!
//! The soft-F1 loss applies a sigmoid to each class logit independently and
//! builds continuous confusion counts from those probabilities.

mod compare;
pub mod data;
mod loss;
mod model;
mod train;

pub use compare::{compare_losses, ComparisonConfig, SeedComparison};
pub use data::{
    class_counts, imbalanced_gaussians, load_features, separable_blobs, write_features, FeatureSet,
    TRAINING_SET_PROPORTIONS,
};
pub use loss::{
    cross_entropy_loss, sigmoid, soft_f1_grad, soft_f1_loss, LossBatch, SoftF1Intermediates, SOFT_F1_EPSILON,
};
pub use model::{adamw_step, AdamWHyper, AdamWState, LinearGrads, LinearModel, INIT_SCALE};
pub use train::{
    predict_levels, train_toy, write_curve_csv, CurvePoint, LossKind, TrainConfig, TrainOutcome, MIN_SAMPLES,
};
