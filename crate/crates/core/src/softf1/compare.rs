use serde::{Deserialize, Serialize};

use super::data::{imbalanced_gaussians, TRAINING_SET_PROPORTIONS};
use super::train::{predict_levels, train_toy, LossKind, TrainConfig};
use crate::error::LabError;
use crate::metrics::evaluate;

/// Setup for comparing both losses on imbalanced synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub train_size: usize,
    pub test_size: usize,
    pub dim: usize,
    pub separation: f64,
    pub epochs: usize,
    pub lr: f64,
    pub seeds: u64,
    pub proportions: [f64; 4],
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            train_size: 1000,
            test_size: 2000,
            dim: 8,
            separation: 1.5,
            epochs: 1500,
            lr: 1e-3,
            seeds: 10,
            proportions: TRAINING_SET_PROPORTIONS,
        }
    }
}

/// Held-out macro F1 of both losses for one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub soft_f1_macro_f1: f64,
    pub cross_entropy_macro_f1: f64,
}

/// Train one model per loss and seed on fresh data and score each on a
/// held-out draw from the same distribution.
pub fn compare_losses(config: &ComparisonConfig) -> Result<Vec<SeedComparison>, LabError> {
    (0..config.seeds)
        .map(|seed| {
            let train = imbalanced_gaussians(config.train_size, config.dim, &config.proportions, config.separation, seed);
            let test = imbalanced_gaussians(
                config.test_size,
                config.dim,
                &config.proportions,
                config.separation,
                seed + 1_000_000,
            );
            let mut scores = [0.0; 2];
            for (slot, loss) in [LossKind::SoftF1, LossKind::CrossEntropy].into_iter().enumerate() {
                let cfg = TrainConfig {
                    lr: config.lr,
                    ..TrainConfig::new(loss, config.epochs, seed)
                };
                let out = train_toy(&train.features, &train.labels, &cfg)?;
                let preds = predict_levels(&out.model, &test.features)?;
                scores[slot] = evaluate(&preds, &test.labels)?.macro_f1;
            }
            Ok(SeedComparison {
                seed,
                soft_f1_macro_f1: scores[0],
                cross_entropy_macro_f1: scores[1],
            })
        })
        .collect()
}
