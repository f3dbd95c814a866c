use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy_loss, soft_f1_grad, soft_f1_loss, LossBatch};
use super::model::{adamw_step, AdamWHyper, AdamWState, LinearModel};
use crate::domain::RiskLevel;
use crate::error::LabError;
use crate::metrics::{evaluate, MetricsReport};

/// Smallest training set accepted by [`train_toy`].
pub const MIN_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftF1,
    CrossEntropy,
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "soft_f1" | "softf1" => Ok(LossKind::SoftF1),
            "cross_entropy" | "ce" => Ok(LossKind::CrossEntropy),
            other => Err(format!("unknown loss {other:?} (expected soft_f1 or cross_entropy)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
}

fn default_weight_decay() -> f64 {
    AdamWHyper::default().weight_decay
}

impl TrainConfig {
    pub fn new(loss: LossKind, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            loss,
            lr: AdamWHyper::default().lr,
            epochs,
            seed,
            weight_decay: default_weight_decay(),
        }
    }
}

/// Loss and training accuracy before each update, plus one final row after
/// the last update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LinearModel,
    pub report: MetricsReport,
    pub curve: Vec<CurvePoint>,
}

fn loss_and_grad(kind: LossKind, batch: &LossBatch) -> (f64, Array2<f64>) {
    match kind {
        LossKind::SoftF1 => (soft_f1_loss(batch).0, soft_f1_grad(batch)),
        LossKind::CrossEntropy => cross_entropy_loss(batch),
    }
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Full-batch AdamW training of a seeded linear head. Returns the final
/// model with its training-set metrics.
pub fn train_toy(features: &Array2<f64>, labels: &[RiskLevel], config: &TrainConfig) -> Result<TrainOutcome, LabError> {
    if features.nrows() != labels.len() {
        return Err(LabError::Shape(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if labels.len() < MIN_SAMPLES {
        return Err(LabError::DegenerateData(format!(
            "{} samples, need at least {MIN_SAMPLES}",
            labels.len()
        )));
    }
    if let Some(missing) = RiskLevel::ALL.iter().find(|c| !labels.contains(c)) {
        return Err(LabError::DegenerateData(format!("class {missing} has no samples")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(LabError::DegenerateData("non-finite feature value".into()));
    }
    let classes: Vec<usize> = labels.iter().map(|l| l.severity_rank()).collect();
    let mut model = LinearModel::init(features.ncols(), config.seed);
    let hyper = AdamWHyper {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamWHyper::default()
    };
    let mut state = AdamWState::new(&model, hyper);
    let mut curve = Vec::with_capacity(config.epochs + 1);

    for epoch in 0..=config.epochs {
        let logits = model.logits(features)?;
        let batch = LossBatch::from_classes(logits, &classes)?;
        let (loss, dlogits) = loss_and_grad(config.loss, &batch);
        let pred = model.predict(features)?;
        curve.push(CurvePoint {
            epoch,
            loss,
            accuracy: accuracy(&pred, &classes),
        });
        if epoch == config.epochs {
            break;
        }
        let grads = model.backward(features, &dlogits)?;
        adamw_step(&mut model, &grads, &mut state)?;
    }

    let preds: Vec<RiskLevel> = model.predict(features)?.into_iter().map(|c| RiskLevel::ALL[c]).collect();
    let report = evaluate(&preds, labels)?;
    Ok(TrainOutcome { model, report, curve })
}

/// Predicted classes of `model` on `features`.
pub fn predict_levels(model: &LinearModel, features: &Array2<f64>) -> Result<Vec<RiskLevel>, LabError> {
    Ok(model.predict(features)?.into_iter().map(|c| RiskLevel::ALL[c]).collect())
}

pub fn write_curve_csv(curve: &[CurvePoint], path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "epoch,loss,accuracy")?;
    for p in curve {
        writeln!(out, "{},{},{}", p.epoch, p.loss, p.accuracy)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::softf1::data::separable_blobs;

    #[test]
    fn zero_epochs_is_initialisation() {
        let data = separable_blobs(40, 8, 1);
        let out = train_toy(&data.features, &data.labels, &TrainConfig::new(LossKind::SoftF1, 0, 9)).unwrap();
        assert_eq!(out.model, LinearModel::init(8, 9));
        assert_eq!(out.curve.len(), 1);
    }

    #[test]
    fn deterministic() {
        let data = separable_blobs(40, 8, 1);
        let cfg = TrainConfig::new(LossKind::CrossEntropy, 30, 2);
        let a = train_toy(&data.features, &data.labels, &cfg).unwrap();
        let b = train_toy(&data.features, &data.labels, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn degenerate_inputs() {
        let data = separable_blobs(40, 8, 1);
        let cfg = TrainConfig::new(LossKind::SoftF1, 1, 0);
        let no_attempt: Vec<RiskLevel> = data
            .labels
            .iter()
            .map(|&l| if l == RiskLevel::Attempt { RiskLevel::Indicator } else { l })
            .collect();
        assert!(matches!(
            train_toy(&data.features, &no_attempt, &cfg),
            Err(LabError::DegenerateData(_))
        ));
        let small = data.features.slice(ndarray::s![..4, ..]).to_owned();
        assert!(matches!(
            train_toy(&small, &data.labels[..4], &cfg),
            Err(LabError::DegenerateData(_))
        ));
        assert!(matches!(
            train_toy(&data.features, &data.labels[..10], &cfg),
            Err(LabError::Shape(_))
        ));
    }

    #[test]
    fn separable_blobs_are_learned_by_both_losses() {
        let data = separable_blobs(200, 8, 0);
        for loss in [LossKind::SoftF1, LossKind::CrossEntropy] {
            let out = train_toy(&data.features, &data.labels, &TrainConfig::new(loss, 500, 0)).unwrap();
            assert!(out.report.accuracy >= 0.95, "{loss:?}: {}", out.report.accuracy);
            assert!(out.model.is_finite());
            assert!(out.curve.last().unwrap().loss < out.curve[0].loss);
        }
    }

    #[test]
    fn loss_kind_parsing() {
        assert_eq!("soft-f1".parse::<LossKind>().unwrap(), LossKind::SoftF1);
        assert_eq!("cross_entropy".parse::<LossKind>().unwrap(), LossKind::CrossEntropy);
        assert!("mse".parse::<LossKind>().is_err());
    }
}
