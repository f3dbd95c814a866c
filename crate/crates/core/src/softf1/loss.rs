use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::error::LabError;

/// Denominator guard in the soft F1 ratios.
pub const SOFT_F1_EPSILON: f64 = 1e-16;

/// Logits and one-hot targets, both B×4.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    logits: Array2<f64>,
    y: Array2<f64>,
}

impl LossBatch {
    pub fn new(logits: Array2<f64>, y: Array2<f64>) -> Result<Self, LabError> {
        if logits.ncols() != 4 || y.ncols() != 4 {
            return Err(LabError::Shape(format!(
                "expected B×4 inputs, got logits {:?} and targets {:?}",
                logits.dim(),
                y.dim()
            )));
        }
        if logits.nrows() == 0 || logits.nrows() != y.nrows() {
            return Err(LabError::Shape(format!(
                "logits have {} rows, targets {}",
                logits.nrows(),
                y.nrows()
            )));
        }
        for (i, row) in y.rows().into_iter().enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || zeros != 3 {
                return Err(LabError::Shape(format!("target row {i} is not one-hot")));
            }
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Shape("non-finite logit".into()));
        }
        Ok(LossBatch { logits, y })
    }

    /// Build one-hot targets from class indices.
    pub fn from_classes(logits: Array2<f64>, classes: &[usize]) -> Result<Self, LabError> {
        if classes.len() != logits.nrows() {
            return Err(LabError::Shape(format!(
                "{} classes for {} logit rows",
                classes.len(),
                logits.nrows()
            )));
        }
        let mut y = Array2::zeros((classes.len(), 4));
        for (i, &c) in classes.iter().enumerate() {
            if c >= 4 {
                return Err(LabError::Shape(format!("class index {c} out of range")));
            }
            y[[i, c]] = 1.0;
        }
        Self::new(logits, y)
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn batch_size(&self) -> usize {
        self.logits.nrows()
    }
}

/// Per-class quantities from one soft F1 evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftF1Intermediates {
    pub tp: Array1<f64>,
    pub fp: Array1<f64>,
    pub fn_: Array1<f64>,
    pub tn: Array1<f64>,
    pub soft_f1_class1: Array1<f64>,
    pub soft_f1_class0: Array1<f64>,
    pub cost: Array1<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Macro double soft F1: per-class sigmoid probabilities, continuous
/// confusion counts, and the mean over classes of the averaged
/// (1 - F1) for the positive and the negative side.
pub fn soft_f1_loss(batch: &LossBatch) -> (f64, SoftF1Intermediates) {
    let y_hat = batch.logits.mapv(sigmoid);
    let y = &batch.y;
    let tp = (&y_hat * y).sum_axis(Axis(0));
    let fp = (&y_hat * &y.mapv(|v| 1.0 - v)).sum_axis(Axis(0));
    let fn_ = (&y_hat.mapv(|v| 1.0 - v) * y).sum_axis(Axis(0));
    let tn = (&y_hat.mapv(|v| 1.0 - v) * &y.mapv(|v| 1.0 - v)).sum_axis(Axis(0));
    let soft_f1_class1 = 2.0 * &tp / (2.0 * &tp + &fn_ + &fp + SOFT_F1_EPSILON);
    let soft_f1_class0 = 2.0 * &tn / (2.0 * &tn + &fn_ + &fp + SOFT_F1_EPSILON);
    let cost = 0.5 * (soft_f1_class1.mapv(|v| 1.0 - v) + soft_f1_class0.mapv(|v| 1.0 - v));
    let loss = cost.mean().expect("four classes");
    (
        loss,
        SoftF1Intermediates {
            tp,
            fp,
            fn_,
            tn,
            soft_f1_class1,
            soft_f1_class0,
            cost,
        },
    )
}

/// Analytic gradient of [`soft_f1_loss`] with respect to the logits.
pub fn soft_f1_grad(batch: &LossBatch) -> Array2<f64> {
    let (_, s) = soft_f1_loss(batch);
    let y_hat = batch.logits.mapv(sigmoid);
    let classes = batch.logits.ncols() as f64;
    let mut grad = Array2::zeros(batch.logits.dim());
    for c in 0..batch.logits.ncols() {
        // d(2tp + fn + fp)/dŷ = 1 and d(2tn + fn + fp)/dŷ = -1 for every row.
        let d1 = 2.0 * s.tp[c] + s.fn_[c] + s.fp[c] + SOFT_F1_EPSILON;
        let d0 = 2.0 * s.tn[c] + s.fn_[c] + s.fp[c] + SOFT_F1_EPSILON;
        for i in 0..batch.logits.nrows() {
            let yi = batch.y[[i, c]];
            let df1 = (2.0 * yi * d1 - 2.0 * s.tp[c]) / (d1 * d1);
            let df0 = (-2.0 * (1.0 - yi) * d0 + 2.0 * s.tn[c]) / (d0 * d0);
            let dloss_dyhat = -0.5 / classes * (df1 + df0);
            let p = y_hat[[i, c]];
            grad[[i, c]] = dloss_dyhat * p * (1.0 - p);
        }
    }
    grad
}

/// Softmax cross-entropy averaged over the batch, with its gradient
/// `(softmax - y) / B`.
pub fn cross_entropy_loss(batch: &LossBatch) -> (f64, Array2<f64>) {
    let b = batch.batch_size() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(batch.logits.dim());
    for (i, row) in batch.logits.rows().into_iter().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        for c in 0..row.len() {
            let y = batch.y[[i, c]];
            loss -= y * (row[c] - lse);
            grad[[i, c]] = ((row[c] - lse).exp() - y) / b;
        }
    }
    (loss / b, grad)
}
