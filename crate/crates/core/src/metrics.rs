//! Classification metrics, text reports and pairwise agreement.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::RiskLevel;
use crate::error::MetricsError;

/// One-vs-rest scores for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Evaluation of predictions against reference labels. Confusion rows are
/// true classes and columns predicted classes, both in severity order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: [[usize; 4]; 4],
    pub per_class: BTreeMap<RiskLevel, ClassScores>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(preds: &[RiskLevel], truths: &[RiskLevel]) -> Result<MetricsReport, MetricsError> {
    if preds.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = preds.len();
    let mut confusion = [[0usize; 4]; 4];
    for (p, t) in preds.iter().zip(truths) {
        confusion[t.severity_rank()][p.severity_rank()] += 1;
    }

    let mut per_class = BTreeMap::new();
    let (mut macro_p, mut macro_r, mut macro_f1) = (0.0, 0.0, 0.0);
    let (mut weighted_p, mut weighted_r, mut weighted_f1) = (0.0, 0.0, 0.0);
    for (c, &level) in RiskLevel::ALL.iter().enumerate() {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..4).map(|r| confusion[r][c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = ratio(2 * tp, support + predicted);
        per_class.insert(
            level,
            ClassScores {
                precision,
                recall,
                f1,
                support,
            },
        );
        macro_p += precision / 4.0;
        macro_r += recall / 4.0;
        macro_f1 += f1 / 4.0;
        let w = support as f64 / n as f64;
        weighted_p += w * precision;
        weighted_r += w * recall;
        weighted_f1 += w * f1;
    }
    let correct: usize = (0..4).map(|c| confusion[c][c]).sum();
    Ok(MetricsReport {
        confusion,
        per_class,
        accuracy: ratio(correct, n),
        macro_precision: macro_p,
        macro_recall: macro_r,
        macro_f1,
        weighted_precision: weighted_p,
        weighted_recall: weighted_r,
        weighted_f1,
    })
}

impl MetricsReport {
    /// Aligned text table: one row per class, then accuracy, macro and
    /// weighted averages.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let total: usize = self.per_class.values().map(|s| s.support).sum();
        let _ = writeln!(out, "{:<14}{:>10}{:>10}{:>10}{:>10}", "", "precision", "recall", "f1-score", "support");
        for (level, s) in &self.per_class {
            let _ = writeln!(
                out,
                "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
                level.display_name(),
                s.precision,
                s.recall,
                s.f1,
                s.support
            );
        }
        out.push('\n');
        let _ = writeln!(out, "{:<14}{:>10}{:>10}{:>10.2}{:>10}", "Accuracy", "", "", self.accuracy, total);
        let _ = writeln!(
            out,
            "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
            "Macro avg", self.macro_precision, self.macro_recall, self.macro_f1, total
        );
        let _ = writeln!(
            out,
            "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
            "Weighted avg", self.weighted_precision, self.weighted_recall, self.weighted_f1, total
        );
        out
    }
}

/// Pairwise raw match rates between prediction lists (not a correlation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub ids: Vec<String>,
    pub match_rate: Vec<Vec<f64>>,
}

pub fn agreement_matrix(model_preds: &BTreeMap<String, Vec<RiskLevel>>) -> Result<AgreementMatrix, MetricsError> {
    let lists: Vec<&Vec<RiskLevel>> = model_preds.values().collect();
    let n = match lists.first() {
        Some(first) => first.len(),
        None => 0,
    };
    if let Some(bad) = lists.iter().find(|l| l.len() != n) {
        return Err(MetricsError::LengthMismatch {
            left: n,
            right: bad.len(),
        });
    }
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let match_rate = lists
        .iter()
        .map(|a| {
            lists
                .iter()
                .map(|b| ratio(a.iter().zip(b.iter()).filter(|(x, y)| x == y).count(), n))
                .collect()
        })
        .collect();
    Ok(AgreementMatrix {
        ids: model_preds.keys().cloned().collect(),
        match_rate,
    })
}

impl AgreementMatrix {
    /// CSV with a header row of ids; values are match rates.
    pub fn to_csv(&self) -> String {
        let mut out = format!("match_rate,{}\n", self.ids.join(","));
        for (id, row) in self.ids.iter().zip(&self.match_rate) {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.6}")).collect();
            let _ = writeln!(out, "{id},{}", cells.join(","));
        }
        out
    }
}
