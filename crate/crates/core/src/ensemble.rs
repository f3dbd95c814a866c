//! Fold averaging and weighted majority voting.
//!
//! Ties are always resolved toward the more severe class.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{ProbabilityVector, RiskLevel};
use crate::error::EnsembleError;

/// Relative slack under which two vote totals count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// One voting member and its weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: String,
    pub weight: f64,
}

/// Weighted voting members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct EnsembleConfig {
    members: Vec<Member>,
}

#[derive(Serialize, Deserialize)]
struct RawConfig {
    members: Vec<Member>,
}

impl TryFrom<RawConfig> for EnsembleConfig {
    type Error = EnsembleError;

    fn try_from(raw: RawConfig) -> Result<Self, Self::Error> {
        EnsembleConfig::new(raw.members)
    }
}

impl From<EnsembleConfig> for RawConfig {
    fn from(c: EnsembleConfig) -> Self {
        RawConfig { members: c.members }
    }
}

impl EnsembleConfig {
    pub fn new(members: Vec<Member>) -> Result<Self, EnsembleError> {
        if members.is_empty() {
            return Err(EnsembleError::NoMembers);
        }
        let mut seen = BTreeSet::new();
        for m in &members {
            if !(m.weight.is_finite() && m.weight > 0.0) {
                return Err(EnsembleError::InvalidWeight {
                    id: m.id.clone(),
                    weight: m.weight,
                });
            }
            if !seen.insert(m.id.as_str()) {
                return Err(EnsembleError::DuplicateMember(m.id.clone()));
            }
        }
        Ok(EnsembleConfig { members })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self, EnsembleError> {
        Self::new(
            pairs
                .into_iter()
                .map(|(id, weight)| Member { id: id.into(), weight })
                .collect(),
        )
    }

    /// Five members: the 72B instruction model at weight 2, the four
    /// 8-9B models at weight 1.
    pub fn default_fleet() -> Self {
        Self::from_pairs([
            ("qwen2-72b-instruct", 2.0),
            ("llama3-8b-1", 1.0),
            ("llama3-8b-2", 1.0),
            ("llama3.1-8b", 1.0),
            ("gemma2-9b", 1.0),
        ])
        .expect("default ensemble is valid")
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn weight_of(&self, id: &str) -> Option<f64> {
        self.members.iter().find(|m| m.id == id).map(|m| m.weight)
    }

    pub fn weights(&self) -> BTreeMap<String, f64> {
        self.members.iter().map(|m| (m.id.clone(), m.weight)).collect()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Componentwise mean of fold outputs.
pub fn cv_average(fold_outputs: &[ProbabilityVector]) -> Result<ProbabilityVector, EnsembleError> {
    if fold_outputs.is_empty() {
        return Err(EnsembleError::EmptyInput);
    }
    let n = fold_outputs.len() as f64;
    let mut mean = [0.0; 4];
    for v in fold_outputs {
        for (acc, x) in mean.iter_mut().zip(v.as_array()) {
            *acc += x;
        }
    }
    for x in &mut mean {
        *x /= n;
    }
    Ok(ProbabilityVector::new(mean)?)
}

/// Index of the largest score, preferring the more severe class on ties.
fn best_class(scores: &[f64; 4], tolerance: f64) -> RiskLevel {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rank = (0..4)
        .rev()
        .find(|&i| max - scores[i] <= tolerance)
        .unwrap_or(3);
    RiskLevel::ALL[rank]
}

/// Class with the highest probability.
pub fn argmax_class(p: &ProbabilityVector) -> RiskLevel {
    best_class(p.as_array(), 0.0)
}

/// Class with the largest total weight among members voting for it.
pub fn weighted_vote(
    predictions: &BTreeMap<String, RiskLevel>,
    config: &EnsembleConfig,
) -> Result<RiskLevel, EnsembleError> {
    if let Some(extra) = predictions.keys().find(|id| config.weight_of(id).is_none()) {
        return Err(EnsembleError::UnknownMember(extra.clone()));
    }
    let missing: Vec<String> = config
        .members
        .iter()
        .filter(|m| !predictions.contains_key(&m.id))
        .map(|m| m.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EnsembleError::MissingMember(missing));
    }
    let mut scores = [0.0; 4];
    let mut total = 0.0;
    for m in &config.members {
        scores[predictions[&m.id].severity_rank()] += m.weight;
        total += m.weight;
    }
    Ok(best_class(&scores, TIE_TOLERANCE * total))
}

/// A member's output for one post: a hard label or a probability vector.
/// Several probability rows for the same member and post are fold outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub post_id: String,
    pub annotator_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<RiskLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<ProbabilityVector>,
}

/// Reduce every member to one class per post (fold averaging then argmax for
/// probability rows) and vote. Returns predictions sorted by post id.
pub fn ensemble_predictions(
    rows: &[PredictionRow],
    config: &EnsembleConfig,
) -> Result<Vec<(String, RiskLevel)>, EnsembleError> {
    #[derive(Default)]
    struct Slot {
        label: Option<RiskLevel>,
        probs: Vec<ProbabilityVector>,
    }
    let mut grid: BTreeMap<&str, BTreeMap<&str, Slot>> = BTreeMap::new();
    for row in rows {
        let bad = |reason: &str| EnsembleError::BadRow {
            post_id: row.post_id.clone(),
            annotator_id: row.annotator_id.clone(),
            reason: reason.to_string(),
        };
        if config.weight_of(&row.annotator_id).is_none() {
            return Err(EnsembleError::UnknownMember(row.annotator_id.clone()));
        }
        let slot = grid
            .entry(&row.post_id)
            .or_default()
            .entry(&row.annotator_id)
            .or_default();
        match (row.label, row.probs) {
            (Some(_), Some(_)) => return Err(bad("has both label and probs")),
            (None, None) => return Err(bad("has neither label nor probs")),
            (Some(label), None) => {
                if slot.label.is_some() || !slot.probs.is_empty() {
                    return Err(bad("duplicate label row"));
                }
                slot.label = Some(label);
            }
            (None, Some(p)) => {
                if slot.label.is_some() {
                    return Err(bad("mixes label and probs rows"));
                }
                slot.probs.push(p);
            }
        }
    }

    let mut out = Vec::with_capacity(grid.len());
    for (post_id, members) in grid {
        let mut votes = BTreeMap::new();
        for (id, slot) in members {
            let label = match slot.label {
                Some(label) => label,
                None => argmax_class(&cv_average(&slot.probs)?),
            };
            votes.insert(id.to_string(), label);
        }
        let label = weighted_vote(&votes, config).map_err(|e| match e {
            EnsembleError::MissingMember(ids) => {
                EnsembleError::MissingMember(ids.into_iter().map(|id| format!("{id} (post {post_id})")).collect())
            }
            other => other,
        })?;
        out.push((post_id.to_string(), label));
    }
    Ok(out)
}
