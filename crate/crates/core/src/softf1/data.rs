use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datasplit::DataFormat;
use crate::domain::RiskLevel;
use crate::error::DataError;

/// Class shares of the assembled gold plus pseudo-labelled training set
/// (540/500/286/76 of 1,402 posts).
pub const TRAINING_SET_PROPORTIONS: [f64; 4] = [0.385, 0.357, 0.204, 0.054];

/// Feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Array2<f64>,
    pub labels: Vec<RiskLevel>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Split `n` into per-class counts by largest remainder.
pub fn class_counts(n: usize, proportions: &[f64; 4]) -> [usize; 4] {
    let total: f64 = proportions.iter().sum();
    let exact: Vec<f64> = proportions.iter().map(|p| p / total * n as f64).collect();
    let mut counts = [0usize; 4];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let short = n - counts.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        counts[c] += 1;
    }
    counts
}

/// Balanced classes around `4·e_k` with uniform(-1, 1) noise in every
/// coordinate, so the classes are linearly separable. Needs `d >= 4`.
pub fn separable_blobs(n: usize, d: usize, seed: u64) -> FeatureSet {
    assert!(d >= 4, "separable blobs need at least 4 dimensions");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 4;
        for j in 0..d {
            features[[i, j]] = rng.random_range(-1.0..1.0);
        }
        features[[i, class]] += 4.0;
        labels.push(RiskLevel::ALL[class]);
    }
    FeatureSet { features, labels }
}

/// Overlapping isotropic Gaussians with means `separation·e_k` and unit
/// variance, class sizes set by `proportions`, rows shuffled. Needs `d >= 4`.
pub fn imbalanced_gaussians(n: usize, d: usize, proportions: &[f64; 4], separation: f64, seed: u64) -> FeatureSet {
    assert!(d >= 4, "class means need at least 4 dimensions");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut classes: Vec<usize> = class_counts(n, proportions)
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    classes.shuffle(&mut rng);
    let mut features = Array2::zeros((n, d));
    for (i, &class) in classes.iter().enumerate() {
        for j in 0..d {
            features[[i, j]] = normal.sample(&mut rng);
        }
        features[[i, class]] += separation;
    }
    FeatureSet {
        features,
        labels: classes.into_iter().map(|c| RiskLevel::ALL[c]).collect(),
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureRow {
    label: String,
    features: Vec<f64>,
}

fn format_error(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Format {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn assemble(path: &Path, rows: Vec<(usize, RiskLevel, Vec<f64>)>) -> Result<FeatureSet, DataError> {
    let d = rows.first().map(|r| r.2.len()).unwrap_or(0);
    let mut flat = Vec::with_capacity(rows.len() * d);
    let mut labels = Vec::with_capacity(rows.len());
    for (line, label, values) in rows {
        if values.len() != d {
            return Err(format_error(path, line, format!("expected {d} features, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(format_error(path, line, "non-finite feature value"));
        }
        flat.extend(values);
        labels.push(label);
    }
    let features = Array2::from_shape_vec((labels.len(), d), flat).expect("row lengths checked");
    Ok(FeatureSet { features, labels })
}

/// Read features from JSONL (`{"label": .., "features": [..]}`) or CSV
/// (a `label` column followed by numeric feature columns).
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSet, DataError> {
    let path = path.as_ref();
    let mut rows = Vec::new();
    match DataFormat::from_path(path) {
        DataFormat::Jsonl => {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: FeatureRow =
                    serde_json::from_str(&line).map_err(|e| format_error(path, i + 1, e.to_string()))?;
                let label: RiskLevel = row.label.parse().map_err(|e: crate::error::DomainError| {
                    format_error(path, i + 1, e.to_string())
                })?;
                rows.push((i + 1, label, row.features));
            }
        }
        DataFormat::Csv => {
            let mut reader = csv::Reader::from_path(path)?;
            let label_col = reader
                .headers()?
                .iter()
                .position(|h| h == "label")
                .ok_or_else(|| format_error(path, 1, "missing label column"))?;
            for record in reader.records() {
                let record = record?;
                let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
                let label: RiskLevel = record[label_col]
                    .parse()
                    .map_err(|e: crate::error::DomainError| format_error(path, line, e.to_string()))?;
                let mut values = Vec::with_capacity(record.len() - 1);
                for (j, field) in record.iter().enumerate() {
                    if j == label_col {
                        continue;
                    }
                    values.push(
                        field
                            .trim()
                            .parse::<f64>()
                            .map_err(|e| format_error(path, line, format!("column {}: {e}", j + 1)))?,
                    );
                }
                rows.push((line, label, values));
            }
        }
    }
    assemble(path, rows)
}

/// Write features in the format implied by the file extension.
pub fn write_features(set: &FeatureSet, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    match DataFormat::from_path(path) {
        DataFormat::Jsonl => {
            let mut out = BufWriter::new(File::create(path)?);
            for (row, label) in set.features.rows().into_iter().zip(&set.labels) {
                let record = FeatureRow {
                    label: label.as_str().to_string(),
                    features: row.to_vec(),
                };
                writeln!(out, "{}", serde_json::to_string(&record)?)?;
            }
            out.flush()?;
        }
        DataFormat::Csv => {
            let mut writer = csv::Writer::from_path(path)?;
            let mut header = vec!["label".to_string()];
            header.extend((0..set.features.ncols()).map(|j| format!("f{j}")));
            writer.write_record(&header)?;
            for (row, label) in set.features.rows().into_iter().zip(&set.labels) {
                let mut record = vec![label.as_str().to_string()];
                record.extend(row.iter().map(|v| v.to_string()));
                writer.write_record(&record)?;
            }
            writer.flush()?;
        }
    }
    Ok(())
}
