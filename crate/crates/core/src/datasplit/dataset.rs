//! Dataset rows and their JSONL / CSV forms.
//!
//! JSONL rows: `{"post_id": str, "text": str, "label": str|null, "provenance": "gold"|"pseudo"}`.
//! CSV files carry the same four columns with a header row; an empty `label`
//! cell means unlabelled and an empty `provenance` cell means gold.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Post, RiskLevel};
use crate::error::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Expert-labelled (or unlabelled source) row.
    #[default]
    Gold,
    /// Label produced by the consensus filter.
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRow {
    pub post: Post,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// Guess from the file extension; anything other than `.csv` is JSONL.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Jsonl,
        }
    }
}

/// Ordered rows with unique post ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    rows: Vec<DatasetRow>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct RowRecord {
    post_id: String,
    text: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    provenance: Option<Provenance>,
}

impl RowRecord {
    fn into_row(self) -> Result<DatasetRow, String> {
        let label = match self.label.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(l) => Some(l.parse::<RiskLevel>().map_err(|e| e.to_string())?),
        };
        let post = Post {
            post_id: self.post_id,
            text: self.text,
            gold_label: label,
        };
        post.validate().map_err(|e| e.to_string())?;
        Ok(DatasetRow {
            post,
            provenance: self.provenance.unwrap_or_default(),
        })
    }

    fn from_row(row: &DatasetRow) -> RowRecord {
        RowRecord {
            post_id: row.post.post_id.clone(),
            text: row.post.text.clone(),
            label: row.post.gold_label.map(String::from),
            provenance: Some(row.provenance),
        }
    }
}

impl Dataset {
    pub fn new(rows: Vec<DatasetRow>) -> Result<Dataset, DataError> {
        let mut dataset = Dataset::default();
        for row in rows {
            dataset.push(row)?;
        }
        Ok(dataset)
    }

    /// Gold rows built from plain posts.
    pub fn from_posts(posts: impl IntoIterator<Item = Post>) -> Result<Dataset, DataError> {
        Dataset::new(
            posts
                .into_iter()
                .map(|post| DatasetRow {
                    post,
                    provenance: Provenance::Gold,
                })
                .collect(),
        )
    }

    pub fn push(&mut self, row: DatasetRow) -> Result<(), DataError> {
        if self.index.contains_key(&row.post.post_id) {
            return Err(DataError::DuplicateId(row.post.post_id));
        }
        self.index.insert(row.post.post_id.clone(), self.rows.len());
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[DatasetRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, post_id: &str) -> Option<&DatasetRow> {
        self.index.get(post_id).map(|&i| &self.rows[i])
    }

    pub fn contains(&self, post_id: &str) -> bool {
        self.index.contains_key(post_id)
    }

    pub fn posts(&self) -> impl Iterator<Item = &Post> {
        self.rows.iter().map(|r| &r.post)
    }

    pub fn gold(&self) -> impl Iterator<Item = &DatasetRow> {
        self.rows.iter().filter(|r| r.provenance == Provenance::Gold)
    }

    /// Label counts over every labelled row; all four classes are present.
    pub fn class_counts(&self) -> BTreeMap<RiskLevel, usize> {
        count_labels(self.rows.iter())
    }

    pub fn class_counts_for(&self, provenance: Provenance) -> BTreeMap<RiskLevel, usize> {
        count_labels(self.rows.iter().filter(|r| r.provenance == provenance))
    }

    pub fn ingest(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset, DataError> {
        match format {
            DataFormat::Jsonl => read_jsonl(path.as_ref()),
            DataFormat::Csv => read_csv(path.as_ref()),
        }
    }

    /// Ingest with the format chosen by file extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
        let path = path.as_ref();
        Dataset::ingest(path, DataFormat::from_path(path))
    }

    pub fn write(&self, path: impl AsRef<Path>, format: DataFormat) -> Result<(), DataError> {
        match format {
            DataFormat::Jsonl => self.write_jsonl(path.as_ref()),
            DataFormat::Csv => self.write_csv(path.as_ref()),
        }
    }

    fn write_jsonl(&self, path: &Path) -> Result<(), DataError> {
        let mut out = BufWriter::new(File::create(path)?);
        for row in &self.rows {
            serde_json::to_writer(&mut out, &RowRecord::from_row(row))?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["post_id", "text", "label", "provenance"])?;
        for row in &self.rows {
            writer.write_record([
                row.post.post_id.as_str(),
                row.post.text.as_str(),
                row.post.gold_label.map(RiskLevel::as_str).unwrap_or(""),
                match row.provenance {
                    Provenance::Gold => "gold",
                    Provenance::Pseudo => "pseudo",
                },
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn count_labels<'a>(rows: impl Iterator<Item = &'a DatasetRow>) -> BTreeMap<RiskLevel, usize> {
    let mut counts: BTreeMap<RiskLevel, usize> = RiskLevel::ALL.iter().map(|&l| (l, 0)).collect();
    for label in rows.filter_map(|r| r.post.gold_label) {
        *counts.entry(label).or_default() += 1;
    }
    counts
}

fn format_error(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Format {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn read_jsonl(path: &Path) -> Result<Dataset, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut dataset = Dataset::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RowRecord =
            serde_json::from_str(&line).map_err(|e| format_error(path, i + 1, e.to_string()))?;
        let row = record.into_row().map_err(|m| format_error(path, i + 1, m))?;
        dataset.push(row)?;
    }
    Ok(dataset)
}

fn read_csv(path: &Path) -> Result<Dataset, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut dataset = Dataset::default();
    let headers = reader.headers()?.clone();
    for result in reader.records() {
        let raw = result.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            format_error(path, line, e.to_string())
        })?;
        let line = raw.position().map(|p| p.line() as usize).unwrap_or(0);
        let record: RowRecord = raw
            .deserialize(Some(&headers))
            .map_err(|e| format_error(path, line, e.to_string()))?;
        let row = record.into_row().map_err(|m| format_error(path, line, m))?;
        dataset.push(row)?;
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        File::create(&path).unwrap().write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn reads_two_jsonl_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "d.jsonl",
            "{\"post_id\":\"a\",\"text\":\"one\",\"label\":\"ideation\",\"provenance\":\"gold\"}\n\
             {\"post_id\":\"b\",\"text\":\"two\",\"label\":null}\n",
        );
        let d = Dataset::ingest(&path, DataFormat::Jsonl).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.get("a").unwrap().post.gold_label, Some(RiskLevel::Ideation));
        assert_eq!(d.get("b").unwrap().post.gold_label, None);
        assert_eq!(d.get("b").unwrap().provenance, Provenance::Gold);
    }

    #[test]
    fn unknown_label_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "d.jsonl",
            "{\"post_id\":\"a\",\"text\":\"one\",\"label\":\"ideation\"}\n\
             {\"post_id\":\"b\",\"text\":\"two\",\"label\":\"unknown\"}\n",
        );
        match Dataset::ingest(&path, DataFormat::Jsonl) {
            Err(DataError::Format { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("unknown"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "d.jsonl",
            "{\"post_id\":\"a\",\"text\":\"one\"}\n{\"post_id\":\"a\",\"text\":\"two\"}\n",
        );
        assert!(matches!(
            Dataset::ingest(&path, DataFormat::Jsonl),
            Err(DataError::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn blank_text_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "d.jsonl", "{\"post_id\":\"a\",\"text\":\"  \"}\n");
        assert!(matches!(
            Dataset::ingest(&path, DataFormat::Jsonl),
            Err(DataError::Format { line: 1, .. })
        ));
    }

    #[test]
    fn csv_keeps_embedded_newlines() {
        let dir = tempfile::tempdir().unwrap();
        let text = "line one\nline \"two\", with comma\r\n\tand a tab";
        let d = Dataset::new(vec![
            DatasetRow {
                post: Post::labeled("x", text, RiskLevel::Attempt).unwrap(),
                provenance: Provenance::Pseudo,
            },
            DatasetRow {
                post: Post::new("y", "plain").unwrap(),
                provenance: Provenance::Gold,
            },
        ])
        .unwrap();
        let path = dir.path().join("d.csv");
        d.write(&path, DataFormat::Csv).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.get("x").unwrap().post.text.as_bytes(), text.as_bytes());
    }

    #[test]
    fn csv_bad_label_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "d.csv",
            "post_id,text,label,provenance\na,hello,ideation,gold\nb,\"multi\nline\",nope,\n",
        );
        assert!(matches!(
            Dataset::load(&path),
            Err(DataError::Format { line: 3, .. })
        ));
    }

    #[test]
    fn class_counts_cover_all_levels() {
        let d = Dataset::from_posts(vec![
            Post::labeled("a", "t", RiskLevel::Ideation).unwrap(),
            Post::labeled("b", "t", RiskLevel::Ideation).unwrap(),
            Post::new("c", "t").unwrap(),
        ])
        .unwrap();
        let counts = d.class_counts();
        assert_eq!(counts.len(), 4);
        assert_eq!(counts[&RiskLevel::Ideation], 2);
        assert_eq!(counts[&RiskLevel::Attempt], 0);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::from_posts(vec![
            Post::labeled("a", "ünïcode ✓", RiskLevel::Behaviour).unwrap(),
            Post::new("b", "x").unwrap(),
        ])
        .unwrap();
        let path = dir.path().join("d.jsonl");
        d.write(&path, DataFormat::Jsonl).unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), d);
    }
}
