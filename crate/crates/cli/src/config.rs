//! Pipeline configuration file.
//!
//! One TOML document. Relative paths are resolved against the directory
//! holding the file. API keys are never read from the file: an annotator may
//! only name the environment variable that holds its key.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use serde::Deserialize;

use riskpipe_core::annotator::AnnotationPolicy;
use riskpipe_core::datasplit::DEFAULT_TOKEN_BUDGET;
use riskpipe_core::gateway::{DecodingConfig, RetryPolicy, DEFAULT_MAX_NEW_TOKENS};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_budget")]
    pub token_budget: usize,
    #[serde(default = "default_true")]
    pub truncation_marker: bool,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub annotators: Vec<AnnotatorConfig>,
    #[serde(default)]
    pub consensus: ConsensusConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Posts to pseudo-label.
    pub unlabeled: Option<PathBuf>,
    /// Labelled posts.
    pub gold: Option<PathBuf>,
    /// Reference labels for `evaluate`; defaults to `gold`.
    pub truths: Option<PathBuf>,
    /// Member predictions for `ensemble`; defaults to the annotation output.
    pub predictions: Option<PathBuf>,
    /// Ensemble member weights (JSON); defaults to the built-in five members.
    pub ensemble: Option<PathBuf>,
    /// Feature file for `train-toy`.
    pub features: Option<PathBuf>,
    /// Where artifacts are written; defaults to `out` next to the config.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusConfig {
    /// Annotators that must agree; defaults to every configured annotator.
    pub required: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorConfig {
    pub id: String,
    pub model: String,
    pub endpoint: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    pub classification_template: Option<PathBuf>,
    pub moveon_template: Option<PathBuf>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_reprompts")]
    pub max_reprompts: u32,
    #[serde(default = "default_true")]
    pub moveon_refinement: bool,
    #[serde(default)]
    pub moved_on_as_indicator: bool,
}

impl AnnotatorConfig {
    pub fn decoding(&self) -> DecodingConfig {
        DecodingConfig {
            model_name: self.model.clone(),
            endpoint_url: self.endpoint.clone(),
            temperature: self.temperature,
            max_new_tokens: self.max_new_tokens,
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_backoff: Duration::from_millis(self.backoff_ms),
        }
    }

    pub fn policy(&self) -> AnnotationPolicy {
        AnnotationPolicy {
            max_reprompts: self.max_reprompts,
            moveon_refinement: self.moveon_refinement,
            moved_on_as_indicator: self.moved_on_as_indicator,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

fn default_seed() -> u64 {
    42
}
fn default_k() -> usize {
    5
}
fn default_budget() -> usize {
    DEFAULT_TOKEN_BUDGET
}
fn default_true() -> bool {
    true
}
fn default_parallelism() -> usize {
    4
}
fn default_max_new_tokens() -> u32 {
    DEFAULT_MAX_NEW_TOKENS
}
fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_reprompts() -> u32 {
    1
}

impl Default for PipelineConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

fn resolve(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

fn must_exist(what: &str, path: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = path {
        ensure!(p.is_file(), "{what} file {} does not exist", p.display());
    }
    Ok(())
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve_paths(&base);
        if config.paths.out_dir.is_none() {
            config.paths.out_dir = Some(base.join("out"));
        }
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [
            &mut p.unlabeled,
            &mut p.gold,
            &mut p.truths,
            &mut p.predictions,
            &mut p.ensemble,
            &mut p.features,
            &mut p.out_dir,
        ] {
            resolve(base, path);
        }
        for a in &mut self.annotators {
            resolve(base, &mut a.classification_template);
            resolve(base, &mut a.moveon_template);
        }
    }

    /// Check value ranges and that every input file named in the config exists.
    pub fn validate(&self) -> Result<()> {
        ensure!(self.k >= 2, "k must be at least 2, got {}", self.k);
        let minimum = if self.truncation_marker { 3 } else { 2 };
        ensure!(
            self.token_budget >= minimum,
            "token_budget must be at least {minimum}, got {}",
            self.token_budget
        );
        ensure!(self.parallelism >= 1, "parallelism must be at least 1");
        must_exist("unlabeled", &self.paths.unlabeled)?;
        must_exist("gold", &self.paths.gold)?;
        must_exist("truths", &self.paths.truths)?;
        must_exist("ensemble", &self.paths.ensemble)?;
        must_exist("features", &self.paths.features)?;
        let mut ids = std::collections::BTreeSet::new();
        for a in &self.annotators {
            ensure!(!a.id.trim().is_empty(), "annotator with empty id");
            ensure!(ids.insert(a.id.as_str()), "duplicate annotator id {:?}", a.id);
            must_exist(&format!("annotator {} classification template", a.id), &a.classification_template)?;
            must_exist(&format!("annotator {} move-on template", a.id), &a.moveon_template)?;
            if let Some(var) = &a.api_key_env {
                ensure!(!var.trim().is_empty(), "annotator {}: api_key_env is empty", a.id);
            }
        }
        if let Some(required) = &self.consensus.required {
            if required.is_empty() {
                bail!("consensus.required is empty");
            }
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.seed, c.k, c.token_budget, c.parallelism), (42, 5, 2500, 4));
        assert!(c.truncation_marker);
    }

    #[test]
    fn paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("gold.jsonl"), "").unwrap();
        let path = dir.path().join("pipeline.toml");
        std::fs::write(&path, "k = 3\n[paths]\ngold = \"gold.jsonl\"\n").unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.paths.gold.clone().unwrap(), dir.path().join("gold.jsonl"));
        assert_eq!(c.out_dir(), dir.path().join("out"));
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        for bad in [
            "k = 1",
            "token_budget = 2",
            "[paths]\ngold = \"missing.jsonl\"",
            "api_key = \"secret\"",
            "[[annotators]]\nid = \"a\"\nmodel = \"m\"\nendpoint = \"http://x\"\napi_key = \"k\"",
        ] {
            std::fs::write(&path, bad).unwrap();
            assert!(PipelineConfig::load(&path).is_err(), "{bad}");
        }
    }
}
