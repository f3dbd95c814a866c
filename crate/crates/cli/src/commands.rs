//! Subcommand implementations. Each one loads its inputs, calls into
//! `riskpipe_core`, and writes artifacts under the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Display};
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use riskpipe_core::annotator::{AnnotationRecord, Annotator};
use riskpipe_core::consensus::{assemble_training_set, unanimous_filter};
use riskpipe_core::datasplit::{
    read_jsonl, stratified_folds, truncate_middle, write_jsonl, DataFormat, Dataset, DatasetRow,
    PunctuationTokenizer, Tokenizer, WhitespaceTokenizer,
};
use riskpipe_core::ensemble::{ensemble_predictions, EnsembleConfig, PredictionRow};
use riskpipe_core::error::EnsembleError;
use riskpipe_core::gateway::mock::{MockScript, MockServer, MOCK_ADDR_ENV};
use riskpipe_core::gateway::{CompletionBackend, LlmClient};
use riskpipe_core::metrics::{agreement_matrix, evaluate as evaluate_preds, MetricsReport};
use riskpipe_core::prompt::{PromptTemplate, TemplateKind};
use riskpipe_core::softf1::{
    compare_losses, imbalanced_gaussians, load_features, separable_blobs, train_toy as train,
    write_curve_csv, ComparisonConfig, FeatureSet, LossKind, TrainConfig, TRAINING_SET_PROPORTIONS,
};
use riskpipe_core::{Post, RiskLevel};

use crate::config::PipelineConfig;
use crate::GlobalArgs;

/// Marks an error caused by the caller's config, flags or input files.
#[derive(Debug)]
pub struct UserError(pub String);

impl Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

fn user_error(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UserError(message.into()))
}

trait UserResult<T> {
    fn user(self) -> Result<T>;
    fn user_ctx(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T, E: Display> UserResult<T> for std::result::Result<T, E> {
    fn user(self) -> Result<T> {
        self.map_err(|e| user_error(e.to_string()))
    }

    fn user_ctx(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| user_error(format!("{}: {e}", what())))
    }
}

/// Config from `--config` (or defaults) with the global overrides applied.
fn load_config(g: &GlobalArgs) -> Result<PipelineConfig> {
    let mut config = match &g.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| user_error(format!("{e:#}")))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(p) = g.parallelism {
        config.parallelism = p;
    }
    if let Some(out) = &g.out {
        config.paths.out_dir = Some(out.clone());
    }
    config.validate().map_err(|e| user_error(format!("{e:#}")))?;
    Ok(config)
}

fn out_dir(config: &PipelineConfig) -> Result<PathBuf> {
    let dir = config.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn require_path<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| user_error(format!("no {what} file: set it in the config or pass it as a flag")))
}

fn existing(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(user_error(format!("input file {} does not exist", path.display())))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).user_ctx(|| format!("loading {}", path.display()))
}

fn class_line(counts: &BTreeMap<RiskLevel, usize>) -> String {
    RiskLevel::ALL
        .iter()
        .map(|l| format!("{}={}", l.display_name(), counts.get(l).copied().unwrap_or(0)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn template(path: &Option<PathBuf>, kind: TemplateKind) -> Result<PromptTemplate> {
    match path {
        Some(p) => PromptTemplate::from_file(p, kind).user_ctx(|| format!("loading template {}", p.display())),
        None => Ok(match kind {
            TemplateKind::Classification => PromptTemplate::default_classification(),
            TemplateKind::MoveOn => PromptTemplate::default_moveon(),
        }),
    }
}

pub fn annotate(g: &GlobalArgs) -> Result<()> {
    let config = load_config(g)?;
    if config.annotators.is_empty() {
        return Err(user_error("no annotators configured"));
    }
    let posts_path = require_path(&config.paths.unlabeled, "unlabeled")?;
    let posts: Vec<Post> = load_dataset(posts_path)?.posts().cloned().collect();

    // Build every annotator before sending any request so that a bad
    // template or missing key fails without partial output.
    let mut fleet = Vec::with_capacity(config.annotators.len());
    for a in &config.annotators {
        let classification = template(&a.classification_template, TemplateKind::Classification)?;
        let moveon = template(&a.moveon_template, TemplateKind::MoveOn)?;
        let mut client = LlmClient::new(a.timeout(), a.retry());
        if let Some(var) = &a.api_key_env {
            let key = std::env::var(var)
                .map_err(|_| user_error(format!("annotator {}: environment variable {var} is not set", a.id)))?;
            client = client.with_api_key(key);
        }
        let backend: Arc<dyn CompletionBackend> = Arc::new(client);
        fleet.push(Annotator::new(&a.id, backend, a.decoding(), classification, moveon).with_policy(a.policy()));
    }

    let parallelism = NonZeroUsize::new(config.parallelism).expect("validated");
    let mut records: Vec<AnnotationRecord> = Vec::with_capacity(posts.len() * fleet.len());
    for annotator in &fleet {
        info!("annotating {} posts with {}", posts.len(), annotator.id);
        let batch = annotator.annotate_all(&posts, parallelism);
        let mut counts: BTreeMap<RiskLevel, usize> = BTreeMap::new();
        let mut failed = 0;
        for r in &batch {
            match r.label {
                Some(l) => *counts.entry(l).or_default() += 1,
                None => failed += 1,
            }
        }
        println!("{}: {} failed={}", annotator.id, class_line(&counts), failed);
        records.extend(batch);
    }

    let path = out_dir(&config)?.join("annotations.jsonl");
    write_jsonl(&path, &records)?;
    println!("wrote {} rows to {}", records.len(), path.display());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ConsensusArgs {
    /// Annotation rows (JSONL); defaults to annotations.jsonl in the output directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    post_id: String,
    label: RiskLevel,
}

pub fn consensus(g: &GlobalArgs, args: &ConsensusArgs) -> Result<()> {
    let config = load_config(g)?;
    let out = out_dir(&config)?;
    let input = existing(args.input.clone().unwrap_or_else(|| out.join("annotations.jsonl")))?;
    let records: Vec<AnnotationRecord> = read_jsonl(&input).user()?;

    let required: BTreeSet<String> = match (&config.consensus.required, config.annotators.is_empty()) {
        (Some(ids), _) => ids.iter().cloned().collect(),
        (None, false) => config.annotators.iter().map(|a| a.id.clone()).collect(),
        (None, true) => records.iter().map(|r| r.annotator_id.clone()).collect(),
    };
    let (kept, report) = unanimous_filter(&records, &required).user()?;

    let pseudo: Vec<LabelRow> = kept
        .iter()
        .map(|(post_id, label)| LabelRow {
            post_id: post_id.clone(),
            label: *label,
        })
        .collect();
    write_jsonl(out.join("pseudo_labels.jsonl"), &pseudo)?;
    write_json(&out.join("consensus_report.json"), &report)?;
    println!(
        "agreed on {} of {} posts (coverage {:.4}): {}",
        report.agreed_posts,
        report.total_posts,
        report.coverage,
        class_line(&report.per_class_counts)
    );

    if let (Some(gold), Some(unlabeled)) = (&config.paths.gold, &config.paths.unlabeled) {
        let gold: Vec<Post> = load_dataset(gold)?.posts().cloned().collect();
        let store = load_dataset(unlabeled)?;
        let training = assemble_training_set(&gold, &kept, &store).user()?;
        let path = out.join("training_set.jsonl");
        training.write(&path, DataFormat::Jsonl)?;
        println!(
            "training set: {} rows ({} gold + {} pseudo) in {}",
            training.len(),
            gold.len(),
            kept.len(),
            path.display()
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    /// Labelled dataset; defaults to training_set.jsonl in the output directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

pub fn split(g: &GlobalArgs, args: &SplitArgs) -> Result<()> {
    let config = load_config(g)?;
    let out = out_dir(&config)?;
    let input = existing(args.input.clone().unwrap_or_else(|| out.join("training_set.jsonl")))?;
    let dataset = load_dataset(&input)?;
    let folds = stratified_folds(&dataset, config.k, config.seed).user()?;
    write_json(&out.join("folds.json"), &folds)?;
    for (i, ids) in folds.folds().iter().enumerate() {
        let (train_ids, _) = folds.split(&dataset, i);
        println!("fold {i}: {} validation, {} training", ids.len(), train_ids.len());
    }

    let tokenizer = WhitespaceTokenizer;
    let mut truncated = Dataset::default();
    let mut cut = 0;
    for row in dataset.rows() {
        let text = truncate_middle(&row.post.text, &tokenizer, config.token_budget, config.truncation_marker).user()?;
        if text != row.post.text {
            cut += 1;
        }
        truncated.push(DatasetRow {
            post: Post {
                text,
                ..row.post.clone()
            },
            provenance: row.provenance,
        })?;
    }
    truncated.write(out.join("training_set.truncated.jsonl"), DataFormat::Jsonl)?;
    println!("{cut} of {} posts truncated to {} tokens", dataset.len(), config.token_budget);
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    /// Member predictions (JSONL rows with post_id, annotator_id and label or probs).
    #[arg(long)]
    pub input: Option<PathBuf>,
}

pub fn ensemble(g: &GlobalArgs, args: &EnsembleArgs) -> Result<()> {
    let config = load_config(g)?;
    let out = out_dir(&config)?;
    let weights = match &config.paths.ensemble {
        Some(path) => EnsembleConfig::from_json_file(path).user_ctx(|| format!("loading {}", path.display()))?,
        None => EnsembleConfig::default_fleet(),
    };
    fs::write(out.join("ensemble_weights.json"), weights.to_json() + "\n")?;
    for m in weights.members() {
        println!("{}: {}", m.id, m.weight);
    }

    let input = match (&args.input, &config.paths.predictions) {
        (Some(p), _) | (None, Some(p)) => p.clone(),
        (None, None) => out.join("annotations.jsonl"),
    };
    let input = existing(input)?;
    let rows: Vec<PredictionRow> = read_jsonl(&input).user()?;
    let mut by_post: BTreeMap<&str, Vec<PredictionRow>> = BTreeMap::new();
    let mut dropped = 0;
    for row in &rows {
        if row.label.is_none() && row.probs.is_none() {
            dropped += 1;
            continue;
        }
        by_post.entry(&row.post_id).or_default().push(row.clone());
    }
    if dropped > 0 {
        warn!("{dropped} rows without a label or probabilities ignored");
    }

    let mut predictions = Vec::with_capacity(by_post.len());
    let mut skipped = 0;
    for (post_id, group) in by_post {
        match ensemble_predictions(&group, &weights) {
            Ok(mut labels) => predictions.extend(labels.drain(..).map(|(post_id, label)| LabelRow { post_id, label })),
            Err(EnsembleError::MissingMember(ids)) => {
                skipped += 1;
                warn!("post {post_id} skipped, missing {}", ids.join(", "));
            }
            Err(e) => return Err(user_error(e.to_string())),
        }
    }
    let path = out.join("ensemble_predictions.jsonl");
    write_jsonl(&path, &predictions)?;
    println!(
        "{} posts predicted, {skipped} skipped for missing members; wrote {}",
        predictions.len(),
        path.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Predictions (JSONL rows with post_id, label and optional annotator_id);
    /// defaults to ensemble_predictions.jsonl in the output directory.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Reference labels; defaults to the configured truths, then gold.
    #[arg(long)]
    pub truths: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct EvalRow {
    post_id: String,
    #[serde(default)]
    annotator_id: Option<String>,
    #[serde(default)]
    label: Option<RiskLevel>,
}

/// Group name for prediction rows without an annotator id.
const UNNAMED_GROUP: &str = "predictions";

fn read_eval_rows(path: &Path) -> Result<Vec<EvalRow>> {
    if DataFormat::from_path(path) == DataFormat::Csv {
        let dataset = load_dataset(path)?;
        return Ok(dataset
            .rows()
            .iter()
            .map(|r| EvalRow {
                post_id: r.post.post_id.clone(),
                annotator_id: None,
                label: r.post.gold_label,
            })
            .collect());
    }
    read_jsonl(path).user()
}

pub fn evaluate(g: &GlobalArgs, args: &EvaluateArgs) -> Result<()> {
    let config = load_config(g)?;
    let out = out_dir(&config)?;
    let preds_path = existing(
        args.predictions
            .clone()
            .unwrap_or_else(|| out.join("ensemble_predictions.jsonl")),
    )?;
    let truths_path = match (&args.truths, &config.paths.truths, &config.paths.gold) {
        (Some(p), _, _) | (None, Some(p), _) | (None, None, Some(p)) => existing(p.clone())?,
        (None, None, None) => return Err(user_error("no truths file: pass --truths or set paths.truths")),
    };
    let truths: BTreeMap<String, RiskLevel> = load_dataset(&truths_path)?
        .rows()
        .iter()
        .filter_map(|r| r.post.gold_label.map(|l| (r.post.post_id.clone(), l)))
        .collect();

    let mut groups: BTreeMap<String, BTreeMap<String, RiskLevel>> = BTreeMap::new();
    let mut unlabeled = 0;
    for row in read_eval_rows(&preds_path)? {
        let Some(label) = row.label else {
            unlabeled += 1;
            continue;
        };
        let group = row.annotator_id.unwrap_or_else(|| UNNAMED_GROUP.to_string());
        if groups.entry(group.clone()).or_default().insert(row.post_id.clone(), label).is_some() {
            return Err(user_error(format!("duplicate prediction for post {} by {group}", row.post_id)));
        }
    }
    if unlabeled > 0 {
        warn!("{unlabeled} prediction rows without a label ignored");
    }
    if groups.is_empty() {
        return Err(user_error(format!("{} has no labelled predictions", preds_path.display())));
    }

    let mut reports: BTreeMap<String, MetricsReport> = BTreeMap::new();
    let mut text = String::new();
    for (group, preds) in &groups {
        let (p, t): (Vec<RiskLevel>, Vec<RiskLevel>) = preds
            .iter()
            .filter_map(|(id, &label)| truths.get(id).map(|&truth| (label, truth)))
            .unzip();
        if p.len() < preds.len() {
            warn!("{group}: {} predicted posts have no reference label", preds.len() - p.len());
        }
        let report = evaluate_preds(&p, &t).user_ctx(|| format!("evaluating {group}"))?;
        println!(
            "{group}: n={} accuracy={:.4} macro_f1={:.4} weighted_f1={:.4}",
            p.len(),
            report.accuracy,
            report.macro_f1,
            report.weighted_f1
        );
        if groups.len() > 1 {
            text.push_str(&format!("== {group} ==\n"));
        }
        text.push_str(&report.to_text());
        text.push('\n');
        reports.insert(group.clone(), report);
    }
    write_json(&out.join("metrics.json"), &reports)?;
    fs::write(out.join("classification_report.txt"), text)?;

    if groups.len() > 1 {
        let mut common: Option<BTreeSet<&String>> = None;
        for preds in groups.values() {
            let ids: BTreeSet<&String> = preds.keys().collect();
            common = Some(match common {
                None => ids,
                Some(c) => c.intersection(&ids).copied().collect(),
            });
        }
        let common = common.unwrap_or_default();
        let lists: BTreeMap<String, Vec<RiskLevel>> = groups
            .iter()
            .map(|(group, preds)| (group.clone(), common.iter().map(|id| preds[*id]).collect()))
            .collect();
        let matrix = agreement_matrix(&lists)?;
        fs::write(out.join("agreement.csv"), matrix.to_csv())?;
        println!("agreement over {} common posts written", common.len());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Synthetic {
    /// Four well separated clusters.
    Blobs,
    /// Overlapping Gaussians with training-set class proportions.
    Imbalanced,
}

#[derive(Debug, Clone, Args)]
pub struct TrainToyArgs {
    /// soft_f1 or cross_entropy.
    #[arg(long, default_value = "soft_f1")]
    pub loss: LossKind,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Feature file (CSV with a label column, or JSONL); defaults to the configured one.
    #[arg(long, conflicts_with = "synthetic")]
    pub features: Option<PathBuf>,
    /// Generate data instead of reading a feature file.
    #[arg(long, value_enum)]
    pub synthetic: Option<Synthetic>,
    /// Sample count for synthetic data.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Feature dimension for synthetic data.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// Also run the seeded soft-F1 vs cross-entropy comparison on held-out data.
    #[arg(long)]
    pub compare: bool,
    /// Seeds in the comparison.
    #[arg(long, default_value_t = 10)]
    pub compare_seeds: u64,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    config: TrainConfig,
    samples: usize,
    dim: usize,
    initial_loss: f64,
    final_loss: f64,
    report: MetricsReport,
}

#[derive(Debug, Serialize)]
struct ComparisonSummary {
    config: ComparisonConfig,
    seeds: Vec<riskpipe_core::softf1::SeedComparison>,
    mean_soft_f1_macro_f1: f64,
    mean_cross_entropy_macro_f1: f64,
}

fn training_data(config: &PipelineConfig, args: &TrainToyArgs) -> Result<FeatureSet> {
    let path = args.features.clone().or_else(|| config.paths.features.clone());
    match (args.synthetic, path) {
        (Some(Synthetic::Blobs), _) => Ok(separable_blobs(args.samples, args.dim, config.seed)),
        (Some(Synthetic::Imbalanced), _) | (None, None) => Ok(imbalanced_gaussians(
            args.samples,
            args.dim,
            &TRAINING_SET_PROPORTIONS,
            ComparisonConfig::default().separation,
            config.seed,
        )),
        (None, Some(path)) => {
            let path = existing(path)?;
            load_features(&path).user_ctx(|| format!("loading {}", path.display()))
        }
    }
}

pub fn train_toy(g: &GlobalArgs, args: &TrainToyArgs) -> Result<()> {
    let config = load_config(g)?;
    let out = out_dir(&config)?;
    if !(args.lr.is_finite() && args.lr > 0.0) {
        return Err(user_error(format!("--lr must be positive, got {}", args.lr)));
    }
    let data = training_data(&config, args)?;
    let train_config = TrainConfig {
        lr: args.lr,
        ..TrainConfig::new(args.loss, args.epochs, config.seed)
    };
    let outcome = match train(&data.features, &data.labels, &train_config) {
        Ok(o) => o,
        Err(e @ riskpipe_core::error::LabError::DegenerateData(_)) => return Err(user_error(e.to_string())),
        Err(e @ riskpipe_core::error::LabError::Shape(_)) => return Err(user_error(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    write_curve_csv(&outcome.curve, out.join("train_curve.csv"))?;
    let first = outcome.curve.first().expect("curve has epoch 0");
    let last = outcome.curve.last().expect("curve has epoch 0");
    let summary = TrainSummary {
        config: train_config,
        samples: data.labels.len(),
        dim: data.features.ncols(),
        initial_loss: first.loss,
        final_loss: last.loss,
        report: outcome.report.clone(),
    };
    write_json(&out.join("train_metrics.json"), &summary)?;
    write_json(&out.join("model.json"), &outcome.model)?;
    println!(
        "{:?}: loss {:.6} -> {:.6}, training accuracy {:.4}, macro F1 {:.4}",
        args.loss, first.loss, last.loss, outcome.report.accuracy, outcome.report.macro_f1
    );

    if args.compare {
        let cmp_config = ComparisonConfig {
            seeds: args.compare_seeds,
            ..ComparisonConfig::default()
        };
        let seeds = compare_losses(&cmp_config)?;
        let n = seeds.len().max(1) as f64;
        let summary = ComparisonSummary {
            config: cmp_config,
            mean_soft_f1_macro_f1: seeds.iter().map(|s| s.soft_f1_macro_f1).sum::<f64>() / n,
            mean_cross_entropy_macro_f1: seeds.iter().map(|s| s.cross_entropy_macro_f1).sum::<f64>() / n,
            seeds,
        };
        write_json(&out.join("loss_comparison.json"), &summary)?;
        println!(
            "held-out macro F1 over {} seeds: soft-F1 {:.4}, cross-entropy {:.4}",
            summary.seeds.len(),
            summary.mean_soft_f1_macro_f1,
            summary.mean_cross_entropy_macro_f1
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Dataset to describe; defaults to the configured unlabeled, then gold file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Histogram bin width in words/tokens.
    #[arg(long, default_value_t = 50)]
    pub bin_width: usize,
}

/// Counts per `[start, start + width)` bin, covering `0..=max`.
fn histogram(values: &[usize], width: usize, max: usize) -> Vec<usize> {
    let mut bins = vec![0; max / width + 1];
    for &v in values {
        bins[v / width] += 1;
    }
    bins
}

fn describe(values: &[usize]) -> String {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mean = sorted.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    format!("min {} median {median} mean {mean:.1} max {}", sorted[0], sorted[n - 1])
}

pub fn stats(g: &GlobalArgs, args: &StatsArgs) -> Result<()> {
    let config = load_config(g)?;
    if args.bin_width == 0 {
        return Err(user_error("--bin-width must be at least 1"));
    }
    let input = match (&args.input, &config.paths.unlabeled, &config.paths.gold) {
        (Some(p), _, _) | (None, Some(p), _) | (None, None, Some(p)) => existing(p.clone())?,
        (None, None, None) => return Err(user_error("no input: pass --input or set paths.unlabeled")),
    };
    let dataset = load_dataset(&input)?;
    if dataset.is_empty() {
        return Err(user_error(format!("{} has no posts", input.display())));
    }
    let tokenizer = PunctuationTokenizer;
    let words: Vec<usize> = dataset.posts().map(|p| p.text.split_whitespace().count()).collect();
    let tokens: Vec<usize> = dataset.posts().map(|p| tokenizer.count(&p.text)).collect();
    let max = words.iter().chain(&tokens).copied().max().unwrap_or(0);
    let word_bins = histogram(&words, args.bin_width, max);
    let token_bins = histogram(&tokens, args.bin_width, max);

    let out = out_dir(&config)?;
    let mut writer = csv::Writer::from_path(out.join("length_histogram.csv"))?;
    writer.write_record(["bin_start", "bin_end", "words", "tokens"])?;
    for (i, (w, t)) in word_bins.iter().zip(&token_bins).enumerate() {
        let start = i * args.bin_width;
        writer.serialize((start, start + args.bin_width, w, t))?;
    }
    writer.flush()?;

    let over = tokens.iter().filter(|&&t| t > config.token_budget).count();
    println!("{} posts", dataset.len());
    println!("words:  {}", describe(&words));
    println!("tokens: {}", describe(&tokens));
    println!("{over} posts exceed the {}-token budget", config.token_budget);
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct MockServerArgs {
    /// Mock script (JSON rules).
    #[arg(long)]
    pub script: PathBuf,
    /// Bind address.
    #[arg(long, env = MOCK_ADDR_ENV, default_value = "127.0.0.1:8000")]
    pub addr: String,
}

pub fn mock_server(args: &MockServerArgs) -> Result<()> {
    let script = MockScript::from_file(&args.script).user_ctx(|| format!("loading {}", args.script.display()))?;
    let server = MockServer::start(script, &args.addr)?;
    println!("{}", server.url());
    server.wait();
    Ok(())
}
