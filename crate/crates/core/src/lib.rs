//! Pseudo-labeling pipeline for four-level suicide-risk classification of
//! social media posts.
//!
//! Stages: prompted annotation with several LLMs ([`annotator`]), unanimity
//! filtering into a training set ([`consensus`]), stratified folds and token
//! budgets ([`datasplit`]), fold averaging and weighted voting ([`ensemble`]),
//! evaluation ([`metrics`]), and a small differentiable classifier for
//! comparing the soft-F1 and cross-entropy losses ([`softf1`]).

pub mod annotator;
pub mod consensus;
pub mod datasplit;
pub mod domain;
pub mod ensemble;
pub mod error;
pub mod gateway;
pub mod metrics;
pub mod prompt;
pub mod softf1;

pub use domain::{
    severity_rank, Annotation, AnswerTriple, Post, ProbabilityVector, RiskLevel, YesNo,
};
