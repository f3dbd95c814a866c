//! Prompted annotation of a single post.
//!
//! The classification prompt asks three Yes/No questions (Ideation,
//! Behaviour, Attempt). The label is read right to left: the most severe
//! question answered Yes wins, and three No answers mean Indicator. Posts first
//! labelled Attempt get a second prompt asking whether the writer has moved on;
//! a Yes there flips the Attempt answer to No.

pub mod parse;

use std::num::NonZeroUsize;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{Annotation, AnswerTriple, Post, RiskLevel, YesNo};
use crate::error::{AnnotationError, GatewayError, ParseError};
use crate::gateway::{bounded_map, CompletionBackend, DecodingConfig};
use crate::prompt::{render_classification_prompt, render_moveon_prompt, PromptTemplate};

pub use parse::{parse_answer_triple, parse_moveon, ParsedCompletion};

/// Map answers to a label, scanning Attempt, Behaviour, Ideation in turn.
pub fn triple_to_label(triple: AnswerTriple) -> RiskLevel {
    if triple.attempt.is_yes() {
        RiskLevel::Attempt
    } else if triple.behaviour.is_yes() {
        RiskLevel::Behaviour
    } else if triple.ideation.is_yes() {
        RiskLevel::Ideation
    } else {
        RiskLevel::Indicator
    }
}

/// Apply the move-on answer to an initial Attempt triple.
pub fn refine_attempt(triple: AnswerTriple, moveon: YesNo) -> Result<AnswerTriple, AnnotationError> {
    if !triple.attempt.is_yes() {
        return Err(AnnotationError::Precondition);
    }
    Ok(match moveon {
        YesNo::Yes => AnswerTriple {
            attempt: YesNo::No,
            ..triple
        },
        YesNo::No => triple,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationPolicy {
    /// Extra identical requests after an unparseable completion.
    pub max_reprompts: u32,
    /// Ask the move-on question for initial Attempt labels.
    pub moveon_refinement: bool,
    /// Relabel moved-on Attempt posts as Indicator (all answers No) instead of
    /// flipping only the Attempt answer. Off by default; it validated worse.
    pub moved_on_as_indicator: bool,
}

impl Default for AnnotationPolicy {
    fn default() -> Self {
        AnnotationPolicy {
            max_reprompts: 1,
            moveon_refinement: true,
            moved_on_as_indicator: false,
        }
    }
}

/// One JSONL row of annotator output. Failed posts carry `error` and no label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub post_id: String,
    pub annotator_id: String,
    pub label: Option<RiskLevel>,
    #[serde(default)]
    pub triple: Option<AnswerTriple>,
    #[serde(default)]
    pub refined: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AnnotationRecord {
    pub fn failed(post_id: &str, annotator_id: &str, error: &AnnotationError) -> Self {
        AnnotationRecord {
            post_id: post_id.to_string(),
            annotator_id: annotator_id.to_string(),
            label: None,
            triple: None,
            refined: false,
            error: Some(error.to_string()),
        }
    }

    pub fn annotation(&self) -> Option<Annotation> {
        self.label.map(|label| Annotation {
            post_id: self.post_id.clone(),
            annotator_id: self.annotator_id.clone(),
            label,
            triple: self.triple,
            refined: self.refined,
        })
    }
}

impl From<Annotation> for AnnotationRecord {
    fn from(a: Annotation) -> Self {
        AnnotationRecord {
            post_id: a.post_id,
            annotator_id: a.annotator_id,
            label: Some(a.label),
            triple: a.triple,
            refined: a.refined,
            error: None,
        }
    }
}

/// An LLM endpoint plus the prompts used to annotate with it.
#[derive(Clone)]
pub struct Annotator {
    pub id: String,
    backend: Arc<dyn CompletionBackend>,
    pub decoding: DecodingConfig,
    pub classification: PromptTemplate,
    pub moveon: PromptTemplate,
    pub policy: AnnotationPolicy,
}

impl std::fmt::Debug for Annotator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Annotator")
            .field("id", &self.id)
            .field("decoding", &self.decoding)
            .field("policy", &self.policy)
            .finish_non_exhaustive()
    }
}

impl Annotator {
    pub fn new(
        id: impl Into<String>,
        backend: Arc<dyn CompletionBackend>,
        decoding: DecodingConfig,
        classification: PromptTemplate,
        moveon: PromptTemplate,
    ) -> Self {
        Annotator {
            id: id.into(),
            backend,
            decoding,
            classification,
            moveon,
            policy: AnnotationPolicy::default(),
        }
    }

    pub fn with_policy(mut self, policy: AnnotationPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Classify one post, refining initial Attempt labels.
    pub fn annotate_post(&self, post: &Post) -> Result<Annotation, AnnotationError> {
        let template_err = |source| AnnotationError::Template {
            post_id: post.post_id.clone(),
            source,
        };
        let prompt = render_classification_prompt(post, &self.classification).map_err(template_err)?;
        let mut triple = self.ask(post, &prompt, |t| parse_answer_triple(t).map(|p| p.triple))?;
        let mut refined = false;

        if triple_to_label(triple) == RiskLevel::Attempt && self.policy.moveon_refinement {
            let prompt = render_moveon_prompt(post, &self.moveon).map_err(template_err)?;
            let moved_on = self.ask(post, &prompt, parse_moveon)?;
            if moved_on.is_yes() {
                triple = if self.policy.moved_on_as_indicator {
                    AnswerTriple::new(YesNo::No, YesNo::No, YesNo::No)
                } else {
                    refine_attempt(triple, moved_on)?
                };
                refined = true;
            }
        }

        Ok(Annotation {
            post_id: post.post_id.clone(),
            annotator_id: self.id.clone(),
            label: triple_to_label(triple),
            triple: Some(triple),
            refined,
        })
    }

    /// Annotate many posts with at most `parallelism` posts in flight.
    pub fn annotate_all(&self, posts: &[Post], parallelism: NonZeroUsize) -> Vec<AnnotationRecord> {
        bounded_map(posts, parallelism, |post| match self.annotate_post(post) {
            Ok(a) => AnnotationRecord::from(a),
            Err(e) => {
                log::warn!("annotator {}: {e}", self.id);
                AnnotationRecord::failed(&post.post_id, &self.id, &e)
            }
        })
    }

    /// Send `prompt`, re-sending it when the completion cannot be parsed.
    fn ask<T>(
        &self,
        post: &Post,
        prompt: &str,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, AnnotationError> {
        let attempts = self.policy.max_reprompts + 1;
        let mut last: Option<AnnotationError> = None;
        for _ in 0..attempts {
            match self.backend.complete(prompt, &self.decoding) {
                Ok(result) => match parse(&result.text) {
                    Ok(value) => return Ok(value),
                    Err(source) => {
                        last = Some(AnnotationError::Parse {
                            post_id: post.post_id.clone(),
                            attempts,
                            source,
                        })
                    }
                },
                Err(source @ GatewayError::Budget { .. }) | Err(source @ GatewayError::Protocol(_)) => {
                    last = Some(AnnotationError::Gateway {
                        post_id: post.post_id.clone(),
                        source,
                    })
                }
                Err(source) => {
                    return Err(AnnotationError::Gateway {
                        post_id: post.post_id.clone(),
                        source,
                    })
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
