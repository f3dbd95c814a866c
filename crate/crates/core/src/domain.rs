//! Label, post and annotation types shared across the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Four-level ordinal risk label, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RiskLevel {
    /// No explicit expression concerning suicide.
    Indicator,
    /// Explicit suicidal expression without a plan.
    Ideation,
    /// Explicit expression plus a plan or self-harming behaviour.
    Behaviour,
    /// Explicit expression concerning a historic attempt.
    Attempt,
}

impl RiskLevel {
    /// All levels in ascending severity.
    pub const ALL: [RiskLevel; 4] = [
        RiskLevel::Indicator,
        RiskLevel::Ideation,
        RiskLevel::Behaviour,
        RiskLevel::Attempt,
    ];

    pub const COUNT: usize = 4;

    /// Severity rank: Indicator 0 through Attempt 3.
    pub fn severity_rank(self) -> usize {
        match self {
            RiskLevel::Indicator => 0,
            RiskLevel::Ideation => 1,
            RiskLevel::Behaviour => 2,
            RiskLevel::Attempt => 3,
        }
    }

    pub fn from_rank(rank: usize) -> Option<RiskLevel> {
        RiskLevel::ALL.get(rank).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Indicator => "indicator",
            RiskLevel::Ideation => "ideation",
            RiskLevel::Behaviour => "behaviour",
            RiskLevel::Attempt => "attempt",
        }
    }

    /// Capitalised name used in human-facing reports.
    pub fn display_name(self) -> &'static str {
        match self {
            RiskLevel::Indicator => "Indicator",
            RiskLevel::Ideation => "Ideation",
            RiskLevel::Behaviour => "Behaviour",
            RiskLevel::Attempt => "Attempt",
        }
    }
}

/// Free function form of [`RiskLevel::severity_rank`].
pub fn severity_rank(level: RiskLevel) -> usize {
    level.severity_rank()
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskLevel {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "indicator" => Ok(RiskLevel::Indicator),
            "ideation" => Ok(RiskLevel::Ideation),
            "behaviour" | "behavior" => Ok(RiskLevel::Behaviour),
            "attempt" => Ok(RiskLevel::Attempt),
            _ => Err(DomainError::UnknownLabel(s.to_string())),
        }
    }
}

impl From<RiskLevel> for String {
    fn from(level: RiskLevel) -> String {
        level.as_str().to_string()
    }
}

impl TryFrom<String> for RiskLevel {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    pub fn is_yes(self) -> bool {
        self == YesNo::Yes
    }

    /// Case-insensitive match of a bare `yes` / `no` word.
    pub fn from_word(word: &str) -> Option<YesNo> {
        if word.eq_ignore_ascii_case("yes") {
            Some(YesNo::Yes)
        } else if word.eq_ignore_ascii_case("no") {
            Some(YesNo::No)
        } else {
            None
        }
    }
}

impl fmt::Display for YesNo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            YesNo::Yes => "Yes",
            YesNo::No => "No",
        })
    }
}

impl From<bool> for YesNo {
    fn from(b: bool) -> Self {
        if b {
            YesNo::Yes
        } else {
            YesNo::No
        }
    }
}

/// A single text unit, optionally carrying an expert label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub text: String,
    #[serde(default)]
    pub gold_label: Option<RiskLevel>,
}

impl Post {
    pub fn new(post_id: impl Into<String>, text: impl Into<String>) -> Result<Post, DomainError> {
        let post = Post {
            post_id: post_id.into(),
            text: text.into(),
            gold_label: None,
        };
        post.validate()?;
        Ok(post)
    }

    pub fn labeled(
        post_id: impl Into<String>,
        text: impl Into<String>,
        label: RiskLevel,
    ) -> Result<Post, DomainError> {
        let mut post = Post::new(post_id, text)?;
        post.gold_label = Some(label);
        Ok(post)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.post_id.is_empty() {
            return Err(DomainError::EmptyPostId);
        }
        if self.text.trim().is_empty() {
            return Err(DomainError::EmptyText(self.post_id.clone()));
        }
        Ok(())
    }
}

/// Yes/No answers to the (Ideation, Behaviour, Attempt) questions, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnswerTriple {
    pub ideation: YesNo,
    pub behaviour: YesNo,
    pub attempt: YesNo,
}

impl AnswerTriple {
    pub fn new(ideation: YesNo, behaviour: YesNo, attempt: YesNo) -> Self {
        AnswerTriple {
            ideation,
            behaviour,
            attempt,
        }
    }

    pub fn as_array(&self) -> [YesNo; 3] {
        [self.ideation, self.behaviour, self.attempt]
    }

    /// All eight triples, ideation varying slowest.
    pub fn all() -> impl Iterator<Item = AnswerTriple> {
        (0u8..8).map(|bits| {
            AnswerTriple::new(
                YesNo::from(bits & 4 != 0),
                YesNo::from(bits & 2 != 0),
                YesNo::from(bits & 1 != 0),
            )
        })
    }
}

impl fmt::Display for AnswerTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}, {}, {}}}", self.ideation, self.behaviour, self.attempt)
    }
}

/// One annotator's verdict on one post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub post_id: String,
    pub annotator_id: String,
    pub label: RiskLevel,
    #[serde(default)]
    pub triple: Option<AnswerTriple>,
    #[serde(default)]
    pub refined: bool,
}

/// Tolerance on the component sum of a [`ProbabilityVector`].
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Distribution over the four risk levels, indexed by severity rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct ProbabilityVector([f64; 4]);

impl ProbabilityVector {
    pub fn new(p: [f64; 4]) -> Result<Self, DomainError> {
        if p.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
            return Err(DomainError::InvalidProbability(p));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(DomainError::InvalidProbability(p));
        }
        Ok(ProbabilityVector(p))
    }

    pub fn one_hot(level: RiskLevel) -> Self {
        let mut p = [0.0; 4];
        p[level.severity_rank()] = 1.0;
        ProbabilityVector(p)
    }

    pub fn uniform() -> Self {
        ProbabilityVector([0.25; 4])
    }

    pub fn as_array(&self) -> &[f64; 4] {
        &self.0
    }

    pub fn get(&self, level: RiskLevel) -> f64 {
        self.0[level.severity_rank()]
    }
}

impl TryFrom<[f64; 4]> for ProbabilityVector {
    type Error = DomainError;

    fn try_from(p: [f64; 4]) -> Result<Self, Self::Error> {
        ProbabilityVector::new(p)
    }
}

impl From<ProbabilityVector> for [f64; 4] {
    fn from(p: ProbabilityVector) -> Self {
        p.0
    }
}
