//! Few-shot chain-of-thought prompt templates.
//!
//! A template file is plain UTF-8 text split into sections by marker lines:
//!
//! ```text
//! <<<INSTRUCTION>>>
//! ...guidance...
//! <<<EXAMPLE>>>
//! Post: ...
//! ...
//! <<<QUERY>>>
//! Post: {{POST}}
//! ```
//!
//! Anything before the first marker is a free-form file comment. There may be
//! any number of `EXAMPLE` sections; `INSTRUCTION` and `QUERY` appear once. The
//! placeholder must occur exactly once in the whole template, inside `QUERY`.
//!
//! Classification exemplars hold a `Post:` paragraph, three `A1:`/`A2:`/`A3:`
//! answers that each start with Yes or No, and a compiled answer line such as
//! `Final answer: {Yes, No, No}`. Move-on exemplars hold a `Post:` paragraph
//! and an `Answer:` line.

use std::fs;
use std::path::Path;

use crate::annotator::parse::parse_answer_triple;
use crate::domain::{AnswerTriple, Post, YesNo};
use crate::error::TemplateError;

pub const DEFAULT_PLACEHOLDER: &str = "{{POST}}";

/// Number of exemplars in the shipped classification template.
pub const DEFAULT_CLASSIFICATION_EXEMPLARS: usize = 6;

const DEFAULT_CLASSIFICATION: &str = include_str!("../templates/classification.txt");
const DEFAULT_MOVEON: &str = include_str!("../templates/moveon.txt");

const MARKER_INSTRUCTION: &str = "<<<INSTRUCTION>>>";
const MARKER_EXAMPLE: &str = "<<<EXAMPLE>>>";
const MARKER_QUERY: &str = "<<<QUERY>>>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    Classification,
    MoveOn,
}

impl TemplateKind {
    fn name(self) -> &'static str {
        match self {
            TemplateKind::Classification => "classification",
            TemplateKind::MoveOn => "move-on",
        }
    }
}

/// Worked classification example: a post, three answered questions, and the
/// compiled (Ideation, Behaviour, Attempt) answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub post_text: String,
    pub responses: [(YesNo, String); 3],
    pub compiled: AnswerTriple,
    block: String,
}

impl Exemplar {
    pub fn block(&self) -> &str {
        &self.block
    }

    fn parse(index: usize, block: &str) -> Result<Exemplar, TemplateError> {
        let bad = |reason: String| TemplateError::BadExemplar { index, reason };
        let post_text = paragraph_after(block, "Post:", &["Q1:", "A1:"])
            .ok_or_else(|| bad("missing `Post:` paragraph".into()))?;
        let mut responses: Vec<(YesNo, String)> = Vec::with_capacity(3);
        for key in ["A1:", "A2:", "A3:"] {
            let line = block
                .lines()
                .map(str::trim_start)
                .find(|l| l.starts_with(key))
                .ok_or_else(|| bad(format!("missing `{key}` answer")))?;
            let body = line[key.len()..].trim();
            let (head, rest) = split_leading_yes_no(body)
                .ok_or_else(|| bad(format!("`{key}` must start with Yes or No")))?;
            responses.push((head, rest.to_string()));
        }
        let compiled = parse_answer_triple(block)
            .map_err(|e| bad(format!("compiled answer: {e}")))?
            .triple;
        let heads = [responses[0].0, responses[1].0, responses[2].0];
        if heads != compiled.as_array() {
            return Err(bad(format!(
                "compiled answer {compiled} disagrees with the answers {{{}, {}, {}}}",
                heads[0], heads[1], heads[2]
            )));
        }
        let responses: [(YesNo, String); 3] = responses.try_into().expect("three answers");
        Ok(Exemplar {
            post_text,
            responses,
            compiled,
            block: block.trim().to_string(),
        })
    }
}

/// Move-on example: a post followed by its Yes/No answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveOnExemplar {
    pub post_text: String,
    pub answer: YesNo,
    block: String,
}

impl MoveOnExemplar {
    pub fn block(&self) -> &str {
        &self.block
    }

    fn parse(index: usize, block: &str) -> Result<MoveOnExemplar, TemplateError> {
        let bad = |reason: &str| TemplateError::BadExemplar {
            index,
            reason: reason.to_string(),
        };
        let post_text = paragraph_after(block, "Post:", &["Answer:"])
            .ok_or_else(|| bad("missing `Post:` paragraph"))?;
        let line = block
            .lines()
            .map(str::trim_start)
            .find(|l| l.starts_with("Answer:"))
            .ok_or_else(|| bad("missing `Answer:` line"))?;
        let (answer, _) = split_leading_yes_no(line["Answer:".len()..].trim())
            .ok_or_else(|| bad("`Answer:` must start with Yes or No"))?;
        Ok(MoveOnExemplar {
            post_text,
            answer,
            block: block.trim().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exemplars {
    Classification(Vec<Exemplar>),
    MoveOn(Vec<MoveOnExemplar>),
}

impl Exemplars {
    pub fn len(&self) -> usize {
        match self {
            Exemplars::Classification(v) => v.len(),
            Exemplars::MoveOn(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn blocks(&self) -> Vec<&str> {
        match self {
            Exemplars::Classification(v) => v.iter().map(Exemplar::block).collect(),
            Exemplars::MoveOn(v) => v.iter().map(MoveOnExemplar::block).collect(),
        }
    }

    fn kind(&self) -> TemplateKind {
        match self {
            Exemplars::Classification(_) => TemplateKind::Classification,
            Exemplars::MoveOn(_) => TemplateKind::MoveOn,
        }
    }
}

/// A validated prompt template. Construction guarantees the placeholder
/// occurs exactly once, in the query section, and that there is at least one
/// exemplar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    instruction: String,
    exemplars: Exemplars,
    query: String,
    placeholder: String,
}

impl PromptTemplate {
    pub fn new(
        instruction: impl Into<String>,
        exemplars: Exemplars,
        query: impl Into<String>,
        placeholder: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let template = PromptTemplate {
            instruction: instruction.into().trim().to_string(),
            exemplars,
            query: query.into().trim().to_string(),
            placeholder: placeholder.into(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn parse(text: &str, kind: TemplateKind) -> Result<Self, TemplateError> {
        Self::parse_with_placeholder(text, kind, DEFAULT_PLACEHOLDER)
    }

    pub fn parse_with_placeholder(
        text: &str,
        kind: TemplateKind,
        placeholder: &str,
    ) -> Result<Self, TemplateError> {
        let mut instruction: Option<String> = None;
        let mut query: Option<String> = None;
        let mut examples: Vec<String> = Vec::new();
        let mut current: Option<(&str, String)> = None;

        let mut flush = |section: Option<(&str, String)>| {
            if let Some((marker, body)) = section {
                match marker {
                    MARKER_INSTRUCTION => instruction = Some(body),
                    MARKER_QUERY => query = Some(body),
                    _ => examples.push(body),
                }
            }
        };

        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            if trimmed.starts_with("<<<") && trimmed.ends_with(">>>") {
                let marker = match trimmed {
                    MARKER_INSTRUCTION => MARKER_INSTRUCTION,
                    MARKER_EXAMPLE => MARKER_EXAMPLE,
                    MARKER_QUERY => MARKER_QUERY,
                    other => return Err(TemplateError::UnknownSection(other.to_string())),
                };
                flush(current.take());
                current = Some((marker, String::new()));
            } else if let Some((_, body)) = current.as_mut() {
                body.push_str(line);
            }
        }
        flush(current.take());

        let instruction = instruction.ok_or(TemplateError::MissingSection("INSTRUCTION"))?;
        let query = query.ok_or(TemplateError::MissingSection("QUERY"))?;
        let exemplars = match kind {
            TemplateKind::Classification => Exemplars::Classification(
                examples
                    .iter()
                    .enumerate()
                    .map(|(i, b)| Exemplar::parse(i, b))
                    .collect::<Result<_, _>>()?,
            ),
            TemplateKind::MoveOn => Exemplars::MoveOn(
                examples
                    .iter()
                    .enumerate()
                    .map(|(i, b)| MoveOnExemplar::parse(i, b))
                    .collect::<Result<_, _>>()?,
            ),
        };
        PromptTemplate::new(instruction, exemplars, query, placeholder)
    }

    pub fn from_file(path: impl AsRef<Path>, kind: TemplateKind) -> std::io::Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        PromptTemplate::parse(&text, kind).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}: {e}", path.as_ref().display()),
            )
        })
    }

    /// Shipped classification template with six worked exemplars.
    pub fn default_classification() -> Self {
        PromptTemplate::parse(DEFAULT_CLASSIFICATION, TemplateKind::Classification)
            .expect("bundled classification template is valid")
    }

    /// Shipped move-on template.
    pub fn default_moveon() -> Self {
        PromptTemplate::parse(DEFAULT_MOVEON, TemplateKind::MoveOn)
            .expect("bundled move-on template is valid")
    }

    pub fn kind(&self) -> TemplateKind {
        self.exemplars.kind()
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }

    pub fn exemplars(&self) -> &Exemplars {
        &self.exemplars
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn placeholder(&self) -> &str {
        &self.placeholder
    }

    fn validate(&self) -> Result<(), TemplateError> {
        if self.placeholder.is_empty() {
            return Err(TemplateError::MissingPlaceholder(self.placeholder.clone()));
        }
        if self.exemplars.is_empty() {
            return Err(TemplateError::NoExemplars);
        }
        let in_query = self.query.matches(self.placeholder.as_str()).count();
        let elsewhere = self.instruction.matches(self.placeholder.as_str()).count()
            + self
                .exemplars
                .blocks()
                .iter()
                .map(|b| b.matches(self.placeholder.as_str()).count())
                .sum::<usize>();
        match (in_query, elsewhere) {
            (0, 0) => Err(TemplateError::MissingPlaceholder(self.placeholder.clone())),
            (1, 0) => Ok(()),
            (q, e) => Err(TemplateError::DuplicatePlaceholder {
                placeholder: self.placeholder.clone(),
                count: q + e,
            }),
        }
    }

    fn render(&self, post: &Post, expected: TemplateKind) -> Result<String, TemplateError> {
        if self.kind() != expected {
            return Err(TemplateError::KindMismatch {
                expected: expected.name(),
                actual: self.kind().name(),
            });
        }
        if post.text.trim().is_empty() {
            return Err(TemplateError::EmptyPost);
        }
        let mut out = String::with_capacity(self.instruction.len() + self.query.len() + 4096);
        out.push_str(&self.instruction);
        out.push_str("\n\n");
        for (i, block) in self.exemplars.blocks().iter().enumerate() {
            out.push_str(&format!("### Example {}\n", i + 1));
            out.push_str(block);
            out.push_str("\n\n");
        }
        out.push_str(&self.query.replacen(&self.placeholder, &post.text, 1));
        out.push('\n');
        Ok(out)
    }
}

/// Render the three-question classification prompt for `post`.
pub fn render_classification_prompt(
    post: &Post,
    template: &PromptTemplate,
) -> Result<String, TemplateError> {
    template.render(post, TemplateKind::Classification)
}

/// Render the move-on follow-up prompt for `post`.
pub fn render_moveon_prompt(post: &Post, template: &PromptTemplate) -> Result<String, TemplateError> {
    template.render(post, TemplateKind::MoveOn)
}

/// Text following `key` up to the first line starting with one of `stops`.
fn paragraph_after(block: &str, key: &str, stops: &[&str]) -> Option<String> {
    let start = block.find(key)? + key.len();
    let rest = &block[start..];
    let mut end = rest.len();
    let mut offset = 0;
    for line in rest.split_inclusive('\n') {
        let t = line.trim_start();
        if offset > 0 && stops.iter().any(|s| t.starts_with(s)) {
            end = offset;
            break;
        }
        offset += line.len();
    }
    let text = rest[..end].trim();
    (!text.is_empty()).then(|| text.to_string())
}

/// Split "Yes. because..." into (Yes, "because...").
fn split_leading_yes_no(body: &str) -> Option<(YesNo, &str)> {
    let word_end = body
        .find(|c: char| !c.is_ascii_alphabetic())
        .unwrap_or(body.len());
    let head = YesNo::from_word(&body[..word_end])?;
    let rest = body[word_end..].trim_start_matches(|c: char| c == '.' || c == ',' || c == ':' || c == '-' || c.is_whitespace());
    Some((head, rest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(text: &str) -> Post {
        Post::new("p1", text).unwrap()
    }

    fn tiny_moveon(query: &str, examples: &[&str]) -> String {
        let mut s = String::from("<<<INSTRUCTION>>>\nDecide.\n");
        for e in examples {
            s.push_str("<<<EXAMPLE>>>\n");
            s.push_str(e);
            s.push('\n');
        }
        s.push_str("<<<QUERY>>>\n");
        s.push_str(query);
        s.push('\n');
        s
    }

    #[test]
    fn default_classification_has_six_exemplars() {
        let t = PromptTemplate::default_classification();
        assert_eq!(t.exemplars().len(), DEFAULT_CLASSIFICATION_EXEMPLARS);
        let rendered = render_classification_prompt(&post("some target post"), &t).unwrap();
        assert_eq!(rendered.matches("### Example ").count(), 6);
        for i in 1..=6 {
            assert!(rendered.contains(&format!("### Example {i}\n")));
        }
    }

    #[test]
    fn default_exemplars_are_consistent() {
        let t = PromptTemplate::default_classification();
        let Exemplars::Classification(ex) = t.exemplars() else {
            panic!("wrong kind")
        };
        for e in ex {
            let heads = [e.responses[0].0, e.responses[1].0, e.responses[2].0];
            assert_eq!(heads, e.compiled.as_array());
            assert!(!e.post_text.is_empty());
        }
    }

    #[test]
    fn post_text_lands_at_placeholder() {
        let t = PromptTemplate::default_classification();
        let rendered = render_classification_prompt(&post("hello"), &t).unwrap();
        let query = t.query();
        let at = query.find(DEFAULT_PLACEHOLDER).unwrap();
        let expected_tail = format!(
            "{}hello{}\n",
            &query[..at],
            &query[at + DEFAULT_PLACEHOLDER.len()..]
        );
        assert!(rendered.ends_with(&expected_tail));
        assert!(!rendered.contains(DEFAULT_PLACEHOLDER));
    }

    #[test]
    fn rendering_is_deterministic() {
        let t = PromptTemplate::default_classification();
        let p = post("I feel fine today.");
        assert_eq!(
            render_classification_prompt(&p, &t).unwrap(),
            render_classification_prompt(&p, &t).unwrap()
        );
    }

    #[test]
    fn exemplars_keep_their_order() {
        let t = PromptTemplate::default_classification();
        let rendered = render_classification_prompt(&post("x"), &t).unwrap();
        let Exemplars::Classification(ex) = t.exemplars() else {
            unreachable!()
        };
        let positions: Vec<usize> = ex
            .iter()
            .map(|e| rendered.find(&e.post_text).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(positions[5] < rendered.find("Post: x").unwrap());
    }

    #[test]
    fn moveon_post_appears_once() {
        let t = PromptTemplate::default_moveon();
        let text = "A very particular sentence about recovery.";
        let rendered = render_moveon_prompt(&post(text), &t).unwrap();
        assert_eq!(rendered.matches(text).count(), 1);
    }

    #[test]
    fn moveon_instruction_precedes_exemplars() {
        let t = PromptTemplate::default_moveon();
        let rendered = render_moveon_prompt(&post("x"), &t).unwrap();
        let instr = rendered.find(t.instruction()).unwrap();
        let first_example = rendered.find("### Example 1").unwrap();
        assert_eq!(instr, 0);
        assert!(instr < first_example);
        let Exemplars::MoveOn(ex) = t.exemplars() else {
            unreachable!()
        };
        assert!(ex.iter().any(|e| e.answer == YesNo::Yes));
        assert!(ex.iter().any(|e| e.answer == YesNo::No));
    }

    #[test]
    fn empty_exemplar_list_rejected() {
        let text = tiny_moveon("Post: {{POST}}\nAnswer:", &[]);
        assert_eq!(
            PromptTemplate::parse(&text, TemplateKind::MoveOn),
            Err(TemplateError::NoExemplars)
        );
        let direct = PromptTemplate::new("i", Exemplars::MoveOn(vec![]), "{{POST}}", "{{POST}}");
        assert_eq!(direct, Err(TemplateError::NoExemplars));
    }

    #[test]
    fn missing_placeholder_rejected() {
        let text = tiny_moveon("Post: (none)\nAnswer:", &["Post: a\nAnswer: Yes."]);
        assert!(matches!(
            PromptTemplate::parse(&text, TemplateKind::MoveOn),
            Err(TemplateError::MissingPlaceholder(_))
        ));
    }

    #[test]
    fn duplicate_placeholder_rejected() {
        let text = tiny_moveon("Post: {{POST}}\n{{POST}}", &["Post: a\nAnswer: Yes."]);
        assert!(matches!(
            PromptTemplate::parse(&text, TemplateKind::MoveOn),
            Err(TemplateError::DuplicatePlaceholder { count: 2, .. })
        ));
        let text = tiny_moveon("Post: {{POST}}", &["Post: {{POST}}\nAnswer: Yes."]);
        assert!(matches!(
            PromptTemplate::parse(&text, TemplateKind::MoveOn),
            Err(TemplateError::DuplicatePlaceholder { .. })
        ));
    }

    #[test]
    fn stripping_placeholder_from_default_is_rejected() {
        let stripped = DEFAULT_CLASSIFICATION.replace(DEFAULT_PLACEHOLDER, "");
        assert!(matches!(
            PromptTemplate::parse(&stripped, TemplateKind::Classification),
            Err(TemplateError::MissingPlaceholder(_))
        ));
    }

    #[test]
    fn inconsistent_exemplar_rejected() {
        let block = "Post: a\nA1: Yes. x\nA2: No. y\nA3: No. z\nFinal answer: {Yes, Yes, No}";
        let mut text = String::from("<<<INSTRUCTION>>>\ni\n<<<EXAMPLE>>>\n");
        text.push_str(block);
        text.push_str("\n<<<QUERY>>>\n{{POST}}\n");
        assert!(matches!(
            PromptTemplate::parse(&text, TemplateKind::Classification),
            Err(TemplateError::BadExemplar { index: 0, .. })
        ));
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let t = PromptTemplate::default_moveon();
        assert!(matches!(
            render_classification_prompt(&post("x"), &t),
            Err(TemplateError::KindMismatch { .. })
        ));
    }

    #[test]
    fn custom_placeholder() {
        let text = "<<<INSTRUCTION>>>\ni\n<<<EXAMPLE>>>\nPost: a\nAnswer: No\n<<<QUERY>>>\n[TARGET]\n";
        let t = PromptTemplate::parse_with_placeholder(text, TemplateKind::MoveOn, "[TARGET]").unwrap();
        let r = render_moveon_prompt(&post("zzz"), &t).unwrap();
        assert!(r.ends_with("zzz\n"));
    }

    #[test]
    fn unknown_marker_rejected() {
        let text = "<<<INSTRUCTIONS>>>\ni\n";
        assert!(matches!(
            PromptTemplate::parse(text, TemplateKind::MoveOn),
            Err(TemplateError::UnknownSection(_))
        ));
    }
}
