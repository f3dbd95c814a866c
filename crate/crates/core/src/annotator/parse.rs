//! Extraction of Yes/No answers from free-form completions.

use std::sync::LazyLock;

use regex::Regex;

use crate::domain::{AnswerTriple, YesNo};
use crate::error::ParseError;

static BRACKET_GROUP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\{\[]([^\{\}\[\]]*)[\}\]]").expect("valid regex"));
static COMMA_RUN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:yes|no)\b(?:\s*,\s*\b(?:yes|no)\b)+").expect("valid regex")
});
static YES_NO: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").expect("valid regex"));

/// The answers recovered from a classification completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCompletion {
    pub triple: AnswerTriple,
    /// Text of the `A1:`..`A3:` answers when the completion has them, else empty.
    pub raw_answers: [String; 3],
    pub compiled_line: String,
}

/// Yes/No tokens of a bracketed group, if the group holds nothing else.
fn bracket_tokens(inner: &str) -> Option<Vec<YesNo>> {
    let tokens: Option<Vec<YesNo>> = inner
        .split(',')
        .map(|t| t.trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '.' | '*')))
        .map(YesNo::from_word)
        .collect();
    tokens.filter(|t| !t.is_empty())
}

fn yes_no_tokens(run: &str) -> Vec<YesNo> {
    YES_NO
        .find_iter(run)
        .filter_map(|m| YesNo::from_word(m.as_str()))
        .collect()
}

/// Find the compiled answer line and read its three answers.
///
/// The compiled line is the last line holding a bracketed list of Yes/No
/// tokens (`{Yes, No, No}` or `[Yes, No, No]`); when no line has one, the last
/// line with a comma-separated run of two or more Yes/No tokens is used. The
/// run must have exactly three tokens, read as (Ideation, Behaviour, Attempt).
pub fn parse_answer_triple(completion: &str) -> Result<ParsedCompletion, ParseError> {
    let mut bracketed: Option<(&str, Vec<YesNo>)> = None;
    let mut comma: Option<(&str, Vec<YesNo>)> = None;
    for line in completion.lines() {
        if let Some(tokens) = BRACKET_GROUP
            .captures_iter(line)
            .filter_map(|c| bracket_tokens(&c[1]))
            .last()
        {
            bracketed = Some((line, tokens));
        }
        if let Some(run) = COMMA_RUN.find_iter(line).last() {
            comma = Some((line, yes_no_tokens(run.as_str())));
        }
    }
    let (line, tokens) = bracketed.or(comma).ok_or(ParseError::NoCompiledLine)?;
    if tokens.len() != 3 {
        return Err(ParseError::WrongArity {
            found: tokens.len(),
            line: line.trim().to_string(),
        });
    }
    Ok(ParsedCompletion {
        triple: AnswerTriple::new(tokens[0], tokens[1], tokens[2]),
        raw_answers: ["A1:", "A2:", "A3:"].map(|key| answer_text(completion, key)),
        compiled_line: line.trim().to_string(),
    })
}

fn answer_text(completion: &str, key: &str) -> String {
    completion
        .lines()
        .map(str::trim_start)
        .find(|l| l.len() >= key.len() && l[..key.len()].eq_ignore_ascii_case(key))
        .map(|l| l[key.len()..].trim().to_string())
        .unwrap_or_default()
}

/// First standalone Yes or No in the text.
pub fn first_yes_no(text: &str) -> Result<YesNo, ParseError> {
    YES_NO
        .find(text)
        .and_then(|m| YesNo::from_word(m.as_str()))
        .ok_or(ParseError::NoYesNo)
}

/// Read the answer of a move-on completion.
pub fn parse_moveon(completion: &str) -> Result<YesNo, ParseError> {
    first_yes_no(completion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use YesNo::{No, Yes};

    #[test]
    fn reads_final_answer_line() {
        let p = parse_answer_triple("blah\nA1: Yes. x\nFinal answer: {Yes, Yes, No}").unwrap();
        assert_eq!(p.triple, AnswerTriple::new(Yes, Yes, No));
        assert_eq!(p.compiled_line, "Final answer: {Yes, Yes, No}");
        assert_eq!(p.raw_answers[0], "Yes. x");
        assert_eq!(p.raw_answers[1], "");
    }

    #[test]
    fn missing_line_is_an_error() {
        assert_eq!(
            parse_answer_triple("no compiled line here"),
            Err(ParseError::NoCompiledLine)
        );
        assert_eq!(parse_answer_triple(""), Err(ParseError::NoCompiledLine));
    }

    #[test]
    fn arity_is_checked() {
        assert!(matches!(
            parse_answer_triple("Final answer: {Yes, No}"),
            Err(ParseError::WrongArity { found: 2, .. })
        ));
        assert!(matches!(
            parse_answer_triple("Final answer: {Yes, No, No, Yes}"),
            Err(ParseError::WrongArity { found: 4, .. })
        ));
    }

    #[test]
    fn last_compiled_line_wins() {
        let text = "Final answer: {No, No, No}\nthinking again\nFinal answer: {Yes, No, Yes}\n";
        assert_eq!(
            parse_answer_triple(text).unwrap().triple,
            AnswerTriple::new(Yes, No, Yes)
        );
    }

    #[test]
    fn case_insensitive_and_square_brackets() {
        let p = parse_answer_triple("final: [yes, NO, no]").unwrap();
        assert_eq!(p.triple, AnswerTriple::new(Yes, No, No));
    }

    #[test]
    fn bare_comma_run_is_accepted() {
        let p = parse_answer_triple("So the answers are Yes, No, Yes.").unwrap();
        assert_eq!(p.triple, AnswerTriple::new(Yes, No, Yes));
    }

    #[test]
    fn bracket_line_beats_later_rationale_runs() {
        let text = "Final answer: {Yes, No, No}\nNote: no, no further detail.";
        assert_eq!(
            parse_answer_triple(text).unwrap().triple,
            AnswerTriple::new(Yes, No, No)
        );
    }

    #[test]
    fn template_instruction_braces_are_ignored() {
        assert_eq!(
            parse_answer_triple("Finish with \"Final answer: {A1, A2, A3}\""),
            Err(ParseError::NoCompiledLine)
        );
    }

    #[test]
    fn moveon_answers() {
        assert_eq!(parse_moveon("Yes, the writer found a reason to live."), Ok(Yes));
        assert_eq!(parse_moveon("No."), Ok(No));
        assert_eq!(parse_moveon("maybe"), Err(ParseError::NoYesNo));
        assert_eq!(parse_moveon("Nothing noted; answer: yes"), Ok(Yes));
    }
}
