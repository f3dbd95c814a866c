//! Tokenizers used for token budgets and length statistics.
//!
//! Both built-in tokenizers split text into spans that keep their trailing
//! whitespace (leading whitespace belongs to the first span), so decoding the
//! spans of a text gives back the exact text.

/// Text-to-token mapping used by [`truncate_middle`](super::truncate_middle).
pub trait Tokenizer {
    type Token: Clone;

    fn encode(&self, text: &str) -> Vec<Self::Token>;

    fn decode(&self, tokens: &[Self::Token]) -> String;

    fn count(&self, text: &str) -> usize {
        self.encode(text).len()
    }

    /// Tokens inserted where the middle of a text was cut.
    fn marker(&self) -> Vec<Self::Token>;
}

/// One token per whitespace-separated word.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

/// Word pieces and individual punctuation marks, a closer proxy for the
/// subword counts of model tokenizers than whitespace words.
#[derive(Debug, Clone, Copy, Default)]
pub struct PunctuationTokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Space,
    Word,
    Mark,
}

fn classify(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_alphanumeric() || c == '_' || c == '\'' {
        CharClass::Word
    } else {
        CharClass::Mark
    }
}

/// Split at every position where `starts_token` says a new token begins,
/// except before the first token.
fn split_spans(text: &str, starts_token: impl Fn(Option<CharClass>, CharClass) -> bool) -> Vec<String> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut prev: Option<CharClass> = None;
    let mut seen_token = false;
    for (i, c) in text.char_indices() {
        let class = classify(c);
        if class != CharClass::Space && starts_token(prev, class) {
            if seen_token {
                spans.push(text[start..i].to_string());
                start = i;
            }
            seen_token = true;
        }
        prev = Some(class);
    }
    if seen_token {
        spans.push(text[start..].to_string());
    }
    spans
}

fn join_spans(tokens: &[String]) -> String {
    let mut out = String::with_capacity(tokens.iter().map(String::len).sum::<usize>() + 1);
    for token in tokens {
        let needs_gap = matches!(
            (out.chars().last().map(classify), token.chars().next().map(classify)),
            (Some(CharClass::Word), Some(CharClass::Word))
        );
        if needs_gap {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

impl Tokenizer for WhitespaceTokenizer {
    type Token = String;

    fn encode(&self, text: &str) -> Vec<String> {
        split_spans(text, |prev, _| matches!(prev, None | Some(CharClass::Space)))
    }

    fn decode(&self, tokens: &[String]) -> String {
        let mut out = String::new();
        for token in tokens {
            if out.chars().last().is_some_and(|c| !c.is_whitespace()) {
                out.push(' ');
            }
            out.push_str(token);
        }
        out
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn marker(&self) -> Vec<String> {
        vec!["... ".to_string()]
    }
}

impl Tokenizer for PunctuationTokenizer {
    type Token = String;

    fn encode(&self, text: &str) -> Vec<String> {
        split_spans(text, |prev, class| {
            class == CharClass::Mark || prev != Some(CharClass::Word)
        })
    }

    fn decode(&self, tokens: &[String]) -> String {
        join_spans(tokens)
    }

    fn marker(&self) -> Vec<String> {
        vec!["\u{2026} ".to_string()]
    }
}
