use super::tokenize::Tokenizer;
use crate::error::DataError;

/// Default per-post token cap.
pub const DEFAULT_TOKEN_BUDGET: usize = 2500;

/// Smallest usable budget: one head token, one tail token, plus the marker.
pub fn minimum_budget<T: Tokenizer>(tokenizer: &T, with_marker: bool) -> usize {
    2 + if with_marker { tokenizer.marker().len() } else { 0 }
}

/// Cut the middle of `text` so it fits in `budget` tokens.
///
/// Texts within budget come back unchanged. Longer texts keep their first
/// `ceil((budget - m) / 2)` and last `floor((budget - m) / 2)` tokens, with the
/// tokenizer's `m`-token marker between them when `with_marker` is set; the
/// result is exactly `budget` tokens long.
pub fn truncate_middle<T: Tokenizer>(
    text: &str,
    tokenizer: &T,
    budget: usize,
    with_marker: bool,
) -> Result<String, DataError> {
    let minimum = minimum_budget(tokenizer, with_marker);
    if budget < minimum {
        return Err(DataError::Budget { budget, minimum });
    }
    let tokens = tokenizer.encode(text);
    if tokens.len() <= budget {
        return Ok(text.to_string());
    }
    let marker = if with_marker { tokenizer.marker() } else { Vec::new() };
    let keep = budget - marker.len();
    let head = keep.div_ceil(2);
    let tail = keep / 2;
    let mut kept = Vec::with_capacity(budget);
    kept.extend_from_slice(&tokens[..head]);
    kept.extend(marker);
    kept.extend_from_slice(&tokens[tokens.len() - tail..]);
    Ok(tokenizer.decode(&kept))
}
