//! Dataset IO, stratified folds and token-budget truncation.

mod dataset;
mod folds;
mod jsonl;
mod tokenize;
mod truncate;

pub use dataset::{DataFormat, Dataset, DatasetRow, Provenance};
pub use jsonl::{read_jsonl, write_jsonl};
pub use folds::{stratified_folds, FoldAssignment};
pub use tokenize::{PunctuationTokenizer, Tokenizer, WhitespaceTokenizer};
pub use truncate::{minimum_budget, truncate_middle, DEFAULT_TOKEN_BUDGET};
