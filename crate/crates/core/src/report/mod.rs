//! First-24h summaries rendered as `[SEP]`-sectioned text, plus the closed
//! whitespace vocabulary and section-aware tokenizer used by the encoder.

mod render;
mod summary;
mod tokenize;
mod vocab;

pub use render::{numeric_format, render_report, Section, SectionKind, TextReport};
pub use summary::{summarize_features, FeatureSummary, SummaryValue, SUMMARY_WINDOW_HOURS};
pub use tokenize::{tokenize, SectionSpan, TokenizedReport};
pub use vocab::{build_vocab, Vocabulary, CLS_ID, MASK_ID, PAD_ID, SEP_ID, SPECIAL_TOKENS, UNK_ID};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("report for stay {stay_id} needs {needed} tokens for its static sections alone; max_seq_len is {max_seq_len}")]
    Unfittable {
        stay_id: String,
        needed: usize,
        max_seq_len: usize,
    },
    #[error("vocabulary file: {0}")]
    VocabFile(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
