//! Shapley attribution over report sections. Sections are the players; a
//! coalition keeps its sections and replaces every other section body with
//! `[MASK]`.

mod aggregate;
mod plot;
mod shapley;

pub use aggregate::{
    aggregate_importance, write_attributions, write_importance, AttributionReport,
    FeatureImportance,
};
pub use plot::{export_text_plot, importance_svg, read_phi_csv, write_phi_csv};
pub use shapley::{
    explain_many, mask_sections, shapley_sections, FnValue, Mode, ModePolicy, SectionAttribution,
    ValueFunction, DEFAULT_EXACT_THRESHOLD, DEFAULT_PERMUTATIONS,
};

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("section index {index} out of range for a report with {sections} sections")]
    SectionOutOfRange { index: usize, sections: usize },
    #[error("report for stay {0} has no sections")]
    NoSections(String),
    #[error("exact enumeration over {0} sections is too large; use Monte Carlo")]
    TooManySections(usize),
    #[error("Monte Carlo mode needs at least one permutation")]
    NoPermutations,
    #[error("non-finite model output for stay {0}")]
    NonFinite(String),
    #[error("no attributions to aggregate")]
    Empty,
    #[error(transparent)]
    Model(#[from] delirium_model::ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("phi file: {0}")]
    Parse(String),
}
