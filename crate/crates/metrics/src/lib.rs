//! Discrimination metrics for scored stay cohorts.

mod auroc;
mod bootstrap;
mod export;
mod per_day;
pub mod svg;
mod wilcoxon;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use auroc::{auroc, roc_points, trapezoid_area};
pub use bootstrap::{
    bootstrap_auroc, percentile, BootstrapConfig, MetricsReport, MAX_CONSECUTIVE_REDRAWS,
};
pub use export::{
    write_bootstrap_samples, write_comparisons, write_metrics, write_per_day, write_roc,
};
pub use per_day::{onset_day, per_day_auroc, PerDay, MIN_PER_CLASS};
pub use wilcoxon::{wilcoxon_rank_sum, ComparisonResult, MIN_SAMPLE_SIZE};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("AUROC is undefined with {n_pos} positives and {n_neg} negatives")]
    SingleClass { n_pos: usize, n_neg: usize },
    #[error("{0} length mismatch between scores and labels")]
    LengthMismatch(&'static str),
    #[error("score {0} is not a finite number")]
    InvalidScore(f64),
    #[error("duplicate stay id `{0}` in scored cohort")]
    DuplicateStay(String),
    #[error("score {score} for stay `{stay_id}` is outside [0, 1]")]
    ScoreOutOfRange { stay_id: String, score: f64 },
    #[error("bootstrap drew {0} single-class resamples in a row; the cohort is too degenerate")]
    DegenerateBootstrap(usize),
    #[error("rank-sum test needs at least {MIN_SAMPLE_SIZE} values per sample, got {a} and {b}")]
    UndersizedSample { a: usize, b: usize },
    #[error("bootstrap needs at least one iteration")]
    NoIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub stay_id: String,
    pub score: f64,
    pub label: bool,
    pub onset_interval: Option<u32>,
    pub los_hours: f64,
}

/// Model scores for a set of distinct stays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredCohort {
    entries: Vec<ScoredEntry>,
}

impl ScoredCohort {
    pub fn new(entries: Vec<ScoredEntry>) -> Result<Self, MetricsError> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !(0.0..=1.0).contains(&e.score) {
                return Err(MetricsError::ScoreOutOfRange {
                    stay_id: e.stay_id.clone(),
                    score: e.score,
                });
            }
            if !seen.insert(e.stay_id.as_str()) {
                return Err(MetricsError::DuplicateStay(e.stay_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ScoredEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn n_pos(&self) -> usize {
        self.entries.iter().filter(|e| e.label).count()
    }

    pub fn n_neg(&self) -> usize {
        self.len() - self.n_pos()
    }

    pub fn auroc(&self) -> Result<f64, MetricsError> {
        auroc(&self.scores(), &self.labels())
    }
}
