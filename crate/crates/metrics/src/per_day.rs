use serde::{Deserialize, Serialize};

use crate::{auroc, ScoredCohort};

/// Minimum positives and negatives for a day to be reported.
pub const MIN_PER_CLASS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerDay {
    pub day: u32,
    /// `None` when either class has fewer than [`MIN_PER_CLASS`] stays.
    pub auroc: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Day of onset: interval `k` covers hours [12k, 12k + 12), so day ⌊k/2⌋.
pub fn onset_day(onset_interval: u32) -> u32 {
    onset_interval / 2
}

/// Day `k` compares stays with onset during hours [24k, 24(k+1)) against
/// delirium-free stays still in the unit at hour 24(k+1).
pub fn per_day_auroc(cohort: &ScoredCohort, days: u32) -> Vec<PerDay> {
    (1..=days)
        .map(|day| {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for e in cohort.entries() {
                let keep = if e.label {
                    e.onset_interval.is_some_and(|k| onset_day(k) == day)
                } else {
                    e.los_hours >= 24.0 * f64::from(day + 1)
                };
                if keep {
                    scores.push(e.score);
                    labels.push(e.label);
                }
            }
            let n_pos = labels.iter().filter(|&&l| l).count();
            let n_neg = labels.len() - n_pos;
            let auroc = (n_pos >= MIN_PER_CLASS && n_neg >= MIN_PER_CLASS)
                .then(|| auroc(&scores, &labels).expect("both classes present"));
            PerDay {
                day,
                auroc,
                n_pos,
                n_neg,
            }
        })
        .collect()
}
