use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::MetricsError;

/// Smallest sample size for which the normal approximation is used.
pub const MIN_SAMPLE_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub model_a: String,
    pub model_b: String,
    /// Rank sum of sample a in the pooled ranking.
    pub statistic: f64,
    pub z: f64,
    pub p_value: f64,
    pub significant_at_0_05: bool,
}

/// Two-sided Wilcoxon rank-sum test with tie-corrected variance and
/// continuity correction.
pub fn wilcoxon_rank_sum(
    model_a: &str,
    a: &[f64],
    model_b: &str,
    b: &[f64],
) -> Result<ComparisonResult, MetricsError> {
    if a.len() < MIN_SAMPLE_SIZE || b.len() < MIN_SAMPLE_SIZE {
        return Err(MetricsError::UndersizedSample {
            a: a.len(),
            b: b.len(),
        });
    }
    if let Some(&bad) = a.iter().chain(b).find(|v| !v.is_finite()) {
        return Err(MetricsError::InvalidScore(bad));
    }
    let pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].0.total_cmp(&pooled[j].0));

    let n = pooled.len() as f64;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]].0 == pooled[order[start]].0 {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let in_a = order[start..end].iter().filter(|&&i| pooled[i].1).count();
        rank_sum_a += avg_rank * in_a as f64;
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    let expected = na * (n + 1.0) / 2.0;
    let variance = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let diff = rank_sum_a - expected;
    let (z, p_value) = if variance <= 0.0 {
        (0.0, 1.0)
    } else {
        let z = (diff.abs() - 0.5).max(0.0) / variance.sqrt();
        let tail = Normal::standard().cdf(-z);
        (z * diff.signum(), (2.0 * tail).min(1.0))
    };
    Ok(ComparisonResult {
        model_a: model_a.to_owned(),
        model_b: model_b.to_owned(),
        statistic: rank_sum_a,
        z,
        p_value,
        significant_at_0_05: p_value < 0.05,
    })
}
