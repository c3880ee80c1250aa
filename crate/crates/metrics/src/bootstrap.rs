use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::per_day::{per_day_auroc, PerDay};
use crate::{auroc, MetricsError, ScoredCohort};

/// Consecutive single-class resamples tolerated within one iteration.
pub const MAX_CONSECUTIVE_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Days reported by the per-day breakdown.
    pub days: u32,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            seed: 0,
            days: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc_median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bootstrap_samples: Vec<f64>,
    pub per_day: Vec<PerDay>,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Single-class resamples that were redrawn, over all iterations.
    pub redraws: usize,
}

/// Linear interpolation between closest ranks of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn one_iteration(
    scores: &[f64],
    labels: &[bool],
    seed: u64,
    i: usize,
) -> Result<(f64, usize), MetricsError> {
    let n = scores.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let mut s = vec![0.0; n];
    let mut l = vec![false; n];
    for redraws in 0..=MAX_CONSECUTIVE_REDRAWS {
        for j in 0..n {
            let k = rng.random_range(0..n);
            s[j] = scores[k];
            l[j] = labels[k];
        }
        match auroc(&s, &l) {
            Ok(a) => return Ok((a, redraws)),
            Err(MetricsError::SingleClass { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(MetricsError::DegenerateBootstrap(
        MAX_CONSECUTIVE_REDRAWS + 1,
    ))
}

/// Stay-level percentile bootstrap of AUROC. Iteration `i` draws from its own
/// stream of `seed`, so the samples do not depend on the thread count.
pub fn bootstrap_auroc(
    cohort: &ScoredCohort,
    config: &BootstrapConfig,
) -> Result<MetricsReport, MetricsError> {
    if config.iterations == 0 {
        return Err(MetricsError::NoIterations);
    }
    let scores = cohort.scores();
    let labels = cohort.labels();
    auroc(&scores, &labels)?;
    let draws: Vec<(f64, usize)> = (0..config.iterations)
        .into_par_iter()
        .map(|i| one_iteration(&scores, &labels, config.seed, i))
        .collect::<Result<_, _>>()?;
    let redraws = draws.iter().map(|d| d.1).sum();
    if redraws > 0 {
        log::info!("bootstrap redrew {redraws} single-class resamples");
    }
    let bootstrap_samples: Vec<f64> = draws.into_iter().map(|d| d.0).collect();
    let mut sorted = bootstrap_samples.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(MetricsReport {
        auroc_median: percentile(&sorted, 0.5),
        ci_low: percentile(&sorted, 0.025),
        ci_high: percentile(&sorted, 0.975),
        bootstrap_samples,
        per_day: per_day_auroc(cohort, config.days),
        n_pos: cohort.n_pos(),
        n_neg: cohort.n_neg(),
        redraws,
    })
}
