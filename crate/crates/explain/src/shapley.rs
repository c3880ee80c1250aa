use std::collections::HashMap;

use delirium_core::derive_seed;
use delirium_core::report::{TokenizedReport, MASK_ID};
use delirium_model::EncoderModel;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ExplainError;

pub const DEFAULT_EXACT_THRESHOLD: usize = 12;
pub const DEFAULT_PERMUTATIONS: usize = 200;
/// Hard cap on exact enumeration regardless of policy.
const EXACT_LIMIT: usize = 20;

/// Scalar model output for a token sequence.
pub trait ValueFunction: Sync {
    fn value(&self, token_ids: &[u32]) -> Result<f64, ExplainError>;
}

impl ValueFunction for EncoderModel {
    fn value(&self, token_ids: &[u32]) -> Result<f64, ExplainError> {
        Ok(self.forward_classify(token_ids)?)
    }
}

/// Adapts a plain function, mostly for stub models.
pub struct FnValue<F>(pub F);

impl<F: Fn(&[u32]) -> f64 + Sync> ValueFunction for FnValue<F> {
    fn value(&self, token_ids: &[u32]) -> Result<f64, ExplainError> {
        Ok((self.0)(token_ids))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    MonteCarlo,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ModePolicy {
    /// Exact up to `exact_threshold` sections, otherwise Monte Carlo.
    Auto {
        exact_threshold: usize,
        permutations: usize,
    },
    Exact,
    MonteCarlo {
        permutations: usize,
    },
}

impl Default for ModePolicy {
    fn default() -> Self {
        ModePolicy::Auto {
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
            permutations: DEFAULT_PERMUTATIONS,
        }
    }
}

impl ModePolicy {
    fn resolve(self, n: usize) -> (Mode, usize) {
        match self {
            ModePolicy::Auto {
                exact_threshold,
                permutations,
            } if n > exact_threshold => (Mode::MonteCarlo, permutations),
            ModePolicy::Auto { .. } | ModePolicy::Exact => (Mode::Exact, 0),
            ModePolicy::MonteCarlo { permutations } => (Mode::MonteCarlo, permutations),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionAttribution {
    pub stay_id: String,
    /// Output with every section masked.
    pub base_value: f64,
    pub full_value: f64,
    pub per_section: Vec<(String, f64)>,
    pub mode: Mode,
    pub permutations_used: Option<usize>,
    /// Sections lost to truncation; they count as phi = 0.
    pub truncated: Vec<String>,
}

/// Replaces the body tokens of every section not in `keep` with `[MASK]`.
pub fn mask_sections(report: &TokenizedReport, keep: &[usize]) -> Result<Vec<u32>, ExplainError> {
    let n = report.section_spans.len();
    let mut kept = vec![false; n];
    for &i in keep {
        *kept.get_mut(i).ok_or(ExplainError::SectionOutOfRange {
            index: i,
            sections: n,
        })? = true;
    }
    Ok(masked(report, &kept))
}

fn masked(report: &TokenizedReport, kept: &[bool]) -> Vec<u32> {
    let mut ids = report.token_ids.clone();
    for (span, _) in report.section_spans.iter().zip(kept).filter(|(_, &k)| !k) {
        ids[span.start..span.end].fill(MASK_ID);
    }
    ids
}

/// Coalition values memoised by membership bitmask.
struct Game<'a, V: ?Sized> {
    model: &'a V,
    report: &'a TokenizedReport,
    memo: HashMap<Vec<u64>, f64>,
}

impl<V: ValueFunction + ?Sized> Game<'_, V> {
    fn value(&mut self, kept: &[bool]) -> Result<f64, ExplainError> {
        let mut key = vec![0u64; kept.len().div_ceil(64)];
        for (i, _) in kept.iter().enumerate().filter(|(_, &k)| k) {
            key[i / 64] |= 1 << (i % 64);
        }
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        let v = self.model.value(&masked(self.report, kept))?;
        if !v.is_finite() {
            return Err(ExplainError::NonFinite(self.report.stay_id.to_string()));
        }
        self.memo.insert(key, v);
        Ok(v)
    }
}

pub fn shapley_sections<V: ValueFunction + ?Sized>(
    model: &V,
    report: &TokenizedReport,
    policy: ModePolicy,
    seed: u64,
) -> Result<SectionAttribution, ExplainError> {
    let n = report.section_spans.len();
    if n == 0 {
        return Err(ExplainError::NoSections(report.stay_id.to_string()));
    }
    let (mode, m) = policy.resolve(n);
    let mut game = Game {
        model,
        report,
        memo: HashMap::new(),
    };
    let base_value = game.value(&vec![false; n])?;
    let full_value = game.value(&vec![true; n])?;
    let phi = match mode {
        Mode::Exact => exact(&mut game, n)?,
        Mode::MonteCarlo => monte_carlo(&mut game, n, m, seed)?,
    };
    Ok(SectionAttribution {
        stay_id: report.stay_id.to_string(),
        base_value,
        full_value,
        per_section: report
            .section_spans
            .iter()
            .map(|s| s.label.clone())
            .zip(phi)
            .collect(),
        mode,
        permutations_used: (mode == Mode::MonteCarlo).then_some(m),
        truncated: report.dropped.clone(),
    })
}

fn exact<V: ValueFunction + ?Sized>(
    game: &mut Game<'_, V>,
    n: usize,
) -> Result<Vec<f64>, ExplainError> {
    if n > EXACT_LIMIT {
        return Err(ExplainError::TooManySections(n));
    }
    let values = (0..1usize << n)
        .map(|mask| game.value(&(0..n).map(|i| mask >> i & 1 == 1).collect::<Vec<_>>()))
        .collect::<Result<Vec<f64>, _>>()?;
    // weight(s) = s! (n - s - 1)! / n!
    let mut weight = vec![1.0 / n as f64; n];
    for s in 1..n {
        weight[s] = weight[s - 1] * s as f64 / (n - s) as f64;
    }
    let mut phi = vec![0.0; n];
    for (mask, &v) in values.iter().enumerate() {
        let size = mask.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if mask >> i & 1 == 0 {
                *p += weight[size] * (values[mask | 1 << i] - v);
            }
        }
    }
    Ok(phi)
}

fn monte_carlo<V: ValueFunction + ?Sized>(
    game: &mut Game<'_, V>,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<f64>, ExplainError> {
    if m == 0 {
        return Err(ExplainError::NoPermutations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut sum = vec![0.0; n];
    for _ in 0..m {
        order.shuffle(&mut rng);
        let mut kept = vec![false; n];
        let mut prev = game.value(&kept)?;
        for &i in &order {
            kept[i] = true;
            let v = game.value(&kept)?;
            sum[i] += v - prev;
            prev = v;
        }
    }
    Ok(sum.into_iter().map(|s| s / m as f64).collect())
}

/// Attributes every report in parallel; each sample's permutation stream is
/// seeded from `seed` and its stay id, so results do not depend on order or
/// thread count.
pub fn explain_many<V: ValueFunction + ?Sized>(
    model: &V,
    reports: &[TokenizedReport],
    policy: ModePolicy,
    seed: u64,
) -> Result<Vec<SectionAttribution>, ExplainError> {
    reports
        .par_iter()
        .map(|r| shapley_sections(model, r, policy, derive_seed(seed, r.stay_id.as_str())))
        .collect()
}
