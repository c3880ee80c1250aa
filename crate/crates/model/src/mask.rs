use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delirium_core::report::{MASK_ID, SPECIAL_TOKENS};

pub const DEFAULT_MASK_RATE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskTarget {
    pub position: usize,
    pub original: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub corrupted: Vec<u32>,
    pub targets: Vec<MaskTarget>,
}

fn is_maskable(id: u32) -> bool {
    id as usize >= SPECIAL_TOKENS.len()
}

/// Selects each regular token with probability `mask_rate`; a selected token
/// becomes [MASK] (80%), a random regular token (10%) or stays (10%).
/// Returns `None` when the sequence has nothing to mask.
pub fn mask_tokens(
    token_ids: &[u32],
    vocab_size: usize,
    mask_rate: f64,
    seed: u64,
) -> Option<MaskedSequence> {
    if !token_ids.iter().any(|&id| is_maskable(id)) {
        log::warn!(
            "sequence of {} special tokens skipped for masking",
            token_ids.len()
        );
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corrupted = token_ids.to_vec();
    let mut targets = Vec::new();
    let first_regular = SPECIAL_TOKENS.len() as u32;
    for (position, id) in corrupted.iter_mut().enumerate() {
        if !is_maskable(*id) || rng.random::<f64>() >= mask_rate {
            continue;
        }
        targets.push(MaskTarget {
            position,
            original: *id,
        });
        let r: f64 = rng.random();
        if r < 0.8 {
            *id = MASK_ID;
        } else if r < 0.9 {
            *id = rng.random_range(first_regular..vocab_size as u32);
        }
    }
    Some(MaskedSequence { corrupted, targets })
}
