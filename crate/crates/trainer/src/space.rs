use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::TrainerError;

/// Random-search ranges. `x_frozen` lists the allowed numbers of frozen
/// bottom layers; empty means every value in `0..num_layers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub learning_rate: [f64; 2],
    pub batch_sizes: Vec<usize>,
    pub x_frozen: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            learning_rate: [1e-5, 1e-3],
            batch_sizes: vec![8, 16, 32],
            x_frozen: Vec::new(),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self, num_layers: usize) -> Result<(), TrainerError> {
        let [lo, hi] = self.learning_rate;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(TrainerError::Space(format!(
                "learning_rate range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(TrainerError::Space(
                "batch_sizes must be non-empty and positive".into(),
            ));
        }
        if let Some(&x) = self.x_frozen.iter().find(|&&x| x >= num_layers) {
            return Err(TrainerError::Space(format!(
                "x_frozen {x} leaves no trainable layer in a {num_layers}-layer model"
            )));
        }
        Ok(())
    }

    fn frozen_choices(&self, num_layers: usize) -> Vec<usize> {
        if self.x_frozen.is_empty() {
            (0..num_layers).collect()
        } else {
            self.x_frozen.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trial_id: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub x_frozen: usize,
    pub y_trainable: usize,
    pub seed: u64,
}

/// Log-uniform learning rate, uniform batch size and frozen depth. The
/// trial seed comes from the same generator.
pub fn sample_trial(
    space: &SearchSpace,
    num_layers: usize,
    trial_id: usize,
    rng: &mut impl Rng,
) -> TrialConfig {
    let [lo, hi] = space.learning_rate;
    let learning_rate = if lo == hi {
        lo
    } else {
        rng.random_range(lo.ln()..hi.ln()).exp()
    };
    let batch_size = space.batch_sizes[rng.random_range(0..space.batch_sizes.len())];
    let choices = space.frozen_choices(num_layers);
    let x_frozen = choices[rng.random_range(0..choices.len())];
    TrialConfig {
        trial_id,
        learning_rate,
        batch_size,
        x_frozen,
        y_trainable: num_layers - x_frozen,
        seed: rng.random(),
    }
}
