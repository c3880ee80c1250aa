use serde::{Deserialize, Serialize};

use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 1000,
            max_seq_len: 512,
            num_layers: 4,
            hidden_dim: 64,
            num_heads: 4,
            ffn_dim: 256,
            dropout_rate: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.num_heads == 0 || !self.hidden_dim.is_multiple_of(self.num_heads) {
            return err(format!(
                "num_heads {} must divide hidden_dim {}",
                self.num_heads, self.hidden_dim
            ));
        }
        if self.max_seq_len < 8 {
            return err(format!("max_seq_len {} is below 8", self.max_seq_len));
        }
        if self.num_layers < 1 {
            return err("num_layers must be at least 1".into());
        }
        if self.vocab_size <= delirium_core::report::SPECIAL_TOKENS.len() {
            return err(format!(
                "vocab_size {} leaves no room for regular tokens",
                self.vocab_size
            ));
        }
        if self.ffn_dim == 0 {
            return err("ffn_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return err(format!("dropout_rate {} not in [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    /// Small configuration for correctness checks (about 9k parameters).
    pub fn toy() -> Self {
        Self {
            vocab_size: 50,
            max_seq_len: 16,
            num_layers: 2,
            hidden_dim: 16,
            num_heads: 4,
            ffn_dim: 64,
            dropout_rate: 0.0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    /// Total scalar parameters, both heads included.
    pub fn parameter_count(&self) -> usize {
        let (v, s, d, f) = (
            self.vocab_size,
            self.max_seq_len,
            self.hidden_dim,
            self.ffn_dim,
        );
        let layer = 4 * d * d + 3 * d + 2 * d * f + f + d + 4 * d;
        v * d + s * d + 2 * d + self.num_layers * layer + d * v + v + d + 1
    }
}
