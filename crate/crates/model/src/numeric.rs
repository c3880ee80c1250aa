//! Fixed encoding of numeric token values.
//!
//! Each vocabulary entry that parses as a number gets a row of sin/cos
//! pairs. The first half of the pairs read `s = sign(v) ln(1 + |v|)` at
//! geometric frequencies from 1/8 to 16, which resolves relative
//! differences; the rest read `v` itself at frequencies from 1/1024 to 1,
//! which keeps absolute differences between large values (ages, volumes)
//! apart. Every other row is zero. The table is added to the learned token embedding and
//! never updated, so nearby values start with nearby representations.

use delirium_core::report::Vocabulary;
use ndarray::Array2;

use crate::{EncoderModel, ModelError};

const LOG_FREQ: (f64, f64) = (0.125, 16.0);
const LINEAR_FREQ: (f64, f64) = (1.0 / 1024.0, 1.0);

fn geometric(k: usize, n: usize, (lo, hi): (f64, f64)) -> f64 {
    lo * (hi / lo).powf(k as f64 / (n - 1).max(1) as f64)
}

pub fn numeric_value_table(vocab: &Vocabulary, hidden_dim: usize, scale: f64) -> Array2<f64> {
    let mut table = Array2::zeros((vocab.len(), hidden_dim));
    let pairs = hidden_dim / 2;
    let log_pairs = pairs - pairs / 2;
    for id in 0..vocab.len() as u32 {
        let Some(v) = vocab
            .token(id)
            .and_then(|t| t.parse::<f64>().ok())
            .filter(|v| v.is_finite())
        else {
            continue;
        };
        let s = v.signum() * v.abs().ln_1p();
        for k in 0..pairs {
            let angle = if k < log_pairs {
                geometric(k, log_pairs, LOG_FREQ) * s
            } else {
                geometric(k - log_pairs, pairs - log_pairs, LINEAR_FREQ) * v
            };
            table[[id as usize, 2 * k]] = scale * angle.sin();
            table[[id as usize, 2 * k + 1]] = scale * angle.cos();
        }
    }
    table
}

impl EncoderModel {
    /// Attaches (or with `None` removes) a fixed vocab × hidden_dim table.
    pub fn set_value_encoding(&mut self, table: Option<Array2<f64>>) -> Result<(), ModelError> {
        if let Some(t) = &table {
            let want = (self.config.vocab_size, self.config.hidden_dim);
            if t.dim() != want {
                return Err(ModelError::Config(format!(
                    "value table is {:?}, expected {want:?}",
                    t.dim()
                )));
            }
            if t.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::NonFinite("value table".into()));
            }
        }
        self.params.value_enc =
            table.map(|t| std::sync::Arc::new(t.as_standard_layout().into_owned()));
        Ok(())
    }
}
