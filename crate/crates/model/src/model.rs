use ndarray::{Array2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{self, ActiveTokens, Trace};
use crate::{Adam, MaskedSequence, ModelConfig, ModelError, ParamGroup, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Mlm,
    Classify,
}

/// Bottom `x_frozen` layers (and the embeddings when `x_frozen >= 1`) stay
/// fixed; the top `y_trainable` layers and the active head are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeSpec {
    pub x_frozen: usize,
    pub y_trainable: usize,
}

impl FreezeSpec {
    pub fn all_trainable(num_layers: usize) -> Self {
        Self {
            x_frozen: 0,
            y_trainable: num_layers,
        }
    }

    pub fn validate(&self, num_layers: usize) -> Result<(), ModelError> {
        if self.y_trainable < 1 || self.x_frozen + self.y_trainable != num_layers {
            return Err(ModelError::InvalidFreeze {
                x: self.x_frozen,
                y: self.y_trainable,
                layers: num_layers,
            });
        }
        Ok(())
    }

    pub fn is_trainable(&self, group: ParamGroup, objective: Objective) -> bool {
        match group {
            ParamGroup::Embeddings => self.x_frozen == 0,
            ParamGroup::Layer(i) => i >= self.x_frozen,
            ParamGroup::MlmHead => objective == Objective::Mlm,
            ParamGroup::ClsHead => objective == Objective::Classify,
        }
    }
}

/// Hidden state entering layer `layer`, computed once for frozen layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Prefix {
    pub layer: usize,
    pub hidden: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyExample<'a> {
    pub token_ids: &'a [u32],
    pub label: bool,
    pub prefix: Option<&'a Prefix>,
}

impl<'a> ClassifyExample<'a> {
    pub fn new(token_ids: &'a [u32], label: bool) -> Self {
        Self {
            token_ids,
            label,
            prefix: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Batch<'a> {
    Mlm(&'a [MaskedSequence]),
    Classify(&'a [ClassifyExample<'a>]),
}

impl Batch<'_> {
    pub fn objective(&self) -> Objective {
        match self {
            Batch::Mlm(_) => Objective::Mlm,
            Batch::Classify(_) => Objective::Classify,
        }
    }
}

/// Binary cross-entropy on a logit; exactly symmetric under (z, y) → (−z, 1−y).
pub fn bce_with_logit(z: f64, label: bool) -> f64 {
    let y = if label { z } else { 0.0 };
    z.max(0.0) - y + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Sigmoid kept strictly inside (0, 1).
pub fn probability(z: f64) -> f64 {
    sigmoid(z.clamp(-700.0, 36.0))
}

fn log_softmax_row(logits: ndarray::ArrayView1<f64>) -> (f64, f64) {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let sum: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
    (max, sum.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: ModelConfig,
    pub params: Params,
    pub rng_seed: u64,
}

impl EncoderModel {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self {
            params: Params::init(&config, seed),
            config,
            rng_seed: seed,
        })
    }

    pub fn tokens(&self, token_ids: &[u32]) -> Result<ActiveTokens, ModelError> {
        ActiveTokens::new(&self.config, token_ids)
    }

    fn cls_logit_of(&self, out: &Array2<f64>) -> f64 {
        out.row(0).dot(&self.params.cls_w) + self.params.cls_b[0]
    }

    /// Classification logit in evaluation mode.
    pub fn classify_logit(&self, token_ids: &[u32]) -> Result<f64, ModelError> {
        let tokens = self.tokens(token_ids)?;
        let (out, _) = encoder::encode(&self.params, &self.config, &tokens, &[0], None, false);
        Ok(self.cls_logit_of(&out))
    }

    pub fn forward_classify(&self, token_ids: &[u32]) -> Result<f64, ModelError> {
        self.classify_logit(token_ids).map(probability)
    }

    /// Evaluation-mode logit starting from a cached prefix.
    pub fn classify_logit_from(&self, prefix: &Prefix) -> f64 {
        let (out, _) = encoder::encode_from(
            &self.params,
            &self.config,
            prefix.layer,
            prefix.hidden.clone(),
            &[0],
            None,
            false,
        );
        self.cls_logit_of(&out)
    }

    /// Hidden state entering layer `layer` in evaluation mode.
    pub fn prefix(&self, token_ids: &[u32], layer: usize) -> Result<Prefix, ModelError> {
        let tokens = self.tokens(token_ids)?;
        Ok(Prefix {
            layer,
            hidden: encoder::hidden_before(&self.params, &self.config, &tokens, layer),
        })
    }

    /// MLM logits (targets × vocab) at the given original positions.
    pub fn mlm_logits(
        &self,
        token_ids: &[u32],
        positions: &[usize],
    ) -> Result<Array2<f64>, ModelError> {
        let tokens = self.tokens(token_ids)?;
        let rows = target_rows(&tokens, positions)?;
        let (out, _) = encoder::encode(&self.params, &self.config, &tokens, &rows, None, false);
        Ok(self.mlm_head(&out))
    }

    fn mlm_head(&self, out: &Array2<f64>) -> Array2<f64> {
        out.dot(&self.params.mlm_w) + self.params.mlm_b.view().insert_axis(Axis(0))
    }

    /// Mean binary cross-entropy over the batch.
    pub fn loss_classify(&self, batch: &[ClassifyExample<'_>]) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for ex in batch {
            let z = match ex.prefix {
                Some(p) => self.classify_logit_from(p),
                None => self.classify_logit(ex.token_ids)?,
            };
            total += bce_with_logit(z, ex.label);
        }
        Ok(total / batch.len().max(1) as f64)
    }

    /// Mean cross-entropy over every target in the batch.
    pub fn loss_mlm(&self, batch: &[MaskedSequence]) -> Result<f64, ModelError> {
        let (mut total, mut count) = (0.0, 0usize);
        for seq in batch.iter().filter(|s| !s.targets.is_empty()) {
            let positions: Vec<usize> = seq.targets.iter().map(|t| t.position).collect();
            let logits = self.mlm_logits(&seq.corrupted, &positions)?;
            for (row, t) in logits.axis_iter(Axis(0)).zip(&seq.targets) {
                let (max, lse) = log_softmax_row(row);
                total += max + lse - row[t.original as usize];
                count += 1;
            }
        }
        if count == 0 {
            return Err(ModelError::NoTargets);
        }
        Ok(total / count as f64)
    }

    pub fn loss(&self, batch: &Batch<'_>) -> Result<f64, ModelError> {
        match batch {
            Batch::Mlm(b) => self.loss_mlm(b),
            Batch::Classify(b) => self.loss_classify(b),
        }
    }

    /// Batch loss and its gradient for parameters at or above layer
    /// `lowest_trainable` (plus embeddings when it is 0) and the active head.
    pub fn gradients(
        &self,
        batch: &Batch<'_>,
        lowest_trainable: usize,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Params), ModelError> {
        let mut grads = self.params.zeros_like();
        let dropout_active = rng.is_some() && self.config.dropout_rate > 0.0;
        let loss = match batch {
            Batch::Classify(examples) => {
                let n = examples.len().max(1) as f64;
                let mut total = 0.0;
                for ex in examples.iter() {
                    let (out, trace) = match ex.prefix {
                        Some(p)
                            if !dropout_active
                                && p.layer >= 1
                                && p.layer <= lowest_trainable
                                && p.layer < self.config.num_layers =>
                        {
                            let (out, layers) = encoder::encode_from(
                                &self.params,
                                &self.config,
                                p.layer,
                                p.hidden.clone(),
                                &[0],
                                rng.as_deref_mut(),
                                true,
                            );
                            (
                                out,
                                Trace {
                                    start: p.layer,
                                    emb: None,
                                    layers,
                                },
                            )
                        }
                        _ => {
                            let tokens = self.tokens(ex.token_ids)?;
                            encoder::encode(
                                &self.params,
                                &self.config,
                                &tokens,
                                &[0],
                                rng.as_deref_mut(),
                                true,
                            )
                        }
                    };
                    let z = self.cls_logit_of(&out);
                    total += bce_with_logit(z, ex.label);
                    let dz = (sigmoid(z) - if ex.label { 1.0 } else { 0.0 }) / n;
                    grads.cls_w.scaled_add(dz, &out.row(0));
                    grads.cls_b[0] += dz;
                    let d_out = (&self.params.cls_w * dz).insert_axis(Axis(0));
                    encoder::backward(
                        &self.params,
                        &self.config,
                        &trace,
                        d_out,
                        lowest_trainable,
                        &mut grads,
                    );
                }
                total / n
            }
            Batch::Mlm(seqs) => {
                let count: usize = seqs.iter().map(|s| s.targets.len()).sum();
                if count == 0 {
                    return Err(ModelError::NoTargets);
                }
                let n = count as f64;
                let mut total = 0.0;
                for seq in seqs.iter().filter(|s| !s.targets.is_empty()) {
                    let tokens = self.tokens(&seq.corrupted)?;
                    let positions: Vec<usize> = seq.targets.iter().map(|t| t.position).collect();
                    let rows = target_rows(&tokens, &positions)?;
                    let (out, trace) = encoder::encode(
                        &self.params,
                        &self.config,
                        &tokens,
                        &rows,
                        rng.as_deref_mut(),
                        true,
                    );
                    let mut dlogits = self.mlm_head(&out);
                    for (mut row, t) in dlogits.axis_iter_mut(Axis(0)).zip(&seq.targets) {
                        let (max, lse) = log_softmax_row(row.view());
                        total += max + lse - row[t.original as usize];
                        row.mapv_inplace(|v| (v - max - lse).exp() / n);
                        row[t.original as usize] -= 1.0 / n;
                    }
                    grads.mlm_w += &out.t().dot(&dlogits);
                    grads.mlm_b += &dlogits.sum_axis(Axis(0));
                    let d_out = dlogits.dot(&self.params.mlm_w.t());
                    encoder::backward(
                        &self.params,
                        &self.config,
                        &trace,
                        d_out,
                        lowest_trainable,
                        &mut grads,
                    );
                }
                total / n
            }
        };
        Ok((loss, grads))
    }
}

fn target_rows(tokens: &ActiveTokens, positions: &[usize]) -> Result<Vec<usize>, ModelError> {
    positions
        .iter()
        .map(|&p| tokens.active_index(p).ok_or(ModelError::TargetOnPadding(p)))
        .collect()
}

/// One optimizer update on the trainable parameters. Returns the batch loss
/// before the update.
pub fn train_step(
    model: &mut EncoderModel,
    optimizer: &mut Adam,
    batch: &Batch<'_>,
    freeze: FreezeSpec,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<f64, ModelError> {
    freeze.validate(model.config.num_layers)?;
    let objective = batch.objective();
    let (loss, grads) = model.gradients(batch, freeze.x_frozen, rng)?;
    if !loss.is_finite() {
        return Err(ModelError::NonFinite(format!("{objective:?} loss {loss}")));
    }
    let grad_tensors = grads.tensors();
    if let Some(bad) = grad_tensors
        .iter()
        .find(|t| freeze.is_trainable(t.group, objective) && t.data.iter().any(|g| !g.is_finite()))
    {
        return Err(ModelError::NonFinite(format!("gradient of {}", bad.name)));
    }
    let scale = optimizer.begin_step();
    let mut i = 0;
    model.params.for_each_mut(|_, group, p| {
        if freeze.is_trainable(group, objective) {
            optimizer.update(i, p, grad_tensors[i].data, scale);
        }
        i += 1;
    });
    Ok(loss)
}

/// Squared L2 norm of a gradient, over all tensors.
pub fn grad_norm_sq(grads: &Params) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|g| g * g)
        .sum()
}
