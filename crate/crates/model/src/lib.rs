//! Transformer encoder for tokenized reports, trained with masked language
//! modelling and fine-tuned for binary classification, plus the
//! statistical-feature baseline network.

pub mod baseline;
mod checkpoint;
mod config;
mod encoder;
mod gradcheck;
mod mask;
mod model;
mod numeric;
mod optim;
mod params;

pub use checkpoint::{
    encoder_container, encoder_from_container, load_encoder, save_encoder, Container,
    LoadedEncoder, NamedTensor, TensorInfo, MAGIC,
};
pub use config::ModelConfig;
pub use encoder::{gelu, gelu_grad, ActiveTokens, LN_EPS};
pub use gradcheck::{gradient_check, GradCheckReport, GRAD_CHECK_TOLERANCE};
pub use mask::{mask_tokens, MaskTarget, MaskedSequence, DEFAULT_MASK_RATE};
pub use model::{
    bce_with_logit, grad_norm_sq, probability, sigmoid, train_step, Batch, ClassifyExample,
    EncoderModel, FreezeSpec, Objective, Prefix,
};
pub use numeric::numeric_value_table;
pub use optim::{Adam, StepScale};
pub use params::{LayerParams, ParamGroup, Params, TensorRef};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("token id {id} is outside the vocabulary of {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("sequence has no non-padding tokens")]
    EmptySequence,
    #[error("masked target at position {0} is padding")]
    TargetOnPadding(usize),
    #[error("batch has no masked targets")]
    NoTargets,
    #[error(
        "freeze spec x={x}, y={y} is invalid for {layers} layers (need y >= 1 and x + y = layers)"
    )]
    InvalidFreeze { x: usize, y: usize, layers: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("feature vector has {got} values, model expects {expected}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
