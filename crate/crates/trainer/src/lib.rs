//! Two-stage random hyperparameter search: masked-language-model
//! pretraining selected by tuning loss, then classification fine-tuning
//! selected by tuning AUROC, each keeping its best epoch.

mod audit;
mod search;
mod space;

pub use audit::write_trials;
pub use search::{
    checkpoint_best, run_finetune_search, run_pretraining_search, Direction, LabeledSet,
    SearchOutcome, SearchSettings, Stage, TrialResult, TrialStatus,
};
pub use space::{sample_trial, SearchSpace, TrialConfig};

#[derive(Debug, thiserror::Error)]
pub enum TrainerError {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("{0}")]
    Data(String),
    #[error("{0} set contains a single class; AUROC is undefined")]
    SingleClass(String),
    #[error("every trial aborted:\n  {}", .0.join("\n  "))]
    AllTrialsAborted(Vec<String>),
    #[error(transparent)]
    Model(#[from] delirium_model::ModelError),
}
