use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing prerequisite {}: {hint}", .path.display())]
    Missing { path: PathBuf, hint: String },
    #[error("{0}")]
    Data(String),
}

impl PipelineError {
    /// 0 success, 1 data or validation failure, 2 missing prerequisite,
    /// 3 configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Data(_) => 1,
            PipelineError::Missing { .. } => 2,
            PipelineError::Config(_) => 3,
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Data(e.to_string())
            }
        })*
    };
}

data_errors!(
    std::io::Error,
    csv::Error,
    serde_json::Error,
    delirium_core::ehr::EhrError,
    delirium_core::cohort::CohortError,
    delirium_core::report::ReportError,
    delirium_core::synth::SynthError,
    delirium_model::ModelError,
    delirium_metrics::MetricsError,
    delirium_explain::ExplainError,
);

impl From<delirium_trainer::TrainerError> for PipelineError {
    fn from(e: delirium_trainer::TrainerError) -> Self {
        match e {
            delirium_trainer::TrainerError::Space(m) => PipelineError::Config(m),
            other => PipelineError::Data(other.to_string()),
        }
    }
}
