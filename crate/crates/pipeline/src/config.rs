//! TOML run configuration. Relative paths resolve against the directory of
//! the configuration file.

use std::path::{Path, PathBuf};

use delirium_core::ehr::DatasetPaths;
use delirium_core::synth::{ExclusionPlant, SignalFeature, SynthConfig};
use delirium_explain::ModePolicy;
use delirium_metrics::BootstrapConfig;
use delirium_model::baseline::BaselineConfig;
use delirium_model::ModelConfig;
use delirium_trainer::{SearchSettings, SearchSpace};
use serde::Deserialize;

use crate::PipelineError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Feature dictionary CSV; the bundled clinical dictionary when absent.
    #[serde(default)]
    pub dictionary: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    /// Present when the input tables are generated by `synth`.
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default = "SearchSection::pretrain_default")]
    pub pretrain: SearchSection,
    #[serde(default = "SearchSection::finetune_default")]
    pub finetune: SearchSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub explain: ExplainSection,
}

/// Input tables. `dir` defaults to `<output_dir>/data`; individual files
/// default to their standard names inside it.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub stays: Option<PathBuf>,
    #[serde(rename = "static")]
    pub profiles: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub medications: Option<PathBuf>,
    pub assessments: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_stays: usize,
    pub delirium_rate_target: f64,
    pub signal_features: Vec<SignalFeature>,
    pub noise_scale: f64,
    pub missing_rate: f64,
    pub exclusion_plant: ExclusionPlant,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            n_stays: d.n_stays,
            delirium_rate_target: d.delirium_rate_target,
            signal_features: d.signal_features,
            noise_scale: d.noise_scale,
            missing_rate: d.missing_rate,
            exclusion_plant: d.exclusion_plant,
        }
    }
}

impl SynthSection {
    pub fn to_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n_stays: self.n_stays,
            seed,
            delirium_rate_target: self.delirium_rate_target,
            signal_features: self.signal_features.clone(),
            noise_scale: self.noise_scale,
            missing_rate: self.missing_rate,
            exclusion_plant: self.exclusion_plant.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub max_seq_len: usize,
    /// Tokens seen fewer times in the training reports map to `[UNK]`.
    pub min_frequency: u64,
    /// Amplitude of the fixed numeric-value encoding; 0 disables it.
    pub numeric_encoding_scale: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            max_seq_len: 256,
            min_frequency: 2,
            numeric_encoding_scale: 1.0,
        }
    }
}

/// Encoder shape; vocabulary size and sequence length come from the report
/// stage.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub dropout_rate: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            num_layers: 1,
            hidden_dim: 32,
            num_heads: 4,
            ffn_dim: 128,
            dropout_rate: 0.0,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self, vocab_size: usize, max_seq_len: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            max_seq_len,
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            num_heads: self.num_heads,
            ffn_dim: self.ffn_dim,
            dropout_rate: self.dropout_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub n_trials: usize,
    pub max_epochs: usize,
    #[serde(default = "default_mask_rate")]
    pub mask_rate: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: [f64; 2],
    #[serde(default = "default_batches")]
    pub batch_sizes: Vec<usize>,
    /// Allowed frozen-layer counts; empty means all of `0..num_layers`.
    #[serde(default)]
    pub x_frozen: Vec<usize>,
}

fn default_mask_rate() -> f64 {
    delirium_model::DEFAULT_MASK_RATE
}

fn default_lr() -> [f64; 2] {
    SearchSpace::default().learning_rate
}

fn default_batches() -> Vec<usize> {
    SearchSpace::default().batch_sizes
}

/// Epoch counts used with `--full-epochs`.
pub const FULL_PRETRAIN_EPOCHS: usize = 100;
pub const FULL_FINETUNE_EPOCHS: usize = 30;

impl SearchSection {
    fn pretrain_default() -> Self {
        Self {
            n_trials: 3,
            max_epochs: 3,
            mask_rate: default_mask_rate(),
            learning_rate: [1e-4, 1e-3],
            batch_sizes: vec![16, 32],
            x_frozen: Vec::new(),
        }
    }

    fn finetune_default() -> Self {
        Self {
            n_trials: 4,
            max_epochs: 12,
            mask_rate: default_mask_rate(),
            learning_rate: [3e-4, 1e-3],
            batch_sizes: vec![16, 32],
            x_frozen: Vec::new(),
        }
    }

    pub fn space(&self) -> SearchSpace {
        SearchSpace {
            learning_rate: self.learning_rate,
            batch_sizes: self.batch_sizes.clone(),
            x_frozen: self.x_frozen.clone(),
        }
    }

    pub fn settings(&self) -> SearchSettings {
        SearchSettings {
            n_trials: self.n_trials,
            max_epochs: self.max_epochs,
            mask_rate: self.mask_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub hidden: [usize; 2],
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let d = BaselineConfig::default();
        Self {
            hidden: d.hidden,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
        }
    }
}

impl BaselineSection {
    pub fn to_config(&self, seed: u64) -> BaselineConfig {
        BaselineConfig {
            hidden: self.hidden,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    pub iterations: usize,
    pub days: u32,
    /// Also write SVG renderings of the ROC and per-day CSVs.
    pub svg: bool,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        Self {
            iterations: d.iterations,
            days: d.days,
            svg: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainSection {
    pub mode: ModeName,
    pub exact_threshold: usize,
    pub permutations: usize,
    /// Validation stays attributed, in stay-id order.
    pub sample_cap: usize,
    /// Per-stay HTML and CSV text plots are written for this many stays.
    pub plots: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            mode: ModeName::Auto,
            exact_threshold: delirium_explain::DEFAULT_EXACT_THRESHOLD,
            permutations: delirium_explain::DEFAULT_PERMUTATIONS,
            sample_cap: 100,
            plots: 10,
        }
    }
}

impl ExplainSection {
    pub fn policy(&self) -> ModePolicy {
        match self.mode {
            ModeName::Auto => ModePolicy::Auto {
                exact_threshold: self.exact_threshold,
                permutations: self.permutations,
            },
            ModeName::Exact => ModePolicy::Exact,
            ModeName::MonteCarlo => ModePolicy::MonteCarlo {
                permutations: self.permutations,
            },
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve(&mut self, base: &Path) {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut self.output_dir);
        for p in [
            self.dictionary.as_mut(),
            self.data.dir.as_mut(),
            self.data.stays.as_mut(),
            self.data.profiles.as_mut(),
            self.data.observations.as_mut(),
            self.data.medications.as_mut(),
            self.data.assessments.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            abs(p);
        }
    }

    /// Restores the long epoch counts.
    pub fn use_full_epochs(&mut self) {
        self.pretrain.max_epochs = FULL_PRETRAIN_EPOCHS;
        self.finetune.max_epochs = FULL_FINETUNE_EPOCHS;
    }

    pub fn data_paths(&self) -> DatasetPaths {
        let dir = self
            .data
            .dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("data"));
        let mut p = DatasetPaths::in_dir(&dir);
        let d = &self.data;
        for (slot, over) in [
            (&mut p.stays, &d.stays),
            (&mut p.profiles, &d.profiles),
            (&mut p.observations, &d.observations),
            (&mut p.medications, &d.medications),
            (&mut p.assessments, &d.assessments),
        ] {
            if let Some(o) = over {
                *slot = o.clone();
            }
        }
        p
    }

    // `!(x > 0.0)` also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        if let Some(s) = &self.synth {
            if s.n_stays == 0 {
                return err("synth.n_stays must be positive".into());
            }
            if !(s.delirium_rate_target > 0.0 && s.delirium_rate_target < 1.0) {
                return err(format!(
                    "synth.delirium_rate_target {} not in (0, 1)",
                    s.delirium_rate_target
                ));
            }
            if !(0.0..1.0).contains(&s.missing_rate) {
                return err(format!(
                    "synth.missing_rate {} not in [0, 1)",
                    s.missing_rate
                ));
            }
            if !(s.noise_scale >= 0.0 && s.noise_scale.is_finite()) {
                return err(format!(
                    "synth.noise_scale {} must be finite and >= 0",
                    s.noise_scale
                ));
            }
        }
        if !(self.report.numeric_encoding_scale >= 0.0
            && self.report.numeric_encoding_scale.is_finite())
        {
            return err("report.numeric_encoding_scale must be finite and >= 0".into());
        }
        if self.report.min_frequency == 0 {
            return err("report.min_frequency must be at least 1".into());
        }
        // a vocabulary-independent shape check; vocab_size is a placeholder
        let probe = self.model.to_config(1000, self.report.max_seq_len);
        probe
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        for (name, s) in [("pretrain", &self.pretrain), ("finetune", &self.finetune)] {
            if s.n_trials == 0 || s.max_epochs == 0 {
                return err(format!("{name}: n_trials and max_epochs must be positive"));
            }
            if !(s.mask_rate > 0.0 && s.mask_rate < 1.0) {
                return err(format!("{name}.mask_rate {} not in (0, 1)", s.mask_rate));
            }
            s.space()
                .validate(self.model.num_layers)
                .map_err(|e| PipelineError::Config(format!("{name}: {e}")))?;
        }
        let b = &self.baseline;
        if b.hidden.contains(&0) || b.epochs == 0 || b.batch_size == 0 || !(b.learning_rate > 0.0) {
            return err(
                "baseline: hidden sizes, epochs, batch_size and learning_rate must be positive"
                    .into(),
            );
        }
        if self.evaluate.iterations == 0 || self.evaluate.days == 0 {
            return err("evaluate: iterations and days must be positive".into());
        }
        let x = &self.explain;
        if x.sample_cap == 0 || (x.mode != ModeName::Exact && x.permutations == 0) {
            return err("explain: sample_cap and permutations must be positive".into());
        }
        Ok(())
    }
}
