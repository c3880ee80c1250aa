use std::path::{Path, PathBuf};

use delirium_core::derive_seed;
use delirium_model::{
    mask_tokens, save_encoder, train_step, Adam, Batch, ClassifyExample, EncoderModel, FreezeSpec,
    MaskedSequence, ModelError, Prefix,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{sample_trial, SearchSpace, TrainerError, TrialConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Stage::Pretrain => Direction::Minimize,
            Stage::Finetune => Direction::Maximize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Minimize => a < b,
            Direction::Maximize => a > b,
        }
    }
}

/// Index of the optimum; the earliest epoch wins ties. `None` for an empty
/// history.
pub fn checkpoint_best(history: &[f64], direction: Direction) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in history.iter().enumerate() {
        if best.is_none_or(|b| direction.better(v, history[b])) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSettings {
    pub n_trials: usize,
    pub max_epochs: usize,
    pub mask_rate: f64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            n_trials: 20,
            max_epochs: 10,
            mask_rate: delirium_model::DEFAULT_MASK_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum TrialStatus {
    Completed,
    Aborted(String),
}

/// One trial's audit record. `history[0]` is the tuning metric before any
/// update; `history[e]` follows epoch `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub stage: Stage,
    pub config: TrialConfig,
    pub history: Vec<f64>,
    /// Mean training loss of each epoch.
    pub train_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    pub status: TrialStatus,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: EncoderModel,
    pub winner: usize,
    pub trials: Vec<TrialResult>,
}

impl SearchOutcome {
    pub fn winning_trial(&self) -> &TrialResult {
        &self.trials[self.winner]
    }
}

struct TrialRun {
    history: Vec<f64>,
    train_loss: Vec<f64>,
    best: Option<(usize, EncoderModel)>,
    abort: Option<String>,
}

impl TrialRun {
    fn new() -> Self {
        Self {
            history: Vec::new(),
            train_loss: Vec::new(),
            best: None,
            abort: None,
        }
    }

    /// Records an epoch's metric, keeping the model if it is the new optimum.
    fn record(&mut self, metric: f64, model: &EncoderModel, direction: Direction) {
        let epoch = self.history.len();
        self.history.push(metric);
        if self
            .best
            .as_ref()
            .is_none_or(|(e, _)| direction.better(metric, self.history[*e]))
        {
            self.best = Some((epoch, model.clone()));
        }
    }
}

fn sample_trials(
    space: &SearchSpace,
    num_layers: usize,
    settings: &SearchSettings,
    seed: u64,
    stage: Stage,
) -> Vec<TrialConfig> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("{}/trials", stage.as_str())));
    (0..settings.n_trials)
        .map(|id| sample_trial(space, num_layers, id, &mut rng))
        .collect()
}

fn finish(
    stage: Stage,
    configs: Vec<TrialConfig>,
    runs: Vec<TrialRun>,
    checkpoint_dir: Option<&Path>,
) -> Result<SearchOutcome, TrainerError> {
    let direction = stage.direction();
    let mut trials = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, f64, EncoderModel)> = None;
    for (config, run) in configs.into_iter().zip(runs) {
        let status = match run.abort {
            Some(reason) => {
                log::warn!(
                    "{} trial {} aborted: {reason}",
                    stage.as_str(),
                    config.trial_id
                );
                TrialStatus::Aborted(reason)
            }
            None => TrialStatus::Completed,
        };
        let (best_epoch, best_metric, model) = match (&status, run.best) {
            (TrialStatus::Completed, Some((e, m))) => (Some(e), Some(run.history[e]), Some(m)),
            _ => (None, None, None),
        };
        let mut checkpoint = None;
        if let (Some(dir), Some(m), Some(e)) = (checkpoint_dir, &model, best_epoch) {
            let path = dir.join(format!(
                "{}_trial_{:02}.ckpt",
                stage.as_str(),
                config.trial_id
            ));
            let extra = serde_json::json!({
                "stage": stage.as_str(),
                "trial": config,
                "best_epoch": e,
                "best_metric": run.history[e],
            });
            save_encoder(&path, m, None, extra)?;
            checkpoint = Some(path);
        }
        if let (Some(v), Some(m)) = (best_metric, model) {
            if best
                .as_ref()
                .is_none_or(|(_, b, _)| direction.better(v, *b))
            {
                best = Some((trials.len(), v, m));
            }
        }
        trials.push(TrialResult {
            stage,
            config,
            history: run.history,
            train_loss: run.train_loss,
            best_epoch,
            best_metric,
            status,
            checkpoint,
        });
    }
    match best {
        Some((winner, _, best)) => Ok(SearchOutcome {
            best,
            winner,
            trials,
        }),
        None => Err(TrainerError::AllTrialsAborted(
            trials
                .iter()
                .map(|t| match &t.status {
                    TrialStatus::Aborted(r) => format!("trial {}: {r}", t.config.trial_id),
                    TrialStatus::Completed => format!("trial {}: no epochs", t.config.trial_id),
                })
                .collect(),
        )),
    }
}

fn freeze_of(config: &TrialConfig) -> FreezeSpec {
    FreezeSpec {
        x_frozen: config.x_frozen,
        y_trainable: config.y_trainable,
    }
}

fn guard(v: f64, what: &str) -> Result<f64, ModelError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::NonFinite(format!("{what} {v}")))
    }
}

/// Random search over MLM pretraining. Every trial starts from `init`; the
/// winner has the lowest best-epoch masked loss on the tuning corpus.
pub fn run_pretraining_search(
    init: &EncoderModel,
    train: &[Vec<u32>],
    tune: &[Vec<u32>],
    space: &SearchSpace,
    settings: &SearchSettings,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<SearchOutcome, TrainerError> {
    let layers = init.config.num_layers;
    space.validate(layers)?;
    let vocab = init.config.vocab_size;
    let mut mask_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "pretrain/tune-mask"));
    let tune_masks: Vec<MaskedSequence> = tune
        .iter()
        .filter_map(|s| mask_tokens(s, vocab, settings.mask_rate, mask_rng.random()))
        .filter(|m| !m.targets.is_empty())
        .collect();
    if tune_masks.is_empty() {
        return Err(TrainerError::Data(
            "tuning corpus yields no masked targets".into(),
        ));
    }
    if train.is_empty() {
        return Err(TrainerError::Data("empty pretraining corpus".into()));
    }
    let configs = sample_trials(space, layers, settings, seed, Stage::Pretrain);
    let runs: Vec<TrialRun> = configs
        .par_iter()
        .map(|cfg| pretrain_trial(init, train, &tune_masks, cfg, settings))
        .collect();
    finish(Stage::Pretrain, configs, runs, checkpoint_dir)
}

fn pretrain_trial(
    init: &EncoderModel,
    train: &[Vec<u32>],
    tune: &[MaskedSequence],
    cfg: &TrialConfig,
    settings: &SearchSettings,
) -> TrialRun {
    let mut run = TrialRun::new();
    let result = (|| -> Result<(), ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut model = init.clone();
        let mut opt = Adam::new(cfg.learning_rate);
        let freeze = freeze_of(cfg);
        let vocab = model.config.vocab_size;
        run.record(
            guard(model.loss_mlm(tune)?, "tuning loss")?,
            &model,
            Direction::Minimize,
        );
        let mut order: Vec<usize> = (0..train.len()).collect();
        for _ in 0..settings.max_epochs {
            order.shuffle(&mut rng);
            let (mut total, mut batches) = (0.0, 0usize);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<MaskedSequence> = chunk
                    .iter()
                    .filter_map(|&i| {
                        mask_tokens(&train[i], vocab, settings.mask_rate, rng.random())
                    })
                    .collect();
                if batch.iter().all(|m| m.targets.is_empty()) {
                    continue;
                }
                total += train_step(
                    &mut model,
                    &mut opt,
                    &Batch::Mlm(&batch),
                    freeze,
                    Some(&mut rng),
                )?;
                batches += 1;
            }
            run.train_loss.push(total / batches.max(1) as f64);
            run.record(
                guard(model.loss_mlm(tune)?, "tuning loss")?,
                &model,
                Direction::Minimize,
            );
        }
        Ok(())
    })();
    if let Err(e) = result {
        run.abort = Some(e.to_string());
    }
    run
}

/// Labelled token sequences.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSet<'a> {
    pub sequences: &'a [Vec<u32>],
    pub labels: &'a [bool],
}

/// Random search over classification fine-tuning from `pretrained`; the
/// winner has the highest best-epoch tuning AUROC. Tuning data is only
/// scored, never trained on.
pub fn run_finetune_search(
    pretrained: &EncoderModel,
    train: LabeledSet<'_>,
    tune: LabeledSet<'_>,
    space: &SearchSpace,
    settings: &SearchSettings,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<SearchOutcome, TrainerError> {
    let layers = pretrained.config.num_layers;
    space.validate(layers)?;
    for (name, set) in [("training", &train), ("tuning", &tune)] {
        if set.sequences.len() != set.labels.len() {
            return Err(TrainerError::Data(format!(
                "{name} set has mismatched sequences and labels"
            )));
        }
        let pos = set.labels.iter().filter(|&&l| l).count();
        if pos == 0 || pos == set.labels.len() {
            return Err(TrainerError::SingleClass(name.into()));
        }
    }
    let configs = sample_trials(space, layers, settings, seed, Stage::Finetune);
    let runs: Vec<TrialRun> = configs
        .par_iter()
        .map(|cfg| finetune_trial(pretrained, train, tune, cfg, settings))
        .collect();
    finish(Stage::Finetune, configs, runs, checkpoint_dir)
}

fn prefixes(
    model: &EncoderModel,
    seqs: &[Vec<u32>],
    layer: usize,
) -> Result<Vec<Option<Prefix>>, ModelError> {
    if layer == 0 {
        return Ok(vec![None; seqs.len()]);
    }
    seqs.iter()
        .map(|s| model.prefix(s, layer).map(Some))
        .collect()
}

fn tune_auroc(
    model: &EncoderModel,
    tune: LabeledSet<'_>,
    cached: &[Option<Prefix>],
) -> Result<f64, ModelError> {
    let scores = tune
        .sequences
        .iter()
        .zip(cached)
        .map(|(s, p)| match p {
            Some(p) => Ok(delirium_model::probability(model.classify_logit_from(p))),
            None => model.forward_classify(s),
        })
        .collect::<Result<Vec<f64>, _>>()?;
    delirium_metrics::auroc(&scores, tune.labels)
        .map_err(|e| ModelError::NonFinite(format!("tuning AUROC: {e}")))
}

fn finetune_trial(
    pretrained: &EncoderModel,
    train: LabeledSet<'_>,
    tune: LabeledSet<'_>,
    cfg: &TrialConfig,
    settings: &SearchSettings,
) -> TrialRun {
    let mut run = TrialRun::new();
    let result = (|| -> Result<(), ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut model = pretrained.clone();
        let mut opt = Adam::new(cfg.learning_rate);
        let freeze = freeze_of(cfg);
        // frozen layers never change, so their output is computed once
        let cache_layer = if model.config.dropout_rate == 0.0 {
            cfg.x_frozen
        } else {
            0
        };
        let train_prefix = prefixes(&model, train.sequences, cache_layer)?;
        let tune_prefix = prefixes(&model, tune.sequences, cfg.x_frozen)?;
        run.record(
            tune_auroc(&model, tune, &tune_prefix)?,
            &model,
            Direction::Maximize,
        );
        let mut order: Vec<usize> = (0..train.sequences.len()).collect();
        for _ in 0..settings.max_epochs {
            order.shuffle(&mut rng);
            let (mut total, mut batches) = (0.0, 0usize);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<ClassifyExample> = chunk
                    .iter()
                    .map(|&i| ClassifyExample {
                        token_ids: &train.sequences[i],
                        label: train.labels[i],
                        prefix: train_prefix[i].as_ref(),
                    })
                    .collect();
                total += train_step(
                    &mut model,
                    &mut opt,
                    &Batch::Classify(&batch),
                    freeze,
                    Some(&mut rng),
                )?;
                batches += 1;
            }
            run.train_loss.push(total / batches.max(1) as f64);
            run.record(
                tune_auroc(&model, tune, &tune_prefix)?,
                &model,
                Direction::Maximize,
            );
        }
        Ok(())
    })();
    if let Err(e) = result {
        run.abort = Some(e.to_string());
    }
    run
}
