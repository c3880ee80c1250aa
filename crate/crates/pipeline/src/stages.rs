use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use delirium_core::cohort::{
    exclusion_counts, first24h_presence, label_dataset, select_cohort, split_dataset,
    write_decisions, write_labels, ExclusionReason, Partition,
};
use delirium_core::derive_seed;
use delirium_core::ehr::{
    load_dataset, write_dataset, EhrDataset, EventIndex, FeatureDictionary, StaticProfile,
};
use delirium_core::report::{
    build_vocab, render_report, summarize_features, tokenize, TextReport, TokenizedReport,
    Vocabulary,
};
use delirium_core::synth::{generate_cohort, write_planted_importance, write_truth};
use delirium_explain::{
    aggregate_importance, explain_many, export_text_plot, importance_svg, write_attributions,
    write_importance, write_phi_csv,
};
use delirium_metrics::{
    bootstrap_auroc, roc_points, svg, wilcoxon_rank_sum, write_bootstrap_samples,
    write_comparisons, write_metrics, write_per_day, write_roc, BootstrapConfig, MetricsReport,
    ScoredCohort, ScoredEntry,
};
use delirium_model::baseline::{
    extract_stat_features, feature_columns, load_baseline, save_baseline, score_baseline,
    train_baseline, write_stat_features,
};
use delirium_model::{load_encoder, numeric_value_table, save_encoder, EncoderModel};
use delirium_trainer::{
    run_finetune_search, run_pretraining_search, write_trials, LabeledSet, SearchOutcome,
};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::{PipelineConfig, PipelineError};

/// Relative names of every artifact under the output directory.
pub mod artifacts {
    pub const TRUTH: &str = "truth.csv";
    pub const PLANTED_IMPORTANCE: &str = "planted_importance.csv";
    pub const VALIDATION: &str = "validation.json";
    pub const DECISIONS: &str = "cohort_decisions.csv";
    pub const LABELS: &str = "labels.csv";
    pub const FLOW: &str = "cohort_flow.csv";
    pub const SPLIT: &str = "split.csv";
    pub const COHORT: &str = "cohort.csv";
    pub const REPORTS: &str = "reports.jsonl";
    pub const VOCAB: &str = "vocab.csv";
    pub const PRETRAIN_DIR: &str = "pretrain";
    pub const PRETRAINED: &str = "pretrained.ckpt";
    pub const FINETUNE_DIR: &str = "finetune";
    pub const MODEL: &str = "model.ckpt";
    pub const TRIALS: &str = "trials.csv";
    pub const STAT_FEATURES: &str = "stat_features.csv";
    pub const BASELINE: &str = "baseline.ckpt";
    pub const SCORES: &str = "scores.csv";
    pub const METRICS: &str = "metrics.csv";
    pub const PER_DAY: &str = "per_day.csv";
    pub const ROC: &str = "roc.csv";
    pub const COMPARISONS: &str = "comparisons.csv";
    pub const BOOTSTRAP: &str = "bootstrap_samples.csv";
    pub const ROC_SVG: &str = "roc.svg";
    pub const PER_DAY_SVG: &str = "per_day.svg";
    pub const ATTRIBUTION: &str = "attribution.csv";
    pub const IMPORTANCE: &str = "importance.csv";
    pub const IMPORTANCE_SVG: &str = "importance.svg";
    pub const PLOTS_DIR: &str = "plots";
    pub const RUN_LOG: &str = "run.log";
}

/// Model names used in evaluation outputs.
pub const TEXT_MODEL: &str = "text";
pub const BASELINE_MODEL: &str = "baseline";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Cohort,
    Report,
    Pretrain,
    Finetune,
    Baseline,
    Evaluate,
    Explain,
    All,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Cohort => "cohort",
            Stage::Report => "report",
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
            Stage::Baseline => "baseline",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
            Stage::All => "all",
        }
    }
}

pub struct Context {
    pub cfg: PipelineConfig,
    pub dictionary: FeatureDictionary,
}

impl Context {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        let dictionary = match &cfg.dictionary {
            Some(p) => {
                FeatureDictionary::from_path(p).map_err(|e| PipelineError::Config(e.to_string()))?
            }
            None => FeatureDictionary::default_clinical(),
        };
        if let Some(s) = &cfg.synth {
            for f in &s.signal_features {
                if !dictionary.contains(&f.variable_id) {
                    return Err(PipelineError::Config(format!(
                        "synth signal feature `{}` is not in the feature dictionary",
                        f.variable_id
                    )));
                }
            }
        }
        Ok(Self { cfg, dictionary })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    /// Stage seed derived from the master seed.
    pub fn seed(&self, label: &str) -> u64 {
        derive_seed(self.cfg.seed, label)
    }

    fn require(&self, name: &str, producer: &str) -> Result<PathBuf, PipelineError> {
        require(
            &self.path(name),
            &format!("run `pipeline {producer}` first"),
        )
    }
}

fn require(path: &Path, hint: &str) -> Result<PathBuf, PipelineError> {
    if path.is_file() {
        Ok(path.to_path_buf())
    } else {
        Err(PipelineError::Missing {
            path: path.to_path_buf(),
            hint: hint.into(),
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    Ok(BufReader::new(File::open(path)?))
}

/// Empties a stage directory so stale files from earlier runs cannot mix in.
fn fresh_dir(path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        std::fs::remove_dir_all(path)?;
    }
    std::fs::create_dir_all(path)?;
    Ok(())
}

pub fn run_stage(ctx: &Context, stage: Stage) -> Result<(), PipelineError> {
    let started = Instant::now();
    info!("stage {} started", stage.as_str());
    match stage {
        Stage::Synth => cmd_synth(ctx)?,
        Stage::Cohort => cmd_cohort(ctx)?,
        Stage::Report => cmd_report(ctx)?,
        Stage::Pretrain => cmd_pretrain(ctx)?,
        Stage::Finetune => cmd_finetune(ctx)?,
        Stage::Baseline => cmd_baseline(ctx)?,
        Stage::Evaluate => cmd_evaluate(ctx)?,
        Stage::Explain => cmd_explain(ctx)?,
        Stage::All => {
            if ctx.cfg.synth.is_some() {
                run_stage(ctx, Stage::Synth)?;
            }
            for s in [
                Stage::Cohort,
                Stage::Report,
                Stage::Pretrain,
                Stage::Finetune,
                Stage::Baseline,
                Stage::Evaluate,
                Stage::Explain,
            ] {
                run_stage(ctx, s)?;
            }
        }
    }
    info!(
        "stage {} finished in {:.1}s",
        stage.as_str(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn cmd_synth(ctx: &Context) -> Result<(), PipelineError> {
    let section = ctx
        .cfg
        .synth
        .as_ref()
        .ok_or_else(|| PipelineError::Config("no [synth] block; nothing to generate".into()))?;
    let config = section.to_config(ctx.seed("synth"));
    let cohort = generate_cohort(&config, &ctx.dictionary)?;
    let paths = ctx.cfg.data_paths();
    for p in paths.all() {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
    }
    write_dataset(&paths, &cohort.dataset)?;
    write_truth(create(&ctx.path(artifacts::TRUTH))?, &cohort.truth)?;
    write_planted_importance(
        create(&ctx.path(artifacts::PLANTED_IMPORTANCE))?,
        &cohort.truth.ranking,
    )?;
    let positives = cohort.truth.stays.iter().filter(|s| s.label).count();
    info!(
        "generated {} stays ({positives} with delirium); planted ranking: {}",
        cohort.dataset.stays.len(),
        cohort
            .truth
            .ranking
            .iter()
            .map(|r| r.variable_id.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn load_inputs(ctx: &Context) -> Result<EhrDataset, PipelineError> {
    let paths = ctx.cfg.data_paths();
    for p in paths.all() {
        require(
            p,
            "input table; run `pipeline synth` or point [data] at existing tables",
        )?;
    }
    let (dataset, report) = load_dataset(&paths, &ctx.dictionary)?;
    if report.total_rejected() > 0 {
        warn!(
            "{} input rows rejected; see {}",
            report.total_rejected(),
            artifacts::VALIDATION
        );
    }
    if report.has_cross_table_findings() {
        warn!(
            "cross-table findings: {} orphans, {} duplicate profiles, {} stays without profile",
            report.orphans.len(),
            report.duplicate_profiles.len(),
            report.stays_without_profile.len()
        );
    }
    Ok(dataset)
}

/// One included stay: partition, outcome and length of stay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub stay_id: String,
    pub patient_id: String,
    pub partition: String,
    pub delirium: bool,
    pub onset_interval: Option<u32>,
    pub los_hours: f64,
}

impl CohortRow {
    fn partition(&self) -> Partition {
        Partition::parse(&self.partition).expect("validated on read")
    }
}

pub fn cmd_cohort(ctx: &Context) -> Result<(), PipelineError> {
    let ds = load_inputs(ctx)?;
    let (_, report) = load_dataset(&ctx.cfg.data_paths(), &ctx.dictionary)?;
    let mut w = create(&ctx.path(artifacts::VALIDATION))?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;

    let labels = label_dataset(&ds);
    let presence = first24h_presence(&ds);
    let decisions = select_cohort(&ds.stays, &labels, &presence, &ds.profiles)?;
    write_decisions(create(&ctx.path(artifacts::DECISIONS))?, &decisions)?;
    write_labels(create(&ctx.path(artifacts::LABELS))?, &labels)?;

    let counts = exclusion_counts(&decisions);
    let mut flow = csv::Writer::from_writer(create(&ctx.path(artifacts::FLOW))?);
    flow.write_record(["step", "count"])?;
    flow.write_record(["all_stays", &decisions.len().to_string()])?;
    for r in ExclusionReason::ORDER {
        flow.write_record([r.as_str(), &counts[&r].to_string()])?;
    }
    let included: Vec<_> = ds
        .stays
        .iter()
        .zip(&decisions)
        .filter(|(_, d)| d.included())
        .map(|(s, _)| s)
        .collect();
    flow.write_record(["included", &included.len().to_string()])?;
    flow.flush()?;

    let split = split_dataset(included.iter().map(|s| &s.patient_id), ctx.seed("split"))?;
    split.write_csv(create(&ctx.path(artifacts::SPLIT))?)?;
    let by_stay: HashMap<_, _> = labels.iter().map(|l| (&l.stay_id, l)).collect();
    let mut w = csv::Writer::from_writer(create(&ctx.path(artifacts::COHORT))?);
    let mut positives = 0;
    for s in &included {
        let l = by_stay[&s.stay_id];
        positives += usize::from(l.delirium);
        w.serialize(CohortRow {
            stay_id: s.stay_id.to_string(),
            patient_id: s.patient_id.to_string(),
            partition: split
                .partition_of(&s.patient_id)
                .expect("split covers the cohort")
                .as_str()
                .into(),
            delirium: l.delirium,
            onset_interval: l.onset_interval,
            los_hours: s.los_hours(),
        })?;
    }
    w.flush()?;
    info!(
        "{} of {} stays included, {positives} with delirium; split {}/{}/{} patients (train/tune/validation)",
        included.len(),
        decisions.len(),
        split.train_ids.len(),
        split.tune_ids.len(),
        split.internal_validation_ids.len()
    );
    Ok(())
}

pub fn read_cohort(ctx: &Context) -> Result<Vec<CohortRow>, PipelineError> {
    let path = ctx.require(artifacts::COHORT, "cohort")?;
    let rows: Vec<CohortRow> = csv::Reader::from_reader(open(&path)?)
        .deserialize()
        .collect::<Result<_, _>>()?;
    if let Some(bad) = rows
        .iter()
        .find(|r| Partition::parse(&r.partition).is_none())
    {
        return Err(PipelineError::Data(format!(
            "{}: bad partition `{}`",
            path.display(),
            bad.partition
        )));
    }
    Ok(rows)
}

pub fn cmd_report(ctx: &Context) -> Result<(), PipelineError> {
    let rows = read_cohort(ctx)?;
    let ds = load_inputs(ctx)?;
    let index = EventIndex::new(&ds);
    let profiles: HashMap<&str, &StaticProfile> = ds
        .profiles
        .iter()
        .map(|p| (p.stay_id.as_str(), p))
        .collect();
    let mut w = create(&ctx.path(artifacts::REPORTS))?;
    let mut train_text = Vec::new();
    for row in &rows {
        let profile = profiles.get(row.stay_id.as_str()).ok_or_else(|| {
            PipelineError::Data(format!("stay {} has no static profile", row.stay_id))
        })?;
        let summary = summarize_features(
            &profile.stay_id,
            index.events(&profile.stay_id),
            &ctx.dictionary,
        );
        let report = render_report(profile, &summary, &ctx.dictionary);
        serde_json::to_writer(&mut w, &report)?;
        writeln!(w)?;
        if row.partition() == Partition::Train {
            train_text.push(report.serialized);
        }
    }
    w.flush()?;
    let vocab = build_vocab(
        train_text.iter().map(String::as_str),
        ctx.cfg.report.min_frequency,
    )?;
    vocab.write_csv(create(&ctx.path(artifacts::VOCAB))?)?;
    info!(
        "{} reports written; vocabulary of {} tokens from {} training reports",
        rows.len(),
        vocab.len(),
        train_text.len()
    );
    Ok(())
}

/// Cohort rows with their reports, tokenized against the training vocabulary.
pub struct Corpus {
    pub rows: Vec<CohortRow>,
    pub reports: Vec<TextReport>,
    pub tokens: Vec<TokenizedReport>,
    pub vocab: Vocabulary,
}

impl Corpus {
    pub fn indices(&self, partition: Partition) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| self.rows[i].partition() == partition)
            .collect()
    }

    pub fn sequences(&self, idx: &[usize]) -> Vec<Vec<u32>> {
        idx.iter()
            .map(|&i| self.tokens[i].token_ids.clone())
            .collect()
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<bool> {
        idx.iter().map(|&i| self.rows[i].delirium).collect()
    }
}

pub fn load_corpus(ctx: &Context) -> Result<Corpus, PipelineError> {
    let rows = read_cohort(ctx)?;
    let reports_path = ctx.require(artifacts::REPORTS, "report")?;
    let vocab_path = ctx.require(artifacts::VOCAB, "report")?;
    let mut reports = Vec::with_capacity(rows.len());
    for line in open(&reports_path)?.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            reports.push(serde_json::from_str::<TextReport>(&line)?);
        }
    }
    if reports.len() != rows.len()
        || reports
            .iter()
            .zip(&rows)
            .any(|(r, c)| r.stay_id.as_str() != c.stay_id)
    {
        return Err(PipelineError::Data(format!(
            "{} does not match {}; rerun `pipeline report`",
            artifacts::REPORTS,
            artifacts::COHORT
        )));
    }
    let vocab = Vocabulary::read_csv(open(&vocab_path)?, ctx.cfg.report.min_frequency)?;
    let tokens = reports
        .iter()
        .map(|r| tokenize(r, &vocab, ctx.cfg.report.max_seq_len))
        .collect::<Result<Vec<_>, _>>()?;
    let truncated = tokens.iter().filter(|t| !t.dropped.is_empty()).count();
    if truncated > 0 {
        warn!(
            "{truncated} reports lost trailing sections to max_seq_len {}",
            ctx.cfg.report.max_seq_len
        );
    }
    Ok(Corpus {
        rows,
        reports,
        tokens,
        vocab,
    })
}

fn initial_model(ctx: &Context, vocab: &Vocabulary) -> Result<EncoderModel, PipelineError> {
    let config = ctx
        .cfg
        .model
        .to_config(vocab.len(), ctx.cfg.report.max_seq_len);
    let mut model = EncoderModel::init(config, ctx.seed("init"))
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let scale = ctx.cfg.report.numeric_encoding_scale;
    if scale > 0.0 {
        model.set_value_encoding(Some(numeric_value_table(
            vocab,
            model.config.hidden_dim,
            scale,
        )))?;
    }
    Ok(model)
}

fn winner_meta(stage: &str, outcome: &SearchOutcome) -> serde_json::Value {
    let w = outcome.winning_trial();
    serde_json::json!({
        "stage": stage,
        "trial": outcome.winner,
        "best_epoch": w.best_epoch,
        "best_metric": w.best_metric,
    })
}

/// Rewrites the combined audit log from the per-stage logs present.
fn merge_trial_logs(ctx: &Context) -> Result<(), PipelineError> {
    let mut out = csv::Writer::from_writer(create(&ctx.path(artifacts::TRIALS))?);
    let mut header_written = false;
    for dir in [artifacts::PRETRAIN_DIR, artifacts::FINETUNE_DIR] {
        let path = ctx.path(dir).join(artifacts::TRIALS);
        if !path.is_file() {
            continue;
        }
        let mut r = csv::Reader::from_reader(open(&path)?);
        if !header_written {
            out.write_record(r.headers()?)?;
            header_written = true;
        }
        for rec in r.records() {
            out.write_record(&rec?)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_stage_trials(
    ctx: &Context,
    dir: &Path,
    outcome: &SearchOutcome,
) -> Result<(), PipelineError> {
    write_trials(
        create(&dir.join(artifacts::TRIALS))?,
        &outcome.trials,
        Some(&ctx.cfg.output_dir),
    )?;
    merge_trial_logs(ctx)
}

pub fn cmd_pretrain(ctx: &Context) -> Result<(), PipelineError> {
    let corpus = load_corpus(ctx)?;
    let init = initial_model(ctx, &corpus.vocab)?;
    let train = corpus.sequences(&corpus.indices(Partition::Train));
    let tune = corpus.sequences(&corpus.indices(Partition::Tune));
    let dir = ctx.path(artifacts::PRETRAIN_DIR);
    fresh_dir(&dir)?;
    let section = &ctx.cfg.pretrain;
    info!(
        "pretraining: {} trials x {} epochs on {} reports ({} parameters)",
        section.n_trials,
        section.max_epochs,
        train.len(),
        init.config.parameter_count()
    );
    let outcome = run_pretraining_search(
        &init,
        &train,
        &tune,
        &section.space(),
        &section.settings(),
        ctx.seed("pretrain"),
        Some(&dir),
    )?;
    save_encoder(
        &ctx.path(artifacts::PRETRAINED),
        &outcome.best,
        None,
        winner_meta("pretrain", &outcome),
    )?;
    write_stage_trials(ctx, &dir, &outcome)?;
    let w = outcome.winning_trial();
    info!(
        "pretraining winner: trial {} epoch {:?}, tuning loss {:.4} (epoch 0: {:.4})",
        outcome.winner,
        w.best_epoch,
        w.best_metric.unwrap_or(f64::NAN),
        w.history.first().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn load_checkpoint(
    ctx: &Context,
    name: &str,
    producer: &str,
    vocab: &Vocabulary,
) -> Result<EncoderModel, PipelineError> {
    let path = ctx.require(name, producer)?;
    let model = load_encoder(&path)?.model;
    if model.config.vocab_size != vocab.len() {
        return Err(PipelineError::Data(format!(
            "{name} was trained with a {}-token vocabulary but {} has {}; rerun `pipeline {producer}`",
            model.config.vocab_size,
            artifacts::VOCAB,
            vocab.len()
        )));
    }
    Ok(model)
}

pub fn cmd_finetune(ctx: &Context) -> Result<(), PipelineError> {
    let corpus = load_corpus(ctx)?;
    let pretrained = load_checkpoint(ctx, artifacts::PRETRAINED, "pretrain", &corpus.vocab)?;
    let (train_idx, tune_idx) = (
        corpus.indices(Partition::Train),
        corpus.indices(Partition::Tune),
    );
    let (train_x, train_y) = (corpus.sequences(&train_idx), corpus.labels(&train_idx));
    let (tune_x, tune_y) = (corpus.sequences(&tune_idx), corpus.labels(&tune_idx));
    let dir = ctx.path(artifacts::FINETUNE_DIR);
    fresh_dir(&dir)?;
    let section = &ctx.cfg.finetune;
    info!(
        "fine-tuning: {} trials x {} epochs on {} reports ({} positive)",
        section.n_trials,
        section.max_epochs,
        train_x.len(),
        train_y.iter().filter(|&&y| y).count()
    );
    let outcome = run_finetune_search(
        &pretrained,
        LabeledSet {
            sequences: &train_x,
            labels: &train_y,
        },
        LabeledSet {
            sequences: &tune_x,
            labels: &tune_y,
        },
        &section.space(),
        &section.settings(),
        ctx.seed("finetune"),
        Some(&dir),
    )?;
    save_encoder(
        &ctx.path(artifacts::MODEL),
        &outcome.best,
        None,
        winner_meta("finetune", &outcome),
    )?;
    write_stage_trials(ctx, &dir, &outcome)?;
    let w = outcome.winning_trial();
    info!(
        "fine-tuning winner: trial {} epoch {:?}, tuning AUROC {:.4}",
        outcome.winner,
        w.best_epoch,
        w.best_metric.unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn cmd_baseline(ctx: &Context) -> Result<(), PipelineError> {
    let rows = read_cohort(ctx)?;
    let ds = load_inputs(ctx)?;
    let index = EventIndex::new(&ds);
    let profiles: HashMap<&str, &StaticProfile> = ds
        .profiles
        .iter()
        .map(|p| (p.stay_id.as_str(), p))
        .collect();
    let columns = feature_columns(&ctx.dictionary);
    let mut vectors = Vec::with_capacity(rows.len());
    for row in &rows {
        let profile = profiles.get(row.stay_id.as_str()).ok_or_else(|| {
            PipelineError::Data(format!("stay {} has no static profile", row.stay_id))
        })?;
        vectors.push(extract_stat_features(
            index.events(&profile.stay_id),
            profile,
            &ctx.dictionary,
        ));
    }
    write_stat_features(
        create(&ctx.path(artifacts::STAT_FEATURES))?,
        &columns,
        &vectors,
    )?;
    let train: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].partition() == Partition::Train)
        .collect();
    let x = ndarray::Array2::from_shape_fn((train.len(), columns.len()), |(r, c)| {
        vectors[train[r]].values[c]
    });
    let y: Vec<bool> = train.iter().map(|&i| rows[i].delirium).collect();
    let model = train_baseline(
        x.view(),
        &y,
        columns,
        &ctx.cfg.baseline.to_config(ctx.seed("baseline")),
    )?;
    save_baseline(&ctx.path(artifacts::BASELINE), &model)?;
    info!(
        "baseline trained on {} stays; final training loss {:.4}",
        train.len(),
        model.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn read_stat_features(path: &Path) -> Result<HashMap<String, Vec<f64>>, PipelineError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = HashMap::new();
    for rec in r.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
        out.insert(rec[0].to_owned(), values);
    }
    Ok(out)
}

fn scored(rows: &[&CohortRow], scores: &[f64]) -> Result<ScoredCohort, PipelineError> {
    Ok(ScoredCohort::new(
        rows.iter()
            .zip(scores)
            .map(|(r, &score)| ScoredEntry {
                stay_id: r.stay_id.clone(),
                score,
                label: r.delirium,
                onset_interval: r.onset_interval,
                los_hours: r.los_hours,
            })
            .collect(),
    )?)
}

pub fn cmd_evaluate(ctx: &Context) -> Result<(), PipelineError> {
    let corpus = load_corpus(ctx)?;
    let text = load_checkpoint(ctx, artifacts::MODEL, "finetune", &corpus.vocab)?;
    let baseline = load_baseline(&ctx.require(artifacts::BASELINE, "baseline")?)?;
    let stats = read_stat_features(&ctx.require(artifacts::STAT_FEATURES, "baseline")?)?;
    let idx = corpus.indices(Partition::Validation);
    let rows: Vec<&CohortRow> = idx.iter().map(|&i| &corpus.rows[i]).collect();
    let text_scores = idx
        .iter()
        .map(|&i| text.forward_classify(&corpus.tokens[i].token_ids))
        .collect::<Result<Vec<f64>, _>>()?;
    let baseline_scores = rows
        .iter()
        .map(|r| {
            let v = stats.get(&r.stay_id).ok_or_else(|| {
                PipelineError::Data(format!(
                    "stay {} missing from {}",
                    r.stay_id,
                    artifacts::STAT_FEATURES
                ))
            })?;
            Ok(score_baseline(&baseline, v)?)
        })
        .collect::<Result<Vec<f64>, PipelineError>>()?;
    let bootstrap = BootstrapConfig {
        iterations: ctx.cfg.evaluate.iterations,
        seed: ctx.seed("evaluate"),
        days: ctx.cfg.evaluate.days,
    };
    let cohorts = [
        (TEXT_MODEL, scored(&rows, &text_scores)?),
        (BASELINE_MODEL, scored(&rows, &baseline_scores)?),
    ];
    let mut reports: Vec<(&str, MetricsReport)> = Vec::new();
    let mut curves = Vec::new();
    let mut w = csv::Writer::from_writer(create(&ctx.path(artifacts::SCORES))?);
    w.write_record(["model", "stay_id", "score", "label"])?;
    for (name, cohort) in &cohorts {
        for e in cohort.entries() {
            w.write_record([
                *name,
                e.stay_id.as_str(),
                &e.score.to_string(),
                if e.label { "1" } else { "0" },
            ])?;
        }
        reports.push((name, bootstrap_auroc(cohort, &bootstrap)?));
        curves.push((*name, roc_points(&cohort.scores(), &cohort.labels())?));
        info!(
            "{name}: validation AUROC {:.4} on {} stays",
            cohort.auroc()?,
            cohort.len()
        );
    }
    w.flush()?;
    let rows_ref: Vec<(&str, &MetricsReport)> = reports.iter().map(|(n, r)| (*n, r)).collect();
    write_metrics(create(&ctx.path(artifacts::METRICS))?, &rows_ref)?;
    write_per_day(create(&ctx.path(artifacts::PER_DAY))?, &rows_ref)?;
    write_bootstrap_samples(create(&ctx.path(artifacts::BOOTSTRAP))?, &rows_ref)?;
    let curve_refs: Vec<(&str, &[(f64, f64)])> =
        curves.iter().map(|(n, c)| (*n, c.as_slice())).collect();
    write_roc(create(&ctx.path(artifacts::ROC))?, &curve_refs)?;
    let comparison = wilcoxon_rank_sum(
        TEXT_MODEL,
        &reports[0].1.bootstrap_samples,
        BASELINE_MODEL,
        &reports[1].1.bootstrap_samples,
    )?;
    write_comparisons(
        create(&ctx.path(artifacts::COMPARISONS))?,
        std::slice::from_ref(&comparison),
    )?;
    if ctx.cfg.evaluate.svg {
        std::fs::write(ctx.path(artifacts::ROC_SVG), svg::roc_svg(&curve_refs))?;
        let days: Vec<(&str, &[delirium_metrics::PerDay])> = reports
            .iter()
            .map(|(n, r)| (*n, r.per_day.as_slice()))
            .collect();
        std::fs::write(ctx.path(artifacts::PER_DAY_SVG), svg::per_day_svg(&days))?;
    }
    for (name, r) in &reports {
        info!(
            "{name}: bootstrap median {:.4} [{:.4}, {:.4}]",
            r.auroc_median, r.ci_low, r.ci_high
        );
    }
    info!("rank-sum text vs baseline: p = {:.3e}", comparison.p_value);
    Ok(())
}

fn file_stem(stay_id: &str) -> String {
    stay_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn cmd_explain(ctx: &Context) -> Result<(), PipelineError> {
    let corpus = load_corpus(ctx)?;
    let model = load_checkpoint(ctx, artifacts::MODEL, "finetune", &corpus.vocab)?;
    let section = &ctx.cfg.explain;
    let mut idx = corpus.indices(Partition::Validation);
    idx.sort_by(|&a, &b| corpus.rows[a].stay_id.cmp(&corpus.rows[b].stay_id));
    idx.truncate(section.sample_cap);
    let tokens: Vec<TokenizedReport> = idx.iter().map(|&i| corpus.tokens[i].clone()).collect();
    let attributions = explain_many(&model, &tokens, section.policy(), ctx.seed("explain"))?;
    let report = aggregate_importance(&attributions, &ctx.dictionary)?;
    write_attributions(create(&ctx.path(artifacts::ATTRIBUTION))?, &attributions)?;
    write_importance(create(&ctx.path(artifacts::IMPORTANCE))?, &report)?;
    std::fs::write(ctx.path(artifacts::IMPORTANCE_SVG), importance_svg(&report))?;
    let plots = ctx.path(artifacts::PLOTS_DIR);
    fresh_dir(&plots)?;
    for (&i, a) in idx.iter().zip(&attributions).take(section.plots) {
        let stem = file_stem(&a.stay_id);
        std::fs::write(
            plots.join(format!("{stem}.html")),
            export_text_plot(&corpus.reports[i], a),
        )?;
        write_phi_csv(create(&plots.join(format!("{stem}.csv")))?, a)?;
    }
    info!(
        "attributed {} validation stays; top features: {}",
        attributions.len(),
        report
            .ranking()
            .iter()
            .take(6)
            .copied()
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}
