use std::io::Write;
use std::path::Path;

use crate::{TrialResult, TrialStatus};

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

/// One row per trial; per-epoch histories are `;`-separated, checkpoint
/// paths are written relative to `base` when possible.
pub fn write_trials<W: Write>(
    out: W,
    trials: &[TrialResult],
    base: Option<&Path>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "stage",
        "trial_id",
        "learning_rate",
        "batch_size",
        "x_frozen",
        "y_trainable",
        "seed",
        "status",
        "metric_history",
        "train_loss_history",
        "best_epoch",
        "best_metric",
        "checkpoint",
    ])?;
    for t in trials {
        let c = &t.config;
        let (status, reason) = match &t.status {
            TrialStatus::Completed => ("completed", String::new()),
            TrialStatus::Aborted(r) => ("aborted", format!(": {r}")),
        };
        let checkpoint = t
            .checkpoint
            .as_deref()
            .map(|p| base.and_then(|b| p.strip_prefix(b).ok()).unwrap_or(p))
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        w.write_record([
            t.stage.as_str().to_owned(),
            c.trial_id.to_string(),
            c.learning_rate.to_string(),
            c.batch_size.to_string(),
            c.x_frozen.to_string(),
            c.y_trainable.to_string(),
            c.seed.to_string(),
            format!("{status}{reason}"),
            join(&t.history),
            join(&t.train_loss),
            t.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
            t.best_metric.map(|m| m.to_string()).unwrap_or_default(),
            checkpoint,
        ])?;
    }
    w.flush()?;
    Ok(())
}
