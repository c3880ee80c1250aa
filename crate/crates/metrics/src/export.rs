use std::io::Write;

use crate::{ComparisonResult, MetricsReport};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics<W: Write>(out: W, rows: &[(&str, &MetricsReport)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "auroc_median",
        "ci_low",
        "ci_high",
        "n_pos",
        "n_neg",
    ])?;
    for (model, r) in rows {
        w.write_record([
            *model,
            &r.auroc_median.to_string(),
            &r.ci_low.to_string(),
            &r.ci_high.to_string(),
            &r.n_pos.to_string(),
            &r.n_neg.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Days without enough stays have an empty `auroc` field.
pub fn write_per_day<W: Write>(out: W, rows: &[(&str, &MetricsReport)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "day", "auroc", "n_pos", "n_neg"])?;
    for (model, r) in rows {
        for d in &r.per_day {
            w.write_record([
                *model,
                &d.day.to_string(),
                &opt(d.auroc),
                &d.n_pos.to_string(),
                &d.n_neg.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_roc<W: Write>(out: W, curves: &[(&str, &[(f64, f64)])]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "fpr", "tpr"])?;
    for (model, points) in curves {
        for (fpr, tpr) in points.iter() {
            w.write_record([model, fpr.to_string().as_str(), tpr.to_string().as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparisons<W: Write>(out: W, rows: &[ComparisonResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model_a", "model_b", "statistic", "p_value"])?;
    for c in rows {
        w.write_record([
            c.model_a.as_str(),
            c.model_b.as_str(),
            &c.statistic.to_string(),
            &c.p_value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bootstrap_samples<W: Write>(
    out: W,
    rows: &[(&str, &MetricsReport)],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "iteration", "auroc"])?;
    for (model, r) in rows {
        for (i, a) in r.bootstrap_samples.iter().enumerate() {
            w.write_record([model, i.to_string().as_str(), a.to_string().as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}
