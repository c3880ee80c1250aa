use std::collections::HashMap;
use std::io::Write;

use delirium_core::ehr::FeatureDictionary;
use serde::Serialize;

use crate::{ExplainError, SectionAttribution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureImportance {
    pub feature_label: String,
    pub mean_abs_phi: f64,
    /// 1-based.
    pub rank: usize,
    pub n_samples: usize,
    /// Samples in which the feature's section was truncated away.
    #[serde(skip)]
    pub n_truncated: usize,
}

/// Features sorted by descending mean |phi|; ties keep dictionary order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionReport {
    pub features: Vec<FeatureImportance>,
    pub n_samples: usize,
}

impl AttributionReport {
    pub fn ranking(&self) -> Vec<&str> {
        self.features
            .iter()
            .map(|f| f.feature_label.as_str())
            .collect()
    }
}

/// Mean |phi| per dictionary feature. A feature absent from a sample adds 0
/// for that sample. Labels outside the dictionary are appended after it in
/// first-seen order.
pub fn aggregate_importance(
    attributions: &[SectionAttribution],
    dictionary: &FeatureDictionary,
) -> Result<AttributionReport, ExplainError> {
    if attributions.is_empty() {
        return Err(ExplainError::Empty);
    }
    let mut labels: Vec<String> = dictionary
        .report_order()
        .map(|e| e.variable_id.clone())
        .collect();
    let mut index: HashMap<String, usize> = labels
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let mut sums: Vec<f64> = vec![0.0; labels.len()];
    let mut truncated = vec![0usize; labels.len()];
    let mut slot =
        |label: &str, labels: &mut Vec<String>, sums: &mut Vec<f64>, truncated: &mut Vec<usize>| {
            *index.entry(label.to_owned()).or_insert_with(|| {
                labels.push(label.to_owned());
                sums.push(0.0);
                truncated.push(0);
                labels.len() - 1
            })
        };
    for a in attributions {
        for (label, phi) in &a.per_section {
            let i = slot(label, &mut labels, &mut sums, &mut truncated);
            sums[i] += phi.abs();
        }
        for label in &a.truncated {
            let i = slot(label, &mut labels, &mut sums, &mut truncated);
            truncated[i] += 1;
        }
    }
    let n = attributions.len();
    let mut features: Vec<FeatureImportance> = labels
        .into_iter()
        .zip(sums)
        .zip(truncated)
        .map(|((feature_label, s), n_truncated)| FeatureImportance {
            feature_label,
            mean_abs_phi: s / n as f64,
            rank: 0,
            n_samples: n,
            n_truncated,
        })
        .collect();
    // stable sort keeps dictionary order among ties
    features.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi));
    for (i, f) in features.iter_mut().enumerate() {
        f.rank = i + 1;
    }
    Ok(AttributionReport {
        features,
        n_samples: n,
    })
}

/// `attribution.csv`. The trailing `truncated` column marks features whose
/// section was cut from the sample; they carry phi = 0.
pub fn write_attributions<W: Write>(
    out: W,
    attributions: &[SectionAttribution],
) -> Result<(), ExplainError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "stay_id",
        "feature_label",
        "phi",
        "mode",
        "permutations",
        "truncated",
    ])?;
    for a in attributions {
        let perms = a
            .permutations_used
            .map(|m| m.to_string())
            .unwrap_or_default();
        for (label, phi) in &a.per_section {
            w.write_record([
                &a.stay_id,
                label,
                &phi.to_string(),
                a.mode.as_str(),
                &perms,
                "false",
            ])?;
        }
        for label in &a.truncated {
            w.write_record([&a.stay_id, label, "0", a.mode.as_str(), &perms, "true"])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `importance.csv`.
pub fn write_importance<W: Write>(out: W, report: &AttributionReport) -> Result<(), ExplainError> {
    let mut w = csv::Writer::from_writer(out);
    for f in &report.features {
        w.serialize(f)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
