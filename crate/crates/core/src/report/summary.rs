use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ehr::{Category, FeatureDictionary, StayEvents, StayId};

/// Only events strictly before this offset feed the summary.
pub const SUMMARY_WINDOW_HOURS: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SummaryValue {
    Range { min: f64, max: f64 },
    TotalDose { total: f64, unit: String },
}

/// Per-variable first-24h summary. Variables without events are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub stay_id: StayId,
    pub entries: BTreeMap<String, SummaryValue>,
}

impl FeatureSummary {
    pub fn get(&self, variable_id: &str) -> Option<&SummaryValue> {
        self.entries.get(variable_id)
    }
}

fn widen(entries: &mut BTreeMap<String, SummaryValue>, id: &str, v: f64) {
    match entries.get_mut(id) {
        Some(SummaryValue::Range { min, max }) => {
            *min = min.min(v);
            *max = max.max(v);
        }
        _ => {
            entries.insert(id.to_owned(), SummaryValue::Range { min: v, max: v });
        }
    }
}

/// Min/max for vitals, labs and assessment scores; summed dose for drugs.
/// Variables not in `dictionary` are skipped.
pub fn summarize_features(
    stay_id: &StayId,
    events: StayEvents<'_>,
    dictionary: &FeatureDictionary,
) -> FeatureSummary {
    let in_window = |t: f64| t < SUMMARY_WINDOW_HOURS;
    let mut entries = BTreeMap::new();
    for e in events
        .observations
        .iter()
        .filter(|e| in_window(e.offset_hours))
    {
        if dictionary
            .get(&e.variable_id)
            .is_some_and(|d| d.category.is_ranged())
        {
            widen(&mut entries, &e.variable_id, e.value);
        }
    }
    for e in events
        .assessments
        .iter()
        .filter(|e| in_window(e.offset_hours))
    {
        let id = e.kind.variable_id();
        if dictionary
            .get(id)
            .is_some_and(|d| d.category == Category::Assessment)
        {
            widen(&mut entries, id, f64::from(e.value));
        }
    }
    for e in events
        .medications
        .iter()
        .filter(|e| in_window(e.offset_hours))
    {
        if !dictionary
            .get(&e.drug_id)
            .is_some_and(|d| d.category == Category::Medication)
        {
            continue;
        }
        match entries.get_mut(&e.drug_id) {
            Some(SummaryValue::TotalDose { total, .. }) => *total += e.dose,
            _ => {
                entries.insert(
                    e.drug_id.clone(),
                    SummaryValue::TotalDose {
                        total: e.dose,
                        unit: e.unit.clone(),
                    },
                );
            }
        }
    }
    FeatureSummary {
        stay_id: stay_id.clone(),
        entries,
    }
}
