use std::io::Write;

use delirium_core::ehr::{
    Category, Comorbidity, FeatureDictionary, FeatureEntry, Race, Sex, StaticField, StaticProfile,
    StayEvents, StayId,
};
use delirium_core::report::SUMMARY_WINDOW_HOURS;

const STATS: [&str; 5] = ["mean", "std", "min", "max", "missing"];

#[derive(Debug, Clone, PartialEq)]
pub struct StatFeatureVector {
    pub stay_id: StayId,
    pub values: Vec<f64>,
}

fn static_columns(e: &FeatureEntry) -> Vec<String> {
    let id = &e.variable_id;
    match StaticField::from_id(id) {
        Some(StaticField::Sex) => Sex::ALL
            .iter()
            .map(|s| format!("{id}={}", s.as_str()))
            .collect(),
        Some(StaticField::Race) => Race::ALL
            .iter()
            .map(|r| format!("{id}={}", r.as_str()))
            .collect(),
        Some(StaticField::Comorbidities) => Comorbidity::ALL
            .iter()
            .map(|c| format!("{id}={}", c.as_str()))
            .collect(),
        _ => vec![id.clone()],
    }
}

/// Column names: the static block, then five statistics per temporal
/// variable, each in dictionary priority order.
pub fn feature_columns(dictionary: &FeatureDictionary) -> Vec<String> {
    let mut cols = Vec::new();
    for e in dictionary
        .entries()
        .iter()
        .filter(|e| e.category == Category::Static)
    {
        cols.extend(static_columns(e));
    }
    for e in dictionary
        .entries()
        .iter()
        .filter(|e| e.category != Category::Static)
    {
        cols.extend(STATS.iter().map(|s| format!("{}.{s}", e.variable_id)));
    }
    cols
}

fn one_hot<T: PartialEq + Copy>(all: &[T], v: T) -> impl Iterator<Item = f64> + '_ {
    all.iter().map(move |&x| if x == v { 1.0 } else { 0.0 })
}

fn first24h_values(entry: &FeatureEntry, events: &StayEvents<'_>) -> Vec<f64> {
    let in_window = |t: f64| t < SUMMARY_WINDOW_HOURS;
    let id = entry.variable_id.as_str();
    match entry.category {
        Category::Medication => events
            .medications
            .iter()
            .filter(|m| m.drug_id == id && in_window(m.offset_hours))
            .map(|m| m.dose)
            .collect(),
        Category::Assessment => events
            .assessments
            .iter()
            .filter(|a| a.kind.variable_id() == id && in_window(a.offset_hours))
            .map(|a| f64::from(a.value))
            .collect(),
        _ => events
            .observations
            .iter()
            .filter(|o| o.variable_id == id && in_window(o.offset_hours))
            .map(|o| o.value)
            .collect(),
    }
}

/// Population statistics; no readings gives zeros with the missing flag set.
fn stats(values: &[f64]) -> [f64; 5] {
    if values.is_empty() {
        return [0.0, 0.0, 0.0, 0.0, 1.0];
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [mean, var.sqrt(), min, max, 0.0]
}

pub fn extract_stat_features(
    events: StayEvents<'_>,
    profile: &StaticProfile,
    dictionary: &FeatureDictionary,
) -> StatFeatureVector {
    let mut values = Vec::new();
    for e in dictionary
        .entries()
        .iter()
        .filter(|e| e.category == Category::Static)
    {
        match StaticField::from_id(&e.variable_id) {
            Some(StaticField::Age) => values.push(profile.age_years),
            Some(StaticField::Sex) => values.extend(one_hot(&Sex::ALL, profile.sex)),
            Some(StaticField::Race) => values.extend(one_hot(&Race::ALL, profile.race)),
            Some(StaticField::Bmi) => values.push(profile.bmi.unwrap_or(0.0)),
            Some(StaticField::Cci) => values.push(f64::from(profile.cci)),
            Some(StaticField::Comorbidities) => {
                values.extend(
                    Comorbidity::ALL
                        .iter()
                        .map(|&c| if profile.has(c) { 1.0 } else { 0.0 }),
                )
            }
            None => unreachable!("dictionary validates static ids"),
        }
    }
    for e in dictionary
        .entries()
        .iter()
        .filter(|e| e.category != Category::Static)
    {
        values.extend(stats(&first24h_values(e, &events)));
    }
    StatFeatureVector {
        stay_id: profile.stay_id.clone(),
        values,
    }
}

pub fn write_stat_features<W: Write>(
    out: W,
    columns: &[String],
    vectors: &[StatFeatureVector],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("stay_id").chain(columns.iter().map(String::as_str)))?;
    for v in vectors {
        let mut rec = vec![v.stay_id.as_str().to_owned()];
        rec.extend(v.values.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
