use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EhrDataset, StayId, ValidationReport};

/// Rows in `table` that reference a stay absent from stays.csv.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orphan {
    pub table: String,
    pub stay_id: StayId,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateProfile {
    pub stay_id: StayId,
    pub count: usize,
}

fn orphans<'a>(
    table: &str,
    ids: impl Iterator<Item = &'a StayId>,
    known: &BTreeSet<&StayId>,
) -> Vec<Orphan> {
    let mut counts: BTreeMap<&StayId, usize> = BTreeMap::new();
    for id in ids.filter(|id| !known.contains(id)) {
        *counts.entry(id).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(id, rows)| Orphan {
            table: table.into(),
            stay_id: id.clone(),
            rows,
        })
        .collect()
}

/// Cross-table referential checks. Nothing here is fatal; every finding is
/// listed in the returned report (row counts are left empty).
pub fn validate_dataset(dataset: &EhrDataset) -> ValidationReport {
    let known: BTreeSet<&StayId> = dataset.stays.iter().map(|s| &s.stay_id).collect();
    let mut report = ValidationReport::default();
    report.orphans.extend(orphans(
        "static",
        dataset.profiles.iter().map(|p| &p.stay_id),
        &known,
    ));
    report.orphans.extend(orphans(
        "observations",
        dataset.observations.iter().map(|e| &e.stay_id),
        &known,
    ));
    report.orphans.extend(orphans(
        "medications",
        dataset.medications.iter().map(|e| &e.stay_id),
        &known,
    ));
    report.orphans.extend(orphans(
        "assessments",
        dataset.assessments.iter().map(|e| &e.stay_id),
        &known,
    ));

    let mut profile_counts: BTreeMap<&StayId, usize> = BTreeMap::new();
    for p in &dataset.profiles {
        *profile_counts.entry(&p.stay_id).or_default() += 1;
    }
    report.duplicate_profiles = profile_counts
        .iter()
        .filter(|(_, &n)| n > 1)
        .map(|(id, &count)| DuplicateProfile {
            stay_id: (*id).clone(),
            count,
        })
        .collect();
    report.stays_without_profile = dataset
        .stays
        .iter()
        .filter(|s| !profile_counts.contains_key(&s.stay_id))
        .map(|s| s.stay_id.clone())
        .collect();
    report
}
