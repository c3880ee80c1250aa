//! Cohort selection, 12-hour interval delirium/coma labelling and the
//! patient-disjoint train/tune/validation split.

mod split;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ehr::{
    AssessmentEvent, AssessmentKind, EhrDataset, EventIndex, IcuStayRecord, StaticProfile, StayId,
};

pub use split::{split_dataset, DatasetSplit, Partition};

pub const INTERVAL_HOURS: f64 = 12.0;
/// Intervals before this index cover the first 24 hours.
pub const FIRST_OUTCOME_INTERVAL: u32 = 2;
/// Lowest RASS at which CAM is assessable.
pub const RASS_ASSESSABLE_MIN: i32 = -3;
/// Every reading at or below this RASS makes an interval comatose.
pub const RASS_COMA_MAX: i32 = -4;

#[derive(Debug, thiserror::Error)]
pub enum CohortError {
    #[error("stay {0} has no static profile (age unknown)")]
    MissingProfile(StayId),
    #[error("stay {0} has no label record")]
    MissingLabel(StayId),
    #[error("cannot split {0} patients into three partitions (need at least 10)")]
    TooFewPatients(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Under18,
    NotFirstAdmission,
    LosUnder24h,
    DeathWithin48h,
    DeliriumOrComaFirst24h,
    NoEhrFirst24h,
}

impl ExclusionReason {
    /// Rule application order; the first matching rule is reported.
    pub const ORDER: [ExclusionReason; 6] = [
        ExclusionReason::Under18,
        ExclusionReason::NotFirstAdmission,
        ExclusionReason::LosUnder24h,
        ExclusionReason::DeathWithin48h,
        ExclusionReason::DeliriumOrComaFirst24h,
        ExclusionReason::NoEhrFirst24h,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::Under18 => "under_18",
            ExclusionReason::NotFirstAdmission => "not_first_admission",
            ExclusionReason::LosUnder24h => "los_under_24h",
            ExclusionReason::DeathWithin48h => "death_within_48h",
            ExclusionReason::DeliriumOrComaFirst24h => "delirium_or_coma_first_24h",
            ExclusionReason::NoEhrFirst24h => "no_ehr_first_24h",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ORDER.into_iter().find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortDecision {
    pub stay_id: StayId,
    pub exclusion_reason: Option<ExclusionReason>,
}

impl CohortDecision {
    pub fn included(&self) -> bool {
        self.exclusion_reason.is_none()
    }
}

/// CAM/RASS statistics for hours `[12k, 12k + 12)` after admission.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub interval_index: u32,
    pub rass_min: Option<i32>,
    pub rass_max: Option<i32>,
    pub cam_positive_count: u32,
    pub rass_count: u32,
}

impl IntervalSummary {
    /// Lowest RASS ≥ −3 together with at least one positive CAM.
    pub fn meets_delirium_criteria(&self) -> bool {
        self.rass_min.is_some_and(|m| m >= RASS_ASSESSABLE_MIN) && self.cam_positive_count >= 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub stay_id: StayId,
    pub delirium: bool,
    pub onset_interval: Option<u32>,
    pub coma_intervals: Vec<u32>,
    pub first24h_delirium: bool,
    pub first24h_coma: bool,
}

/// Outcome part of a [`LabelRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliriumOutcome {
    pub delirium: bool,
    pub onset_interval: Option<u32>,
}

/// Number of 12-hour bins for a stay; the last one may be partial.
pub fn interval_count(los_hours: f64) -> u32 {
    ((los_hours / INTERVAL_HOURS).ceil() as u32).max(1)
}

/// Bins assessments into admission-aligned 12-hour intervals. An event on a
/// boundary belongs to the later interval, except at discharge, which closes
/// the final interval. Events after discharge are ignored.
pub fn summarize_intervals(
    stay: &IcuStayRecord,
    assessments: &[AssessmentEvent],
) -> Vec<IntervalSummary> {
    let los = stay.los_hours();
    let n = interval_count(los);
    let mut out: Vec<IntervalSummary> = (0..n)
        .map(|k| IntervalSummary {
            interval_index: k,
            ..Default::default()
        })
        .collect();
    for e in assessments {
        debug_assert_eq!(e.stay_id, stay.stay_id);
        if e.offset_hours > los {
            log::debug!(
                "{}: assessment at {}h after discharge ignored",
                stay.stay_id,
                e.offset_hours
            );
            continue;
        }
        let k = ((e.offset_hours / INTERVAL_HOURS).floor() as u32).min(n - 1);
        let iv = &mut out[k as usize];
        match e.kind {
            AssessmentKind::Cam => iv.cam_positive_count += u32::from(e.value == 1),
            AssessmentKind::Rass => {
                iv.rass_count += 1;
                iv.rass_min = Some(iv.rass_min.map_or(e.value, |m| m.min(e.value)));
                iv.rass_max = Some(iv.rass_max.map_or(e.value, |m| m.max(e.value)));
            }
            AssessmentKind::Gcs => {}
        }
    }
    out
}

/// Delirium is any interval at index ≥ 2 meeting the CAM/RASS criteria;
/// onset is the first such interval.
pub fn label_delirium(intervals: &[IntervalSummary]) -> DeliriumOutcome {
    let onset_interval = intervals
        .iter()
        .filter(|iv| iv.interval_index >= FIRST_OUTCOME_INTERVAL)
        .find(|iv| iv.meets_delirium_criteria())
        .map(|iv| iv.interval_index);
    DeliriumOutcome {
        delirium: onset_interval.is_some(),
        onset_interval,
    }
}

/// At least one RASS reading and every reading ≤ −4.
pub fn detect_coma(interval: &IntervalSummary) -> bool {
    interval.rass_count >= 1 && interval.rass_max.is_some_and(|m| m <= RASS_COMA_MAX)
}

pub fn label_stay(stay: &IcuStayRecord, assessments: &[AssessmentEvent]) -> LabelRecord {
    let intervals = summarize_intervals(stay, assessments);
    let outcome = label_delirium(&intervals);
    let first24h = intervals
        .iter()
        .filter(|iv| iv.interval_index < FIRST_OUTCOME_INTERVAL);
    LabelRecord {
        stay_id: stay.stay_id.clone(),
        delirium: outcome.delirium,
        onset_interval: outcome.onset_interval,
        coma_intervals: intervals
            .iter()
            .filter(|iv| detect_coma(iv))
            .map(|iv| iv.interval_index)
            .collect(),
        first24h_delirium: first24h.clone().any(|iv| iv.meets_delirium_criteria()),
        first24h_coma: first24h.clone().any(detect_coma),
    }
}

/// Labels every stay in the dataset, in stay order.
pub fn label_dataset(dataset: &EhrDataset) -> Vec<LabelRecord> {
    let index = EventIndex::new(dataset);
    dataset
        .stays
        .iter()
        .map(|s| label_stay(s, index.events(&s.stay_id).assessments))
        .collect()
}

/// Stays with any observation, medication or assessment before hour 24.
pub fn first24h_presence(dataset: &EhrDataset) -> BTreeSet<StayId> {
    let index = EventIndex::new(dataset);
    dataset
        .stays
        .iter()
        .filter(|s| index.events(&s.stay_id).any_before(24.0))
        .map(|s| s.stay_id.clone())
        .collect()
}

/// Applies the exclusion rules in [`ExclusionReason::ORDER`].
pub fn select_cohort(
    stays: &[IcuStayRecord],
    labels: &[LabelRecord],
    ehr_first24h: &BTreeSet<StayId>,
    profiles: &[StaticProfile],
) -> Result<Vec<CohortDecision>, CohortError> {
    let profiles: HashMap<&StayId, &StaticProfile> =
        profiles.iter().map(|p| (&p.stay_id, p)).collect();
    let labels: HashMap<&StayId, &LabelRecord> = labels.iter().map(|l| (&l.stay_id, l)).collect();
    stays
        .iter()
        .map(|stay| {
            let profile = profiles
                .get(&stay.stay_id)
                .ok_or_else(|| CohortError::MissingProfile(stay.stay_id.clone()))?;
            let label = labels
                .get(&stay.stay_id)
                .ok_or_else(|| CohortError::MissingLabel(stay.stay_id.clone()))?;
            let reason = if profile.age_years < 18.0 {
                Some(ExclusionReason::Under18)
            } else if stay.stay_index != 1 {
                Some(ExclusionReason::NotFirstAdmission)
            } else if stay.los_hours() < 24.0 {
                Some(ExclusionReason::LosUnder24h)
            } else if stay.death_offset_hours().is_some_and(|h| h < 48.0) {
                Some(ExclusionReason::DeathWithin48h)
            } else if label.first24h_delirium || label.first24h_coma {
                Some(ExclusionReason::DeliriumOrComaFirst24h)
            } else if !ehr_first24h.contains(&stay.stay_id) {
                Some(ExclusionReason::NoEhrFirst24h)
            } else {
                None
            };
            Ok(CohortDecision {
                stay_id: stay.stay_id.clone(),
                exclusion_reason: reason,
            })
        })
        .collect()
}

/// Count per exclusion reason (all six keys present).
pub fn exclusion_counts(decisions: &[CohortDecision]) -> BTreeMap<ExclusionReason, usize> {
    let mut out: BTreeMap<ExclusionReason, usize> =
        ExclusionReason::ORDER.iter().map(|&r| (r, 0)).collect();
    for r in decisions.iter().filter_map(|d| d.exclusion_reason) {
        *out.entry(r).or_default() += 1;
    }
    out
}

pub fn write_decisions<W: Write>(out: W, decisions: &[CohortDecision]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stay_id", "included", "exclusion_reason"])?;
    for d in decisions {
        w.write_record([
            d.stay_id.as_str(),
            if d.included() { "true" } else { "false" },
            d.exclusion_reason.map_or("", |r| r.as_str()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels<W: Write>(out: W, labels: &[LabelRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "stay_id",
        "delirium",
        "onset_interval",
        "first24h_delirium",
        "first24h_coma",
    ])?;
    for l in labels {
        w.write_record([
            l.stay_id.as_str(),
            &l.delirium.to_string(),
            &l.onset_interval.map(|k| k.to_string()).unwrap_or_default(),
            &l.first24h_delirium.to_string(),
            &l.first24h_coma.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: std::io::Read>(input: R) -> csv::Result<Vec<LabelRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |what: &str| -> csv::Error {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("labels.csv: bad {what}"),
            )
            .into()
        };
        let b = |i: usize, what: &str| {
            rec.get(i)
                .and_then(|s| s.parse::<bool>().ok())
                .ok_or_else(|| bad(what))
        };
        out.push(LabelRecord {
            stay_id: StayId::new(rec.get(0).unwrap_or_default()),
            delirium: b(1, "delirium")?,
            onset_interval: match rec.get(2).unwrap_or_default() {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("onset_interval"))?),
            },
            coma_intervals: Vec::new(),
            first24h_delirium: b(3, "first24h_delirium")?,
            first24h_coma: b(4, "first24h_coma")?,
        });
    }
    Ok(out)
}

pub fn read_decisions<R: std::io::Read>(input: R) -> csv::Result<Vec<CohortDecision>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(CohortDecision {
            stay_id: StayId::new(rec.get(0).unwrap_or_default()),
            exclusion_reason: ExclusionReason::parse(rec.get(2).unwrap_or_default()),
        });
    }
    Ok(out)
}
