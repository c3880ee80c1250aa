//! Structured ICU record model: stays, static profiles, timestamped events and
//! the feature dictionary that names every predictive variable.
//!
//! Event times are hours since ICU admission. Absolute timestamps only live
//! on [`IcuStayRecord`].

mod dictionary;
mod ingest;
mod validate;
mod write;

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

pub use dictionary::{Category, FeatureDictionary, FeatureEntry, StaticField};
pub use ingest::{
    ingest_assessments, ingest_events, ingest_medications, ingest_observations, ingest_profiles,
    ingest_stays, load_dataset, parse_timestamp, DatasetPaths, EventKind, EventTable,
};
pub use validate::{validate_dataset, DuplicateProfile, Orphan};
pub use write::{
    format_timestamp, write_assessments, write_dataset, write_medications, write_observations,
    write_profiles, write_stays,
};

#[derive(Debug, thiserror::Error)]
pub enum EhrError {
    #[error("{table}: missing header column `{column}`")]
    MissingColumn { table: String, column: String },
    #[error("{table}: {source}")]
    Csv {
        table: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("feature dictionary: {0}")]
    Dictionary(String),
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(StayId);
string_id!(PatientId);

/// One ICU admission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcuStayRecord {
    pub stay_id: StayId,
    pub patient_id: PatientId,
    pub admit_time: NaiveDateTime,
    pub discharge_time: NaiveDateTime,
    pub death_time: Option<NaiveDateTime>,
    /// 1 for the patient's first ICU admission in the dataset.
    pub stay_index: u32,
}

impl IcuStayRecord {
    pub fn los_hours(&self) -> f64 {
        minutes_between(self.admit_time, self.discharge_time) / 60.0
    }

    pub fn death_offset_hours(&self) -> Option<f64> {
        self.death_time
            .map(|t| minutes_between(self.admit_time, t) / 60.0)
    }
}

fn minutes_between(from: NaiveDateTime, to: NaiveDateTime) -> f64 {
    (to - from).num_minutes() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Race {
    Black,
    White,
    Other,
}

impl Sex {
    pub const ALL: [Sex; 3] = [Sex::Female, Sex::Male, Sex::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
            Sex::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl Race {
    pub const ALL: [Race; 3] = [Race::Black, Race::White, Race::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Race::Black => "black",
            Race::White => "white",
            Race::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comorbidity {
    Chf,
    Copd,
    Cva,
    Malignancy,
    Hiv,
    RenalDisease,
    LiverDisease,
}

impl Comorbidity {
    /// Column order in static.csv and rendering order in reports.
    pub const ALL: [Comorbidity; 7] = [
        Comorbidity::Chf,
        Comorbidity::Copd,
        Comorbidity::Cva,
        Comorbidity::Malignancy,
        Comorbidity::Hiv,
        Comorbidity::RenalDisease,
        Comorbidity::LiverDisease,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Comorbidity::Chf => "chf",
            Comorbidity::Copd => "copd",
            Comorbidity::Cva => "cva",
            Comorbidity::Malignancy => "malignancy",
            Comorbidity::Hiv => "hiv",
            Comorbidity::RenalDisease => "renal_disease",
            Comorbidity::LiverDisease => "liver_disease",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticProfile {
    pub stay_id: StayId,
    pub age_years: f64,
    pub sex: Sex,
    pub bmi: Option<f64>,
    pub race: Race,
    pub cci: u32,
    /// Kept in [`Comorbidity::ALL`] order, without duplicates.
    pub comorbidities: Vec<Comorbidity>,
}

impl StaticProfile {
    pub fn has(&self, c: Comorbidity) -> bool {
        self.comorbidities.contains(&c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationEvent {
    pub stay_id: StayId,
    pub variable_id: String,
    pub offset_hours: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicationEvent {
    pub stay_id: StayId,
    pub drug_id: String,
    pub offset_hours: f64,
    pub dose: f64,
    pub unit: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AssessmentKind {
    #[serde(rename = "CAM")]
    Cam,
    #[serde(rename = "RASS")]
    Rass,
    #[serde(rename = "GCS")]
    Gcs,
}

impl AssessmentKind {
    pub const ALL: [AssessmentKind; 3] = [
        AssessmentKind::Cam,
        AssessmentKind::Rass,
        AssessmentKind::Gcs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AssessmentKind::Cam => "CAM",
            AssessmentKind::Rass => "RASS",
            AssessmentKind::Gcs => "GCS",
        }
    }

    /// Dictionary key used when the score is a predictive feature.
    pub fn variable_id(self) -> &'static str {
        match self {
            AssessmentKind::Cam => "cam",
            AssessmentKind::Rass => "rass",
            AssessmentKind::Gcs => "gcs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
    }

    pub fn valid_range(self) -> (i32, i32) {
        match self {
            AssessmentKind::Cam => (0, 1),
            AssessmentKind::Rass => (-5, 4),
            AssessmentKind::Gcs => (3, 15),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentEvent {
    pub stay_id: StayId,
    pub kind: AssessmentKind,
    pub offset_hours: f64,
    pub value: i32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCount {
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub table: String,
    /// 1-based line in the source file; the header is line 1.
    pub line: u64,
    pub reason: String,
}

/// Row accounting for ingestion plus cross-table findings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub row_counts: BTreeMap<String, TableCount>,
    pub rejected_rows: Vec<RejectedRow>,
    pub orphans: Vec<Orphan>,
    pub duplicate_profiles: Vec<DuplicateProfile>,
    pub stays_without_profile: Vec<StayId>,
}

impl ValidationReport {
    pub fn merge(&mut self, other: ValidationReport) {
        for (table, c) in other.row_counts {
            let e = self.row_counts.entry(table).or_default();
            e.total += c.total;
            e.accepted += c.accepted;
            e.rejected += c.rejected;
        }
        self.rejected_rows.extend(other.rejected_rows);
        self.orphans.extend(other.orphans);
        self.duplicate_profiles.extend(other.duplicate_profiles);
        self.stays_without_profile
            .extend(other.stays_without_profile);
    }

    pub fn total_rejected(&self) -> usize {
        self.rejected_rows.len()
    }

    pub fn has_cross_table_findings(&self) -> bool {
        !(self.orphans.is_empty()
            && self.duplicate_profiles.is_empty()
            && self.stays_without_profile.is_empty())
    }
}

/// The five ingested tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EhrDataset {
    pub stays: Vec<IcuStayRecord>,
    pub profiles: Vec<StaticProfile>,
    pub observations: Vec<ObservationEvent>,
    pub medications: Vec<MedicationEvent>,
    pub assessments: Vec<AssessmentEvent>,
}

/// Borrowed view of one stay's events.
#[derive(Debug, Clone, Copy, Default)]
pub struct StayEvents<'a> {
    pub observations: &'a [ObservationEvent],
    pub medications: &'a [MedicationEvent],
    pub assessments: &'a [AssessmentEvent],
}

impl StayEvents<'_> {
    /// True when any event falls before `hours`.
    pub fn any_before(&self, hours: f64) -> bool {
        self.observations.iter().any(|e| e.offset_hours < hours)
            || self.medications.iter().any(|e| e.offset_hours < hours)
            || self.assessments.iter().any(|e| e.offset_hours < hours)
    }
}

/// Per-stay slices into event tables sorted by `(stay_id, offset_hours)`.
#[derive(Debug)]
pub struct EventIndex<'a> {
    dataset: &'a EhrDataset,
    observations: BTreeMap<&'a StayId, (usize, usize)>,
    medications: BTreeMap<&'a StayId, (usize, usize)>,
    assessments: BTreeMap<&'a StayId, (usize, usize)>,
}

fn ranges<'a, T>(
    items: &'a [T],
    key: impl Fn(&'a T) -> &'a StayId,
) -> BTreeMap<&'a StayId, (usize, usize)> {
    let mut out: BTreeMap<&StayId, (usize, usize)> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        let r = out.entry(key(item)).or_insert((i, i));
        assert_eq!(r.1, i, "event table not grouped by stay_id");
        r.1 = i + 1;
    }
    out
}

impl<'a> EventIndex<'a> {
    /// Panics if a table is not grouped by stay, which ingestion guarantees.
    pub fn new(dataset: &'a EhrDataset) -> Self {
        Self {
            dataset,
            observations: ranges(&dataset.observations, |e| &e.stay_id),
            medications: ranges(&dataset.medications, |e| &e.stay_id),
            assessments: ranges(&dataset.assessments, |e| &e.stay_id),
        }
    }

    pub fn events(&self, stay: &StayId) -> StayEvents<'a> {
        fn slice<'b, T>(
            items: &'b [T],
            map: &BTreeMap<&StayId, (usize, usize)>,
            stay: &StayId,
        ) -> &'b [T] {
            map.get(stay).map_or(&[], |&(a, b)| &items[a..b])
        }
        StayEvents {
            observations: slice(&self.dataset.observations, &self.observations, stay),
            medications: slice(&self.dataset.medications, &self.medications, stay),
            assessments: slice(&self.dataset.assessments, &self.assessments, stay),
        }
    }
}

/// Stable sort by `(stay_id, offset_hours)`; equal keys keep input order.
pub(crate) fn sort_events<T>(events: &mut [T], key: impl Fn(&T) -> (&StayId, f64)) {
    events.sort_by(|a, b| {
        let (sa, oa) = key(a);
        let (sb, ob) = key(b);
        sa.cmp(sb).then(oa.total_cmp(&ob))
    });
}
