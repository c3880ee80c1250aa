use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use super::{
    sort_events, AssessmentEvent, AssessmentKind, Category, Comorbidity, EhrDataset, EhrError,
    FeatureDictionary, IcuStayRecord, MedicationEvent, ObservationEvent, PatientId, Race,
    RejectedRow, Sex, StaticProfile, StayId, TableCount, ValidationReport,
};

pub(crate) const STAY_COLUMNS: [&str; 6] = [
    "stay_id",
    "patient_id",
    "admit_time",
    "discharge_time",
    "death_time",
    "stay_index",
];
pub(crate) const STATIC_COLUMNS: [&str; 13] = [
    "stay_id",
    "age_years",
    "sex",
    "bmi",
    "race",
    "cci",
    "chf",
    "copd",
    "cva",
    "malignancy",
    "hiv",
    "renal_disease",
    "liver_disease",
];
pub(crate) const OBSERVATION_COLUMNS: [&str; 4] =
    ["stay_id", "variable_id", "offset_hours", "value"];
pub(crate) const MEDICATION_COLUMNS: [&str; 5] =
    ["stay_id", "drug_id", "offset_hours", "dose", "unit"];
pub(crate) const ASSESSMENT_COLUMNS: [&str; 4] = ["stay_id", "kind", "offset_hours", "value"];

/// Row view keyed by the schema's column order.
struct Row<'r> {
    record: &'r csv::StringRecord,
    cols: &'r [usize],
}

impl Row<'_> {
    fn get(&self, i: usize) -> &str {
        self.record.get(self.cols[i]).unwrap_or("")
    }
}

type RowResult<T> = Result<T, String>;

/// Reads a headered table, calling `parse` per data row. Rows that fail are
/// recorded in the report with their line number.
fn read_table<R: Read, T>(
    input: R,
    table: &str,
    columns: &[&str],
    mut parse: impl FnMut(&Row<'_>) -> RowResult<T>,
) -> Result<(Vec<T>, ValidationReport), EhrError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|source| EhrError::Csv {
            table: table.into(),
            source,
        })?
        .clone();
    let cols = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| EhrError::MissingColumn {
                    table: table.into(),
                    column: (*c).into(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Vec::new();
    let mut report = ValidationReport::default();
    let mut count = TableCount::default();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(source) => {
                // Malformed bytes (e.g. invalid UTF-8) reject the row; I/O
                // failures are fatal.
                if matches!(source.kind(), csv::ErrorKind::Io(_)) {
                    return Err(EhrError::Csv {
                        table: table.into(),
                        source,
                    });
                }
                let line = source.position().map_or(0, |p| p.line());
                count.total += 1;
                count.rejected += 1;
                report.rejected_rows.push(RejectedRow {
                    table: table.into(),
                    line,
                    reason: "malformed_row".into(),
                });
                continue;
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        count.total += 1;
        let result = if record.len() != headers.len() {
            Err("wrong_field_count".to_owned())
        } else {
            parse(&Row {
                record: &record,
                cols: &cols,
            })
        };
        match result {
            Ok(v) => {
                count.accepted += 1;
                out.push(v);
            }
            Err(reason) => {
                count.rejected += 1;
                report.rejected_rows.push(RejectedRow {
                    table: table.into(),
                    line,
                    reason,
                });
            }
        }
    }
    report.row_counts.insert(table.into(), count);
    Ok((out, report))
}

/// Accepts `YYYY-MM-DDTHH:MM[:SS]` (a space may replace the `T`).
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%d %H:%M:%S",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn non_empty<'a>(s: &'a str, what: &str) -> RowResult<&'a str> {
    if s.is_empty() {
        Err(format!("missing_{what}"))
    } else {
        Ok(s)
    }
}

fn finite(s: &str, what: &str) -> RowResult<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("non_finite_{what}")),
        Err(_) => Err(format!("unparsable_{what}")),
    }
}

fn offset(s: &str) -> RowResult<f64> {
    let v = finite(s, "offset")?;
    if v < 0.0 {
        return Err("negative_offset".into());
    }
    Ok(v)
}

fn flag(s: &str, what: &str) -> RowResult<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("unparsable_{what}")),
    }
}

pub fn ingest_stays<R: Read>(input: R) -> Result<(Vec<IcuStayRecord>, ValidationReport), EhrError> {
    let mut seen_stays = HashSet::new();
    let mut seen_index = HashSet::new();
    read_table(input, "stays", &STAY_COLUMNS, |row| {
        let stay_id = StayId::new(non_empty(row.get(0), "stay_id")?);
        let patient_id = PatientId::new(non_empty(row.get(1), "patient_id")?);
        let admit_time = parse_timestamp(row.get(2)).ok_or("unparsable_admit_time")?;
        let discharge_time = parse_timestamp(row.get(3)).ok_or("unparsable_discharge_time")?;
        let death_time = match row.get(4) {
            "" => None,
            s => Some(parse_timestamp(s).ok_or("unparsable_death_time")?),
        };
        let stay_index: i64 = row.get(5).parse().map_err(|_| "unparsable_stay_index")?;
        if stay_index < 1 || stay_index > u32::MAX as i64 {
            return Err("stay_index_not_positive".into());
        }
        if discharge_time <= admit_time {
            return Err("discharge_before_admit".into());
        }
        if death_time.is_some_and(|d| d < admit_time) {
            return Err("death_before_admit".into());
        }
        if seen_stays.contains(&stay_id) {
            return Err("duplicate_stay_id".into());
        }
        if !seen_index.insert((patient_id.clone(), stay_index)) {
            return Err("duplicate_stay_index".into());
        }
        seen_stays.insert(stay_id.clone());
        Ok(IcuStayRecord {
            stay_id,
            patient_id,
            admit_time,
            discharge_time,
            death_time,
            stay_index: stay_index as u32,
        })
    })
}

pub fn ingest_profiles<R: Read>(
    input: R,
) -> Result<(Vec<StaticProfile>, ValidationReport), EhrError> {
    read_table(input, "static", &STATIC_COLUMNS, |row| {
        let stay_id = StayId::new(non_empty(row.get(0), "stay_id")?);
        let age_years = finite(row.get(1), "age")?;
        if age_years < 0.0 {
            return Err("negative_age".into());
        }
        let sex = Sex::parse(row.get(2)).ok_or("unknown_sex")?;
        let bmi = match row.get(3) {
            "" => None,
            s => {
                let v = finite(s, "bmi")?;
                if v <= 0.0 {
                    return Err("bmi_not_positive".into());
                }
                Some(v)
            }
        };
        let race = Race::parse(row.get(4)).ok_or("unknown_race")?;
        let cci: u32 = row.get(5).parse().map_err(|_| "unparsable_cci")?;
        let mut comorbidities = Vec::new();
        for (i, c) in Comorbidity::ALL.into_iter().enumerate() {
            if flag(row.get(6 + i), c.as_str())? {
                comorbidities.push(c);
            }
        }
        Ok(StaticProfile {
            stay_id,
            age_years,
            sex,
            bmi,
            race,
            cci,
            comorbidities,
        })
    })
}

pub fn ingest_observations<R: Read>(
    input: R,
    dictionary: &FeatureDictionary,
) -> Result<(Vec<ObservationEvent>, ValidationReport), EhrError> {
    let (mut events, report) = read_table(input, "observations", &OBSERVATION_COLUMNS, |row| {
        let stay_id = StayId::new(non_empty(row.get(0), "stay_id")?);
        let variable_id = row.get(1);
        match dictionary.get(variable_id) {
            None => return Err("unknown_variable".into()),
            Some(e) if !matches!(e.category, Category::Vital | Category::Lab) => {
                return Err("wrong_category".into())
            }
            Some(_) => {}
        }
        let offset_hours = offset(row.get(2))?;
        let value = finite(row.get(3), "value")?;
        Ok(ObservationEvent {
            stay_id,
            variable_id: variable_id.to_owned(),
            offset_hours,
            value,
        })
    })?;
    sort_events(&mut events, |e| (&e.stay_id, e.offset_hours));
    Ok((events, report))
}

pub fn ingest_medications<R: Read>(
    input: R,
    dictionary: &FeatureDictionary,
) -> Result<(Vec<MedicationEvent>, ValidationReport), EhrError> {
    let mut units: HashMap<String, String> = HashMap::new();
    let (mut events, report) = read_table(input, "medications", &MEDICATION_COLUMNS, |row| {
        let stay_id = StayId::new(non_empty(row.get(0), "stay_id")?);
        let drug_id = row.get(1);
        match dictionary.get(drug_id) {
            None => return Err("unknown_variable".into()),
            Some(e) if e.category != Category::Medication => return Err("wrong_category".into()),
            Some(_) => {}
        }
        let offset_hours = offset(row.get(2))?;
        let dose = finite(row.get(3), "dose")?;
        if dose < 0.0 {
            return Err("negative_dose".into());
        }
        let unit = non_empty(row.get(4), "unit")?;
        match units.get(drug_id) {
            Some(u) if u != unit => return Err("inconsistent_unit".into()),
            Some(_) => {}
            None => {
                units.insert(drug_id.to_owned(), unit.to_owned());
            }
        }
        Ok(MedicationEvent {
            stay_id,
            drug_id: drug_id.to_owned(),
            offset_hours,
            dose,
            unit: unit.to_owned(),
        })
    })?;
    sort_events(&mut events, |e| (&e.stay_id, e.offset_hours));
    Ok((events, report))
}

pub fn ingest_assessments<R: Read>(
    input: R,
) -> Result<(Vec<AssessmentEvent>, ValidationReport), EhrError> {
    let (mut events, report) = read_table(input, "assessments", &ASSESSMENT_COLUMNS, |row| {
        let stay_id = StayId::new(non_empty(row.get(0), "stay_id")?);
        let kind = AssessmentKind::parse(row.get(1)).ok_or("unknown_kind")?;
        let offset_hours = offset(row.get(2))?;
        let raw = finite(row.get(3), "value")?;
        if raw.fract() != 0.0 || raw.abs() > 1e6 {
            return Err("non_integer_value".into());
        }
        let value = raw as i32;
        let (lo, hi) = kind.valid_range();
        if value < lo || value > hi {
            return Err(format!("{}_out_of_range", kind.variable_id()));
        }
        Ok(AssessmentEvent {
            stay_id,
            kind,
            offset_hours,
            value,
        })
    })?;
    sort_events(&mut events, |e| (&e.stay_id, e.offset_hours));
    Ok((events, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Observation,
    Medication,
    Assessment,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventTable {
    Observations(Vec<ObservationEvent>),
    Medications(Vec<MedicationEvent>),
    Assessments(Vec<AssessmentEvent>),
}

impl EventTable {
    pub fn len(&self) -> usize {
        match self {
            EventTable::Observations(v) => v.len(),
            EventTable::Medications(v) => v.len(),
            EventTable::Assessments(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn ingest_events<R: Read>(
    input: R,
    kind: EventKind,
    dictionary: &FeatureDictionary,
) -> Result<(EventTable, ValidationReport), EhrError> {
    Ok(match kind {
        EventKind::Observation => {
            let (v, r) = ingest_observations(input, dictionary)?;
            (EventTable::Observations(v), r)
        }
        EventKind::Medication => {
            let (v, r) = ingest_medications(input, dictionary)?;
            (EventTable::Medications(v), r)
        }
        EventKind::Assessment => {
            let (v, r) = ingest_assessments(input)?;
            (EventTable::Assessments(v), r)
        }
    })
}

/// Locations of the five input tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub stays: PathBuf,
    pub profiles: PathBuf,
    pub observations: PathBuf,
    pub medications: PathBuf,
    pub assessments: PathBuf,
}

impl DatasetPaths {
    /// Standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            stays: dir.join("stays.csv"),
            profiles: dir.join("static.csv"),
            observations: dir.join("observations.csv"),
            medications: dir.join("medications.csv"),
            assessments: dir.join("assessments.csv"),
        }
    }

    pub fn all(&self) -> [&Path; 5] {
        [
            &self.stays,
            &self.profiles,
            &self.observations,
            &self.medications,
            &self.assessments,
        ]
    }
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, EhrError> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|source| EhrError::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Ingests all five tables and runs the cross-table checks.
pub fn load_dataset(
    paths: &DatasetPaths,
    dictionary: &FeatureDictionary,
) -> Result<(EhrDataset, ValidationReport), EhrError> {
    let mut report = ValidationReport::default();
    let (stays, r) = ingest_stays(open(&paths.stays)?)?;
    report.merge(r);
    let (profiles, r) = ingest_profiles(open(&paths.profiles)?)?;
    report.merge(r);
    let (observations, r) = ingest_observations(open(&paths.observations)?, dictionary)?;
    report.merge(r);
    let (medications, r) = ingest_medications(open(&paths.medications)?, dictionary)?;
    report.merge(r);
    let (assessments, r) = ingest_assessments(open(&paths.assessments)?)?;
    report.merge(r);
    let dataset = EhrDataset {
        stays,
        profiles,
        observations,
        medications,
        assessments,
    };
    report.merge(super::validate_dataset(&dataset));
    Ok((dataset, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    const STAY_HEADER: &str =
        "stay_id,patient_id,admit_time,discharge_time,death_time,stay_index\n";

    #[test]
    fn discharge_before_admit_is_rejected() {
        let csv = format!("{STAY_HEADER}s1,p1,2020-01-02T00:00,2020-01-01T00:00,,1\n");
        let (stays, report) = ingest_stays(csv.as_bytes()).unwrap();
        assert!(stays.is_empty());
        assert_eq!(report.rejected_rows[0].reason, "discharge_before_admit");
        assert_eq!(report.rejected_rows[0].line, 2);
    }

    #[test]
    fn empty_table_with_header() {
        let (stays, report) = ingest_stays(STAY_HEADER.as_bytes()).unwrap();
        assert!(stays.is_empty());
        assert!(report.rejected_rows.is_empty());
        assert_eq!(report.row_counts["stays"], TableCount::default());
    }

    #[test]
    fn bad_stay_index_rejects_only_that_row() {
        let csv = format!(
            "{STAY_HEADER}\
             s1,p1,2020-01-01T00:00,2020-01-03T00:00,,1\n\
             s2,p2,2020-01-01T00:00,2020-01-03T00:00,,1\n\
             s3,p3,2020-01-01T00:00,2020-01-03T00:00,,one\n\
             s4,p4,2020-01-01T00:00,2020-01-03T00:00,2020-01-02T06:30,1\n"
        );
        let (stays, report) = ingest_stays(csv.as_bytes()).unwrap();
        assert_eq!(stays.len(), 3);
        assert_eq!(report.rejected_rows.len(), 1);
        assert_eq!(report.rejected_rows[0].line, 4);
        assert_eq!(report.rejected_rows[0].reason, "unparsable_stay_index");
        let c = report.row_counts["stays"];
        assert_eq!((c.total, c.accepted, c.rejected), (4, 3, 1));
        assert_eq!(stays[2].death_offset_hours(), Some(30.5));
    }

    #[test]
    fn missing_column_is_fatal() {
        let err = ingest_stays("stay_id,patient_id\n".as_bytes()).unwrap_err();
        assert!(matches!(err, EhrError::MissingColumn { .. }));
    }

    #[test]
    fn duplicate_patient_stay_index() {
        let csv = format!(
            "{STAY_HEADER}\
             s1,p1,2020-01-01T00:00,2020-01-03T00:00,,1\n\
             s2,p1,2020-02-01T00:00,2020-02-03T00:00,,1\n"
        );
        let (_, report) = ingest_stays(csv.as_bytes()).unwrap();
        assert_eq!(report.rejected_rows[0].reason, "duplicate_stay_index");
    }

    #[test]
    fn assessment_ranges() {
        let csv = "stay_id,kind,offset_hours,value\n\
                   s1,RASS,1,-6\n\
                   s1,RASS,1,7\n\
                   s1,RASS,1,-5\n\
                   s1,CAM,1,2\n\
                   s1,GCS,1,2\n\
                   s1,GCS,1,15\n\
                   s1,BPS,1,3\n\
                   s1,RASS,1,-1.5\n";
        let (events, report) = ingest_assessments(csv.as_bytes()).unwrap();
        assert_eq!(events.len(), 2);
        let reasons: Vec<_> = report
            .rejected_rows
            .iter()
            .map(|r| r.reason.as_str())
            .collect();
        assert_eq!(
            reasons,
            [
                "rass_out_of_range",
                "rass_out_of_range",
                "cam_out_of_range",
                "gcs_out_of_range",
                "unknown_kind",
                "non_integer_value"
            ]
        );
    }

    #[test]
    fn observations_sorted_and_checked() {
        let dict = FeatureDictionary::default_clinical();
        let csv = "stay_id,variable_id,offset_hours,value\n\
                   s2,heart_rate,1,80\n\
                   s1,heart_rate,5.0,90\n\
                   s1,heart_rate,2.0,95\n\
                   s1,heart_rate,-1,95\n\
                   s1,pulse,1,95\n\
                   s1,propofol,1,95\n\
                   s1,heart_rate,1,NaN\n";
        let (events, report) = ingest_observations(csv.as_bytes(), &dict).unwrap();
        let order: Vec<_> = events
            .iter()
            .map(|e| (e.stay_id.as_str(), e.offset_hours))
            .collect();
        assert_eq!(order, [("s1", 2.0), ("s1", 5.0), ("s2", 1.0)]);
        let reasons: Vec<_> = report
            .rejected_rows
            .iter()
            .map(|r| r.reason.as_str())
            .collect();
        assert_eq!(
            reasons,
            [
                "negative_offset",
                "unknown_variable",
                "wrong_category",
                "non_finite_value"
            ]
        );
    }

    #[test]
    fn medication_units_must_agree() {
        let dict = FeatureDictionary::default_clinical();
        let csv = "stay_id,drug_id,offset_hours,dose,unit\n\
                   s1,propofol,1,50,mg\n\
                   s2,propofol,1,50,mcg\n\
                   s2,propofol,2,-1,mg\n";
        let (events, report) = ingest_medications(csv.as_bytes(), &dict).unwrap();
        assert_eq!(events.len(), 1);
        let reasons: Vec<_> = report
            .rejected_rows
            .iter()
            .map(|r| r.reason.as_str())
            .collect();
        assert_eq!(reasons, ["inconsistent_unit", "negative_dose"]);
    }

    #[test]
    fn short_rows_are_rejected() {
        let csv = "stay_id,kind,offset_hours,value\ns1,CAM,1\n";
        let (events, report) = ingest_assessments(csv.as_bytes()).unwrap();
        assert!(events.is_empty());
        assert_eq!(report.rejected_rows[0].reason, "wrong_field_count");
    }
}
