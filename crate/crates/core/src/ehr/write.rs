use std::io::Write;

use chrono::NaiveDateTime;

use super::ingest::{
    ASSESSMENT_COLUMNS, MEDICATION_COLUMNS, OBSERVATION_COLUMNS, STATIC_COLUMNS, STAY_COLUMNS,
};
use super::{
    AssessmentEvent, Comorbidity, IcuStayRecord, MedicationEvent, ObservationEvent, StaticProfile,
};

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M").to_string()
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_stays<W: Write>(out: W, stays: &[IcuStayRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STAY_COLUMNS)?;
    for s in stays {
        w.write_record([
            s.stay_id.as_str(),
            s.patient_id.as_str(),
            &format_timestamp(s.admit_time),
            &format_timestamp(s.discharge_time),
            &s.death_time.map(format_timestamp).unwrap_or_default(),
            &s.stay_index.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_profiles<W: Write>(out: W, profiles: &[StaticProfile]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATIC_COLUMNS)?;
    for p in profiles {
        let mut row = vec![
            p.stay_id.to_string(),
            p.age_years.to_string(),
            p.sex.as_str().to_owned(),
            p.bmi.map(|b| b.to_string()).unwrap_or_default(),
            p.race.as_str().to_owned(),
            p.cci.to_string(),
        ];
        row.extend(Comorbidity::ALL.iter().map(|&c| bit(p.has(c)).to_owned()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_observations<W: Write>(out: W, events: &[ObservationEvent]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OBSERVATION_COLUMNS)?;
    for e in events {
        w.write_record([
            e.stay_id.as_str(),
            &e.variable_id,
            &e.offset_hours.to_string(),
            &e.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_medications<W: Write>(out: W, events: &[MedicationEvent]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MEDICATION_COLUMNS)?;
    for e in events {
        w.write_record([
            e.stay_id.as_str(),
            &e.drug_id,
            &e.offset_hours.to_string(),
            &e.dose.to_string(),
            &e.unit,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_assessments<W: Write>(out: W, events: &[AssessmentEvent]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ASSESSMENT_COLUMNS)?;
    for e in events {
        w.write_record([
            e.stay_id.as_str(),
            e.kind.as_str(),
            &e.offset_hours.to_string(),
            &e.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes all five tables to `paths`, creating parent directories.
pub fn write_dataset(
    paths: &super::DatasetPaths,
    dataset: &super::EhrDataset,
) -> Result<(), super::EhrError> {
    fn create(
        path: &std::path::Path,
    ) -> Result<std::io::BufWriter<std::fs::File>, super::EhrError> {
        let io = |source| super::EhrError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        std::fs::File::create(path)
            .map(std::io::BufWriter::new)
            .map_err(io)
    }
    let csv_err = |table: &str| {
        let table = table.to_owned();
        move |source| super::EhrError::Csv { table, source }
    };
    write_stays(create(&paths.stays)?, &dataset.stays).map_err(csv_err("stays"))?;
    write_profiles(create(&paths.profiles)?, &dataset.profiles).map_err(csv_err("static"))?;
    write_observations(create(&paths.observations)?, &dataset.observations)
        .map_err(csv_err("observations"))?;
    write_medications(create(&paths.medications)?, &dataset.medications)
        .map_err(csv_err("medications"))?;
    write_assessments(create(&paths.assessments)?, &dataset.assessments)
        .map_err(csv_err("assessments"))?;
    Ok(())
}
