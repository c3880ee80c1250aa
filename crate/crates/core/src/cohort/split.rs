use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CohortError;
use crate::ehr::PatientId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Tune,
    Validation,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Tune => "tune",
            Partition::Validation => "validation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Partition::Train, Partition::Tune, Partition::Validation]
            .into_iter()
            .find(|p| p.as_str() == s)
    }
}

/// Patient-level 80/10/10 partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: BTreeSet<PatientId>,
    pub tune_ids: BTreeSet<PatientId>,
    pub internal_validation_ids: BTreeSet<PatientId>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn partition_of(&self, patient: &PatientId) -> Option<Partition> {
        if self.train_ids.contains(patient) {
            Some(Partition::Train)
        } else if self.tune_ids.contains(patient) {
            Some(Partition::Tune)
        } else if self.internal_validation_ids.contains(patient) {
            Some(Partition::Validation)
        } else {
            None
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["patient_id", "partition"])?;
        for (ids, p) in [
            (&self.train_ids, Partition::Train),
            (&self.tune_ids, Partition::Tune),
            (&self.internal_validation_ids, Partition::Validation),
        ] {
            for id in ids {
                w.write_record([id.as_str(), p.as_str()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R, seed: u64) -> csv::Result<Self> {
        let mut split = DatasetSplit {
            train_ids: BTreeSet::new(),
            tune_ids: BTreeSet::new(),
            internal_validation_ids: BTreeSet::new(),
            seed,
        };
        for rec in csv::Reader::from_reader(input).records() {
            let rec = rec?;
            let id = PatientId::new(rec.get(0).unwrap_or_default());
            let set = match Partition::parse(rec.get(1).unwrap_or_default()) {
                Some(Partition::Train) => &mut split.train_ids,
                Some(Partition::Tune) => &mut split.tune_ids,
                Some(Partition::Validation) => &mut split.internal_validation_ids,
                None => {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        "split.csv: bad partition",
                    )
                    .into())
                }
            };
            set.insert(id);
        }
        Ok(split)
    }
}

/// Shuffles the sorted, de-duplicated ids with `seed`; the first 10% (floor)
/// go to tuning, the next 10% to validation and the remainder to training.
pub fn split_dataset<'a>(
    patient_ids: impl IntoIterator<Item = &'a PatientId>,
    seed: u64,
) -> Result<DatasetSplit, CohortError> {
    let unique: BTreeSet<&PatientId> = patient_ids.into_iter().collect();
    let n = unique.len();
    if n < 10 {
        return Err(CohortError::TooFewPatients(n));
    }
    let mut ids: Vec<&PatientId> = unique.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_holdout = n / 10;
    let take =
        |r: std::ops::Range<usize>| ids[r].iter().map(|&p| p.clone()).collect::<BTreeSet<_>>();
    Ok(DatasetSplit {
        tune_ids: take(0..n_holdout),
        internal_validation_ids: take(n_holdout..2 * n_holdout),
        train_ids: take(2 * n_holdout..n),
        seed,
    })
}
