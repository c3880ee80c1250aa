//! Synthetic ICU cohorts with a planted, known feature → delirium link.
//!
//! Generation runs in three phases so that labels can depend on features:
//! 1. static profile and first-24h events for every stay,
//! 2. latent risk from the standardized signal features, label draw,
//! 3. length of stay and the CAM/RASS course consistent with the label.
//!
//! Each phase draws from its own seed, with one ChaCha stream per stay.

mod catalog;

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{interval_count, ExclusionReason, INTERVAL_HOURS};
use crate::ehr::{
    AssessmentEvent, AssessmentKind, Category, Comorbidity, EhrDataset, FeatureDictionary,
    IcuStayRecord, MedicationEvent, ObservationEvent, PatientId, Race, Sex, StaticProfile, StayId,
};
use crate::seed::derive_seed;
use catalog::{drug_model, variable_model, COMORBIDITY_RATES};

/// Attempts at drawing labels whose realized incidence lands in the band.
const LABEL_RETRIES: u64 = 200;
/// Allowed relative deviation of realized incidence from the target.
pub const RATE_TOLERANCE: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("signal feature `{0}` is not in the feature dictionary")]
    UnknownSignal(String),
    #[error("signal feature `{0}` is not numeric")]
    UnsupportedSignal(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("could not realize incidence {target} within ±20% for {n} stays after {LABEL_RETRIES} draws")]
    CalibrationFailed { target: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalFeature {
    pub variable_id: String,
    pub coefficient: f64,
}

/// Extra stays, each violating exactly one exclusion rule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExclusionPlant {
    pub under_18: usize,
    pub not_first_admission: usize,
    pub los_under_24h: usize,
    pub death_within_48h: usize,
    pub delirium_or_coma_first_24h: usize,
    pub no_ehr_first_24h: usize,
}

impl ExclusionPlant {
    pub fn count(&self, reason: ExclusionReason) -> usize {
        match reason {
            ExclusionReason::Under18 => self.under_18,
            ExclusionReason::NotFirstAdmission => self.not_first_admission,
            ExclusionReason::LosUnder24h => self.los_under_24h,
            ExclusionReason::DeathWithin48h => self.death_within_48h,
            ExclusionReason::DeliriumOrComaFirst24h => self.delirium_or_coma_first_24h,
            ExclusionReason::NoEhrFirst24h => self.no_ehr_first_24h,
        }
    }

    pub fn total(&self) -> usize {
        ExclusionReason::ORDER.iter().map(|&r| self.count(r)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Stays that pass every inclusion rule; planted exclusions come on top.
    pub n_stays: usize,
    pub seed: u64,
    pub delirium_rate_target: f64,
    pub signal_features: Vec<SignalFeature>,
    /// Standard deviation of the Gaussian noise added to the risk logit.
    pub noise_scale: f64,
    /// Probability that a vital or lab has no first-24h reading.
    pub missing_rate: f64,
    pub exclusion_plant: ExclusionPlant,
}

impl SynthConfig {
    pub fn default_signals() -> Vec<SignalFeature> {
        [
            ("lactic_acid", 2.0),
            ("creatinine", 1.5),
            ("age", 1.2),
            ("urine_sg", 0.8),
        ]
        .into_iter()
        .map(|(v, c)| SignalFeature {
            variable_id: v.into(),
            coefficient: c,
        })
        .collect()
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_stays: 2000,
            seed: 0,
            delirium_rate_target: 0.05,
            signal_features: Self::default_signals(),
            noise_scale: 0.5,
            missing_rate: 0.05,
            exclusion_plant: ExclusionPlant::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayTruth {
    pub stay_id: StayId,
    pub latent_risk: f64,
    pub label: bool,
    pub onset_interval: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedImportance {
    pub variable_id: String,
    pub coefficient: f64,
    /// Standard deviation of the standardized feature over the base stays.
    pub scale: f64,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub stays: Vec<StayTruth>,
    /// Sorted by descending importance.
    pub ranking: Vec<PlantedImportance>,
    pub intercept: f64,
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub dataset: EhrDataset,
    pub truth: SynthTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Plant {
    None,
    Excluded(ExclusionReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EarlyCourse {
    Calm,
    Delirium,
    Coma,
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IntervalState {
    Calm,
    Sedated,
    Qualifying,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn stream(seed: u64, phase: &str, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, phase));
    rng.set_stream(index as u64);
    rng
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let p = 10f64.powi(decimals);
    (v * p).round() / p
}

fn minutes_to_hours(m: i64) -> f64 {
    m as f64 / 60.0
}

struct Generator<'a> {
    config: &'a SynthConfig,
    dictionary: &'a FeatureDictionary,
    ranged: Vec<&'a str>,
    drugs: Vec<&'a str>,
}

/// Phase-1 output for one stay.
struct Draft {
    profile: StaticProfile,
    observations: Vec<ObservationEvent>,
    medications: Vec<MedicationEvent>,
    gcs: Vec<AssessmentEvent>,
}

impl Draft {
    /// Numeric value a signal feature takes for this stay, `None` if unmeasured.
    fn signal_value(&self, variable_id: &str, category: Category) -> Option<f64> {
        match (category, variable_id) {
            (Category::Static, "age") => Some(self.profile.age_years),
            (Category::Static, "bmi") => self.profile.bmi,
            (Category::Static, "cci") => Some(f64::from(self.profile.cci)),
            (Category::Medication, _) => Some(
                self.medications
                    .iter()
                    .filter(|m| m.drug_id == variable_id && m.offset_hours < 24.0)
                    .map(|m| m.dose)
                    .sum(),
            ),
            (Category::Assessment, "gcs") => {
                self.gcs.iter().map(|g| f64::from(g.value)).reduce(f64::max)
            }
            _ => self
                .observations
                .iter()
                .filter(|o| o.variable_id == variable_id && o.offset_hours < 24.0)
                .map(|o| o.value)
                .reduce(f64::max),
        }
    }
}

impl<'a> Generator<'a> {
    fn new(config: &'a SynthConfig, dictionary: &'a FeatureDictionary) -> Result<Self, SynthError> {
        if !(config.delirium_rate_target > 0.0 && config.delirium_rate_target < 1.0) {
            return Err(SynthError::Config(
                "delirium_rate_target must be in (0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&config.missing_rate) {
            return Err(SynthError::Config("missing_rate must be in [0, 1)".into()));
        }
        if !(config.noise_scale >= 0.0 && config.noise_scale.is_finite()) {
            return Err(SynthError::Config(
                "noise_scale must be non-negative".into(),
            ));
        }
        if config.n_stays == 0 {
            return Err(SynthError::Config("n_stays must be positive".into()));
        }
        for s in &config.signal_features {
            let entry = dictionary
                .get(&s.variable_id)
                .ok_or_else(|| SynthError::UnknownSignal(s.variable_id.clone()))?;
            let numeric = match entry.category {
                Category::Static => matches!(s.variable_id.as_str(), "age" | "bmi" | "cci"),
                Category::Assessment => s.variable_id == "gcs",
                _ => true,
            };
            if !numeric || !s.coefficient.is_finite() {
                return Err(SynthError::UnsupportedSignal(s.variable_id.clone()));
            }
        }
        Ok(Self {
            config,
            dictionary,
            ranged: dictionary
                .entries()
                .iter()
                .filter(|e| matches!(e.category, Category::Vital | Category::Lab))
                .map(|e| e.variable_id.as_str())
                .collect(),
            drugs: dictionary
                .entries()
                .iter()
                .filter(|e| e.category == Category::Medication)
                .map(|e| e.variable_id.as_str())
                .collect(),
        })
    }

    fn stay_id(i: usize) -> StayId {
        StayId::new(format!("S{:06}", i + 1))
    }

    fn profile(&self, rng: &mut ChaCha8Rng, stay_id: &StayId, plant: Plant) -> StaticProfile {
        let age = if plant == Plant::Excluded(ExclusionReason::Under18) {
            f64::from(rng.random_range(10..18))
        } else {
            (62.0 + 16.0 * normal(rng)).round().clamp(18.0, 95.0)
        };
        let u: f64 = rng.random();
        let sex = if u < 0.55 {
            Sex::Male
        } else if u < 0.99 {
            Sex::Female
        } else {
            Sex::Unknown
        };
        let u: f64 = rng.random();
        let race = if u < 0.15 {
            Race::Black
        } else if u < 0.85 {
            Race::White
        } else {
            Race::Other
        };
        let bmi_draw = round_to((28.0 + 6.0 * normal(rng)).clamp(15.0, 60.0), 1);
        let bmi = (rng.random::<f64>() >= 0.05).then_some(bmi_draw);
        let cci = (2.5 + 2.0 * normal(rng)).abs().round().min(15.0) as u32;
        let comorbidities = Comorbidity::ALL
            .iter()
            .zip(COMORBIDITY_RATES)
            .filter_map(|(&c, p)| (rng.random::<f64>() < p).then_some(c))
            .collect();
        StaticProfile {
            stay_id: stay_id.clone(),
            age_years: age,
            sex,
            bmi,
            race,
            cci,
            comorbidities,
        }
    }

    /// First-24h vitals, labs, drugs and GCS.
    fn draft(&self, i: usize, plant: Plant) -> Draft {
        let mut rng = stream(self.config.seed, "synth/features", i);
        let stay_id = Self::stay_id(i);
        let profile = self.profile(&mut rng, &stay_id, plant);
        let mut observations = Vec::new();
        for &var in &self.ranged {
            let m = variable_model(var);
            let level = m.mean + m.between_sd * normal(&mut rng);
            let n = rng.random_range(m.readings.0..=m.readings.1);
            if rng.random::<f64>() < self.config.missing_rate {
                continue;
            }
            for _ in 0..n {
                let v = round_to(
                    (level + m.within_sd * normal(&mut rng)).clamp(m.lo, m.hi),
                    m.decimals,
                );
                observations.push(ObservationEvent {
                    stay_id: stay_id.clone(),
                    variable_id: var.to_owned(),
                    offset_hours: minutes_to_hours(rng.random_range(0..24 * 60)),
                    value: v,
                });
            }
        }
        let mut medications = Vec::new();
        for &drug in &self.drugs {
            let m = drug_model(drug);
            if rng.random::<f64>() >= m.p_given {
                continue;
            }
            for _ in 0..rng.random_range(1..=m.max_doses) {
                medications.push(MedicationEvent {
                    stay_id: stay_id.clone(),
                    drug_id: drug.to_owned(),
                    offset_hours: minutes_to_hours(rng.random_range(0..24 * 60)),
                    dose: m.bolus * f64::from(rng.random_range(1..=3u32)),
                    unit: m.unit.to_owned(),
                });
            }
        }
        let gcs = (0..rng.random_range(2..=4))
            .map(|_| AssessmentEvent {
                stay_id: stay_id.clone(),
                kind: AssessmentKind::Gcs,
                offset_hours: minutes_to_hours(rng.random_range(0..24 * 60)),
                value: (15.0 - (2.5 * normal(&mut rng)).abs())
                    .round()
                    .clamp(3.0, 15.0) as i32,
            })
            .collect();
        Draft {
            profile,
            observations,
            medications,
            gcs,
        }
    }

    /// Standardized signal matrix (rows = stays), missing values at 0, plus
    /// each column's standard deviation after standardization.
    fn standardized_signals(&self, drafts: &[Draft]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut z = vec![vec![0.0; self.config.signal_features.len()]; drafts.len()];
        let mut scales = Vec::new();
        for (j, s) in self.config.signal_features.iter().enumerate() {
            let category = self
                .dictionary
                .get(&s.variable_id)
                .expect("checked")
                .category;
            let raw: Vec<Option<f64>> = drafts
                .iter()
                .map(|d| d.signal_value(&s.variable_id, category))
                .collect();
            let present: Vec<f64> = raw.iter().flatten().copied().collect();
            let n = present.len().max(1) as f64;
            let mean = present.iter().sum::<f64>() / n;
            let sd = (present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            for (row, v) in z.iter_mut().zip(&raw) {
                row[j] = match v {
                    Some(v) if sd > 0.0 => (v - mean) / sd,
                    _ => 0.0,
                };
            }
            let col_mean = z.iter().map(|r| r[j]).sum::<f64>() / drafts.len() as f64;
            let col_sd = (z.iter().map(|r| (r[j] - col_mean).powi(2)).sum::<f64>()
                / drafts.len() as f64)
                .sqrt();
            scales.push(col_sd);
        }
        (z, scales)
    }

    fn intercept_for(&self, logits: &[f64]) -> f64 {
        let target = self.config.delirium_rate_target;
        let mean_risk =
            |b: f64| logits.iter().map(|&l| logistic(b + l)).sum::<f64>() / logits.len() as f64;
        let (mut lo, mut hi) = (-60.0, 60.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_risk(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn draw_labels(&self, risks: &[f64]) -> Result<Vec<bool>, SynthError> {
        let n = risks.len();
        let target = self.config.delirium_rate_target;
        for attempt in 0..LABEL_RETRIES {
            let mut rng = stream(self.config.seed, "synth/labels", attempt as usize);
            let labels: Vec<bool> = risks.iter().map(|&r| rng.random::<f64>() < r).collect();
            let rate = labels.iter().filter(|&&l| l).count() as f64 / n as f64;
            if (rate - target).abs() <= RATE_TOLERANCE * target + 1e-12 {
                if attempt > 0 {
                    log::debug!("label draw accepted after {attempt} redraws");
                }
                return Ok(labels);
            }
        }
        Err(SynthError::CalibrationFailed { target, n })
    }

    fn admit_time(rng: &mut ChaCha8Rng) -> NaiveDateTime {
        let base = NaiveDate::from_ymd_opt(2015, 1, 1)
            .expect("valid date")
            .and_hms_opt(0, 0, 0)
            .expect("valid time");
        base + Duration::minutes(rng.random_range(0..5 * 365 * 24 * 60))
    }

    /// CAM and RASS readings interval by interval. Intervals 0 and 1 follow
    /// `early`; from interval 2 the course is calm (occasionally deeply
    /// sedated, where CAM is ignored) until `onset`, which qualifies.
    fn assessments(
        rng: &mut ChaCha8Rng,
        stay_id: &StayId,
        los_minutes: i64,
        onset: Option<u32>,
        early: EarlyCourse,
    ) -> Vec<AssessmentEvent> {
        let los_hours = minutes_to_hours(los_minutes);
        let mut out = Vec::new();
        let mut push = |kind, minute: i64, value| {
            out.push(AssessmentEvent {
                stay_id: stay_id.clone(),
                kind,
                offset_hours: minutes_to_hours(minute),
                value,
            })
        };
        for k in 0..interval_count(los_hours) {
            let state = if k < 2 {
                match (early, k) {
                    (EarlyCourse::Absent, _) => continue,
                    (EarlyCourse::Delirium, 1) => IntervalState::Qualifying,
                    (EarlyCourse::Coma, 1) => IntervalState::Sedated,
                    _ => IntervalState::Calm,
                }
            } else {
                match onset {
                    Some(k0) if k == k0 => IntervalState::Qualifying,
                    Some(k0) if k > k0 && rng.random::<f64>() < 0.5 => IntervalState::Qualifying,
                    _ if rng.random::<f64>() < 0.15 => IntervalState::Sedated,
                    _ => IntervalState::Calm,
                }
            };
            let start = i64::from(k) * (INTERVAL_HOURS as i64) * 60;
            for h in [1, 5, 9] {
                let minute = start + h * 60 + rng.random_range(0..60);
                if minute > los_minutes {
                    break;
                }
                let rass = match state {
                    IntervalState::Calm => rng.random_range(-2..=1),
                    IntervalState::Qualifying => rng.random_range(-3..=2),
                    IntervalState::Sedated => rng.random_range(-5..=-4),
                };
                push(AssessmentKind::Rass, minute, rass);
            }
            let minute = start + 6 * 60 + rng.random_range(0..60);
            if minute <= los_minutes {
                let cam = match state {
                    IntervalState::Calm => 0,
                    IntervalState::Qualifying => 1,
                    // CAM is positive or not, the RASS gate rejects it
                    IntervalState::Sedated if early == EarlyCourse::Coma && k < 2 => 0,
                    IntervalState::Sedated => i32::from(rng.random::<bool>()),
                };
                push(AssessmentKind::Cam, minute, cam);
            }
        }
        out
    }

    fn later_events(&self, rng: &mut ChaCha8Rng, draft: &mut Draft, los_minutes: i64) {
        if los_minutes <= 24 * 60 {
            return;
        }
        let stay_id = draft.profile.stay_id.clone();
        for &var in &self.ranged {
            if rng.random::<f64>() >= 0.3 {
                continue;
            }
            let m = variable_model(var);
            let v = round_to(
                (m.mean + m.between_sd * normal(rng)).clamp(m.lo, m.hi),
                m.decimals,
            );
            draft.observations.push(ObservationEvent {
                stay_id: stay_id.clone(),
                variable_id: var.to_owned(),
                offset_hours: minutes_to_hours(rng.random_range(24 * 60..=los_minutes)),
                value: v,
            });
        }
        for &drug in &self.drugs {
            let m = drug_model(drug);
            if rng.random::<f64>() < 0.1 {
                draft.medications.push(MedicationEvent {
                    stay_id: stay_id.clone(),
                    drug_id: drug.to_owned(),
                    offset_hours: minutes_to_hours(rng.random_range(24 * 60..=los_minutes)),
                    dose: m.bolus,
                    unit: m.unit.to_owned(),
                });
            }
        }
    }

    fn plants(&self) -> Vec<Plant> {
        let p = &self.config.exclusion_plant;
        let mut out = vec![Plant::None; self.config.n_stays];
        for r in ExclusionReason::ORDER {
            out.extend(std::iter::repeat_n(Plant::Excluded(r), p.count(r)));
        }
        out
    }

    fn generate(&self) -> Result<SynthCohort, SynthError> {
        let n = self.config.n_stays;
        let plants = self.plants();
        let mut drafts: Vec<Draft> = plants
            .iter()
            .enumerate()
            .map(|(i, &p)| self.draft(i, p))
            .collect();

        // phase 2: risk and labels over base stays only
        let (z, scales) = self.standardized_signals(&drafts[..n]);
        let mut noise_rng = stream(self.config.seed, "synth/noise", 0);
        let logits: Vec<f64> = z
            .iter()
            .map(|row| {
                let lin: f64 = row
                    .iter()
                    .zip(&self.config.signal_features)
                    .map(|(z, s)| z * s.coefficient)
                    .sum();
                lin + self.config.noise_scale * normal(&mut noise_rng)
            })
            .collect();
        let intercept = self.intercept_for(&logits);
        let risks: Vec<f64> = logits.iter().map(|l| logistic(intercept + l)).collect();
        let labels = self.draw_labels(&risks)?;

        // phase 3: course of each stay
        let mut dataset = EhrDataset::default();
        let mut truth = Vec::with_capacity(plants.len());
        let mut patient_discharge: Vec<NaiveDateTime> = Vec::with_capacity(n);
        for (i, (draft, plant)) in drafts.iter_mut().zip(&plants).enumerate() {
            let mut rng = stream(self.config.seed, "synth/course", i);
            let stay_id = Self::stay_id(i);
            let delirium = i < n && labels[i];
            let onset = delirium.then(|| {
                let mut k = 2u32;
                while k < 13 && rng.random::<f64>() > 0.35 {
                    k += 1;
                }
                k
            });
            let base_los =
                26.0 * 60.0 + rng.sample(LogNormal::new(40f64.ln(), 0.7).expect("valid")) * 60.0;
            let mut los_minutes = (base_los.round() as i64).min(30 * 24 * 60);
            if let Some(k0) = onset {
                let min_los = (i64::from(k0) + 1) * 12 * 60 + rng.random_range(6 * 60..72 * 60);
                los_minutes = los_minutes.max(min_los);
            }
            let mut early = EarlyCourse::Calm;
            let mut admit_time = Self::admit_time(&mut rng);
            let mut patient_id = PatientId::new(format!("P{:06}", i + 1));
            let mut stay_index = 1;
            let mut death_minutes =
                (los_minutes >= 48 * 60 && rng.random::<f64>() < 0.04).then_some(los_minutes);
            match *plant {
                Plant::None | Plant::Excluded(ExclusionReason::Under18) => {}
                Plant::Excluded(ExclusionReason::NotFirstAdmission) => {
                    let first = rng.random_range(0..n);
                    patient_id = PatientId::new(format!("P{:06}", first + 1));
                    stay_index = 2;
                    admit_time =
                        patient_discharge[first] + Duration::days(rng.random_range(30..365));
                    // a patient may be planted twice; give each readmission its own index
                    while dataset.stays.iter().any(|s: &IcuStayRecord| {
                        s.patient_id == patient_id && s.stay_index == stay_index
                    }) {
                        stay_index += 1;
                    }
                }
                Plant::Excluded(ExclusionReason::LosUnder24h) => {
                    los_minutes = rng.random_range(6 * 60..24 * 60);
                    death_minutes = None;
                    draft
                        .observations
                        .retain(|o| o.offset_hours <= minutes_to_hours(los_minutes));
                    draft
                        .medications
                        .retain(|o| o.offset_hours <= minutes_to_hours(los_minutes));
                    draft
                        .gcs
                        .retain(|o| o.offset_hours <= minutes_to_hours(los_minutes));
                }
                Plant::Excluded(ExclusionReason::DeathWithin48h) => {
                    los_minutes = rng.random_range(30 * 60..48 * 60);
                    death_minutes = Some(los_minutes);
                }
                Plant::Excluded(ExclusionReason::DeliriumOrComaFirst24h) => {
                    early = if rng.random::<bool>() {
                        EarlyCourse::Delirium
                    } else {
                        EarlyCourse::Coma
                    };
                }
                Plant::Excluded(ExclusionReason::NoEhrFirst24h) => {
                    early = EarlyCourse::Absent;
                    los_minutes = los_minutes.max(48 * 60);
                    draft.observations.clear();
                    draft.medications.clear();
                    draft.gcs.clear();
                }
            }
            self.later_events(&mut rng, draft, los_minutes);
            let assessments = Self::assessments(&mut rng, &stay_id, los_minutes, onset, early);

            let discharge_time = admit_time + Duration::minutes(los_minutes);
            if i < n {
                patient_discharge.push(discharge_time);
            }
            dataset.stays.push(IcuStayRecord {
                stay_id: stay_id.clone(),
                patient_id,
                admit_time,
                discharge_time,
                death_time: death_minutes.map(|m| admit_time + Duration::minutes(m)),
                stay_index,
            });
            dataset.profiles.push(draft.profile.clone());
            dataset.observations.append(&mut draft.observations);
            dataset.medications.append(&mut draft.medications);
            dataset.assessments.append(&mut draft.gcs);
            dataset.assessments.extend(assessments);
            truth.push(StayTruth {
                stay_id,
                latent_risk: if i < n { risks[i] } else { 0.0 },
                label: delirium,
                onset_interval: onset,
            });
        }
        crate::ehr::sort_events(&mut dataset.observations, |e| (&e.stay_id, e.offset_hours));
        crate::ehr::sort_events(&mut dataset.medications, |e| (&e.stay_id, e.offset_hours));
        crate::ehr::sort_events(&mut dataset.assessments, |e| (&e.stay_id, e.offset_hours));

        let ranking = rank_importance(&self.config.signal_features, &scales);
        Ok(SynthCohort {
            dataset,
            truth: SynthTruth {
                stays: truth,
                ranking,
                intercept,
            },
        })
    }
}

fn rank_importance(signals: &[SignalFeature], scales: &[f64]) -> Vec<PlantedImportance> {
    let mut out: Vec<PlantedImportance> = signals
        .iter()
        .zip(scales)
        .map(|(s, &scale)| PlantedImportance {
            variable_id: s.variable_id.clone(),
            coefficient: s.coefficient,
            scale,
            importance: s.coefficient.abs() * scale,
        })
        .collect();
    out.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    out
}

pub fn generate_cohort(
    config: &SynthConfig,
    dictionary: &FeatureDictionary,
) -> Result<SynthCohort, SynthError> {
    Generator::new(config, dictionary)?.generate()
}

/// Signal features ranked by |coefficient| × generated feature scale.
pub fn planted_truth(
    config: &SynthConfig,
    dictionary: &FeatureDictionary,
) -> Result<Vec<PlantedImportance>, SynthError> {
    let g = Generator::new(config, dictionary)?;
    let drafts: Vec<Draft> = (0..config.n_stays)
        .map(|i| g.draft(i, Plant::None))
        .collect();
    let (_, scales) = g.standardized_signals(&drafts);
    Ok(rank_importance(&config.signal_features, &scales))
}

pub fn write_truth<W: Write>(out: W, truth: &SynthTruth) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stay_id", "latent_risk", "label", "onset_interval"])?;
    for t in &truth.stays {
        w.write_record([
            t.stay_id.as_str(),
            &t.latent_risk.to_string(),
            if t.label { "1" } else { "0" },
            &t.onset_interval.map(|k| k.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_planted_importance<W: Write>(
    out: W,
    ranking: &[PlantedImportance],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variable_id", "coefficient", "scale", "importance", "rank"])?;
    for (i, p) in ranking.iter().enumerate() {
        w.write_record([
            p.variable_id.as_str(),
            &p.coefficient.to_string(),
            &p.scale.to_string(),
            &p.importance.to_string(),
            &(i + 1).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Truth labels keyed by stay.
pub fn truth_by_stay(truth: &SynthTruth) -> BTreeMap<&StayId, &StayTruth> {
    truth.stays.iter().map(|t| (&t.stay_id, t)).collect()
}
