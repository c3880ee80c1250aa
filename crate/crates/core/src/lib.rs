//! ICU records, cohort labeling, text reports and synthetic cohorts.

pub mod cohort;
pub mod ehr;
pub mod report;
pub mod seed;
pub mod synth;

pub use seed::derive_seed;
