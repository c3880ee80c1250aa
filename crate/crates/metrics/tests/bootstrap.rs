use delirium_metrics::{bootstrap_auroc, BootstrapConfig, MetricsError, ScoredCohort, ScoredEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn entry(i: usize, score: f64, label: bool) -> ScoredEntry {
    ScoredEntry {
        stay_id: format!("S{i}"),
        score,
        label,
        onset_interval: label.then_some(2),
        los_hours: 72.0,
    }
}

/// Binormal scores with AUROC Φ(μ/√2) = 0.85, squashed into (0, 1).
fn known_auroc_cohort(seed: u64, n: usize) -> ScoredCohort {
    const MU: f64 = 1.465_725_661_025_787_7; // √2 · Φ⁻¹(0.85)
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = (0..n)
        .map(|i| {
            let label = i % 4 == 0;
            let x: f64 = rng.sample::<f64, _>(StandardNormal) + if label { MU } else { 0.0 };
            entry(i, 1.0 / (1.0 + (-x).exp()), label)
        })
        .collect();
    ScoredCohort::new(entries).unwrap()
}

#[test]
fn samples_are_deterministic_and_bracketed() {
    let cohort = known_auroc_cohort(1, 400);
    let cfg = BootstrapConfig {
        iterations: 200,
        seed: 77,
        days: 7,
    };
    let a = bootstrap_auroc(&cohort, &cfg).unwrap();
    let b = bootstrap_auroc(&cohort, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.bootstrap_samples.len(), 200);
    assert!(a.bootstrap_samples.iter().all(|x| (0.0..=1.0).contains(x)));
    assert!(a.ci_low <= a.auroc_median && a.auroc_median <= a.ci_high);
    let c = bootstrap_auroc(&cohort, &BootstrapConfig { seed: 78, ..cfg }).unwrap();
    assert_ne!(a.bootstrap_samples, c.bootstrap_samples);
}

#[test]
fn thread_count_does_not_change_samples() {
    let cohort = known_auroc_cohort(2, 300);
    let cfg = BootstrapConfig::default();
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let parallel = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let a = serial.install(|| bootstrap_auroc(&cohort, &cfg)).unwrap();
    let b = parallel.install(|| bootstrap_auroc(&cohort, &cfg)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn degenerate_cohort_collapses_interval() {
    // perfectly separated: every resample with both classes scores 1
    let entries = (0..40)
        .map(|i| entry(i, if i < 20 { 0.9 } else { 0.1 }, i < 20))
        .collect();
    let r = bootstrap_auroc(
        &ScoredCohort::new(entries).unwrap(),
        &BootstrapConfig::default(),
    )
    .unwrap();
    assert_eq!((r.ci_low, r.auroc_median, r.ci_high), (1.0, 1.0, 1.0));
}

#[test]
fn single_class_resamples_are_redrawn() {
    let mut entries: Vec<_> = (0..30).map(|i| entry(i, 0.3, false)).collect();
    entries.push(entry(30, 0.7, true));
    let r = bootstrap_auroc(
        &ScoredCohort::new(entries).unwrap(),
        &BootstrapConfig::default(),
    )
    .unwrap();
    assert_eq!(r.bootstrap_samples.len(), 200);
    assert!(r.redraws > 0);
}

#[test]
fn single_class_cohort_is_an_error() {
    let entries = (0..10).map(|i| entry(i, 0.5, true)).collect();
    assert!(matches!(
        bootstrap_auroc(
            &ScoredCohort::new(entries).unwrap(),
            &BootstrapConfig::default()
        ),
        Err(MetricsError::SingleClass { .. })
    ));
}

#[test]
fn ci_covers_true_auroc() {
    let cfg = BootstrapConfig::default();
    let covered = (0..100)
        .filter(|&rep| {
            let r = bootstrap_auroc(
                &known_auroc_cohort(1000 + rep, 2000),
                &BootstrapConfig { seed: rep, ..cfg },
            )
            .unwrap();
            r.ci_low <= 0.85 && 0.85 <= r.ci_high
        })
        .count();
    assert!(covered >= 90, "covered {covered} of 100");
}

#[test]
fn cohort_validation() {
    assert!(matches!(
        ScoredCohort::new(vec![entry(1, 0.2, true), entry(1, 0.3, false)]),
        Err(MetricsError::DuplicateStay(_))
    ));
    assert!(matches!(
        ScoredCohort::new(vec![entry(1, 1.2, true)]),
        Err(MetricsError::ScoreOutOfRange { .. })
    ));
}
