use delirium_metrics::{auroc, per_day_auroc, ScoredCohort, ScoredEntry, MIN_PER_CLASS};

fn e(i: usize, score: f64, onset: Option<u32>, los_hours: f64) -> ScoredEntry {
    ScoredEntry {
        stay_id: format!("S{i}"),
        score,
        label: onset.is_some(),
        onset_interval: onset,
        los_hours,
    }
}

#[test]
fn day_one_equals_restricted_overall_auroc() {
    // onsets only in intervals 2 and 3 (day 1); negatives with mixed stay lengths
    let mut entries = Vec::new();
    for i in 0..12 {
        entries.push(e(i, 0.3 + 0.05 * i as f64, Some(2 + (i % 2) as u32), 60.0));
    }
    for i in 12..60 {
        entries.push(e(
            i,
            (i as f64 * 0.37) % 1.0,
            None,
            24.0 + (i as f64 * 1.7) % 60.0,
        ));
    }
    let cohort = ScoredCohort::new(entries.clone()).unwrap();
    let days = per_day_auroc(&cohort, 7);
    assert_eq!(days.len(), 7);
    let kept: Vec<&ScoredEntry> = entries
        .iter()
        .filter(|x| x.label || x.los_hours >= 48.0)
        .collect();
    let s: Vec<f64> = kept.iter().map(|x| x.score).collect();
    let l: Vec<bool> = kept.iter().map(|x| x.label).collect();
    assert_eq!(days[0].auroc, Some(auroc(&s, &l).unwrap()));
    assert_eq!(days[0].n_pos, 12);
    // no onsets after day 1
    assert!(days[1..].iter().all(|d| d.auroc.is_none() && d.n_pos == 0));
}

#[test]
fn insufficient_days_are_absent_and_values_in_range() {
    let mut entries = Vec::new();
    let mut id = 0;
    // days 1, 2, 4 and 5 get MIN_PER_CLASS onsets; day 3 gets none; day 6 one short
    for (day, count) in [
        (1, MIN_PER_CLASS),
        (2, MIN_PER_CLASS + 2),
        (4, MIN_PER_CLASS),
        (5, 6),
        (6, MIN_PER_CLASS - 1),
    ] {
        for j in 0..count {
            entries.push(e(
                id,
                0.5 + 0.04 * j as f64,
                Some(2 * day + (j % 2) as u32),
                24.0 * f64::from(day) + 30.0,
            ));
            id += 1;
        }
    }
    for j in 0..40 {
        entries.push(e(id, 0.02 * j as f64, None, 200.0));
        id += 1;
    }
    let days = per_day_auroc(&ScoredCohort::new(entries).unwrap(), 7);
    assert!(days[2].auroc.is_none());
    assert!(days[5].auroc.is_none());
    assert!(days[6].auroc.is_none());
    for d in [0, 1, 3, 4] {
        let a = days[d].auroc.unwrap();
        assert!((0.0..=1.0).contains(&a));
    }
}
