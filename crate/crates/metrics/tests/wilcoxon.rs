use delirium_metrics::{wilcoxon_rank_sum, MetricsError};

fn rank_sum_of(values: &[f64], in_a: u32) -> f64 {
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if in_a & (1 << i) == 0 {
            continue;
        }
        let below = values.iter().filter(|&&w| w < v).count() as f64;
        let ties = values.iter().filter(|&&w| w == v).count() as f64;
        sum += below + (ties + 1.0) / 2.0;
    }
    sum
}

/// Two-sided p from all C(20, 10) relabelings of the pooled values.
fn permutation_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len() as u32;
    let expected = a.len() as f64 * (n as f64 + 1.0) / 2.0;
    let observed = (rank_sum_of(&pooled, (1 << a.len()) - 1) - expected).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        total += 1;
        if (rank_sum_of(&pooled, mask) - expected).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

#[test]
fn normal_approximation_matches_permutation_oracle() {
    let fixtures: [([f64; 10], [f64; 10]); 4] = [
        (
            [0.81, 0.79, 0.84, 0.77, 0.80, 0.83, 0.78, 0.85, 0.82, 0.76],
            [0.75, 0.78, 0.74, 0.79, 0.73, 0.77, 0.72, 0.80, 0.71, 0.76],
        ),
        (
            [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0],
            [5.5, 6.5, 7.5, 8.5, 9.5, 10.5, 11.5, 12.5, 13.5, 14.5],
        ),
        (
            [0.2, 0.4, 0.4, 0.6, 0.6, 0.6, 0.8, 0.8, 1.0, 1.2],
            [0.1, 0.2, 0.2, 0.4, 0.4, 0.6, 0.6, 0.8, 0.9, 1.0],
        ),
        (
            [3.1, 2.7, 4.4, 3.9, 2.2, 5.0, 3.3, 4.1, 2.9, 3.6],
            [3.0, 2.5, 4.6, 3.8, 2.4, 4.9, 3.2, 4.0, 2.8, 3.7],
        ),
    ];
    for (a, b) in fixtures {
        let r = wilcoxon_rank_sum("a", &a, "b", &b).unwrap();
        let exact = permutation_p(&a, &b);
        assert!(
            (r.p_value - exact).abs() <= 0.01,
            "approx {} exact {exact}",
            r.p_value
        );
        assert_eq!(
            r.statistic,
            rank_sum_of(
                &a.iter().chain(&b).copied().collect::<Vec<_>>(),
                (1 << 10) - 1
            )
        );
    }
}

#[test]
fn identical_samples_are_not_significant() {
    let a: Vec<f64> = (0..200).map(|i| 0.7 + f64::from(i % 17) / 100.0).collect();
    let r = wilcoxon_rank_sum("x", &a, "y", &a).unwrap();
    assert!(r.p_value > 0.9);
    assert!(!r.significant_at_0_05);
}

#[test]
fn separated_samples_are_significant() {
    let a: Vec<f64> = (1..=200).map(f64::from).collect();
    let b: Vec<f64> = (201..=400).map(f64::from).collect();
    let r = wilcoxon_rank_sum("a", &a, "b", &b).unwrap();
    assert!(r.p_value < 1e-10);
    assert!(r.significant_at_0_05);
    assert!((0.0..=1.0).contains(&r.p_value));
}

#[test]
fn all_tied_samples_give_p_one() {
    let r = wilcoxon_rank_sum("a", &[0.5; 10], "b", &[0.5; 12]).unwrap();
    assert_eq!(r.p_value, 1.0);
}

#[test]
fn undersized_samples_are_rejected() {
    assert_eq!(
        wilcoxon_rank_sum("a", &[1.0; 7], "b", &[2.0; 20]),
        Err(MetricsError::UndersizedSample { a: 7, b: 20 })
    );
}
