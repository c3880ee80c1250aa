use crate::MetricsError;

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch("auroc"));
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricsError::InvalidScore(bad));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass { n_pos, n_neg });
    }
    Ok((n_pos, n_neg))
}

/// Groups of tied scores in ascending order, as index ranges into `order`.
fn tie_groups(scores: &[f64], order: &[usize]) -> Vec<(usize, usize)> {
    let mut groups = Vec::new();
    let mut start = 0;
    for end in 1..=order.len() {
        if end == order.len() || scores[order[end]] != scores[order[start]] {
            groups.push((start, end));
            start = end;
        }
    }
    groups
}

fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// Mann-Whitney AUROC: wins plus half ties over all positive/negative pairs,
/// counted through average ranks in integer arithmetic.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    let order = ascending(scores);
    // twice the positive rank sum; a tie group [s, e) has average rank (s + 1 + e) / 2
    let mut twice_rank_sum: u128 = 0;
    for (s, e) in tie_groups(scores, &order) {
        let pos = order[s..e].iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum += pos * (s + 1 + e) as u128;
    }
    let np = n_pos as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    let twice_pairs = 2 * np * n_neg as u128;
    // evaluate whichever side of 1/2 we are on so that swapping labels gives
    // exactly the complement
    Ok(if 2 * twice_u <= twice_pairs {
        twice_u as f64 / twice_pairs as f64
    } else {
        1.0 - (twice_pairs - twice_u) as f64 / twice_pairs as f64
    })
}

/// ROC curve from (0, 0) with one point per distinct threshold, walking
/// thresholds from the highest score down; the last point is (1, 1).
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>, MetricsError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    let order = ascending(scores);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(s, e) in tie_groups(scores, &order).iter().rev() {
        let pos = order[s..e].iter().filter(|&&i| labels[i]).count();
        tp += pos;
        fp += e - s - pos;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(points)
}

pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}
