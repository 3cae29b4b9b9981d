//! Order-statistic helpers shared by the metric and statistics layers.

/// Linear interpolation between closest order statistics at position
/// `(n - 1)·q` of an ascending slice. Panics on an empty slice.
pub fn linear_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let pos = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Sorts a copy and returns the linear-interpolation quantile.
pub fn linear(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    linear_sorted(&v, q)
}

/// Smallest value with at least `percent`% of the sample at or below it.
/// Always returns an element of `values`. Reorders `values`.
pub fn nearest_rank(values: &mut [f64], percent: u32) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    let n = values.len();
    let rank = (percent as usize * n).div_ceil(100).max(1);
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *v
}

/// Linear-interpolation percentile without a full sort. Reorders `values`.
pub fn linear_select(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    let n = values.len();
    let pos = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, lo_v, rest) = values.select_nth_unstable_by(lo, f64::total_cmp);
    let lo_v = *lo_v;
    if frac == 0.0 || rest.is_empty() {
        return lo_v;
    }
    let hi_v = rest.iter().copied().min_by(f64::total_cmp).unwrap();
    if hi_v == lo_v {
        lo_v
    } else {
        lo_v + frac * (hi_v - lo_v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_positions() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(linear_sorted(&v, 0.5), 3.0);
        assert_eq!(linear_sorted(&v, 0.25), 2.0);
        assert_eq!(linear_sorted(&v, 0.75), 4.0);
        assert_eq!(linear(&[4.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(linear(&[1.0, 2.0], 0.25), 1.25);
        assert_eq!(linear(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn nearest_rank_picks_member() {
        let mut v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank(&mut v, 95), 19.0);
        let mut v: Vec<f64> = (1..=21).map(f64::from).collect();
        assert_eq!(nearest_rank(&mut v, 95), 20.0);
        assert_eq!(nearest_rank(&mut [3.0], 95), 3.0);
        assert_eq!(nearest_rank(&mut [2.0, 1.0], 50), 1.0);
    }

    #[test]
    fn select_matches_sort() {
        let base = [5.0, 1.0, 9.0, 3.3, 3.3, 7.0, 0.5];
        for q in [0.0, 0.1, 0.5, 0.95, 1.0] {
            let mut v = base.to_vec();
            assert_eq!(linear_select(&mut v, q), linear(&base, q), "q={q}");
        }
    }
}
