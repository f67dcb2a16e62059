/// Inverse empirical CDF: the `ceil(n p)`-th order statistic.
pub fn quantile_type1(sorted: &[f64], prob: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    let idx = ((n as f64 * prob).ceil() as usize).clamp(1, n);
    sorted[idx - 1]
}

/// Amplitude of a leverage path: the 5%-95% inter-quantile range and the
/// coefficient of variation (population standard deviation over mean).
pub fn amplitude_stats(path: &[f64]) -> (f64, f64) {
    if path.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut sorted = path.to_vec();
    sorted.sort_by(f64::total_cmp);
    let delta = quantile_type1(&sorted, 0.95) - quantile_type1(&sorted, 0.05);
    let n = path.len() as f64;
    let mean = path.iter().sum::<f64>() / n;
    let var = path.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let cv = if mean == 0.0 { f64::NAN } else { var.sqrt() / mean };
    (delta, cv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fast::{std_normal, NoiseSource};

    #[test]
    fn constant_path() {
        assert_eq!(amplitude_stats(&[3.0; 200]), (0.0, 0.0));
    }

    #[test]
    fn two_cycle() {
        let path: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 2.0 } else { 5.5 }).collect();
        let (d, cv) = amplitude_stats(&path);
        assert_eq!(d, 3.5);
        assert!((cv - 1.75 / 3.75).abs() < 1e-12);
    }

    #[test]
    fn normal_sample_range() {
        let mut rng = NoiseSource::new(1).period(0);
        let path: Vec<f64> = (0..200_000).map(|_| 10.0 + std_normal(&mut rng)).collect();
        let (d, _) = amplitude_stats(&path);
        assert!((d - 2.0 * 1.6448536269514722).abs() < 0.03);
    }
}
