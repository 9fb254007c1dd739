//! Small numerical helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal};

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<CompensatedSum>().value()
}

pub fn mean(values: &[f64]) -> f64 {
    sum(values) / values.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`). Returns NaN for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    let ss: CompensatedSum = values.iter().map(|v| (v - m) * (v - m)).collect();
    ss.value() / (n - 1) as f64
}

/// Moment skewness `m3 / m2^1.5`. `None` for fewer than three values or zero spread.
pub fn skewness(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 3 {
        return None;
    }
    let m = mean(values);
    let m2: CompensatedSum = values.iter().map(|v| (v - m).powi(2)).collect();
    let m3: CompensatedSum = values.iter().map(|v| (v - m).powi(3)).collect();
    let m2 = m2.value() / n as f64;
    let m3 = m3.value() / n as f64;
    if m2 <= 0.0 {
        return None;
    }
    Some(m3 / m2.powf(1.5))
}

/// Linear-interpolation quantile (Hyndman & Fan type 7) of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty slice");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn standard_normal() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Upper tail `1 - Phi(x)`, accurate in the far tail.
pub fn normal_sf(x: f64) -> f64 {
    standard_normal().sf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1e16, 1.0, -1e16];
        values.extend(std::iter::repeat_n(1e-3, 1000));
        assert_relative_eq!(sum(&values), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn variance_and_skewness() {
        assert_eq!(sample_variance(&[1.0, -1.0]), 2.0);
        assert!(sample_variance(&[3.0]).is_nan());
        assert_eq!(skewness(&[1.0, 1.0, 1.0]), None);
        assert!(skewness(&[0.0, 0.0, 0.0, 10.0]).unwrap() > 0.0);
        assert_relative_eq!(skewness(&[-1.0, 0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn type7_quantile() {
        let draws: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_relative_eq!(quantile_sorted(&draws, 0.95), 95.05, epsilon = 1e-12);
        assert_eq!(quantile_sorted(&draws, 0.0), 1.0);
        assert_eq!(quantile_sorted(&draws, 1.0), 100.0);
        assert_eq!(quantile_sorted(&[4.0], 0.3), 4.0);
    }

    #[test]
    fn normal_helpers() {
        assert_relative_eq!(normal_quantile(0.95), 1.6448536269514722, epsilon = 1e-9);
        assert_relative_eq!(normal_cdf(0.0), 0.5);
        assert_relative_eq!(normal_sf(0.0), 0.5);
    }
}
