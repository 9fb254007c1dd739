use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, normal_cdf};

/// Asymptotic 5% critical value of the one-sample Kolmogorov-Smirnov statistic, times `sqrt(n)`.
const KS_CRITICAL_5PCT: f64 = 1.358;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsOutcome {
    /// Sup distance between the empirical CDF and the fitted normal CDF.
    pub statistic: f64,
    pub critical: f64,
    pub n: usize,
}

impl KsOutcome {
    pub fn rejects_normality(&self) -> bool {
        self.statistic > self.critical
    }
}

/// Kolmogorov-Smirnov distance of `values` from the normal with their own mean and standard
/// deviation, against the 5% asymptotic critical value.
///
/// Estimating the parameters makes the critical value conservative, so rejection is strong
/// evidence of non-normality.
pub fn ks_normality(values: &[f64]) -> Result<KsOutcome> {
    let n = values.len();
    if n < 20 {
        return Err(Error::TooFewSamples { needed: 20, got: n });
    }
    let mean = numeric::mean(values);
    let sd = numeric::sample_variance(values).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::DegenerateVariance);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal_cdf((v - mean) / sd);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    Ok(KsOutcome {
        statistic,
        critical: KS_CRITICAL_5PCT / nf.sqrt(),
        n,
    })
}
