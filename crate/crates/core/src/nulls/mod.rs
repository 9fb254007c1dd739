//! Null-distribution models, thresholds and p-values, and the end-to-end test runner.
//!
//! Every model yields a one-sided upper test. For the empirical models (permutation and
//! spectrum) the p-value uses the add-one rule `p = (1 + #{draws >= stat}) / (1 + #draws)`, and
//! the reported threshold is the order statistic at which that rule flips, so
//! `reject == (stat > threshold) == (p < alpha)` holds exactly. A statistic equal to the
//! threshold is not rejected. [`NullModel::quantile`] gives type-7 quantiles for diagnostics.

mod permutation;
mod spectrum;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Gamma};

pub use permutation::{permutation_null, permutation_null_with_observed, Estimator};
pub use spectrum::{gamma_null, spectral_constants, spectrum_eigenvalues, spectrum_null, DEFAULT_MAX_POOLED};

use crate::data::PairedSample;
use crate::error::{Error, Result};
use crate::estimators::{btest_statistic, BlockPolicy, BlockStats};
use crate::kernels::{Kernel, KernelSpec};
use crate::numeric;
use crate::rng::RngSeed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullModel {
    /// Normal with mean zero and the given variance of the block average.
    GaussianClt { variance: f64 },
    /// Sorted statistics recomputed on random re-partitions of the pooled sample.
    Permutation { draws: Vec<f64> },
    /// Estimated eigenvalues and sorted draws from the weighted chi-square limit.
    Spectrum { eigenvalues: Vec<f64>, draws: Vec<f64> },
    /// `factor * stat + shift ~ Gamma(shape, scale)`.
    Gamma {
        shape: f64,
        scale: f64,
        factor: f64,
        shift: f64,
    },
}

impl NullModel {
    pub fn kind(&self) -> &'static str {
        match self {
            NullModel::GaussianClt { .. } => "gaussian_clt",
            NullModel::Permutation { .. } => "permutation",
            NullModel::Spectrum { .. } => "spectrum",
            NullModel::Gamma { .. } => "gamma",
        }
    }

    fn draws(&self) -> Option<&[f64]> {
        match self {
            NullModel::Permutation { draws } | NullModel::Spectrum { draws, .. } => Some(draws),
            _ => None,
        }
    }

    fn gamma(&self) -> Option<(Gamma, f64, f64)> {
        match *self {
            NullModel::Gamma {
                shape,
                scale,
                factor,
                shift,
            } => Gamma::new(shape, 1.0 / scale).ok().map(|g| (g, factor, shift)),
            _ => None,
        }
    }

    /// Quantile of the modelled null on the statistic's scale (type 7 for empirical models).
    pub fn quantile(&self, q: f64) -> f64 {
        match self {
            NullModel::GaussianClt { variance } => numeric::normal_quantile(q) * variance.sqrt(),
            NullModel::Permutation { draws } | NullModel::Spectrum { draws, .. } => numeric::quantile_sorted(draws, q),
            NullModel::Gamma { .. } => {
                let (g, factor, shift) = self.gamma().expect("valid gamma parameters");
                (g.inverse_cdf(q) - shift) / factor
            }
        }
    }

    /// Rejection threshold at level `alpha`; statistics strictly above it are rejected.
    pub fn threshold(&self, alpha: f64) -> f64 {
        match self.draws() {
            Some(draws) => empirical_threshold(draws, alpha),
            None => self.quantile(1.0 - alpha),
        }
    }

    pub fn p_value(&self, stat: f64) -> f64 {
        match self {
            NullModel::GaussianClt { variance } => numeric::normal_sf(stat / variance.sqrt()),
            NullModel::Permutation { draws } | NullModel::Spectrum { draws, .. } => {
                // draws are sorted, so everything from the first draw >= stat onwards counts
                let below = draws.partition_point(|&d| d < stat);
                (1 + draws.len() - below) as f64 / (1 + draws.len()) as f64
            }
            NullModel::Gamma { .. } => {
                let (g, factor, shift) = self.gamma().expect("valid gamma parameters");
                g.sf(factor * stat + shift)
            }
        }
    }
}

/// Order statistic at which the add-one p-value drops below `alpha`.
fn empirical_threshold(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    // how many draws may sit at or above the statistic while still rejecting
    let allowed = (0..=n)
        .take_while(|&c| ((1 + c) as f64 / (1 + n) as f64) < alpha)
        .count();
    // (1 + n) / (1 + n) is never below alpha, so allowed <= n
    match allowed {
        0 => f64::INFINITY,
        a => sorted[n - a],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub elapsed_s: f64,
    pub diagnostics: BTreeMap<String, Value>,
}

impl TestResult {
    pub fn diagnostic_f64(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).and_then(Value::as_f64)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Threshold, p-value and decision for `stat` under `model` at level `alpha`.
pub fn threshold_and_pvalue(model: &NullModel, stat: f64, alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    let threshold = model.threshold(alpha);
    let reject = stat > threshold;
    let mut p_value = model.p_value(stat).clamp(0.0, 1.0);
    // analytic models: keep the p-value on the same side of alpha as the threshold decision
    if reject && p_value >= alpha {
        p_value = alpha.next_down();
    } else if !reject && p_value < alpha {
        p_value = alpha;
    }
    Ok(TestResult {
        statistic: stat,
        threshold,
        p_value,
        reject,
        alpha,
        elapsed_s: 0.0,
        diagnostics: BTreeMap::new(),
    })
}

/// Normal null for the block average, with the variance of the mean estimated from the
/// observed block values.
pub fn gaussian_null(blocks: &BlockStats) -> Result<NullModel> {
    let m = blocks.values.len();
    if m < 2 {
        return Err(Error::TooFewBlocks(m));
    }
    let variance = numeric::sample_variance(&blocks.values) / m as f64;
    if !(variance > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    Ok(NullModel::GaussianClt { variance })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullKind {
    GaussianClt,
    Permutation { shuffles: usize },
    Spectrum { draws: usize },
    Gamma,
}

impl NullKind {
    pub fn describe(&self) -> String {
        match self {
            NullKind::GaussianClt => "clt".into(),
            NullKind::Permutation { shuffles } => format!("permutation:{shuffles}"),
            NullKind::Spectrum { draws } => format!("spectrum:{draws}"),
            NullKind::Gamma => "gamma".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BTestConfig {
    pub block: BlockPolicy,
    pub alpha: f64,
    pub null: NullKind,
    pub seed: RngSeed,
    /// Largest pooled sample the spectrum and gamma nulls will materialise.
    pub max_pooled: usize,
}

impl Default for BTestConfig {
    fn default() -> Self {
        Self {
            block: BlockPolicy::default(),
            alpha: 0.05,
            null: NullKind::GaussianClt,
            seed: RngSeed(0),
            max_pooled: DEFAULT_MAX_POOLED,
        }
    }
}

impl BTestConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        match self.block {
            BlockPolicy::Fixed(b) if b < 2 => return Err(Error::BlockTooSmall(b)),
            BlockPolicy::Exponent(g) if !(g > 0.0 && g < 1.0) => {
                return Err(Error::Config(format!("gamma must lie in (0, 1), got {g}")))
            }
            _ => {}
        }
        match self.null {
            NullKind::Permutation { shuffles } if shuffles < 100 => {
                Err(Error::Config(format!("need at least 100 shuffles, got {shuffles}")))
            }
            NullKind::Spectrum { draws: 0 } => Err(Error::Config("need at least one spectrum draw".into())),
            _ => Ok(()),
        }
    }
}

/// Runs one B-test: statistic, null model, decision, timing and diagnostics.
pub fn run_test(config: &BTestConfig, s: &PairedSample, kernel: &KernelSpec) -> Result<TestResult> {
    config.validate()?;
    let start = Instant::now();
    let block_size = config.block.resolve(s.n())?;
    let blocks = btest_statistic(kernel, s, block_size)?;
    let layout = blocks.layout;
    let mut statistic = blocks.statistic;

    let mut diagnostics = BTreeMap::new();
    let model = match config.null {
        NullKind::GaussianClt => gaussian_null(&blocks)?,
        NullKind::Permutation { shuffles } => {
            diagnostics.insert("num_shuffles".into(), json!(shuffles));
            let estimator = if block_size == s.n() {
                Estimator::Full
            } else {
                Estimator::Block(block_size)
            };
            let (model, observed) = permutation_null_with_observed(kernel, s, estimator, shuffles, config.seed)?;
            // compared against draws computed the same way; equal to the direct statistic up to rounding
            statistic = observed;
            model
        }
        NullKind::Spectrum { draws } => {
            let model = spectrum_null(kernel, s, layout, draws, config.seed, config.max_pooled)?;
            if let NullModel::Spectrum { eigenvalues, .. } = &model {
                let (var_c, skew_c) = spectral_constants(eigenvalues);
                diagnostics.insert("num_eigenvalues".into(), json!(eigenvalues.len()));
                diagnostics.insert("variance_constant".into(), json!(var_c));
                diagnostics.insert("skewness_constant".into(), json!(skew_c));
            }
            model
        }
        NullKind::Gamma => {
            let model = gamma_null(kernel, s, layout, config.max_pooled)?;
            if let NullModel::Gamma { shape, scale, .. } = model {
                diagnostics.insert("gamma_shape".into(), json!(shape));
                diagnostics.insert("gamma_scale".into(), json!(scale));
            }
            model
        }
    };

    let mut result = threshold_and_pvalue(&model, statistic, config.alpha)?;
    diagnostics.insert("n".into(), json!(s.n()));
    diagnostics.insert("block_size".into(), json!(layout.block_size));
    diagnostics.insert("num_blocks".into(), json!(layout.num_blocks));
    diagnostics.insert("dropped".into(), json!(layout.dropped));
    diagnostics.insert("kernel".into(), json!(kernel.describe()));
    diagnostics.insert("null".into(), json!(config.null.describe()));
    diagnostics.insert("block_skewness".into(), json!(numeric::skewness(&blocks.values)));
    if layout.num_blocks >= 2 {
        diagnostics.insert("block_variance".into(), json!(numeric::sample_variance(&blocks.values)));
    }
    result.diagnostics = diagnostics;
    result.elapsed_s = start.elapsed().as_secs_f64();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::BlockLayout;
    use approx::assert_relative_eq;

    fn blocks(values: Vec<f64>) -> BlockStats {
        let m = values.len();
        BlockStats {
            statistic: numeric::mean(&values),
            values,
            layout: BlockLayout {
                block_size: 2,
                num_blocks: m,
                dropped: 0,
            },
            kernel: "test".into(),
        }
    }

    #[test]
    fn gaussian_null_examples() {
        assert_eq!(gaussian_null(&blocks(vec![1.0, -1.0])).unwrap(), NullModel::GaussianClt { variance: 1.0 });
        assert!(matches!(gaussian_null(&blocks(vec![0.3; 5])), Err(Error::DegenerateVariance)));
        assert!(matches!(gaussian_null(&blocks(vec![0.3])), Err(Error::TooFewBlocks(1))));
    }

    #[test]
    fn gaussian_threshold_and_p() {
        let model = NullModel::GaussianClt { variance: 1.0 };
        let r = threshold_and_pvalue(&model, 0.0, 0.05).unwrap();
        assert_relative_eq!(r.threshold, 1.6449, epsilon = 1e-4);
        assert_eq!(r.p_value, 0.5);
        assert!(!r.reject);
        let r = threshold_and_pvalue(&model, 2.0, 0.05).unwrap();
        assert!(r.reject && r.p_value < 0.05);
        assert!(threshold_and_pvalue(&model, 0.0, 0.0).is_err());
        assert!(threshold_and_pvalue(&model, 0.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_decision_consistent_at_the_threshold() {
        let model = NullModel::GaussianClt { variance: 0.37 };
        let t = model.threshold(0.05);
        for stat in [t.next_down(), t, t.next_up()] {
            let r = threshold_and_pvalue(&model, stat, 0.05).unwrap();
            assert_eq!(r.reject, stat > r.threshold);
            assert_eq!(r.reject, r.p_value < 0.05);
        }
    }

    #[test]
    fn permutation_add_one_rule() {
        let draws: Vec<f64> = (1..=100).map(f64::from).collect();
        let model = NullModel::Permutation { draws };
        let r = threshold_and_pvalue(&model, 200.0, 0.05).unwrap();
        assert_eq!(r.p_value, 1.0 / 101.0);
        assert!(r.reject);
        // the add-one rule flips between 96 and anything above it
        assert_eq!(r.threshold, 96.0);
        assert_relative_eq!(model.quantile(0.95), 95.05, epsilon = 1e-12);
    }

    #[test]
    fn empirical_tie_point() {
        let draws: Vec<f64> = (1..=100).map(f64::from).collect();
        let model = NullModel::Permutation { draws };
        let at = threshold_and_pvalue(&model, 96.0, 0.05).unwrap();
        // tie: the threshold draw counts as ">= stat", so no rejection
        assert!(!at.reject);
        assert_eq!(at.p_value, 6.0 / 101.0);
        let above = threshold_and_pvalue(&model, 96.0f64.next_up(), 0.05).unwrap();
        assert!(above.reject);
        assert_eq!(above.p_value, 5.0 / 101.0);
        for stat in [0.0, 50.0, 95.5, 96.0, 96.5, 97.0, 100.0, 101.0] {
            let r = threshold_and_pvalue(&model, stat, 0.05).unwrap();
            assert_eq!(r.reject, stat > r.threshold, "stat {stat}");
            assert_eq!(r.reject, r.p_value < 0.05, "stat {stat}");
        }
    }

    #[test]
    fn empirical_threshold_extremes() {
        let draws = vec![1.0, 2.0, 3.0];
        // alpha below 1/(N+1): nothing can be rejected
        assert_eq!(empirical_threshold(&draws, 0.2), f64::INFINITY);
        // large alpha: only the smallest draw is kept
        assert_eq!(empirical_threshold(&draws, 0.99), 1.0);
    }

    #[test]
    fn gamma_model_threshold_and_p() {
        // factor * stat + shift ~ Gamma(0.5, scale 4) is 2 * chi2(1) shifted
        let model = NullModel::Gamma {
            shape: 0.5,
            scale: 4.0,
            factor: 1.0,
            shift: 2.0,
        };
        let t = model.threshold(0.05);
        assert_relative_eq!(t, 4.0 * 3.841458820694124 / 2.0 - 2.0, epsilon = 1e-6);
        let r = threshold_and_pvalue(&model, t + 0.01, 0.05).unwrap();
        assert!(r.reject && r.p_value < 0.05);
        let r = threshold_and_pvalue(&model, t - 0.01, 0.05).unwrap();
        assert!(!r.reject && r.p_value > 0.05);
    }

    #[test]
    fn config_validation() {
        let mut c = BTestConfig::default();
        assert!(c.validate().is_ok());
        c.alpha = 1.5;
        assert!(c.validate().is_err());
        let c = BTestConfig {
            null: NullKind::Permutation { shuffles: 10 },
            ..BTestConfig::default()
        };
        assert!(c.validate().is_err());
        let c = BTestConfig {
            block: BlockPolicy::Exponent(1.2),
            ..BTestConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn test_result_json_field_names() {
        let model = NullModel::GaussianClt { variance: 1.0 };
        let r = threshold_and_pvalue(&model, 0.1, 0.05).unwrap();
        let v: Value = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["statistic", "threshold", "p_value", "reject", "alpha", "elapsed_s", "diagnostics"] {
            assert!(keys.contains(&k), "missing {k}");
        }
    }
}
