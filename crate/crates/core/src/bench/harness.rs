use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::blobs::{sample_blobs_with, BlobConfig, Population};
use crate::data::{split_half, PairedSample};
use crate::error::{Error, Result};
use crate::estimators::BlockPolicy;
use crate::nulls::{run_test, BTestConfig, NullKind, TestResult, DEFAULT_MAX_POOLED};
use crate::rng::RngSeed;
use crate::selection::{select_kernel_with_pairs, SelectionStrategy};

/// Median-heuristic pair budget used by the harnesses; the median of a few tens of thousands
/// of distances is already stable to well under a percent.
pub const DEFAULT_BENCH_MEDIAN_PAIRS: usize = 50_000;

/// A complete two-sample test procedure, as exercised by the harnesses.
pub trait TwoSampleTest: Sync {
    fn run(&self, s: &PairedSample, seed: RngSeed) -> Result<TestResult>;
}

/// Kernel strategy plus B-test configuration.
///
/// Data-driven strategies (median, max-ratio) split the pairs in half: the kernel is chosen on
/// the first half and the test runs on the second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub kernel: SelectionStrategy,
    pub block: BlockPolicy,
    pub alpha: f64,
    pub null: NullKind,
    pub median_pairs: usize,
    pub max_pooled: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            kernel: SelectionStrategy::Fixed(1.0),
            block: BlockPolicy::default(),
            alpha: 0.05,
            null: NullKind::GaussianClt,
            median_pairs: DEFAULT_BENCH_MEDIAN_PAIRS,
            max_pooled: DEFAULT_MAX_POOLED,
        }
    }
}

impl TestConfig {
    pub fn new(kernel: SelectionStrategy, block: BlockPolicy) -> Self {
        Self {
            kernel,
            block,
            ..Self::default()
        }
    }

    pub fn describe(&self) -> String {
        format!("{} {} {}", self.kernel.describe(), self.block.describe(), self.null.describe())
    }
}

impl TwoSampleTest for TestConfig {
    fn run(&self, s: &PairedSample, seed: RngSeed) -> Result<TestResult> {
        let split;
        let (train, test) = if self.kernel.needs_training() {
            split = split_half(s, seed.derive(0))?;
            (&split.0, &split.1)
        } else {
            (s, s)
        };
        let block_size = self.block.resolve(test.n())?;
        let kernel = select_kernel_with_pairs(
            &self.kernel,
            train,
            block_size.min(train.n()),
            seed.derive(1),
            self.median_pairs,
        )?;
        let config = BTestConfig {
            block: self.block,
            alpha: self.alpha,
            null: self.null,
            seed: seed.derive(2),
            max_pooled: self.max_pooled,
        };
        let mut result = run_test(&config, test, &kernel)?;
        if let Some(sigma) = kernel.sigma() {
            result.diagnostics.insert("sigma".into(), json!(sigma));
        }
        Ok(result)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Both samples from P.
    Null,
    /// x from P, y from Q.
    Alternative,
}

fn draw_pair(cfg: &BlobConfig, n: usize, hypothesis: Hypothesis, seed: RngSeed) -> PairedSample {
    let x = sample_blobs_with(cfg, n, Population::P, &mut seed.derive(0).rng());
    let which = match hypothesis {
        Hypothesis::Null => Population::P,
        Hypothesis::Alternative => Population::Q,
    };
    let y = sample_blobs_with(cfg, n, which, &mut seed.derive(1).rng());
    PairedSample::new(x, y).expect("blob samples share size and dimension")
}

/// Runs `test` on `replications` fresh blob draws of `n` pairs each.
///
/// Replication `r` is driven by `cfg.seed.derive(r)` whatever `n` is, so runs at different
/// sample sizes share their random streams. Results come back in replication order.
pub fn collect_results<T: TwoSampleTest>(
    cfg: &BlobConfig,
    test: &T,
    n: usize,
    hypothesis: Hypothesis,
    replications: usize,
) -> Result<Vec<TestResult>> {
    cfg.validate()?;
    (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.derive(r);
            let s = draw_pair(cfg, n, hypothesis, seed);
            test.run(&s, seed.derive(2))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub stderr: f64,
    pub replications: usize,
    /// Mean of the per-run block-value skewness, over runs where it is defined.
    pub mean_block_skewness: Option<f64>,
}

impl RateEstimate {
    fn from_results(results: &[TestResult]) -> Self {
        let reps = results.len();
        let rejections = results.iter().filter(|r| r.reject).count();
        let rate = rejections as f64 / reps as f64;
        let skews: Vec<f64> = results.iter().filter_map(|r| r.diagnostic_f64("block_skewness")).collect();
        RateEstimate {
            rate,
            stderr: mc_stderr(rate, reps),
            replications: reps,
            mean_block_skewness: (!skews.is_empty()).then(|| skews.iter().sum::<f64>() / skews.len() as f64),
        }
    }
}

fn mc_stderr(rate: f64, reps: usize) -> f64 {
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

fn check_replications(replications: usize) -> Result<()> {
    if replications < 100 {
        return Err(Error::Config(format!("need at least 100 replications, got {replications}")));
    }
    Ok(())
}

/// Fraction of replications in which `test` rejects.
pub fn estimate_rejection_rate<T: TwoSampleTest>(
    cfg: &BlobConfig,
    test: &T,
    n: usize,
    hypothesis: Hypothesis,
    replications: usize,
) -> Result<RateEstimate> {
    check_replications(replications)?;
    let results = collect_results(cfg, test, n, hypothesis, replications)?;
    Ok(RateEstimate::from_results(&results))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub type1: f64,
    pub type2: f64,
    pub replications: usize,
    pub type1_stderr: f64,
    pub type2_stderr: f64,
    pub null_block_skewness: Option<f64>,
}

/// Type I error on (P, P) draws and Type II error on (P, Q) draws.
pub fn estimate_error_rates<T: TwoSampleTest>(
    cfg: &BlobConfig,
    test: &T,
    n: usize,
    replications: usize,
) -> Result<ErrorRates> {
    let null = estimate_rejection_rate(cfg, test, n, Hypothesis::Null, replications)?;
    let alt = estimate_rejection_rate(cfg, test, n, Hypothesis::Alternative, replications)?;
    Ok(ErrorRates {
        type1: null.rate,
        type1_stderr: null.stderr,
        type2: 1.0 - alt.rate,
        type2_stderr: alt.stderr,
        replications,
        null_block_skewness: null.mean_block_skewness,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexitySearch {
    /// Test level used for every probe.
    pub target_type1: f64,
    pub target_type2: f64,
    pub replications: usize,
    pub n_min: usize,
    pub n_cap: usize,
    /// Bisection stops once the bracket is narrower than this fraction of its lower end.
    pub relative_resolution: f64,
}

impl Default for ComplexitySearch {
    fn default() -> Self {
        Self {
            target_type1: 0.05,
            target_type2: 0.05,
            replications: 500,
            n_min: 32,
            n_cap: 60_000,
            relative_resolution: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityProbe {
    pub n: usize,
    pub type2: f64,
    pub stderr: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    /// Smallest probed `n` meeting the Type II target, if any did before the cap.
    pub n_required: Option<usize>,
    pub largest_n: usize,
    pub probes: Vec<ComplexityProbe>,
}

/// Doubling search from `n_min`, then bisection, for the smallest `n` whose estimated Type II
/// error at level `target_type1` is at most `target_type2`.
pub fn search_sample_complexity(
    cfg: &BlobConfig,
    test: &TestConfig,
    search: &ComplexitySearch,
) -> Result<ComplexityReport> {
    for (name, v) in [("target_type1", search.target_type1), ("target_type2", search.target_type2)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    check_replications(search.replications)?;
    if search.n_min < 4 || search.n_cap < search.n_min {
        return Err(Error::Config(format!(
            "need 4 <= n_min <= n_cap, got n_min {} and n_cap {}",
            search.n_min, search.n_cap
        )));
    }
    let test = TestConfig {
        alpha: search.target_type1,
        ..test.clone()
    };
    let mut probes = Vec::new();
    let mut probe = |n: usize| -> Result<bool> {
        let alt = estimate_rejection_rate(cfg, &test, n, Hypothesis::Alternative, search.replications)?;
        let type2 = 1.0 - alt.rate;
        let passed = type2 <= search.target_type2;
        probes.push(ComplexityProbe {
            n,
            type2,
            stderr: alt.stderr,
            passed,
        });
        Ok(passed)
    };

    let mut n = search.n_min;
    let mut lo = None;
    let hi = loop {
        if probe(n)? {
            break n;
        }
        lo = Some(n);
        if n >= search.n_cap {
            return Ok(ComplexityReport {
                n_required: None,
                largest_n: n,
                probes,
            });
        }
        n = (2 * n).min(search.n_cap);
    };
    let mut hi = hi;
    if let Some(mut lo) = lo {
        while hi - lo > 1 && (hi - lo) as f64 > search.relative_resolution * lo as f64 {
            let mid = lo + (hi - lo) / 2;
            if probe(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let largest_n = probes.iter().map(|p| p.n).max().unwrap_or(hi);
    Ok(ComplexityReport {
        n_required: Some(hi),
        largest_n,
        probes,
    })
}

/// [`search_sample_complexity`] reduced to the required `n`, or `BudgetExceeded`.
pub fn sample_complexity(cfg: &BlobConfig, test: &TestConfig, search: &ComplexitySearch) -> Result<usize> {
    let report = search_sample_complexity(cfg, test, search)?;
    report.n_required.ok_or(Error::BudgetExceeded {
        largest_n: report.largest_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    struct AlwaysReject;

    impl TwoSampleTest for AlwaysReject {
        fn run(&self, s: &PairedSample, _seed: RngSeed) -> Result<TestResult> {
            Ok(TestResult {
                statistic: s.n() as f64,
                threshold: 0.0,
                p_value: 0.0,
                reject: true,
                alpha: 0.05,
                elapsed_s: 0.0,
                diagnostics: BTreeMap::new(),
            })
        }
    }

    #[test]
    fn always_reject_stub() {
        let rates = estimate_error_rates(&BlobConfig::default(), &AlwaysReject, 10, 100).unwrap();
        assert_eq!(rates.type1, 1.0);
        assert_eq!(rates.type2, 0.0);
        assert_eq!(rates.type1_stderr, 0.0);
        assert_eq!(rates.replications, 100);
    }

    #[test]
    fn replication_floor() {
        assert!(matches!(
            estimate_error_rates(&BlobConfig::default(), &AlwaysReject, 10, 99),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn trivially_separated_returns_floor() {
        let cfg = BlobConfig {
            grid_size: 1,
            q_shift: 100.0,
            ..BlobConfig::default()
        };
        let search = ComplexitySearch {
            replications: 100,
            ..ComplexitySearch::default()
        };
        let n = sample_complexity(&cfg, &TestConfig::default(), &search).unwrap();
        assert_eq!(n, search.n_min);
    }

    #[test]
    fn cap_reached_is_budget_exceeded() {
        // P == Q: the Type II target is never met
        let cfg = BlobConfig {
            q_stretch: 1.0,
            ..BlobConfig::default()
        };
        let search = ComplexitySearch {
            replications: 100,
            n_min: 32,
            n_cap: 100,
            ..ComplexitySearch::default()
        };
        let report = search_sample_complexity(&cfg, &TestConfig::default(), &search).unwrap();
        assert_eq!(report.n_required, None);
        assert_eq!(report.probes.iter().map(|p| p.n).collect::<Vec<_>>(), vec![32, 64, 100]);
        assert!(matches!(
            sample_complexity(&cfg, &TestConfig::default(), &search),
            Err(Error::BudgetExceeded { largest_n: 100 })
        ));
    }

    #[test]
    fn results_are_seed_determined() {
        let cfg = BlobConfig::default();
        let test = TestConfig::default();
        let strip = |v: Vec<TestResult>| -> Vec<(f64, f64, bool)> {
            v.into_iter().map(|r| (r.statistic, r.p_value, r.reject)).collect()
        };
        let a = strip(collect_results(&cfg, &test, 64, Hypothesis::Alternative, 20).unwrap());
        let b = strip(collect_results(&cfg, &test, 64, Hypothesis::Alternative, 20).unwrap());
        assert_eq!(a, b);
    }
}
