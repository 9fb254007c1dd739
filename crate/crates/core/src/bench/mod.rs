//! Synthetic blob benchmark and the experiment harnesses built on it.

mod blobs;
mod harness;
mod ks;
mod timing;

pub use blobs::{sample_blobs, sample_blobs_with, BlobConfig, Population, CALIBRATED_STRETCH};
pub use harness::{
    collect_results, estimate_error_rates, estimate_rejection_rate, sample_complexity, search_sample_complexity,
    ComplexityProbe, ComplexityReport, ComplexitySearch, ErrorRates, Hypothesis, RateEstimate, TestConfig,
    TwoSampleTest, DEFAULT_BENCH_MEDIAN_PAIRS,
};
pub use ks::{ks_normality, KsOutcome};
pub use timing::{loglog_slope, timing_profile, TimingPoint};
