//! Block-averaged MMD two-sample tests (B-tests).
//!
//! The crate is organised bottom-up:
//!
//! * [`data`]: sample containers, CSV ingestion, pairing and splitting.
//! * [`kernels`]: Gaussian RBF kernels, Gram matrices, the median heuristic.
//! * [`estimators`]: the h-statistic, per-block U-statistics and the B-test average.
//! * [`nulls`]: null-distribution models (Gaussian CLT, permutation, Gram spectrum, gamma)
//!   and the end-to-end [`nulls::run_test`].
//! * [`selection`]: kernel choice strategies.
//! * [`bench`]: the synthetic blob benchmark and the error-rate / sample-complexity / timing
//!   harnesses.

pub mod bench;
pub mod data;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod numeric;
pub mod nulls;
pub mod rng;
pub mod selection;

pub use data::{PairedSample, SampleSet};
pub use error::{Error, Result};
pub use estimators::{BlockLayout, BlockPolicy, BlockStats};
pub use kernels::{GramMatrix, Kernel, KernelSpec};
pub use nulls::{BTestConfig, NullKind, NullModel, TestResult};
pub use rng::RngSeed;
pub use selection::SelectionStrategy;
