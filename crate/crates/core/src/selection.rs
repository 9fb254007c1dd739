//! Kernel choice: a fixed bandwidth, the median heuristic, or the candidate maximising the
//! ratio of the B-test statistic to its estimated standard deviation on a training split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{pool, PairedSample};
use crate::error::{Error, Result};
use crate::estimators::btest_statistic;
use crate::kernels::{median_bandwidth, KernelSpec};
use crate::nulls::{gaussian_null, NullModel};
use crate::rng::RngSeed;

/// Added to the standard deviation in the ratio criterion.
pub const RATIO_REGULARIZER: f64 = 1e-8;

/// Pair budget for the median heuristic's distance sample.
pub const DEFAULT_MEDIAN_PAIRS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "sigma", rename_all = "snake_case")]
pub enum SelectionStrategy {
    Fixed(f64),
    MedianHeuristic,
    MaxRatio(Vec<f64>),
}

impl SelectionStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            SelectionStrategy::Fixed(s) if !(*s > 0.0 && s.is_finite()) => {
                Err(Error::Config(format!("fixed bandwidth must be positive, got {s}")))
            }
            SelectionStrategy::MaxRatio(grid) if grid.is_empty() => Err(Error::Config("empty bandwidth grid".into())),
            SelectionStrategy::MaxRatio(grid) if grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) => {
                Err(Error::Config("bandwidth grid must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether the strategy looks at data, and so needs a training split held out from testing.
    pub fn needs_training(&self) -> bool {
        !matches!(self, SelectionStrategy::Fixed(_))
    }

    pub fn describe(&self) -> String {
        match self {
            SelectionStrategy::Fixed(s) => format!("fixed:{s}"),
            SelectionStrategy::MedianHeuristic => "median".into(),
            SelectionStrategy::MaxRatio(_) => "maxratio".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRatio {
    pub spec: KernelSpec,
    pub statistic: f64,
    pub std_dev: f64,
    pub ratio: f64,
    /// Block values had no usable variance; `ratio` is reported as 0.
    pub degenerate: bool,
}

/// Ratio criterion for each candidate kernel, in input order.
pub fn spec_ratios(specs: &[KernelSpec], train: &PairedSample, block_size: usize) -> Result<Vec<CandidateRatio>> {
    specs
        .par_iter()
        .map(|spec| {
            let blocks = btest_statistic(spec, train, block_size)?;
            let (std_dev, degenerate) = match gaussian_null(&blocks) {
                Ok(NullModel::GaussianClt { variance }) => (variance.sqrt(), false),
                Ok(_) => unreachable!("gaussian_null returns a Gaussian model"),
                Err(Error::DegenerateVariance) => (0.0, true),
                Err(e) => return Err(e),
            };
            let ratio = if degenerate {
                0.0
            } else {
                blocks.statistic / (std_dev + RATIO_REGULARIZER)
            };
            Ok(CandidateRatio {
                spec: spec.clone(),
                statistic: blocks.statistic,
                std_dev,
                ratio,
                degenerate,
            })
        })
        .collect()
}

/// [`spec_ratios`] over single Gaussian kernels with the given bandwidths.
pub fn candidate_ratios(grid: &[f64], train: &PairedSample, block_size: usize) -> Result<Vec<CandidateRatio>> {
    let specs = grid.iter().map(|&s| KernelSpec::gaussian(s)).collect::<Result<Vec<_>>>()?;
    spec_ratios(&specs, train, block_size)
}

/// Index of the best non-degenerate candidate; equal ratios go to the smaller bandwidth, then
/// to the earlier candidate.
pub fn best_candidate(candidates: &[CandidateRatio]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if c.degenerate {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(j) => {
                let b = &candidates[j];
                let better = c.ratio > b.ratio
                    || (c.ratio == b.ratio && c.spec.sigma().unwrap_or(f64::INFINITY) < b.spec.sigma().unwrap_or(f64::INFINITY));
                if better {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        };
    }
    best
}

/// Chooses a kernel using only `train`. `seed` drives the median heuristic's pair sample.
pub fn select_kernel(
    strategy: &SelectionStrategy,
    train: &PairedSample,
    block_size: usize,
    seed: RngSeed,
) -> Result<KernelSpec> {
    select_kernel_with_pairs(strategy, train, block_size, seed, DEFAULT_MEDIAN_PAIRS)
}

pub fn select_kernel_with_pairs(
    strategy: &SelectionStrategy,
    train: &PairedSample,
    block_size: usize,
    seed: RngSeed,
    median_pairs: usize,
) -> Result<KernelSpec> {
    strategy.validate()?;
    match strategy {
        SelectionStrategy::Fixed(sigma) => KernelSpec::gaussian(*sigma),
        SelectionStrategy::MedianHeuristic => KernelSpec::gaussian(median_bandwidth(&pool(train), median_pairs, seed)?),
        SelectionStrategy::MaxRatio(grid) => {
            let candidates = candidate_ratios(grid, train, block_size)?;
            let best = best_candidate(&candidates)
                .ok_or_else(|| Error::Selection("every candidate kernel has degenerate block variance".into()))?;
            Ok(candidates[best].spec.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SampleSet;

    fn pairs_1d(x: &[f64], y: &[f64]) -> PairedSample {
        PairedSample::new(SampleSet::new(x.to_vec(), 1, "x").unwrap(), SampleSet::new(y.to_vec(), 1, "y").unwrap())
            .unwrap()
    }

    #[test]
    fn fixed_ignores_data() {
        let s = pairs_1d(&[0.0, 1.0], &[5.0, 7.0]);
        let k = select_kernel(&SelectionStrategy::Fixed(1.0), &s, 2, RngSeed(0)).unwrap();
        assert_eq!(k, KernelSpec::gaussian(1.0).unwrap());
    }

    #[test]
    fn median_forwards_bandwidth() {
        let s = pairs_1d(&[0.0], &[2.0]);
        let k = select_kernel(&SelectionStrategy::MedianHeuristic, &s, 2, RngSeed(0)).unwrap();
        assert_eq!(k.sigma(), Some(2.0));
        let flat = pairs_1d(&[1.0, 1.0], &[1.0, 1.0]);
        assert!(matches!(
            select_kernel(&SelectionStrategy::MedianHeuristic, &flat, 2, RngSeed(0)),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn single_candidate_grid() {
        let s = pairs_1d(&[0.0, 0.3, 0.9, 1.4, 0.2, 0.8], &[2.0, 2.5, 1.1, 3.0, 2.2, 2.9]);
        let r = candidate_ratios(&[0.5], &s, 2).unwrap();
        assert_eq!(r.len(), 1);
        let k = select_kernel(&SelectionStrategy::MaxRatio(vec![0.5]), &s, 2, RngSeed(0)).unwrap();
        assert_eq!(k.sigma(), Some(0.5));
    }

    #[test]
    fn duplicated_bandwidths_tie() {
        let s = pairs_1d(&[0.0, 0.3, 0.9, 1.4, 0.2, 0.8], &[2.0, 2.5, 1.1, 3.0, 2.2, 2.9]);
        let r = candidate_ratios(&[0.5, 2.0, 0.5], &s, 2).unwrap();
        assert_eq!(r[0].ratio, r[2].ratio);
        assert_eq!(r[0].statistic, r[2].statistic);
    }

    #[test]
    fn degenerate_candidates() {
        // with a tiny bandwidth every kernel value between distinct points underflows to 0
        let s = pairs_1d(&[0.0, 10.0, 20.0, 30.0], &[5.0, 15.0, 25.0, 35.0]);
        let r = candidate_ratios(&[1e-4], &s, 2).unwrap();
        assert!(r[0].degenerate);
        assert_eq!(r[0].ratio, 0.0);
        assert!(matches!(
            select_kernel(&SelectionStrategy::MaxRatio(vec![1e-4]), &s, 2, RngSeed(0)),
            Err(Error::Selection(_))
        ));
    }

    #[test]
    fn ties_break_to_smaller_sigma() {
        let mk = |sigma: f64, ratio: f64| CandidateRatio {
            spec: KernelSpec::gaussian(sigma).unwrap(),
            statistic: 0.0,
            std_dev: 1.0,
            ratio,
            degenerate: false,
        };
        let c = vec![mk(4.0, 1.0), mk(2.0, 1.0), mk(8.0, 0.5)];
        assert_eq!(best_candidate(&c), Some(1));
        assert_eq!(best_candidate(&[]), None);
    }

    #[test]
    fn strategy_validation() {
        assert!(SelectionStrategy::Fixed(0.0).validate().is_err());
        assert!(SelectionStrategy::MaxRatio(vec![]).validate().is_err());
        assert!(SelectionStrategy::MaxRatio(vec![1.0, -1.0]).validate().is_err());
        assert!(SelectionStrategy::MedianHeuristic.validate().is_ok());
    }
}
