use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;

use super::NullModel;
use crate::data::{pool, PairedSample};
use crate::error::{Error, Result};
use crate::estimators::BlockLayout;
use crate::kernels::{center_gram, gram, GramMatrix, KernelSpec};
use crate::numeric::CompensatedSum;
use crate::rng::RngSeed;

/// Default cap on the pooled sample size (`2n`) for nulls that materialise the pooled Gram matrix.
pub const DEFAULT_MAX_POOLED: usize = 4000;

/// Eigenvalues below this fraction of the largest are dropped.
const RELATIVE_EIGEN_FLOOR: f64 = 1e-12;

fn centered_pooled_gram(kernel: &KernelSpec, s: &PairedSample, max_pooled: usize) -> Result<GramMatrix> {
    let pooled = 2 * s.n();
    if pooled > max_pooled {
        return Err(Error::ResourceLimit {
            what: "pooled sample size",
            got: pooled,
            limit: max_pooled,
        });
    }
    Ok(center_gram(&gram(kernel, &pool(s))))
}

/// Estimated operator eigenvalues: eigenvalues of the centred pooled Gram matrix divided by
/// the pooled size, negatives clipped and negligible ones dropped. Sorted descending.
pub fn spectrum_eigenvalues(kernel: &KernelSpec, s: &PairedSample, max_pooled: usize) -> Result<Vec<f64>> {
    let centered = centered_pooled_gram(kernel, s, max_pooled)?;
    let size = centered.size() as f64;
    let raw = centered.to_nalgebra().symmetric_eigenvalues();
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigensolver returned non-finite values".into()));
    }
    let mut eigs: Vec<f64> = raw.iter().map(|v| (v / size).max(0.0)).collect();
    eigs.sort_by(|a, b| b.total_cmp(a));
    let floor = eigs.first().copied().unwrap_or(0.0) * RELATIVE_EIGEN_FLOOR;
    eigs.retain(|&v| v > floor);
    Ok(eigs)
}

/// Null from the weighted chi-square limit of a block statistic.
///
/// A single block of size `B` behaves like `sum_l lambda_l (z_l^2 - 2) / B` with
/// `z_l ~ Normal(0, 2)`. The average of `m` independent blocks collapses to
/// `sum_l lambda_l (2 X_l - 2m) / (m B)` with `X_l ~ ChiSquared(m)`, which is what is sampled.
pub fn spectrum_null(
    kernel: &KernelSpec,
    s: &PairedSample,
    layout: BlockLayout,
    num_draws: usize,
    seed: RngSeed,
    max_pooled: usize,
) -> Result<NullModel> {
    if num_draws == 0 {
        return Err(Error::Config("need at least one spectrum draw".into()));
    }
    let eigenvalues = spectrum_eigenvalues(kernel, s, max_pooled)?;
    let m = layout.num_blocks as f64;
    let scale = 1.0 / (m * layout.block_size as f64);
    let chi = ChiSquared::new(m).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut draws: Vec<f64> = (0..num_draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.derive(i).rng();
            let mut acc = CompensatedSum::new();
            for &lambda in &eigenvalues {
                acc.add(lambda * (2.0 * chi.sample(&mut rng) - 2.0 * m));
            }
            acc.value() * scale
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    Ok(NullModel::Spectrum { eigenvalues, draws })
}

/// `(2 sum lambda^2, 8 sum lambda^3)`: the variance constant of a block statistic's null and the
/// third-moment constant that drives its positive skew.
pub fn spectral_constants(eigs: &[f64]) -> (f64, f64) {
    let sq: CompensatedSum = eigs.iter().map(|l| l * l).collect();
    let cube: CompensatedSum = eigs.iter().map(|l| l * l * l).collect();
    (2.0 * sq.value(), 8.0 * cube.value())
}

/// Two-moment gamma fit to the null of the biased (V-statistic) form of a block statistic.
///
/// Per block, `B * stat + mu` is modelled as `Gamma(mu^2 / v, v / mu)` where
/// `mu = 2 sum lambda` and `v = 8 sum lambda^2`. Both sums come from traces of the centred pooled
/// Gram matrix, so no eigendecomposition is needed. The average of `m` blocks adds shapes.
pub fn gamma_null(kernel: &KernelSpec, s: &PairedSample, layout: BlockLayout, max_pooled: usize) -> Result<NullModel> {
    if s.n() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: s.n() });
    }
    let centered = centered_pooled_gram(kernel, s, max_pooled)?;
    let size = centered.size() as f64;
    let trace: CompensatedSum = (0..centered.size()).map(|i| centered.get(i, i)).collect();
    let frob: CompensatedSum = centered.values().iter().map(|v| v * v).collect();
    let sum_lambda = trace.value() / size;
    let sum_lambda_sq = frob.value() / (size * size);
    let mean = 2.0 * sum_lambda;
    let variance = 8.0 * sum_lambda_sq;
    if !(mean > 0.0 && variance > 0.0) || !mean.is_finite() || !variance.is_finite() {
        return Err(Error::Fit(format!(
            "null moments must be positive, got mean {mean} and variance {variance}"
        )));
    }
    let m = layout.num_blocks as f64;
    Ok(NullModel::Gamma {
        shape: m * mean * mean / variance,
        scale: variance / mean,
        factor: m * layout.block_size as f64,
        shift: m * mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SampleSet;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_pairs(n: usize, seed: u64) -> PairedSample {
        let mut rng = RngSeed(seed).rng();
        let x: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>() * 2.0).collect();
        let y: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>() * 2.0).collect();
        PairedSample::new(SampleSet::new(x, 2, "x").unwrap(), SampleSet::new(y, 2, "y").unwrap()).unwrap()
    }

    fn constant_pairs(n: usize) -> PairedSample {
        let x = SampleSet::new(vec![1.5; 2 * n], 2, "x").unwrap();
        PairedSample::new(x.clone(), x).unwrap()
    }

    #[test]
    fn constants_examples() {
        assert_eq!(spectral_constants(&[1.0]), (2.0, 8.0));
        assert_eq!(spectral_constants(&[]), (0.0, 0.0));
        assert_eq!(spectral_constants(&[0.5, 0.5]), (1.0, 2.0));
    }

    #[test]
    fn identical_points_give_zero_null() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let s = constant_pairs(8);
        let layout = BlockLayout::new(8, 8).unwrap();
        let model = spectrum_null(&k, &s, layout, 50, RngSeed(1), 100).unwrap();
        let NullModel::Spectrum { eigenvalues, draws } = model else { unreachable!() };
        assert!(eigenvalues.is_empty());
        assert!(draws.iter().all(|&d| d == 0.0));
        assert!(matches!(gamma_null(&k, &s, layout, 100), Err(Error::Fit(_))));
    }

    #[test]
    fn eigenvalues_are_nonnegative_and_sum_to_trace() {
        let k = KernelSpec::gaussian(0.7).unwrap();
        let s = random_pairs(20, 3);
        let eigs = spectrum_eigenvalues(&k, &s, 100).unwrap();
        assert!(eigs.iter().all(|&l| l > 0.0));
        assert!(eigs.windows(2).all(|w| w[0] >= w[1]));
        let c = center_gram(&gram(&k, &pool(&s)));
        let trace: f64 = (0..c.size()).map(|i| c.get(i, i)).sum::<f64>() / c.size() as f64;
        assert_relative_eq!(eigs.iter().sum::<f64>(), trace, max_relative = 1e-9);
    }

    #[test]
    fn resource_cap() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let s = random_pairs(20, 3);
        let layout = BlockLayout::new(20, 20).unwrap();
        assert!(matches!(
            spectrum_null(&k, &s, layout, 10, RngSeed(0), 39),
            Err(Error::ResourceLimit { got: 40, .. })
        ));
        assert!(matches!(gamma_null(&k, &s, layout, 39), Err(Error::ResourceLimit { .. })));
    }

    #[test]
    fn gamma_moment_identities() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let s = random_pairs(30, 5);
        let layout = BlockLayout::new(30, 30).unwrap();
        let NullModel::Gamma { shape, scale, factor, shift } = gamma_null(&k, &s, layout, 1000).unwrap() else {
            unreachable!()
        };
        let eigs = spectrum_eigenvalues(&k, &s, 1000).unwrap();
        let mean = 2.0 * eigs.iter().sum::<f64>();
        let variance = 4.0 * spectral_constants(&eigs).0;
        assert_relative_eq!(shape * scale, mean, max_relative = 1e-9);
        assert_relative_eq!(shape * scale * scale, variance, max_relative = 1e-9);
        assert_eq!(factor, 30.0);
        assert_relative_eq!(shift, mean, max_relative = 1e-9);
    }

    #[test]
    fn draws_are_seeded() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let s = random_pairs(16, 9);
        let layout = BlockLayout::new(16, 4).unwrap();
        let a = spectrum_null(&k, &s, layout, 64, RngSeed(2), 100).unwrap();
        assert_eq!(a, spectrum_null(&k, &s, layout, 64, RngSeed(2), 100).unwrap());
        assert_ne!(a, spectrum_null(&k, &s, layout, 64, RngSeed(3), 100).unwrap());
    }
}
