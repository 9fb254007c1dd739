//! MMD estimators: the h-statistic, per-block U-statistics and the block average.
//!
//! With `n` pairs and block size `B`, the first `m = floor(n / B)` blocks of contiguous pairs
//! each yield an unbiased MMD estimate; the B-test statistic is their mean. `B = 2` is the
//! linear-time estimator and `B = n` the quadratic-time U-statistic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::PairedSample;
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelSpec};
use crate::numeric::{self, CompensatedSum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub block_size: usize,
    pub num_blocks: usize,
    /// Trailing pairs that do not fill a whole block.
    pub dropped: usize,
}

impl BlockLayout {
    pub fn new(n: usize, block_size: usize) -> Result<Self> {
        if block_size < 2 {
            return Err(Error::BlockTooSmall(block_size));
        }
        if n < block_size {
            return Err(Error::TooFewSamples {
                needed: block_size,
                got: n,
            });
        }
        let num_blocks = n / block_size;
        Ok(Self {
            block_size,
            num_blocks,
            dropped: n - num_blocks * block_size,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    /// One MMD estimate per block, in block order.
    pub values: Vec<f64>,
    pub layout: BlockLayout,
    pub kernel: String,
    /// Compensated mean of `values`.
    pub statistic: f64,
}

/// How the block size follows from the number of pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BlockPolicy {
    Fixed(usize),
    /// `B = round(n^gamma)`.
    Exponent(f64),
    /// A single block holding every pair (the quadratic-time statistic).
    Full,
}

impl Default for BlockPolicy {
    fn default() -> Self {
        BlockPolicy::Exponent(0.5)
    }
}

impl BlockPolicy {
    pub fn resolve(&self, n: usize) -> Result<usize> {
        match *self {
            BlockPolicy::Fixed(b) if b < 2 => Err(Error::BlockTooSmall(b)),
            BlockPolicy::Fixed(b) => Ok(b),
            BlockPolicy::Exponent(gamma) => block_size(n, gamma),
            BlockPolicy::Full => Ok(n),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            BlockPolicy::Fixed(b) => format!("B={b}"),
            BlockPolicy::Exponent(g) if *g == 0.5 => "B=sqrt(n)".to_string(),
            BlockPolicy::Exponent(g) => format!("B=n^{g}"),
            BlockPolicy::Full => "B=n".to_string(),
        }
    }
}

/// `h(z, z') = k(x, x') + k(y, y') - k(x, y') - k(x', y)`.
///
/// Grouped as `(k(x, x') + k(y, y')) - (k(x, y') + k(x', y))` so the floating-point result is
/// bitwise symmetric under `z <-> z'` and under swapping the roles of x and y.
#[inline]
pub fn h_stat<K: Kernel + ?Sized>(kernel: &K, x: &[f64], y: &[f64], x2: &[f64], y2: &[f64]) -> f64 {
    (kernel.eval(x, x2) + kernel.eval(y, y2)) - (kernel.eval(x, y2) + kernel.eval(x2, y))
}

/// [`h_stat`] with dimension checks, for `z = (x, y)` and `z' = (x2, y2)`.
pub fn h_stat_checked(spec: &KernelSpec, z: (&[f64], &[f64]), z2: (&[f64], &[f64])) -> Result<f64> {
    let d = z.0.len();
    for p in [z.1, z2.0, z2.1] {
        if p.len() != d {
            return Err(Error::Dim {
                left: d,
                right: p.len(),
            });
        }
    }
    Ok(h_stat(spec, z.0, z.1, z2.0, z2.1))
}

/// U-statistic over `len` pairs starting at `start`, given an evaluator of `h` on pair indices.
///
/// `h` is symmetric, so the ordered-pair average equals the unordered one:
/// `2 / (B (B - 1)) * sum_{a < b} h(a, b)`.
#[inline]
pub(crate) fn block_value_by<F>(start: usize, len: usize, h: F) -> f64
where
    F: Fn(usize, usize) -> f64,
{
    let mut acc = CompensatedSum::new();
    for a in start..start + len {
        for b in a + 1..start + len {
            acc.add(h(a, b));
        }
    }
    let b = len as f64;
    acc.value() * (2.0 / (b * (b - 1.0)))
}

/// Unbiased MMD estimate on one block of pairs.
pub fn block_mmd_u<K: Kernel + ?Sized>(kernel: &K, block: &PairedSample) -> Result<f64> {
    let b = block.n();
    if b < 2 {
        return Err(Error::BlockTooSmall(b));
    }
    let (x, y) = (block.x(), block.y());
    Ok(block_value_by(0, b, |i, j| h_stat(kernel, x.row(i), y.row(i), x.row(j), y.row(j))))
}

/// Mean of the per-block estimates over contiguous blocks of `block_size` pairs.
///
/// Leftover pairs past the last full block are ignored. Blocks are evaluated in parallel and
/// reduced in block order, so the result does not depend on the worker count.
pub fn btest_statistic<K: Kernel + ?Sized>(kernel: &K, s: &PairedSample, block_size: usize) -> Result<BlockStats> {
    let layout = BlockLayout::new(s.n(), block_size)?;
    let (x, y) = (s.x(), s.y());
    let values: Vec<f64> = (0..layout.num_blocks)
        .into_par_iter()
        .map(|i| {
            block_value_by(i * block_size, block_size, |a, b| {
                h_stat(kernel, x.row(a), y.row(a), x.row(b), y.row(b))
            })
        })
        .collect();
    Ok(BlockStats {
        statistic: numeric::mean(&values),
        values,
        layout,
        kernel: kernel.describe(),
    })
}

/// Quadratic-time unbiased MMD on all pairs, computed from the xx, yy and xy kernel blocks.
///
/// Equal to `btest_statistic` with a single block of size `n`; the cross term excludes the
/// matched pairs `(x_i, y_i)` as the U-statistic over `z_i` requires.
pub fn full_mmd_u<K: Kernel + ?Sized>(kernel: &K, s: &PairedSample) -> Result<f64> {
    let n = s.n();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let (x, y) = (s.x(), s.y());
    let rows: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut xx, mut yy, mut xy) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
            for j in i + 1..n {
                xx.add(kernel.eval(x.row(i), x.row(j)));
                yy.add(kernel.eval(y.row(i), y.row(j)));
            }
            for j in 0..n {
                if j != i {
                    xy.add(kernel.eval(x.row(i), y.row(j)));
                }
            }
            (xx.value(), yy.value(), xy.value())
        })
        .collect();
    let mut total = CompensatedSum::new();
    for (xx, yy, xy) in rows {
        total.add(2.0 * xx);
        total.add(2.0 * yy);
        total.add(-2.0 * xy);
    }
    let nf = n as f64;
    Ok(total.value() / (nf * (nf - 1.0)))
}

/// `B = round(n^gamma)`, clamped to `[2, n]`.
pub fn block_size(n: usize, gamma: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if n < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    let b = (n as f64).powf(gamma).round() as usize;
    Ok(b.clamp(2, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SampleSet;
    use crate::kernels::KernelSpec;
    use crate::rng::RngSeed;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_pairs(n: usize, d: usize, seed: u64) -> PairedSample {
        let mut rng = RngSeed(seed).rng();
        let mut draw = |n| {
            let v: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>() * 3.0).collect();
            SampleSet::new(v, d, "r").unwrap()
        };
        PairedSample::new(draw(n), draw(n)).unwrap()
    }

    #[test]
    fn h_examples() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let h = h_stat_checked(&k, (&[0.0], &[10.0]), (&[0.0], &[10.0])).unwrap();
        assert_relative_eq!(h, 2.0 - 2.0 * (-50f64).exp());
        assert_eq!(h_stat_checked(&k, (&[0.4, 1.0], &[0.4, 1.0]), (&[2.0, -1.0], &[2.0, -1.0])).unwrap(), 0.0);
        assert!(h_stat_checked(&k, (&[0.0], &[0.0, 1.0]), (&[0.0], &[0.0])).is_err());
    }

    #[test]
    fn h_is_symmetric_in_pairs() {
        let k = KernelSpec::gaussian(0.7).unwrap();
        let s = random_pairs(2, 3, 4);
        let (x, y) = (s.x(), s.y());
        let a = h_stat(&k, x.row(0), y.row(0), x.row(1), y.row(1));
        let b = h_stat(&k, x.row(1), y.row(1), x.row(0), y.row(0));
        assert_eq!(a, b);
    }

    #[test]
    fn block_of_two_is_h() {
        let k = KernelSpec::gaussian(1.3).unwrap();
        let s = random_pairs(2, 2, 8);
        let (x, y) = (s.x(), s.y());
        assert_eq!(block_mmd_u(&k, &s).unwrap(), h_stat(&k, x.row(0), y.row(0), x.row(1), y.row(1)));
    }

    #[test]
    fn identical_halves_give_zero() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let s = random_pairs(6, 2, 1);
        let same = PairedSample::new(s.x().clone(), s.x().clone()).unwrap();
        assert_eq!(block_mmd_u(&k, &same).unwrap(), 0.0);
        assert_eq!(btest_statistic(&k, &same, 3).unwrap().statistic, 0.0);
    }

    #[test]
    fn layout_and_errors() {
        let l = BlockLayout::new(14, 4).unwrap();
        assert_eq!((l.num_blocks, l.dropped), (3, 2));
        assert!(matches!(BlockLayout::new(10, 1), Err(Error::BlockTooSmall(1))));
        assert!(matches!(BlockLayout::new(3, 4), Err(Error::TooFewSamples { .. })));
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(matches!(block_mmd_u(&k, &random_pairs(1, 1, 0)), Err(Error::BlockTooSmall(1))));
        assert!(matches!(full_mmd_u(&k, &random_pairs(1, 1, 0)), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn statistic_is_mean_of_blocks() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let s = random_pairs(14, 2, 3);
        let st = btest_statistic(&k, &s, 4).unwrap();
        assert_eq!(st.values.len(), 3);
        assert_eq!(st.statistic, numeric::mean(&st.values));
        for (i, v) in st.values.iter().enumerate() {
            assert_eq!(*v, block_mmd_u(&k, &s.range(4 * i, 4)).unwrap());
        }
    }

    #[test]
    fn single_block_matches_full() {
        let k = KernelSpec::gaussian(0.8).unwrap();
        let s = random_pairs(9, 2, 11);
        let a = btest_statistic(&k, &s, 9).unwrap().statistic;
        let b = full_mmd_u(&k, &s).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-10);
    }

    #[test]
    fn block_size_rule() {
        assert_eq!(block_size(1000, 0.5).unwrap(), 32);
        assert_eq!(block_size(2000, 0.5).unwrap(), 45);
        assert_eq!(block_size(4, 0.5).unwrap(), 2);
        assert_eq!(block_size(5, 0.1).unwrap(), 2);
        assert!(matches!(block_size(100, 1.0), Err(Error::Config(_))));
        assert!(matches!(block_size(100, 0.0), Err(Error::Config(_))));
        assert!(block_size(3, 0.5).is_err());
        assert_eq!(BlockPolicy::Full.resolve(17).unwrap(), 17);
        assert_eq!(BlockPolicy::default().resolve(1000).unwrap(), 32);
        assert!(BlockPolicy::Fixed(1).resolve(10).is_err());
    }
}
