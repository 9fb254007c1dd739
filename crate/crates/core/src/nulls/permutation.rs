use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::NullModel;
use crate::data::{pool, PairedSample};
use crate::error::{Error, Result};
use crate::estimators::{block_value_by, btest_statistic, full_mmd_u, BlockLayout};
use crate::kernels::{gram, GramMatrix, KernelSpec};
use crate::numeric::{self, CompensatedSum};
use crate::rng::RngSeed;

/// Statistic recomputed on each re-partition of the pooled sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "block_size", rename_all = "snake_case")]
pub enum Estimator {
    /// B-test average with the given block size.
    Block(usize),
    /// Quadratic-time U-statistic on all pairs.
    Full,
}

impl Estimator {
    pub fn evaluate(&self, kernel: &KernelSpec, s: &PairedSample) -> Result<f64> {
        match *self {
            Estimator::Block(b) => Ok(btest_statistic(kernel, s, b)?.statistic),
            Estimator::Full => full_mmd_u(kernel, s),
        }
    }

    /// Statistic for the split where position `a < n` of `order` is `x_a` and position
    /// `n + a` is `y_a`, read off the pooled Gram matrix.
    ///
    /// Both forms give bitwise-equal results for splits that differ only by reordering pairs or
    /// swapping the roles of x and y, so tied permutations stay tied.
    fn on_gram(&self, g: &GramMatrix, order: &[usize], n: usize, scratch: &mut Scratch) -> f64 {
        let (xs, ys) = order.split_at(n);
        match *self {
            Estimator::Block(b) => {
                // every lookup is in row xs[a] or ys[a]; the matrix is exactly symmetric
                let layout = BlockLayout {
                    block_size: b,
                    num_blocks: n / b,
                    dropped: n % b,
                };
                let values: Vec<f64> = (0..layout.num_blocks)
                    .map(|i| {
                        block_value_by(i * b, b, |a, c| {
                            (g.get(xs[a], xs[c]) + g.get(ys[a], ys[c])) - (g.get(xs[a], ys[c]) + g.get(ys[a], xs[c]))
                        })
                    })
                    .collect();
                numeric::mean(&values)
            }
            Estimator::Full => {
                // sum_{a != b} h(z_a, z_b) = w'Kw - tr(K) + 2 sum_a k(x_a, y_a), w = +1 on x, -1 on y
                let Scratch { signs, matched } = scratch;
                for &i in xs {
                    signs[i] = 1.0;
                }
                for &i in ys {
                    signs[i] = -1.0;
                }
                let mut quad = CompensatedSum::new();
                for (i, &wi) in signs.iter().enumerate() {
                    let row = g.row(i);
                    let dot: f64 = row.iter().zip(signs.iter()).map(|(k, w)| k * w).sum();
                    quad.add(wi * dot);
                }
                for i in 0..g.size() {
                    quad.add(-g.get(i, i));
                }
                // summed in sorted order so the pairing order cannot change the rounding
                matched.clear();
                matched.extend(xs.iter().zip(ys).map(|(&x, &y)| g.get(x, y)));
                matched.sort_by(f64::total_cmp);
                for &k in matched.iter() {
                    quad.add(2.0 * k);
                }
                let nf = n as f64;
                quad.value() / (nf * (nf - 1.0))
            }
        }
    }
}

struct Scratch {
    signs: Vec<f64>,
    matched: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            signs: vec![0.0; 2 * n],
            matched: Vec::with_capacity(n),
        }
    }
}

/// Permutation null: the pooled `2n` points are re-split uniformly at random into two
/// pseudo-samples of size `n` (paired by position) and the statistic is recomputed.
///
/// The pooled Gram matrix is computed once; shuffle `i` uses substream `seed.derive(i)`.
pub fn permutation_null(
    kernel: &KernelSpec,
    s: &PairedSample,
    estimator: Estimator,
    num_shuffles: usize,
    seed: RngSeed,
) -> Result<NullModel> {
    permutation_null_with_observed(kernel, s, estimator, num_shuffles, seed).map(|(model, _)| model)
}

/// [`permutation_null`] plus the statistic of the unpermuted split computed the same way as the
/// draws, so that ties between the observed value and a draw are exact.
pub fn permutation_null_with_observed(
    kernel: &KernelSpec,
    s: &PairedSample,
    estimator: Estimator,
    num_shuffles: usize,
    seed: RngSeed,
) -> Result<(NullModel, f64)> {
    if num_shuffles < 100 {
        return Err(Error::Config(format!("need at least 100 shuffles, got {num_shuffles}")));
    }
    let n = s.n();
    match estimator {
        Estimator::Block(b) => {
            BlockLayout::new(n, b)?;
        }
        Estimator::Full if n < 2 => return Err(Error::TooFewSamples { needed: 2, got: n }),
        Estimator::Full => {}
    }
    let g = gram(kernel, &pool(s));
    let mut draws: Vec<f64> = (0..num_shuffles as u64)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(2 * n), Scratch::new(n)),
            |(order, scratch), i| {
                order.clear();
                order.extend(0..2 * n);
                order.shuffle(&mut seed.derive(i).rng());
                estimator.on_gram(&g, order, n, scratch)
            },
        )
        .collect();
    draws.sort_by(f64::total_cmp);
    let identity: Vec<usize> = (0..2 * n).collect();
    let observed = estimator.on_gram(&g, &identity, n, &mut Scratch::new(n));
    Ok((NullModel::Permutation { draws }, observed))
}

/// Statistic on the identity split, for checks against the direct estimators.
#[cfg(test)]
pub(crate) fn identity_statistic(kernel: &KernelSpec, s: &PairedSample, estimator: Estimator) -> f64 {
    let n = s.n();
    let g = gram(kernel, &pool(s));
    let order: Vec<usize> = (0..2 * n).collect();
    estimator.on_gram(&g, &order, n, &mut Scratch::new(n))
}
