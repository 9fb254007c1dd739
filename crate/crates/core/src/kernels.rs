//! Gaussian RBF kernels and their non-negative combinations.
//!
//! The Gaussian convention throughout is `k(a, b) = exp(-|a - b|^2 / (2 sigma^2))`, so a
//! bandwidth is a distance scale and the median heuristic can be used for it directly.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Anything that can score the similarity of two points of equal dimension.
///
/// Estimators are generic over this trait; [`KernelSpec`] is the production implementation.
pub trait Kernel: Sync {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;

    /// `k(a, a)`, identical for every point.
    fn self_similarity(&self) -> f64;

    fn describe(&self) -> String {
        "custom".to_string()
    }
}

impl<K: Kernel + ?Sized> Kernel for &K {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        (**self).eval(a, b)
    }

    fn self_similarity(&self) -> f64 {
        (**self).self_similarity()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTerm {
    pub sigma: f64,
    pub weight: f64,
}

/// Weighted sum of Gaussian kernels with positive bandwidths and non-negative weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<KernelTerm>", into = "Vec<KernelTerm>")]
pub struct KernelSpec {
    terms: Vec<KernelTerm>,
    #[serde(skip)]
    inv_two_sigma_sq: Vec<f64>,
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::combination(vec![KernelTerm { sigma, weight: 1.0 }])
    }

    pub fn combination(terms: Vec<KernelTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("kernel needs at least one term".into()));
        }
        for t in &terms {
            if !(t.sigma.is_finite() && t.sigma > 0.0) {
                return Err(Error::Config(format!("bandwidth must be positive, got {}", t.sigma)));
            }
            if !(t.weight.is_finite() && t.weight >= 0.0) {
                return Err(Error::Config(format!("weight must be non-negative, got {}", t.weight)));
            }
        }
        if terms.iter().all(|t| t.weight == 0.0) {
            return Err(Error::Config("kernel needs at least one positive weight".into()));
        }
        let inv_two_sigma_sq = terms.iter().map(|t| 1.0 / (2.0 * t.sigma * t.sigma)).collect();
        Ok(Self {
            terms,
            inv_two_sigma_sq,
        })
    }

    pub fn terms(&self) -> &[KernelTerm] {
        &self.terms
    }

    /// Sum of weights, which is also `k(a, a)`.
    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// Single bandwidth of a one-term kernel.
    pub fn sigma(&self) -> Option<f64> {
        match self.terms.as_slice() {
            [t] => Some(t.sigma),
            _ => None,
        }
    }

    /// Same bandwidths, every weight multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::combination(
            self.terms
                .iter()
                .map(|t| KernelTerm {
                    sigma: t.sigma,
                    weight: t.weight * factor,
                })
                .collect(),
        )
    }

    #[inline]
    pub fn eval_sq_dist(&self, sq_dist: f64) -> f64 {
        if self.terms.len() == 1 {
            return self.terms[0].weight * (-sq_dist * self.inv_two_sigma_sq[0]).exp();
        }
        self.terms
            .iter()
            .zip(&self.inv_two_sigma_sq)
            .map(|(t, c)| t.weight * (-sq_dist * c).exp())
            .sum()
    }
}

impl TryFrom<Vec<KernelTerm>> for KernelSpec {
    type Error = Error;

    fn try_from(terms: Vec<KernelTerm>) -> Result<Self> {
        Self::combination(terms)
    }
}

impl From<KernelSpec> for Vec<KernelTerm> {
    fn from(spec: KernelSpec) -> Self {
        spec.terms
    }
}

impl Kernel for KernelSpec {
    #[inline]
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.eval_sq_dist(sq_dist(a, b))
    }

    fn self_similarity(&self) -> f64 {
        self.total_weight()
    }

    fn describe(&self) -> String {
        match self.terms.as_slice() {
            [t] if t.weight == 1.0 => format!("gaussian(sigma={})", t.sigma),
            terms => {
                let parts: Vec<String> = terms
                    .iter()
                    .map(|t| format!("{}*gaussian(sigma={})", t.weight, t.sigma))
                    .collect();
                parts.join(" + ")
            }
        }
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Checked kernel evaluation.
pub fn eval_kernel(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dim {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(spec.eval(a, b))
}

/// Bandwidths `2^-15, 2^-14, ..., 2^10`.
pub fn default_bandwidth_grid() -> Vec<f64> {
    (-15..=10).map(|p| 2f64.powi(p)).collect()
}

/// Dense symmetric `m x m` kernel matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    m: usize,
    values: Vec<f64>,
    spec: KernelSpec,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.m, self.m, &self.values)
    }
}

fn gram_with<F>(s: &SampleSet, spec: KernelSpec, f: F) -> GramMatrix
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let m = s.n();
    let mut values = vec![0.0; m * m];
    // upper triangle in parallel, then mirror
    values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let a = s.row(i);
        for (j, out) in row.iter_mut().enumerate().skip(i) {
            *out = f(a, s.row(j));
        }
    });
    for i in 0..m {
        for j in 0..i {
            values[i * m + j] = values[j * m + i];
        }
    }
    GramMatrix { m, values, spec }
}

pub fn gram(spec: &KernelSpec, s: &SampleSet) -> GramMatrix {
    gram_with(s, spec.clone(), |a, b| spec.eval(a, b))
}

/// One Gram matrix per base term, each with unit weight, so weights can be changed without
/// recomputing kernels.
pub fn gram_per_term(spec: &KernelSpec, s: &SampleSet) -> Vec<GramMatrix> {
    let sq = gram_with(s, spec.clone(), sq_dist);
    spec.terms()
        .iter()
        .map(|t| {
            let base = KernelSpec::gaussian(t.sigma).expect("validated bandwidth");
            let values = sq.values.iter().map(|&d| base.eval_sq_dist(d)).collect();
            GramMatrix {
                m: sq.m,
                values,
                spec: base,
            }
        })
        .collect()
}

/// Weighted sum of single-term Gram matrices produced by [`gram_per_term`].
pub fn combine_grams(grams: &[GramMatrix], weights: &[f64]) -> Result<GramMatrix> {
    if grams.is_empty() || grams.len() != weights.len() {
        return Err(Error::Config("need one weight per Gram matrix".into()));
    }
    let m = grams[0].m;
    if grams.iter().any(|g| g.m != m) {
        return Err(Error::Dim {
            left: m,
            right: grams.iter().map(|g| g.m).find(|&k| k != m).unwrap_or(m),
        });
    }
    let terms = grams
        .iter()
        .zip(weights)
        .map(|(g, &w)| KernelTerm {
            sigma: g.spec.terms[0].sigma,
            weight: w,
        })
        .collect();
    let spec = KernelSpec::combination(terms)?;
    let mut values = vec![0.0; m * m];
    for (g, &w) in grams.iter().zip(weights) {
        for (v, gv) in values.iter_mut().zip(&g.values) {
            *v += w * gv;
        }
    }
    Ok(GramMatrix { m, values, spec })
}

/// `H G H` with `H = I - 11'/m`.
pub fn center_gram(g: &GramMatrix) -> GramMatrix {
    let m = g.m;
    let mf = m as f64;
    let row_means: Vec<f64> = (0..m).map(|i| g.row(i).iter().sum::<f64>() / mf).collect();
    let grand = row_means.iter().sum::<f64>() / mf;
    // G is symmetric, so column means equal row means
    let mut values = vec![0.0; m * m];
    values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let src = g.row(i);
        for j in 0..m {
            row[j] = src[j] - row_means[i] - row_means[j] + grand;
        }
    });
    GramMatrix {
        m,
        values,
        spec: g.spec.clone(),
    }
}

/// Median Euclidean distance over distinct pairs of rows.
///
/// When there are more than `max_pairs` pairs, the median is taken over `max_pairs` pairs drawn
/// uniformly (with replacement) using `seed`.
pub fn median_bandwidth(s: &SampleSet, max_pairs: usize, seed: RngSeed) -> Result<f64> {
    let n = s.n();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if max_pairs == 0 {
        return Err(Error::Config("max_pairs must be positive".into()));
    }
    let total = n * (n - 1) / 2;
    let mut dists: Vec<f64> = if total <= max_pairs {
        let mut out = Vec::with_capacity(total);
        for i in 0..n {
            for j in i + 1..n {
                out.push(sq_dist(s.row(i), s.row(j)).sqrt());
            }
        }
        out
    } else {
        let mut rng = seed.rng();
        (0..max_pairs)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                sq_dist(s.row(i), s.row(j)).sqrt()
            })
            .collect()
    };
    let median = median_in_place(&mut dists);
    if median > 0.0 {
        Ok(median)
    } else {
        Err(Error::DegenerateData("median pairwise distance is zero".into()))
    }
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_max + upper)
    }
}
