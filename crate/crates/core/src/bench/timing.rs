use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::blobs::{sample_blobs_with, BlobConfig, Population};
use super::harness::TwoSampleTest;
use crate::data::PairedSample;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingPoint {
    pub n: usize,
    /// Median wall-clock seconds of one test call, data generation excluded.
    pub seconds: f64,
    pub runs: usize,
}

/// Times `test` on alternative blob data at each `n`, single-threaded, taking the median of
/// `runs` calls.
pub fn timing_profile<T: TwoSampleTest>(cfg: &BlobConfig, test: &T, ns: &[usize], runs: usize) -> Result<Vec<TimingPoint>> {
    cfg.validate()?;
    if runs == 0 {
        return Err(Error::Config("need at least one timing run".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        ns.iter()
            .map(|&n| {
                let mut times = Vec::with_capacity(runs);
                for r in 0..runs as u64 {
                    let seed = cfg.seed.derive(n as u64).derive(r);
                    let x = sample_blobs_with(cfg, n, Population::P, &mut seed.derive(0).rng());
                    let y = sample_blobs_with(cfg, n, Population::Q, &mut seed.derive(1).rng());
                    let s = PairedSample::new(x, y)?;
                    let start = Instant::now();
                    test.run(&s, seed.derive(2))?;
                    times.push(start.elapsed().as_secs_f64());
                }
                times.sort_by(f64::total_cmp);
                Ok(TimingPoint {
                    n,
                    seconds: times[runs / 2],
                    runs,
                })
            })
            .collect()
    })
}

/// Least-squares slope of `log(seconds)` on `log(n)`.
pub fn loglog_slope(points: &[TimingPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: points.len(),
        });
    }
    if points.iter().any(|p| !(p.seconds > 0.0) || p.n == 0) {
        return Err(Error::Numerical("timings and sizes must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Numerical("all sizes are equal".into()));
    }
    Ok(sxy / sxx)
}
