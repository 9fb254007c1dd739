use std::path::PathBuf;

use btest_core::kernels::default_bandwidth_grid;
use btest_core::{BlockPolicy, NullKind, SelectionStrategy};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "btest", version, about = "Kernel two-sample testing with the B-test")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Test whether two CSV samples come from the same distribution.
    Test(TestArgs),
    /// Type I and Type II error rates on the blob benchmark.
    BenchBlobs(BenchArgs),
    /// Smallest n reaching the error targets on the blob benchmark.
    Complexity(ComplexityArgs),
    /// Single-threaded runtime of one test call across sample sizes.
    Timing(TimingArgs),
    /// Sample complexity across blob stretch values, for choosing the benchmark's difficulty.
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelArg {
    Fixed(f64),
    Median,
    MaxRatio,
}

impl KernelArg {
    pub fn strategy(&self) -> SelectionStrategy {
        match self {
            KernelArg::Fixed(s) => SelectionStrategy::Fixed(*s),
            KernelArg::Median => SelectionStrategy::MedianHeuristic,
            KernelArg::MaxRatio => SelectionStrategy::MaxRatio(default_bandwidth_grid()),
        }
    }
}

fn parse_kernel(s: &str) -> Result<KernelArg, String> {
    match s {
        "median" => Ok(KernelArg::Median),
        "maxratio" => Ok(KernelArg::MaxRatio),
        _ => {
            let sigma = s
                .strip_prefix("fixed:")
                .ok_or("expected fixed:<sigma>, median or maxratio")?;
            positive_f64(sigma).map(KernelArg::Fixed)
        }
    }
}

fn parse_null(s: &str) -> Result<NullKind, String> {
    let (name, count) = match s.split_once(':') {
        Some((name, count)) => (name, Some(count)),
        None => (s, None),
    };
    let has_count = count.is_some();
    let count = |default: usize, floor: usize| -> Result<usize, String> {
        let v = count.map_or(Ok(default), |c| c.parse::<usize>().map_err(|e| e.to_string()))?;
        if v < floor {
            return Err(format!("count must be at least {floor}"));
        }
        Ok(v)
    };
    match name {
        "clt" if !has_count => Ok(NullKind::GaussianClt),
        "gamma" if !has_count => Ok(NullKind::Gamma),
        "permutation" => Ok(NullKind::Permutation {
            shuffles: count(1000, 100)?,
        }),
        "spectrum" => Ok(NullKind::Spectrum { draws: count(500, 1)? }),
        _ => Err("expected clt, permutation[:<shuffles>], spectrum[:<draws>] or gamma".into()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err("must be a positive number".into());
    }
    Ok(v)
}

fn open_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(v > 0.0 && v < 1.0) {
        return Err("must lie strictly between 0 and 1".into());
    }
    Ok(v)
}

fn stretch(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(v >= 1.0 && v.is_finite()) {
        return Err("must be at least 1".into());
    }
    Ok(v)
}

fn block_size(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v < 2 {
        return Err("must be at least 2".into());
    }
    Ok(v)
}

fn at_least_one(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v == 0 {
        return Err("must be at least 1".into());
    }
    Ok(v)
}

fn replications(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v < 100 {
        return Err("must be at least 100".into());
    }
    Ok(v)
}

fn sample_size(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v < 4 {
        return Err("must be at least 4".into());
    }
    Ok(v)
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Test level.
    #[arg(long, default_value = "0.05", value_parser = open_unit)]
    pub alpha: f64,
    /// Fixed block size; a comma-separated list sweeps several (bench commands only).
    #[arg(long, value_delimiter = ',', value_parser = block_size, conflicts_with = "gamma")]
    pub block_size: Vec<usize>,
    /// Block size exponent: B = round(n^gamma). Default when no block size is given.
    #[arg(long, value_parser = open_unit)]
    pub gamma: Option<f64>,
    /// Kernel choice: fixed:<sigma>, median, or maxratio.
    #[arg(long, default_value = "fixed:1", value_parser = parse_kernel)]
    pub kernel: KernelArg,
    /// Null model: clt, permutation[:<shuffles>], spectrum[:<draws>], or gamma.
    #[arg(long, default_value = "clt", value_parser = parse_null)]
    pub null: NullKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    pub out: OutFormat,
    /// Worker threads; defaults to the available cores.
    #[arg(long, value_parser = at_least_one)]
    pub threads: Option<usize>,
}

impl Common {
    pub fn block_policies(&self) -> Vec<BlockPolicy> {
        if self.block_size.is_empty() {
            vec![BlockPolicy::Exponent(self.gamma.unwrap_or(0.5))]
        } else {
            self.block_size.iter().map(|&b| BlockPolicy::Fixed(b)).collect()
        }
    }
}

#[derive(Args, Debug)]
pub struct TestArgs {
    pub x_csv: PathBuf,
    pub y_csv: PathBuf,
    /// Skip a header row in both files.
    #[arg(long)]
    pub header: bool,
    /// Use every pair in a single block (the quadratic-time statistic).
    #[arg(long, conflicts_with_all = ["block_size", "gamma"])]
    pub full: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct BlobArgs {
    /// Blobs per side of the grid.
    #[arg(long, default_value_t = 5, value_parser = at_least_one)]
    pub grid: usize,
    #[arg(long, default_value = "10", value_parser = positive_f64)]
    pub spacing: f64,
    /// Stretch of Q's per-blob covariance (eigenvalues e and 1/e); defaults to the calibrated value.
    #[arg(long, value_parser = stretch)]
    pub epsilon: Option<f64>,
    /// Rotation of Q's stretched axis, in radians.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub angle: f64,
    /// Horizontal offset added to every Q point.
    #[arg(long, default_value_t = 0.0)]
    pub q_shift: f64,
    /// Write a JSON run manifest to this path.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Sample sizes (pairs); comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "2000", value_parser = sample_size)]
    pub n: Vec<usize>,
    #[arg(long, default_value = "500", value_parser = replications)]
    pub reps: usize,
    #[command(flatten)]
    pub blobs: BlobArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    /// Type II error target; the Type I target is --alpha.
    #[arg(long, default_value = "0.05", value_parser = open_unit)]
    pub beta: f64,
    /// Replications per probed n.
    #[arg(long, default_value = "500", value_parser = replications)]
    pub reps: usize,
    #[arg(long, default_value = "32", value_parser = sample_size)]
    pub n_min: usize,
    #[arg(long, default_value = "60000", value_parser = sample_size)]
    pub n_cap: usize,
}

#[derive(Args, Debug)]
pub struct ComplexityArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub blobs: BlobArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct TimingArgs {
    /// Sample sizes; comma-separated and increasing.
    #[arg(long, value_delimiter = ',', default_value = "1024,2048,4096,8192,16384,32768,65536", value_parser = sample_size)]
    pub n: Vec<usize>,
    /// Timed calls per n; the median is reported.
    #[arg(long, default_value = "5", value_parser = at_least_one)]
    pub runs: usize,
    #[command(flatten)]
    pub blobs: BlobArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Candidate stretch values; comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10", value_parser = stretch)]
    pub stretches: Vec<f64>,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub blobs: BlobArgs,
    #[command(flatten)]
    pub common: Common,
}
