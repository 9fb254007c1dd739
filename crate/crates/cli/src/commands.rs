use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use btest_core::bench::{
    estimate_error_rates, loglog_slope, search_sample_complexity, timing_profile, BlobConfig, ComplexitySearch,
    TestConfig, TwoSampleTest, CALIBRATED_STRETCH,
};
use btest_core::data::load_csv;
use btest_core::nulls::DEFAULT_MAX_POOLED;
use btest_core::selection::DEFAULT_MEDIAN_PAIRS;
use btest_core::{BlockPolicy, Error, PairedSample, RngSeed};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{BenchArgs, BlobArgs, CalibrateArgs, Common, ComplexityArgs, OutFormat, SearchArgs, TestArgs, TimingArgs};

/// Exit status of a test that does not reject.
const ACCEPT: u8 = 0;
const REJECT: u8 = 1;

/// Version of the CSV/JSON row layouts documented in the README.
const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Input { path: String, source: Error },
    #[error(transparent)]
    Core(#[from] Error),
    #[error("writing manifest {path}: {source}")]
    Manifest { path: String, source: std::io::Error },
}

type CmdResult = Result<u8, CliError>;

fn load(path: &Path, header: bool) -> Result<btest_core::SampleSet, CliError> {
    load_csv(path, header).map_err(|source| CliError::Input {
        path: path.display().to_string(),
        source,
    })
}

fn test_config(common: &Common, block: BlockPolicy, median_pairs: usize) -> TestConfig {
    TestConfig {
        kernel: common.kernel.strategy(),
        block,
        alpha: common.alpha,
        null: common.null,
        median_pairs,
        max_pooled: DEFAULT_MAX_POOLED,
    }
}

fn blob_config(blobs: &BlobArgs, seed: u64) -> Result<BlobConfig, Error> {
    let cfg = BlobConfig {
        grid_size: blobs.grid,
        spacing: blobs.spacing,
        q_stretch: blobs.epsilon.unwrap_or(CALIBRATED_STRETCH),
        q_angle: blobs.angle,
        q_shift: blobs.q_shift,
        seed: RngSeed(seed),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn test(args: TestArgs) -> CmdResult {
    let common = &args.common;
    let block = if args.full {
        BlockPolicy::Full
    } else {
        match common.block_policies()[..] {
            [policy] => policy,
            _ => return Err(Error::Config("--block-size takes a single value for `test`".into()).into()),
        }
    };
    let x = load(&args.x_csv, args.header)?;
    let y = load(&args.y_csv, args.header)?;
    let seed = RngSeed(common.seed);
    let (pairs, dropped) = if x.n() == y.n() {
        (PairedSample::new(x, y)?, 0)
    } else if x.d() != y.d() {
        return Err(Error::Dim {
            left: x.d(),
            right: y.d(),
        }
        .into());
    } else {
        PairedSample::from_unpaired(&x, &y, seed.derive(3))?
    };
    let mut result = test_config(common, block, DEFAULT_MEDIAN_PAIRS).run(&pairs, seed)?;
    result.diagnostics.insert("unpaired_dropped".into(), json!(dropped));
    match common.out {
        OutFormat::Json => println!("{}", serde_json::to_string_pretty(&result).expect("results serialise")),
        OutFormat::Csv => {
            println!("statistic,threshold,p_value,reject,alpha,elapsed_s");
            println!(
                "{},{},{},{},{},{}",
                result.statistic, result.threshold, result.p_value, result.reject, result.alpha, result.elapsed_s
            );
        }
    }
    Ok(if result.reject { REJECT } else { ACCEPT })
}

/// A report row: serialised as a JSON object, or as one CSV line under a fixed header.
trait Row: Serialize {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

fn opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), ToString::to_string)
}

/// Keeps free-text cells on one CSV field.
fn cell(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

fn emit<R: Row>(rows: &[R], out: OutFormat) {
    match out {
        OutFormat::Json => println!("{}", serde_json::to_string_pretty(rows).expect("rows serialise")),
        OutFormat::Csv => {
            println!("{}", R::HEADER.join(","));
            for r in rows {
                println!("{}", r.fields().join(","));
            }
        }
    }
}

struct Manifest<'a> {
    command: &'static str,
    seed: u64,
    started: SystemTime,
    clock: Instant,
    path: Option<&'a Path>,
}

impl<'a> Manifest<'a> {
    fn start(command: &'static str, seed: u64, path: Option<&'a Path>) -> Self {
        Self {
            command,
            seed,
            started: SystemTime::now(),
            clock: Instant::now(),
            path,
        }
    }

    fn finish(self, rows: usize, extra: Value) -> Result<(), CliError> {
        let Some(path) = self.path else {
            return Ok(());
        };
        let manifest = json!({
            "tool": "btest",
            "version": env!("CARGO_PKG_VERSION"),
            "git_describe": env!("BTEST_GIT_DESCRIBE"),
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "argv": std::env::args().collect::<Vec<_>>(),
            "seed": self.seed,
            "threads": rayon::current_num_threads(),
            "started_unix_s": self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            "wall_clock_s": self.clock.elapsed().as_secs_f64(),
            "rows": rows,
            "extra": extra,
        });
        fs::write(path, serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n").map_err(|source| {
            CliError::Manifest {
                path: path.display().to_string(),
                source,
            }
        })?;
        Ok(())
    }
}

#[derive(Serialize)]
struct RateRow {
    kernel: String,
    block: String,
    null: String,
    alpha: f64,
    n: usize,
    replications: usize,
    type1: Option<f64>,
    type1_stderr: Option<f64>,
    type2: Option<f64>,
    type2_stderr: Option<f64>,
    null_block_skewness: Option<f64>,
    status: String,
}

impl Row for RateRow {
    const HEADER: &'static [&'static str] = &[
        "kernel",
        "block",
        "null",
        "alpha",
        "n",
        "replications",
        "type1",
        "type1_stderr",
        "type2",
        "type2_stderr",
        "null_block_skewness",
        "status",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.kernel.clone(),
            self.block.clone(),
            self.null.clone(),
            self.alpha.to_string(),
            self.n.to_string(),
            self.replications.to_string(),
            opt(&self.type1),
            opt(&self.type1_stderr),
            opt(&self.type2),
            opt(&self.type2_stderr),
            opt(&self.null_block_skewness),
            cell(&self.status),
        ]
    }
}

pub fn bench_blobs(args: BenchArgs) -> CmdResult {
    let cfg = blob_config(&args.blobs, args.common.seed)?;
    let manifest = Manifest::start("bench-blobs", args.common.seed, args.blobs.manifest.as_deref());
    let mut rows = Vec::new();
    for policy in args.common.block_policies() {
        let test = test_config(&args.common, policy, btest_core::bench::DEFAULT_BENCH_MEDIAN_PAIRS);
        for &n in &args.n {
            let mut row = RateRow {
                kernel: test.kernel.describe(),
                block: policy.describe(),
                null: test.null.describe(),
                alpha: test.alpha,
                n,
                replications: args.reps,
                type1: None,
                type1_stderr: None,
                type2: None,
                type2_stderr: None,
                null_block_skewness: None,
                status: "ok".into(),
            };
            match estimate_error_rates(&cfg, &test, n, args.reps) {
                Ok(r) => {
                    row.type1 = Some(r.type1);
                    row.type1_stderr = Some(r.type1_stderr);
                    row.type2 = Some(r.type2);
                    row.type2_stderr = Some(r.type2_stderr);
                    row.null_block_skewness = r.null_block_skewness;
                }
                Err(e) => row.status = format!("error: {e}"),
            }
            rows.push(row);
        }
    }
    emit(&rows, args.common.out);
    manifest.finish(rows.len(), json!({ "blobs": cfg }))?;
    Ok(0)
}

#[derive(Serialize)]
struct ComplexityRow {
    epsilon: f64,
    kernel: String,
    block: String,
    null: String,
    alpha: f64,
    beta: f64,
    replications: usize,
    n_required: Option<usize>,
    largest_n: Option<usize>,
    probes: usize,
    status: String,
}

impl Row for ComplexityRow {
    const HEADER: &'static [&'static str] = &[
        "epsilon",
        "kernel",
        "block",
        "null",
        "alpha",
        "beta",
        "replications",
        "n_required",
        "largest_n",
        "probes",
        "status",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.epsilon.to_string(),
            self.kernel.clone(),
            self.block.clone(),
            self.null.clone(),
            self.alpha.to_string(),
            self.beta.to_string(),
            self.replications.to_string(),
            opt(&self.n_required),
            opt(&self.largest_n),
            self.probes.to_string(),
            cell(&self.status),
        ]
    }
}

fn complexity_row(cfg: &BlobConfig, test: &TestConfig, search: &SearchArgs) -> ComplexityRow {
    let spec = ComplexitySearch {
        target_type1: test.alpha,
        target_type2: search.beta,
        replications: search.reps,
        n_min: search.n_min,
        n_cap: search.n_cap,
        ..ComplexitySearch::default()
    };
    let mut row = ComplexityRow {
        epsilon: cfg.q_stretch,
        kernel: test.kernel.describe(),
        block: test.block.describe(),
        null: test.null.describe(),
        alpha: test.alpha,
        beta: search.beta,
        replications: search.reps,
        n_required: None,
        largest_n: None,
        probes: 0,
        status: String::new(),
    };
    match search_sample_complexity(cfg, test, &spec) {
        Ok(report) => {
            row.n_required = report.n_required;
            row.largest_n = Some(report.largest_n);
            row.probes = report.probes.len();
            row.status = if report.n_required.is_some() {
                "ok".into()
            } else {
                "budget_exceeded".into()
            };
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

pub fn complexity(args: ComplexityArgs) -> CmdResult {
    let cfg = blob_config(&args.blobs, args.common.seed)?;
    let manifest = Manifest::start("complexity", args.common.seed, args.blobs.manifest.as_deref());
    let rows: Vec<ComplexityRow> = args
        .common
        .block_policies()
        .into_iter()
        .map(|policy| {
            let test = test_config(&args.common, policy, btest_core::bench::DEFAULT_BENCH_MEDIAN_PAIRS);
            complexity_row(&cfg, &test, &args.search)
        })
        .collect();
    emit(&rows, args.common.out);
    manifest.finish(rows.len(), json!({ "blobs": cfg }))?;
    Ok(0)
}

pub fn calibrate(args: CalibrateArgs) -> CmdResult {
    let base = blob_config(&args.blobs, args.common.seed)?;
    let manifest = Manifest::start("calibrate", args.common.seed, args.blobs.manifest.as_deref());
    let policy = match args.common.block_policies()[..] {
        [policy] => policy,
        _ => return Err(Error::Config("--block-size takes a single value for `calibrate`".into()).into()),
    };
    let test = test_config(&args.common, policy, btest_core::bench::DEFAULT_BENCH_MEDIAN_PAIRS);
    let rows: Vec<ComplexityRow> = args
        .stretches
        .iter()
        .map(|&e| {
            let cfg = BlobConfig {
                q_stretch: e,
                ..base.clone()
            };
            complexity_row(&cfg, &test, &args.search)
        })
        .collect();
    emit(&rows, args.common.out);
    manifest.finish(rows.len(), json!({ "blobs": base, "calibrated_stretch": CALIBRATED_STRETCH }))?;
    Ok(0)
}

#[derive(Serialize)]
struct TimingRow {
    kernel: String,
    block: String,
    null: String,
    n: usize,
    seconds: f64,
    runs: usize,
}

impl Row for TimingRow {
    const HEADER: &'static [&'static str] = &["kernel", "block", "null", "n", "seconds", "runs"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.kernel.clone(),
            self.block.clone(),
            self.null.clone(),
            self.n.to_string(),
            self.seconds.to_string(),
            self.runs.to_string(),
        ]
    }
}

pub fn timing(args: TimingArgs) -> CmdResult {
    if args.n.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("--n must be strictly increasing".into()).into());
    }
    let cfg = blob_config(&args.blobs, args.common.seed)?;
    let manifest = Manifest::start("timing", args.common.seed, args.blobs.manifest.as_deref());
    let mut rows = Vec::new();
    let mut slopes = serde_json::Map::new();
    for policy in args.common.block_policies() {
        let test = test_config(&args.common, policy, btest_core::bench::DEFAULT_BENCH_MEDIAN_PAIRS);
        let points = timing_profile(&cfg, &test, &args.n, args.runs)?;
        if let Ok(slope) = loglog_slope(&points) {
            slopes.insert(policy.describe(), json!(slope));
        }
        rows.extend(points.into_iter().map(|p| TimingRow {
            kernel: test.kernel.describe(),
            block: policy.describe(),
            null: test.null.describe(),
            n: p.n,
            seconds: p.seconds,
            runs: p.runs,
        }));
    }
    emit(&rows, args.common.out);
    manifest.finish(rows.len(), json!({ "blobs": cfg, "loglog_slope": slopes }))?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_stay_single_field() {
        assert_eq!(cell("a, b\nc"), "a; b;c");
    }

    #[test]
    fn empty_option_is_blank() {
        assert_eq!(opt::<usize>(&None), "");
        assert_eq!(opt(&Some(3)), "3");
    }
}
