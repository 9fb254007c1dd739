//! Sample containers, CSV ingestion, pairing, splitting and pooling.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// `n` points of dimension `d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    values: Vec<f64>,
    n: usize,
    d: usize,
    label: String,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, d: usize, label: impl Into<String>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidSample("dimension must be at least 1".into()));
        }
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !values.len().is_multiple_of(d) {
            return Err(Error::InvalidSample(format!(
                "{} values do not form rows of dimension {d}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!(
                "non-finite value at row {}, column {}",
                pos / d + 1,
                pos % d + 1
            )));
        }
        let n = values.len() / d;
        Ok(Self {
            values,
            n,
            d,
            label: label.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        let d = rows.first().map(Vec::len).ok_or(Error::EmptyInput)?;
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dim {
                left: d,
                right: bad.len(),
            });
        }
        Self::new(rows.concat(), d, label)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// New set made of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> SampleSet {
        let mut values = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        SampleSet {
            values,
            n: indices.len(),
            d: self.d,
            label: self.label.clone(),
        }
    }

    fn shuffled(&self, seed: RngSeed) -> SampleSet {
        let mut idx: Vec<usize> = (0..self.n).collect();
        idx.shuffle(&mut seed.rng());
        self.select(&idx)
    }
}

/// Two samples of equal size and dimension; row `i` of `x` and row `i` of `y` form the pair z_i.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    x: SampleSet,
    y: SampleSet,
}

impl PairedSample {
    pub fn new(x: SampleSet, y: SampleSet) -> Result<Self> {
        if x.d != y.d {
            return Err(Error::Dim {
                left: x.d,
                right: y.d,
            });
        }
        if x.n != y.n {
            return Err(Error::InvalidSample(format!(
                "paired samples need equal sizes, got {} and {}",
                x.n, y.n
            )));
        }
        Ok(Self { x, y })
    }

    /// Pairs two independently collected samples.
    ///
    /// Each sample is shuffled with its own substream of `seed`, then rows are paired by index.
    /// The longer sample is truncated; the number of dropped rows is returned alongside.
    pub fn from_unpaired(x: &SampleSet, y: &SampleSet, seed: RngSeed) -> Result<(Self, usize)> {
        if x.d != y.d {
            return Err(Error::Dim {
                left: x.d,
                right: y.d,
            });
        }
        let n = x.n.min(y.n);
        let dropped = x.n.max(y.n) - n;
        let mut xs = x.shuffled(seed.derive(0));
        let mut ys = y.shuffled(seed.derive(1));
        if xs.n > n {
            xs = xs.select(&(0..n).collect::<Vec<_>>());
        }
        if ys.n > n {
            ys = ys.select(&(0..n).collect::<Vec<_>>());
        }
        Ok((Self { x: xs, y: ys }, dropped))
    }

    pub fn n(&self) -> usize {
        self.x.n
    }

    pub fn d(&self) -> usize {
        self.x.d
    }

    pub fn x(&self) -> &SampleSet {
        &self.x
    }

    pub fn y(&self) -> &SampleSet {
        &self.y
    }

    pub fn into_parts(self) -> (SampleSet, SampleSet) {
        (self.x, self.y)
    }

    /// Pairs at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> PairedSample {
        PairedSample {
            x: self.x.select(indices),
            y: self.y.select(indices),
        }
    }

    pub fn range(&self, start: usize, len: usize) -> PairedSample {
        self.select(&(start..start + len).collect::<Vec<_>>())
    }
}

/// Reads one sample per row from a comma-separated file.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<SampleSet> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_csv(file, has_header, path.display().to_string())
}

pub fn parse_csv<R: Read>(reader: R, has_header: bool, label: impl Into<String>) -> Result<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            column: None,
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    column: None,
                    message: format!("expected {w} columns, found {}", record.len()),
                })
            }
            Some(_) => {}
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                column: Some(j + 1),
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: Some(j + 1),
                    message: format!("non-finite value: {cell:?}"),
                });
            }
            values.push(v);
        }
    }
    match width {
        None | Some(0) => Err(Error::EmptyInput),
        Some(d) => SampleSet::new(values, d, label),
    }
}

/// Writes one row per sample, shortest round-trip float formatting, no header.
pub fn write_csv<W: Write>(s: &SampleSet, mut out: W) -> Result<()> {
    for row in s.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Seeded split of the pairs into a training half of `floor(n/2)` pairs and a test half holding the rest.
pub fn split_half(s: &PairedSample, seed: RngSeed) -> Result<(PairedSample, PairedSample)> {
    let n = s.n();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.rng());
    let (train, test) = idx.split_at(n / 2);
    Ok((s.select(train), s.select(test)))
}

/// All `x` rows followed by all `y` rows.
pub fn pool(s: &PairedSample) -> SampleSet {
    let mut values = Vec::with_capacity(2 * s.x.values.len());
    values.extend_from_slice(&s.x.values);
    values.extend_from_slice(&s.y.values);
    SampleSet {
        values,
        n: 2 * s.n(),
        d: s.d(),
        label: format!("{}+{}", s.x.label, s.y.label),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paired(n: usize) -> PairedSample {
        let x = SampleSet::new((0..n).map(|i| i as f64).collect(), 1, "x").unwrap();
        let y = SampleSet::new((0..n).map(|i| 100.0 + i as f64).collect(), 1, "y").unwrap();
        PairedSample::new(x, y).unwrap()
    }

    #[test]
    fn csv_basic_and_header() {
        let s = parse_csv("0,0\n1,1\n".as_bytes(), false, "t").unwrap();
        assert_eq!((s.n(), s.d()), (2, 2));
        assert_eq!(s.row(1), &[1.0, 1.0]);

        let s = parse_csv("a,b\n0,0\n".as_bytes(), true, "t").unwrap();
        assert_eq!((s.n(), s.d()), (1, 2));
    }

    #[test]
    fn csv_errors() {
        match parse_csv("0,0\n1\n".as_bytes(), false, "t") {
            Err(Error::Parse { line: 2, column: None, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_csv("0,0\n1,zz\n".as_bytes(), false, "t") {
            Err(Error::Parse { line: 2, column: Some(2), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_csv("".as_bytes(), false, "t"), Err(Error::EmptyInput)));
        assert!(matches!(parse_csv("a,b\n".as_bytes(), true, "t"), Err(Error::EmptyInput)));
        assert!(matches!(parse_csv("1,NaN\n".as_bytes(), false, "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn load_missing_file_is_io_error() {
        assert!(matches!(load_csv("/nonexistent/file.csv", false), Err(Error::Io(_))));
    }

    #[test]
    fn sample_set_rejects_non_finite() {
        assert!(SampleSet::new(vec![1.0, f64::INFINITY], 1, "t").is_err());
        assert!(SampleSet::new(vec![], 1, "t").is_err());
        assert!(SampleSet::new(vec![1.0, 2.0, 3.0], 2, "t").is_err());
    }

    #[test]
    fn split_half_sizes_and_partition() {
        let s = paired(4);
        let (a, b) = split_half(&s, RngSeed(1)).unwrap();
        assert_eq!((a.n(), b.n()), (2, 2));

        let s = paired(5);
        let (a, b) = split_half(&s, RngSeed(1)).unwrap();
        assert_eq!((a.n(), b.n()), (2, 3));
        let mut seen: Vec<f64> = a.x().rows().chain(b.x().rows()).map(|r| r[0]).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        // pairs stay together
        for half in [&a, &b] {
            for i in 0..half.n() {
                assert_eq!(half.y().row(i)[0], 100.0 + half.x().row(i)[0]);
            }
        }

        assert_eq!(split_half(&s, RngSeed(9)).unwrap(), split_half(&s, RngSeed(9)).unwrap());
        assert!(matches!(split_half(&paired(1), RngSeed(0)), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn pool_concatenates_and_inverts() {
        let s = paired(3);
        let p = pool(&s);
        assert_eq!(p.n(), 6);
        for i in 0..3 {
            assert_eq!(p.row(i), s.x().row(i));
            assert_eq!(p.row(3 + i), s.y().row(i));
        }
        let x = p.select(&[0, 1, 2]);
        let y = p.select(&[3, 4, 5]);
        assert_eq!(x.as_slice(), s.x().as_slice());
        assert_eq!(y.as_slice(), s.y().as_slice());
    }

    #[test]
    fn from_unpaired_truncates_and_is_seeded() {
        let x = SampleSet::new((0..7).map(f64::from).collect(), 1, "x").unwrap();
        let y = SampleSet::new((0..4).map(f64::from).collect(), 1, "y").unwrap();
        let (p, dropped) = PairedSample::from_unpaired(&x, &y, RngSeed(3)).unwrap();
        assert_eq!((p.n(), dropped), (4, 3));
        let (q, _) = PairedSample::from_unpaired(&x, &y, RngSeed(3)).unwrap();
        assert_eq!(p, q);
        let z = SampleSet::new(vec![0.0; 4], 2, "z").unwrap();
        assert!(matches!(PairedSample::from_unpaired(&x, &z, RngSeed(0)), Err(Error::Dim { .. })));
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e12f64..1e12, 3), 1..20)) {
            let s = SampleSet::from_rows(&rows, "p").unwrap();
            let mut buf = Vec::new();
            write_csv(&s, &mut buf).unwrap();
            let back = parse_csv(buf.as_slice(), false, "p").unwrap();
            prop_assert_eq!(back.as_slice(), s.as_slice());
        }

        #[test]
        fn split_half_is_partition(n in 2usize..60, seed in any::<u64>()) {
            let s = paired(n);
            let (a, b) = split_half(&s, RngSeed(seed)).unwrap();
            prop_assert_eq!(a.n(), n / 2);
            prop_assert_eq!(a.n() + b.n(), n);
            let mut all: Vec<f64> = a.x().rows().chain(b.x().rows()).map(|r| r[0]).collect();
            all.sort_by(f64::total_cmp);
            prop_assert_eq!(all, (0..n).map(|i| i as f64).collect::<Vec<_>>());
        }
    }
}
