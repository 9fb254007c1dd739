use std::io::Write;

use btest_core::data::{load_csv, pool, split_half, write_csv};
use btest_core::{Error, PairedSample, RngSeed, SampleSet};

#[test]
fn file_round_trip_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let s = SampleSet::from_rows(&[vec![0.1, -2.5e-300], vec![1.0 / 3.0, 7.0]], "x").unwrap();
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "a,b").unwrap();
    write_csv(&s, &mut f).unwrap();
    drop(f);
    let back = load_csv(&path, true).unwrap();
    assert_eq!(back.as_slice(), s.as_slice());
    assert_eq!(back.d(), 2);
}

#[test]
fn malformed_files_report_positions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "1,2\n3,x\n").unwrap();
    match load_csv(&path, false) {
        Err(Error::Parse { line, column, .. }) => {
            assert_eq!(line, 2);
            assert_eq!(column, Some(2));
        }
        other => panic!("{other:?}"),
    }
    std::fs::write(&path, "1,2\n3\n").unwrap();
    assert!(matches!(load_csv(&path, false), Err(Error::Parse { line: 2, .. })));
    std::fs::write(&path, "").unwrap();
    assert!(matches!(load_csv(&path, false), Err(Error::EmptyInput)));
    assert!(matches!(load_csv(dir.path().join("none.csv"), false), Err(Error::Io(_))));
}

#[test]
fn unpaired_inputs_are_truncated_and_pooled_in_order() {
    let x = SampleSet::new((0..10).map(f64::from).collect(), 1, "x").unwrap();
    let y = SampleSet::new((100..107).map(f64::from).collect(), 1, "y").unwrap();
    let (pairs, dropped) = PairedSample::from_unpaired(&x, &y, RngSeed(3)).unwrap();
    assert_eq!((pairs.n(), dropped), (7, 3));
    let pooled = pool(&pairs);
    assert_eq!(pooled.n(), 14);
    assert!(pooled.as_slice()[..7].iter().all(|v| *v < 10.0));
    assert!(pooled.as_slice()[7..].iter().all(|v| *v >= 100.0));
    let (train, test) = split_half(&pairs, RngSeed(1)).unwrap();
    assert_eq!((train.n(), test.n()), (3, 4));
}
