use proptest::prelude::*;
use retint::export::*;
use retint::*;
use std::fs;
use std::path::Path;

#[test]
fn formatting() {
    assert_eq!(fmt_f64(2.5), "2.5");
    assert_eq!(fmt_f64(10.0), "10");
    assert_eq!(fmt_f64(0.1), "0.10000000000000001");
    assert_eq!(fmt_f64(1e-7), "9.9999999999999995e-8");
    assert_eq!(fmt_f64(-3.0), "-3");
}

use retint::distributions::{log_binned_pdf, scale_distribution};
use retint::memory::{cluster_size_distribution, mean_conditional_interval};
use retint::persistence::persistence_curve;
use retint::synth::GeneratorKind;

#[test]
fn intervals_round_trip() {
    let s = IntervalSeries::from_taus(vec![3, 1, 4, 1, 5], 0.25).unwrap();
    let text = intervals_csv(&s).unwrap();
    assert!(text.starts_with("# q=0.25 n_exceedances=6\ntau\n3\n"));
    let back = parse_intervals_csv(&text).unwrap();
    assert_eq!(back.taus(), s.taus());
    assert_eq!(back.q(), 0.25);
}

#[test]
fn distribution_round_trip_preserves_fit_inputs() {
    let s = IntervalSeries::from_taus((1..400).map(|i| 1 + i % 37).collect(), 1.0).unwrap();
    let scaled =
        scale_distribution(&log_binned_pdf(&s, 10).unwrap(), s.mean_tau().unwrap()).unwrap();
    let back = parse_distribution_csv(&distribution_csv(&scaled).unwrap()).unwrap();
    assert_eq!(back.centers(), scaled.centers());
    assert_eq!(back.densities(), scaled.densities());
    assert_eq!(back.counts(), scaled.counts());
    assert_eq!(back.scale(), scaled.scale());
    for (a, b) in back.edges().iter().zip(scaled.edges()) {
        assert!((a - b).abs() <= 1e-15 * b.abs());
    }
}

#[test]
fn series_round_trip() {
    let spec = GeneratorSpec::new(GeneratorKind::IidGaussian, 3, 9);
    let text = series_csv(&spec, &[0.5, -1.25, 3.0]).unwrap();
    assert!(text.starts_with("# generator=iid_gaussian length=3 seed=9\nreturn\n"));
    assert_eq!(
        parse_series_csv(&text).unwrap(),
        (SeriesKind::Returns, vec![0.5, -1.25, 3.0])
    );
    let spec = GeneratorSpec::new(GeneratorKind::IidExceedance { p: 0.5 }, 1, 9);
    let text = series_csv(&spec, &[1.0]).unwrap();
    assert_eq!(parse_series_csv(&text).unwrap().0, SeriesKind::Volatility);
}

#[test]
fn table_layouts() {
    let s = IntervalSeries::from_taus(vec![1, 9, 9, 1, 2, 8, 1, 1, 7], 1.0).unwrap();
    let c = clusters_csv(&cluster_size_distribution(&s).unwrap()).unwrap();
    assert!(c.starts_with("# median=2 ties=minus\nsign,n,cumulative,cluster_count\nplus,1,1,2\nplus,2,0.33333333333333331,1\nminus,1,1,1\n"));
    let rows = mean_conditional_interval(&s, 4, 2, 1).unwrap();
    let m = conditional_mean_csv(&rows).unwrap();
    assert_eq!(m.lines().count(), 5);
    let p = persistence_csv(&persistence_curve(&[0.0, 1.0, 2.0, 3.0], 2).unwrap()).unwrap();
    assert_eq!(p, "t,p_plus,p_minus,n_starts\n1,1,0,2\n2,1,0,2\n");
}

#[test]
fn atomic_write_replaces() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a/b/out.csv");
    write_atomic(&path, b"one").unwrap();
    write_atomic(&path, b"two").unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "two");
    let leftovers = fs::read_dir(path.parent().unwrap()).unwrap().count();
    assert_eq!(leftovers, 1);
}

#[test]
fn missing_file_is_unreadable() {
    let err = read_intervals_csv(Path::new("/nonexistent/intervals.csv")).unwrap_err();
    assert_eq!(err.category(), "unreadable file");
}

proptest! {
    #[test]
    fn round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }
}
