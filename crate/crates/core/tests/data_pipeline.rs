use std::path::PathBuf;

use proptest::prelude::*;
use tmoe::data::{
    anchors, inject_anomaly, load_csv, make_windows, standardize, synth_series, write_csv, AnomalyKind, AnomalySpec,
    Dataset, Series, Split, SplitSpec, Standardizer, SynthSpec,
};
use tmoe::numerics::Tensor;
use tmoe::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn column_series(values: &[f32]) -> Series {
    Series::new("s", Tensor::new(vec![values.len(), 1], values.to_vec()).unwrap(), vec!["x".into()]).unwrap()
}

#[test]
fn loads_small_fixture() {
    let s = load_csv(fixture("tiny.csv")).unwrap();
    assert_eq!(s.values.shape(), &[3, 2]);
    assert_eq!(s.channels, vec!["a", "b"]);
    assert_eq!(s.values.data(), &[1.5, -2.0, 2.5, 0.25, 3.0, 0.4]);
    assert_eq!(s.timestamps.as_ref().unwrap()[2], "2016-07-01 02:00:00");
    assert_eq!(s.name, "tiny");
}

#[test]
fn loads_ett_excerpt() {
    let s = load_csv(fixture("etth1_excerpt.csv")).unwrap();
    assert_eq!(s.values.shape(), &[2880, 7]);
    assert_eq!(s.channels.last().unwrap(), "OT");
}

#[test]
fn missing_cell_is_located() {
    match load_csv(fixture("missing.csv")) {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_csv(dir.path().join("nope.csv")), Err(Error::MissingFile(_))));

    let p = dir.path().join("text.csv");
    std::fs::write(&p, "date,a\n2016-07-01,1\n2016-07-02,abc\n").unwrap();
    match load_csv(&p) {
        Err(Error::NonNumericCell { line, column, value }) => {
            assert_eq!((line, column, value.as_str()), (3, 2, "abc"))
        }
        other => panic!("unexpected {other:?}"),
    }

    for bad in ["", "NaN", "inf"] {
        std::fs::write(&p, format!("date,a,b\n2016-07-01,1,{bad}\n")).unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Parse { line: 2, column: 3, .. })), "{bad:?}");
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let s = synth_series(&SynthSpec::sinusoid(24.0, 0.3, 100, 5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    write_csv(&s, &p).unwrap();
    let back = load_csv(&p).unwrap();
    assert_eq!(back.values, s.values);
    assert_eq!(back.timestamps, s.timestamps);
}

#[test]
fn bundled_sinusoid_matches_generator() {
    let s = load_csv(fixture("sinusoid.csv")).unwrap();
    let g = synth_series(&SynthSpec::sinusoid(24.0, 0.1, 2000, 24)).unwrap();
    assert_eq!(s.values, g.values);
}

#[test]
fn standardize_hand_computed() {
    // train rows 2, 4, 4, 6: mean 4, population variance 2
    let s = column_series(&[2.0, 4.0, 4.0, 6.0, 8.0]);
    let (z, scaler) = standardize(&s, 4).unwrap();
    assert_eq!(scaler.mean, vec![4.0]);
    assert!((scaler.std[0] - 2f64.sqrt()).abs() < 1e-12);
    let expect = [-2.0, 0.0, 0.0, 2.0, 4.0].map(|v: f64| (v / 2f64.sqrt()) as f32);
    for (a, b) in z.values.data().iter().zip(expect) {
        assert!((a - b).abs() < 1e-6);
    }
    let back = scaler.invert(&z.values);
    assert!(back.max_abs_diff(&s.values) < 1e-5);
}

#[test]
fn constant_train_split_gives_zeros() {
    let s = column_series(&[3.0; 10]);
    let (z, scaler) = standardize(&s, 6).unwrap();
    assert!(scaler.std[0] > 0.0);
    assert!(z.values.data().iter().all(|v| *v == 0.0));
}

#[test]
fn standardizer_uses_train_rows_only() {
    let s = column_series(&[0.0, 2.0, 100.0, -50.0]);
    let a = Standardizer::fit(&s.values, 0..2).unwrap();
    assert_eq!(a.mean, vec![1.0]);
    assert_eq!(a.std, vec![1.0]);
}

#[test]
fn window_count_single_split() {
    let s = synth_series(&SynthSpec::sinusoid(24.0, 0.0, 200, 0)).unwrap();
    let w = make_windows(&s.values, 0..200, 96, 96, 1).unwrap();
    assert_eq!(w.len(), 9);
    assert_eq!(w[0].anchor, 96);
    assert_eq!(w[8].lookback.row(0), s.values.row(8));
    assert_eq!(w[8].target.row(95), s.values.row(199));

    let w = make_windows(&s.values, 0..200, 8, 16, 16).unwrap();
    for pair in w.windows(2) {
        assert!(pair[1].anchor >= pair[0].anchor + 16);
    }
    assert!(matches!(make_windows(&s.values, 100..200, 96, 120, 1), Err(Error::EmptySplit { .. })));
}

#[test]
fn split_windows_reach_back_but_not_forward() {
    let raw = synth_series(&SynthSpec::sinusoid(24.0, 0.1, 1000, 1)).unwrap();
    let ds = Dataset::new(&raw, SplitSpec::Ett).unwrap();
    for split in Split::ALL {
        let range = ds.range(split);
        let w = ds.windows(split, 96, 48, 1).unwrap();
        assert_eq!(w.first().unwrap().anchor, range.start.max(96));
        assert_eq!(w.last().unwrap().anchor + 48, range.end);
        for win in &w {
            assert!(range.contains(&win.anchor) && win.anchor + 48 <= range.end);
        }
    }
    match ds.windows(Split::Val, 96, 500, 1) {
        Err(Error::EmptySplit { split, .. }) => assert_eq!(split, "val"),
        other => panic!("unexpected {other:?}"),
    }
}

fn brute_force(start: usize, end: usize, l: usize, h: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut next = 0;
    for a in 0..end {
        if a >= start && a >= l && a + h <= end && a >= next {
            out.push(a);
            next = a + stride;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]
    #[test]
    fn anchors_match_brute_force(
        start in 0usize..60, len in 0usize..80, l in 1usize..30, h in 1usize..30, stride in 1usize..6,
    ) {
        let end = start + len;
        prop_assert_eq!(anchors(start..end, l, h, stride), brute_force(start, end, l, h, stride));
    }
}

#[test]
fn synthetic_properties() {
    let s = synth_series(&SynthSpec::sinusoid(24.0, 0.0, 48, 3)).unwrap();
    for t in 0..24 {
        assert!((s.values.data()[t] - s.values.data()[t + 24]).abs() <= 1e-6);
    }

    let spec = SynthSpec {
        periods: vec![24.0, 168.0],
        amplitudes: vec![0.0, 0.0],
        noise: 0.5,
        length: 10_000,
        channels: 2,
        seed: 9,
    };
    let s = synth_series(&spec).unwrap();
    for c in 0..2 {
        let x: Vec<f64> = s.values.column(c).into_iter().map(f64::from).collect();
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
        assert!((sd - 0.5).abs() <= 0.05, "{sd}");
    }
    assert_eq!(synth_series(&spec).unwrap(), s);
    assert_ne!(s.values.column(0), s.values.column(1));
}

#[test]
fn anomalies_touch_only_the_mask() {
    let s = synth_series(&SynthSpec {
        periods: vec![24.0],
        amplitudes: vec![1.0],
        noise: 0.1,
        length: 300,
        channels: 3,
        seed: 2,
    })
    .unwrap();
    for kind in AnomalyKind::ALL {
        let spec = AnomalySpec::new(kind, 100, 30);
        let out = inject_anomaly(&s, &spec).unwrap();
        assert_eq!(out.mask.iter().filter(|m| **m).count(), 30);
        for t in 0..300 {
            let (a, b) = (s.values.row(t), out.series.values.row(t));
            if out.mask[t] {
                assert!(a.iter().zip(b).any(|(x, y)| x != y), "{kind:?} left row {t} untouched");
            } else {
                assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            }
        }
        let empty = inject_anomaly(&s, &AnomalySpec::new(kind, 50, 0)).unwrap();
        assert_eq!(empty.series, s);
    }
    assert!(inject_anomaly(&s, &AnomalySpec::new(AnomalyKind::ZeroImputation, 290, 11)).is_err());
}

#[test]
fn anomaly_shapes() {
    let s = synth_series(&SynthSpec::sinusoid(24.0, 0.0, 240, 4)).unwrap();
    let x = s.values.column(0);
    let sd = {
        let m = x.iter().map(|v| *v as f64).sum::<f64>() / 240.0;
        (x.iter().map(|v| (*v as f64 - m).powi(2)).sum::<f64>() / 240.0).sqrt()
    };

    let zero = inject_anomaly(&s, &AnomalySpec::new(AnomalyKind::ZeroImputation, 10, 5)).unwrap();
    assert!(zero.series.values.column(0)[10..15].iter().all(|v| *v == 0.0));

    let mut spec = AnomalySpec::new(AnomalyKind::AbruptOutlier, 10, 5);
    spec.magnitude = 4.0;
    let spike = inject_anomaly(&s, &spec).unwrap();
    let y = spike.series.values.column(0);
    for t in 10..15 {
        assert!(((y[t] - x[t]).abs() as f64 - 4.0 * sd).abs() < 1e-4);
    }

    // noiseless input: the distorted region is a pure sinusoid at 1.5x the
    // frequency, a quarter cycle ahead of where the original would be
    let dev = inject_anomaly(&s, &AnomalySpec::new(AnomalyKind::PeriodicityDeviation, 48, 48)).unwrap();
    let y = dev.series.values.column(0);
    let amp = 2f64.sqrt() * sd;
    let phase0 = (x[48] as f64 / amp).clamp(-1.0, 1.0);
    let expected_start = (phase0.asin() + std::f64::consts::FRAC_PI_2).sin() * amp;
    let alt = (std::f64::consts::PI - phase0.asin() + std::f64::consts::FRAC_PI_2).sin() * amp;
    assert!((y[48] as f64 - expected_start).abs() < 1e-3 || (y[48] as f64 - alt).abs() < 1e-3);
    // 16 steps at 1.5x frequency is exactly one cycle
    assert!((y[48 + 16] - y[48]).abs() < 1e-4);
    assert!((y[48 + 16] - x[48 + 16]).abs() > 1e-2 || (y[48 + 8] - x[48 + 8]).abs() > 1e-2);
}
