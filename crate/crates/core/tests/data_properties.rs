use std::io::Write;

use patchdecomp::data::{
    build_layout, load_csv, make_windows, patchify, synth_generate, unpatchify, write_csv,
    Channel, ColumnRoles, DataError, Split, SplitSpec, Subset, SynthSpec, TimeSeriesDataset,
    WindowSample,
};
use proptest::prelude::*;

#[test]
fn patch_count_closed_form_over_grid() {
    for l in 1..=64 {
        for h in 1..=32 {
            for p in 1..=16 {
                for d_hist in 0..=3 {
                    for d_futr in 0..=3 {
                        let layout = build_layout(l, h, p, d_hist, d_futr).unwrap();
                        let n = layout.entries().len();
                        assert_eq!(n, layout.n_patch(), "L={l} H={h} P={p}");
                        let mut seen = vec![false; n];
                        for e in layout.entries() {
                            assert!(!std::mem::replace(&mut seen[e.flat_index], true));
                        }
                        let per_var_hist = (0..layout.n_variables())
                            .map(|v| layout.variable_range(v).len())
                            .collect::<Vec<_>>();
                        for (v, count) in per_var_hist.into_iter().enumerate() {
                            let expected = if v > d_hist { layout.n_hist + layout.n_futr } else { layout.n_hist };
                            assert_eq!(count, expected);
                        }
                    }
                }
            }
        }
    }
}

fn random_sample(l: usize, h: usize, d_hist: usize, d_futr: usize, seed: u64) -> WindowSample {
    // cheap deterministic noise; bit patterns matter, not distribution
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 200.0 - 100.0
    };
    WindowSample {
        y_hist: (0..l).map(|_| next()).collect(),
        x_hist: (0..d_hist).map(|_| (0..l).map(|_| next()).collect()).collect(),
        x_futr: (0..d_futr).map(|_| (0..l + h).map(|_| next()).collect()).collect(),
        x_stat: vec![],
        y_future: vec![0.0; h],
        origin: l - 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn patchify_round_trip(l in 1usize..=64, h in 1usize..=32, p in 1usize..=16,
                           d_hist in 0usize..=3, d_futr in 0usize..=3, seed in any::<u64>()) {
        let layout = build_layout(l, h, p, d_hist, d_futr).unwrap();
        let sample = random_sample(l, h, d_hist, d_futr, seed);
        let patches = patchify(&sample, &layout).unwrap();
        let back = unpatchify(&patches, &layout).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.y_hist), bits(&sample.y_hist));
        for (a, b) in back.x_hist.iter().zip(&sample.x_hist) {
            prop_assert_eq!(bits(a), bits(b));
        }
        for (a, b) in back.x_futr.iter().zip(&sample.x_futr) {
            prop_assert_eq!(bits(a), bits(b));
        }
        // pads are exactly zero
        let zeros = patches.data().iter().filter(|&&v| v == 0.0).count();
        prop_assert!(zeros >= (1 + d_hist + d_futr) * layout.pad_hist + d_futr * layout.pad_futr);
    }

    #[test]
    fn windows_stay_inside_their_subset(len in 60usize..200, a in 0.2f64..0.6, b in 0.1f64..0.3,
                                        l in 1usize..20, h in 1usize..10, stride in 1usize..5) {
        let train_end = (len as f64 * a) as usize;
        let valid_end = train_end + (len as f64 * b) as usize;
        // target value == index lets us read positions back out of windows
        let ds = TimeSeriesDataset::new(
            (0..len as i64).collect(),
            Channel::new("y", (0..len).map(|i| i as f64).collect()),
            vec![],
            vec![],
            vec![],
            Split { train_end, valid_end },
        ).unwrap();
        for subset in [Subset::Train, Subset::Valid, Subset::Test] {
            let range = ds.subset_range(subset);
            let windows = make_windows(&ds, l, h, stride, subset);
            let expected = if range.len() >= h {
                (0..=(range.len() - h) / stride)
                    .filter(|k| range.start + k * stride >= l)
                    .count()
            } else { 0 };
            prop_assert_eq!(windows.len(), expected);
            for w in &windows {
                for &t in &w.y_future {
                    prop_assert!(range.contains(&(t as usize)));
                }
                prop_assert_eq!(w.y_hist.len(), l);
            }
            prop_assert!(windows.windows(2).all(|p| p[0].origin < p[1].origin));
        }
    }
}

#[test]
fn synthetic_csv_round_trips_bit_exactly() {
    let spec = SynthSpec { length: 100, ..SynthSpec::default() };
    let ds = synth_generate(&spec, &SplitSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.csv");
    write_csv(&ds, &path).unwrap();
    let back = load_csv(&path, &ColumnRoles::for_dataset(&ds), &SplitSpec::default()).unwrap();
    assert_eq!(back.timestamps, ds.timestamps);
    for (a, b) in back.variable_names().iter().zip(ds.variable_names()) {
        assert_eq!(*a, b);
    }
    for v in 0..3 {
        let (x, y) = (&back.variable(v).values, &ds.variable(v).values);
        assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 101);
}

fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(body.as_bytes()).unwrap();
    path
}

#[test]
fn epf_shaped_csv_with_calendar() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("timestamp,price,load,generation,unused\n");
    for i in 0..48 {
        body.push_str(&format!(
            "2016-01-{:02} {:02}:00:00,{},{},{},x\n",
            1 + i / 24,
            i % 24,
            30.0 + i as f64,
            1000.0 - i as f64,
            i as f64 * 0.5
        ));
    }
    let path = write_file(&dir, "epf.csv", &body);
    let roles = ColumnRoles {
        futr_exog: vec!["load".into(), "generation".into()],
        calendar: true,
        ..ColumnRoles::new("price")
    };
    let ds = load_csv(&path, &roles, &SplitSpec::default()).unwrap();
    assert_eq!(ds.d_futr(), 5);
    assert_eq!(ds.step_seconds, 3600);
    assert_eq!(
        ds.variable_names(),
        vec!["price", "load", "generation", "month", "week_day", "hour"]
    );
    // 2016-01-02 was a Saturday
    assert_eq!(ds.futr_exog[3].values[30], 5.0);
    assert_eq!(ds.futr_exog[4].values[30], 6.0);
}

#[test]
fn csv_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let gap = write_file(
        &dir,
        "gap.csv",
        "timestamp,y\n0,1\n3600,2\n10800,3\n14400,4\n",
    );
    let roles = ColumnRoles::new("y");
    let split = SplitSpec::Indices { train_end: 1, valid_end: 2 };
    assert!(matches!(load_csv(&gap, &roles, &split), Err(DataError::Frequency { .. })));

    let missing = write_file(&dir, "missing.csv", "timestamp,y\n0,1\n3600,\n7200,3\n");
    assert!(matches!(
        load_csv(&missing, &roles, &split),
        Err(DataError::MissingValue { row: 1, .. })
    ));

    let ok = write_file(&dir, "ok.csv", "timestamp,y\n0,1\n3600,2\n7200,3\n");
    let err = load_csv(&ok, &ColumnRoles::new("price"), &split).unwrap_err();
    assert_eq!(err, DataError::MissingColumn("price".into()));
    assert!(err.to_string().contains("price"));

    let stat = write_file(&dir, "stat.csv", "timestamp,y,id\n0,1,4\n3600,2,5\n7200,3,4\n");
    let roles = ColumnRoles { static_exog: vec!["id".into()], ..ColumnRoles::new("y") };
    assert!(matches!(load_csv(&stat, &roles, &split), Err(DataError::NonConstantStatic(_))));
}
