use pixnorm::dataset::{self, Dataset, LoadOptions};
use proptest::prelude::*;

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..40, 1usize..10).prop_flat_map(|(rows, cols)| {
        (
            proptest::collection::vec(-1e9f64..1e9, rows * cols),
            proptest::collection::vec(0u8..2, rows),
        )
            .prop_map(move |(values, labels)| {
                let names = (0..cols).map(|j| format!("col{j}")).collect();
                Dataset::new(values, labels, names).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn csv_round_trip(d in dataset_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.write_csv(&path, "churn").unwrap();
        let back = dataset::load_csv(&path, &LoadOptions::new("churn")).unwrap();
        prop_assert_eq!(back.values(), d.values());
        prop_assert_eq!(back.labels(), d.labels());
        prop_assert_eq!(back.column_names(), d.column_names());
    }

    #[test]
    fn stats_match_naive_scan(rows in 1usize..=100, cols in 1usize..=100, seed in any::<u64>()) {
        let mut rng = pixnorm::rng::SplitMix64::new(seed);
        let values: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-1e3, 1e3)).collect();
        let names = (0..cols).map(|j| format!("c{j}")).collect();
        let d = Dataset::new(values.clone(), vec![0; rows], names).unwrap();
        let s = dataset::compute_stats(&d).unwrap();
        let (mut gmin, mut gmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..cols {
            let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for i in 0..rows {
                let v = values[i * cols + j];
                lo = lo.min(v);
                hi = hi.max(v);
                sum += v;
            }
            prop_assert_eq!(s.min[j], lo);
            prop_assert_eq!(s.max[j], hi);
            prop_assert!((s.mean[j] - sum / rows as f64).abs() <= 1e-9 * (1.0 + hi.abs().max(lo.abs())));
            prop_assert!(s.min[j] <= s.mean[j] && s.mean[j] <= s.max[j]);
            gmin = gmin.min(lo);
            gmax = gmax.max(hi);
        }
        prop_assert_eq!(s.global_min, gmin);
        prop_assert_eq!(s.global_max, gmax);
    }

    #[test]
    fn synthetic_labels_are_binary_and_balanced(rows in 2usize..500, cols in 1usize..20,
                                                seed in any::<u64>(), sep in 0.0f64..10.0) {
        let d = dataset::synth_churn(rows, cols, seed, sep).unwrap();
        let ones = d.labels().iter().filter(|&&l| l == 1).count();
        let zeros = d.labels().iter().filter(|&&l| l == 0).count();
        prop_assert_eq!(ones + zeros, d.rows());
        prop_assert!(ones.abs_diff(zeros) <= 1);
    }

    #[test]
    fn label_spellings(word in prop_oneof![
        Just("1"), Just("true"), Just("True."), Just("YES"), Just(" yes "), Just("1.0")
    ]) {
        prop_assert_eq!(dataset::parse_label(word), Some(1));
    }
}

#[test]
fn churn_style_file_keeps_numeric_columns_only() {
    let csv = "State,Account Length,Phone,Intl Plan,Day Mins,Churn?\n\
               KS,128,382-4657,no,265.1,False.\n\
               OH,107,371-7191,yes,161.6,True.\n";
    let mut opts = LoadOptions::new("Churn?");
    opts.drop_columns = vec!["Phone".into()];
    let d = dataset::read_csv(csv.as_bytes(), &opts).unwrap();
    assert_eq!(d.column_names(), ["Account Length", "Day Mins"]);
    assert_eq!(d.values(), [128.0, 265.1, 107.0, 161.6]);
    assert_eq!(d.labels(), [0, 1]);
}

#[test]
fn label_column_matches_case_insensitively() {
    let d = dataset::read_csv("a,Churn\n1,True.\n".as_bytes(), &LoadOptions::new("churn")).unwrap();
    assert_eq!(d.labels(), [1]);
}
