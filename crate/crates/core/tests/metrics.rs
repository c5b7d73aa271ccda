mod common;

use common::{hand_records, record};
use hyperexplain::metrics::{aggregate, reports_to_csv, size_histogram_csv, SparsityScope, CSV_HEADER};
use hyperexplain::record::{read_jsonl, write_jsonl, Method, ResultRecord};
use proptest::prelude::*;

#[test]
fn hand_records_aggregate_exactly() {
    let r = aggregate(&hand_records(), SparsityScope::Sub).unwrap();
    assert_eq!((r.num_records, r.num_found), (10, 8));
    assert_eq!(r.accuracy, 0.8);
    assert_eq!(r.size_mean, Some(1.875));
    assert_eq!(r.size_std, Some(1.109375f64.sqrt()));
    assert_eq!(r.sparsity_mean, Some(0.6640625));
    assert_eq!(r.sparsity_std, Some(0.04583740234375f64.sqrt()));
    assert_eq!(r.sparsity_full_mean, Some(0.970703125));
    assert_eq!(r.sparsity_full_std, Some((1.109375f64 / 4096.0).sqrt()));
    assert_eq!(r.time_mean_s, 0.5);
    assert_eq!(r.std_kind, "population");

    let full = aggregate(&hand_records(), SparsityScope::Full).unwrap();
    assert_eq!(full.sparsity_mean, r.sparsity_full_mean);
}

#[test]
fn csv_outputs() {
    let r = aggregate(&hand_records(), SparsityScope::Sub).unwrap();
    let csv = reports_to_csv(&[r]).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..5], &["hand", "explainer", "nhp", "0.8", "0.6640625"]);
    assert_eq!(size_histogram_csv(&hand_records()), "size,count\n1,4\n2,2\n3,1\n4,1\n");
}

#[test]
fn jsonl_round_trip_and_errors() {
    let recs = hand_records();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &recs).unwrap();
    assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), recs.len());
    assert_eq!(read_jsonl(&buf[..]).unwrap(), recs);
    let mut bad = buf.clone();
    bad.extend_from_slice(b"{\"dataset\": 1}\n");
    let err = read_jsonl(&bad[..]).unwrap_err().to_string();
    assert!(err.contains("line 11"), "{err}");
}

#[test]
fn aggregate_refuses_empty_and_mixed() {
    assert!(aggregate(&[], SparsityScope::Sub).is_err());
    let mut recs = hand_records();
    recs[3].method = Method::Random;
    assert!(aggregate(&recs, SparsityScope::Sub).is_err());
}

fn record_strategy() -> impl Strategy<Value = ResultRecord> {
    (0usize..100, prop::option::of(1usize..6), 6usize..40, 0.0f64..2.0)
        .prop_map(|(t, size, sub, wall)| record(t, size, sub, sub * 3, wall))
}

proptest! {
    #[test]
    fn aggregation_is_permutation_invariant(recs in prop::collection::vec(record_strategy(), 1..30), seed in any::<u64>()) {
        let a = aggregate(&recs, SparsityScope::Sub).unwrap();
        let mut shuffled = recs.clone();
        // deterministic Fisher-Yates from the seed
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let b = aggregate(&shuffled, SparsityScope::Sub).unwrap();
        prop_assert_eq!((a.num_records, a.num_found), (b.num_records, b.num_found));
        prop_assert_eq!(a.accuracy, b.accuracy);
        let close = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
            (None, None) => true,
            _ => false,
        };
        prop_assert!(close(a.sparsity_mean, b.sparsity_mean) && close(a.sparsity_std, b.sparsity_std));
        prop_assert!(close(a.size_mean, b.size_mean) && close(a.size_std, b.size_std));
        prop_assert!((a.time_mean_s - b.time_mean_s).abs() <= 1e-12);
    }

    #[test]
    fn sparsity_is_one_minus_size_ratio(recs in prop::collection::vec(record_strategy(), 1..30)) {
        let r = aggregate(&recs, SparsityScope::Sub).unwrap();
        let found: Vec<&ResultRecord> = recs.iter().filter(|r| r.found).collect();
        if found.is_empty() {
            prop_assert!(r.sparsity_mean.is_none() && r.size_mean.is_none());
        } else {
            let n = found.len() as f64;
            let mean_ratio: f64 = found.iter().map(|r| r.size.unwrap() as f64 / r.denominators.sub as f64).sum::<f64>() / n;
            prop_assert!((r.sparsity_mean.unwrap() - (1.0 - mean_ratio)).abs() <= 1e-12);
            prop_assert!(r.sparsity_mean.unwrap() > 0.0 && r.sparsity_mean.unwrap() < 1.0);
        }
    }
}
