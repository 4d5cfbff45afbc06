use std::collections::BTreeMap;

use ecgnet::ingest::{compute_norm_stats, denormalize, normalize, segment, EcgRecord, LabelScheme, LabelTrack};
use ecgnet::metrics::{confusion_matrix, overall_metrics, per_class_metrics};
use ecgnet::model::{checkpoint, ModelConfig, ModelGraph};
use ecgnet::training::{kfold_split, oversample_indices, oversampled_counts};
use proptest::prelude::*;

fn labels_from_counts(counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn segments_tile_the_record(
        samples in prop::collection::vec(-5.0f64..5.0, 1..400),
        rate in 1u32..50,
        secs in 0.1f64..3.0,
    ) {
        let scheme = LabelScheme::mit_bih();
        let rec = EcgRecord::new("r", rate, samples.clone()).unwrap()
            .with_labels(LabelTrack::PerRecord(scheme.class(2).unwrap()));
        match segment(&rec, secs) {
            Ok(segs) => {
                let w = (secs * rate as f64).round() as usize;
                prop_assert_eq!(segs.len(), samples.len() / w);
                for (i, s) in segs.iter().enumerate() {
                    prop_assert_eq!(&s.values[..], &samples[i * w..(i + 1) * w]);
                    prop_assert_eq!(s.label.index, 2);
                }
            }
            // the window rounds to zero samples
            Err(_) => prop_assert!((secs * rate as f64).round() < 1.0),
        }
    }

    #[test]
    fn per_window_labels_keep_only_listed_windows(
        n_windows in 1usize..20,
        listed in prop::collection::btree_set(0usize..20, 0..20),
    ) {
        let scheme = LabelScheme::af_binary();
        let map: BTreeMap<usize, _> = listed.iter().map(|&i| (i, scheme.class(i % 2).unwrap())).collect();
        let rec = EcgRecord::new("r", 4, vec![1.0; n_windows * 8]).unwrap()
            .with_labels(LabelTrack::PerWindow(map));
        let segs = segment(&rec, 2.0).unwrap();
        prop_assert_eq!(segs.len(), listed.iter().filter(|&&i| i < n_windows).count());
    }

    #[test]
    fn normalization_standardizes_and_inverts(
        values in prop::collection::vec(-100.0f64..100.0, 2..300),
    ) {
        let scheme = LabelScheme::af_binary();
        let rec = EcgRecord::new("r", 1, values).unwrap()
            .with_labels(LabelTrack::PerRecord(scheme.class(0).unwrap()));
        let segs = segment(&rec, 1.0).unwrap();
        let stats = compute_norm_stats(&segs).unwrap();
        prop_assume!(stats.std > 1e-6);
        let normed: Vec<_> = segs.iter().map(|s| normalize(s, &stats).unwrap()).collect();
        let after = compute_norm_stats(&normed).unwrap();
        prop_assert!(after.mean.abs() < 1e-9);
        prop_assert!((after.std - 1.0).abs() < 1e-9);
        for (orig, n) in segs.iter().zip(&normed) {
            let back = denormalize(n, &stats);
            prop_assert!(!back.normalized);
            for (a, b) in orig.values.iter().zip(&back.values) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn kfold_is_a_balanced_partition(n in 2usize..400, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let folds = kfold_split(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0u32; n];
        for f in &folds {
            for &i in &f.test_indices {
                seen[i] += 1;
            }
            prop_assert_eq!(f.train_indices.len() + f.test_indices.len(), n);
            prop_assert!(f.train_indices.iter().all(|i| f.test_indices.binary_search(i).is_err()));
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes: Vec<usize> = folds.iter().map(|f| f.test_indices.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(&folds, &kfold_split(n, k, seed).unwrap());
    }

    #[test]
    fn oversampling_follows_the_ratio_rule(
        counts in prop::collection::vec(0usize..60, 2..6),
        seed in any::<u64>(),
    ) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        let n_max = *counts.iter().max().unwrap();
        let expected: Vec<usize> = counts.iter().map(|&n| {
            if n == 0 || n == n_max {
                n
            } else if 2 * n <= n_max {
                n * ((2 * n_max + n) / (2 * n))
            } else {
                n_max
            }
        }).collect();
        prop_assert_eq!(&oversampled_counts(&counts), &expected);

        let labels = labels_from_counts(&counts);
        let idx = oversample_indices(&labels, counts.len(), seed).unwrap();
        let mut tally = vec![0usize; counts.len()];
        for &i in &idx {
            tally[labels[i]] += 1;
        }
        prop_assert_eq!(&tally, &expected);
        // originals first, in order
        prop_assert!(idx[..labels.len()].iter().enumerate().all(|(p, &i)| p == i));
        // the largest class never grows
        let big = counts.iter().position(|&c| c == n_max).unwrap();
        prop_assert_eq!(tally[big], n_max);
    }

    #[test]
    fn metrics_stay_in_range(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 0..200),
    ) {
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let cm = confusion_matrix(&truth, &pred, 5).unwrap();
        prop_assert_eq!(cm.total() as usize, truth.len());
        for c in 0..5 {
            let m = per_class_metrics(&cm, c);
            for v in [m.acc, m.sen, m.pre, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(m.f1 <= m.sen.max(m.pre) + 1e-15);
        }
        let o = overall_metrics(&cm);
        prop_assert!((0.0..=1.0).contains(&o.f1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), len in 32usize..80, k in 2usize..6) {
        let m = ModelGraph::build(&ModelConfig::tiny(len, k), seed).unwrap();
        let bytes = checkpoint::encode(&m);
        let back = checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(checkpoint::encode(&back), bytes);
    }
}
