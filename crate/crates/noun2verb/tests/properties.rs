use std::collections::HashSet;

use proptest::prelude::*;

use noun2verb::data::{
    empirical_distribution, kfold_split, Dataset, Interpretation, SourceTag, SupervisedExample,
    Utterance,
};
use noun2verb::diachronic::{noun_ratio, normalize_zscore, PosTimeSeries};
use noun2verb::eval::{kl_divergence, topk_hit, KL_EPSILON};
use noun2verb::relations::RelationType;

fn example_with_votes(votes: &[u32]) -> SupervisedExample {
    SupervisedExample {
        utterance: Utterance::new("d", "c").unwrap(),
        gold: votes
            .iter()
            .enumerate()
            .map(|(i, &v)| (Interpretation::new(format!("v{i}"), RelationType::Agent), v))
            .collect(),
        source: SourceTag::Corpus,
        decade: None,
    }
}

proptest! {
    // Vote counts always induce a valid annotation distribution.
    #[test]
    fn empirical_distribution_is_always_valid(
        votes in proptest::collection::vec(0u32..50, 1..10),
    ) {
        let ex = example_with_votes(&votes);
        let result = empirical_distribution(&ex);
        if votes.iter().all(|v| *v == 0) {
            prop_assert!(result.is_err());
        } else {
            let dist = result.unwrap();
            prop_assert!(dist.validate().is_ok());
        }
    }

    // K-fold splitting partitions the supervised set exactly.
    #[test]
    fn kfold_partitions_exactly(n in 2usize..40, k_raw in 2usize..12, seed in 0u64..1000) {
        let k = k_raw.min(n);
        let mut ds = Dataset::default();
        for i in 0..n {
            ds.supervised.push(SupervisedExample {
                utterance: Utterance::new(format!("d{i}"), format!("c{i}")).unwrap(),
                gold: vec![(Interpretation::new("v", RelationType::Goal), 1)],
                source: SourceTag::Corpus,
                decade: None,
            });
        }
        let folds = kfold_split(&ds, k, seed).unwrap();
        let mut seen: Vec<String> = folds
            .iter()
            .flat_map(|(_, test)| test.iter().map(|e| e.utterance.denominal.clone()))
            .collect();
        seen.sort();
        let mut expected: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        expected.sort();
        prop_assert_eq!(seen, expected);
        for (train, test) in &folds {
            prop_assert_eq!(train.supervised.len() + test.len(), n);
            let sizes_ok = test.len() == n / k || test.len() == n / k + 1;
            prop_assert!(sizes_ok);
        }
    }

    // Top-k hits are monotone in k.
    #[test]
    fn topk_hits_monotone_in_k(
        ranking in proptest::collection::vec(0usize..20, 1..15),
        gold_item in 0usize..20,
    ) {
        let predictions: Vec<String> = ranking.iter().map(|i| format!("t{i}")).collect();
        let gold: HashSet<String> = [format!("t{gold_item}")].into();
        let mut previous = false;
        for k in 1..=predictions.len() {
            let hit = topk_hit(&predictions, &gold, k).unwrap();
            prop_assert!(hit || !previous, "hit went true -> false at k = {}", k);
            previous = hit;
        }
    }

    // Noun ratios live in [0,1]; z-scored ratios have mean 0 and unit
    // variance unless constant.
    #[test]
    fn noun_ratio_bounds_and_zscore(
        counts in proptest::collection::vec((0u64..100, 0u64..100), 2..40),
    ) {
        prop_assume!(counts.iter().any(|(n, v)| n + v > 0));
        let series = PosTimeSeries {
            word: "w".into(),
            years: (0..counts.len() as i32).map(|i| 1900 + i).collect(),
            noun_counts: counts.iter().map(|c| c.0).collect(),
            verb_counts: counts.iter().map(|c| c.1).collect(),
        };
        let (_, q) = noun_ratio(&series).unwrap();
        prop_assert!(q.iter().all(|x| (0.0..=1.0).contains(x)));
        if q.len() >= 2 {
            let z = normalize_zscore(&q).unwrap();
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    // Gibbs: smoothed KL against any model distribution is nonnegative and
    // vanishes only at equality on the support.
    #[test]
    fn kl_nonnegative_on_random_distributions(
        raw_p in proptest::collection::vec(0.01f64..1.0, 2..8),
        raw_q in proptest::collection::vec(0.01f64..1.0, 2..8),
    ) {
        let n = raw_p.len().min(raw_q.len());
        let norm = |v: &[f64]| -> Vec<f64> {
            let total: f64 = v.iter().sum();
            v.iter().map(|x| x / total).collect()
        };
        let p = norm(&raw_p[..n]);
        let q = norm(&raw_q[..n]);
        let kl = kl_divergence(&p, &q, KL_EPSILON).unwrap();
        prop_assert!(kl >= -1e-12);
        let self_kl = kl_divergence(&p, &p, KL_EPSILON).unwrap();
        prop_assert!(self_kl.abs() < 1e-9);
    }
}
