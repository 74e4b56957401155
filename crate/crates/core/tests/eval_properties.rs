use std::collections::{BTreeMap, BTreeSet};

use chronocost::eval::{
    build_buckets, classification_metrics, kfold_split, mape, paired_t_test, penalty_error, plan_evaluation, FoldConfig,
    PenaltyMatrix,
};
use proptest::prelude::*;

fn buckets_pair(k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..80).prop_flat_map(move |n| {
        (
            prop::collection::vec(1..=k, n),
            prop::collection::vec(1..=k, n),
        )
    })
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("M{i:04}")).collect()
}

proptest! {
    #[test]
    fn penalty_is_mean_bucket_distance((actual, predicted) in buckets_pair(5)) {
        let want = actual.iter().zip(&predicted).map(|(a, p)| a.abs_diff(*p) as f64).sum::<f64>() / actual.len() as f64;
        let got = penalty_error(&actual, &predicted, &PenaltyMatrix::absolute_difference(5)).unwrap();
        prop_assert!((got - want).abs() <= 1e-12);
    }

    #[test]
    fn micro_recall_equals_accuracy((actual, predicted) in buckets_pair(5)) {
        let m = classification_metrics(&actual, &predicted, 5).unwrap();
        let hits = actual.iter().zip(&predicted).filter(|(a, p)| a == p).count() as f64;
        prop_assert!((m.accuracy - hits / actual.len() as f64).abs() <= 1e-12);
        let mut micro = 0.0;
        for (b, r) in m.recall.iter().enumerate() {
            let support = actual.iter().filter(|&&a| a == b + 1).count();
            prop_assert_eq!(r.is_none(), support == 0);
            micro += r.unwrap_or(0.0) * support as f64;
        }
        prop_assert!((micro / actual.len() as f64 - m.accuracy).abs() <= 1e-12);
    }

    #[test]
    fn mape_ignores_member_order(pairs in prop::collection::vec((0u32..1_000_000, 0u32..1_000_000), 1..60), rot in 0usize..60) {
        let actual: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let predicted: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        let r = rot % pairs.len();
        let mut a2 = actual.clone();
        let mut p2 = predicted.clone();
        a2.rotate_left(r);
        p2.rotate_left(r);
        let x = mape(&actual, &predicted).unwrap();
        let y = mape(&a2, &p2).unwrap();
        prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        let direct = pairs.iter().map(|&(a, p)| (f64::from(p) - f64::from(a)).abs() / (f64::from(a) + 100.0)).sum::<f64>() / pairs.len() as f64;
        prop_assert!((x - direct).abs() <= 1e-9 * direct.max(1.0));
    }

    #[test]
    fn buckets_split_dollars_evenly(costs in prop::collection::vec(0u64..5_000_000, 5..300), k in 1usize..8) {
        let map: BTreeMap<String, u64> = costs.iter().enumerate().map(|(i, &c)| (format!("M{i:04}"), c)).collect();
        let positive = costs.iter().filter(|&&c| c > 0).count();
        prop_assume!(positive >= k);
        let scheme = build_buckets(&map, k).unwrap();
        let total: u64 = costs.iter().sum();
        let mass = scheme.bucket_mass(&map);
        prop_assert_eq!(mass.iter().sum::<u64>(), total);
        prop_assert!(scheme.boundaries.windows(2).all(|w| w[0] <= w[1]));

        let mut order: Vec<(u64, &String)> = map.iter().map(|(m, &c)| (c, m)).collect();
        order.sort();
        // Sweep order never steps back a bucket.
        prop_assert!(order.windows(2).all(|w| scheme.members[w[0].1] <= scheme.members[w[1].1]));
        let straddler = |b: usize| order.iter().find(|(_, m)| scheme.members[*m] > b).map_or(0, |(c, _)| *c);
        for b in 1..=k {
            let deviation = (mass[b - 1] as f64 - total as f64 / k as f64).abs();
            let slack = straddler(b).max(if b > 1 { straddler(b - 1) } else { 0 });
            prop_assert!(deviation <= slack as f64, "bucket {b}: {deviation} > {slack}");
        }
    }

    #[test]
    fn folds_partition_members(n in 20usize..400, k in 2usize..20, seed in any::<u64>()) {
        let members = ids(n);
        let plan = kfold_split(&members, k, seed).unwrap();
        prop_assert_eq!(plan.assignment.len(), n);
        let sizes: Vec<usize> = plan.folds().iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(&kfold_split(&members, k, seed).unwrap(), &plan);
    }

    #[test]
    fn holdout_never_enters_folds(n in 60usize..400, seed in any::<u64>()) {
        let members = ids(n);
        let plan = plan_evaluation(&members, &FoldConfig::default(), seed, None).unwrap();
        let evaluated: BTreeSet<&String> = plan.folds.assignment.keys().collect();
        prop_assert!(plan.holdout.iter().all(|m| !evaluated.contains(m)));
        prop_assert_eq!(plan.holdout.len() + evaluated.len(), n);
        prop_assert_eq!(plan.holdout.len(), (n as f64 * 0.3).round() as usize);
    }

    #[test]
    fn t_test_is_antisymmetric(a in prop::collection::vec(0.0f64..10.0, 3..25), shift in 0.01f64..1.0) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x + shift * (1.0 + (i % 3) as f64)).collect();
        let ab = paired_t_test(&a, &b, 3).unwrap();
        let ba = paired_t_test(&b, &a, 3).unwrap();
        prop_assert!((ab.t + ba.t).abs() <= 1e-9 * ab.t.abs().max(1.0));
        prop_assert!((ab.p_two_sided - ba.p_two_sided).abs() <= 1e-12);
        prop_assert!(ab.p_bonferroni <= 1.0 && ab.p_bonferroni >= ab.p_two_sided);
    }
}

#[test]
fn different_seeds_give_different_plans() {
    let members = ids(200);
    let base = kfold_split(&members, 20, 0).unwrap();
    let same = (1..=100).filter(|&s| kfold_split(&members, 20, s).unwrap().assignment == base.assignment).count();
    assert_eq!(same, 0);
}
