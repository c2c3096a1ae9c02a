use bandit_frontier::instances::{
    agnostic_variant, hard_benign, hard_nonbenign_variant, marginal_distance, pe_adversarial,
    perturb_marginals, SplitSpec,
};
use proptest::prelude::*;

fn sizes() -> impl Strategy<Value = (usize, usize, usize, f64)> {
    (3usize..12, 2usize..8)
        .prop_flat_map(|(a, z)| (Just(a), Just(z), 1..z, 0.001f64..0.0625))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn benign_pairs_share_marginals((a, z, z0, d) in sizes(), a0 in 0usize..12) {
        let a0 = a0 % a;
        prop_assume!(a0 != 1);
        let split = SplitSpec::new(z0, d);
        let base = hard_benign(a, z, split).unwrap();
        let variant = hard_nonbenign_variant(a, z, split, a0).unwrap();
        prop_assert!(base.is_conditionally_benign(1e-12));
        prop_assert!(!variant.is_conditionally_benign(1e-12));
        prop_assert_eq!(base.marginals(), variant.marginals());
        for act in 0..a {
            if act != a0 {
                prop_assert_eq!(base.rewards()[act].clone(), variant.rewards()[act].clone());
            }
        }
    }

    #[test]
    fn agnostic_pairs_share_rewards((a, z, z0, d) in sizes(), a0 in 0usize..12) {
        let a0 = a0 % a;
        prop_assume!(a0 != 1);
        let split = SplitSpec::new(z0, d);
        let base = agnostic_variant(a, z, split, None).unwrap();
        let moved = agnostic_variant(a, z, split, Some(a0)).unwrap();
        prop_assert!(base.is_conditionally_benign(1e-12));
        prop_assert!(moved.is_conditionally_benign(1e-12));
        prop_assert_eq!(base.rewards(), moved.rewards());
        for act in 0..a {
            let dist: f64 = base.marginal(act).iter().zip(moved.marginal(act)).map(|(p, q)| (p - q).abs()).sum();
            let expect = if act == a0 { 8.0 * d } else { 0.0 };
            prop_assert!((dist - expect).abs() < 1e-12, "action {} distance {}", act, dist);
        }
    }

    #[test]
    fn perturbation_stays_within_epsilon(
        rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 1..8),
        eps in 0.0f64..0.5,
    ) {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| { let s: f64 = r.iter().sum(); r.into_iter().map(|x| x / s).collect() })
            .collect();
        let out = perturb_marginals(&rows, eps).unwrap();
        let direct = rows
            .iter()
            .zip(&out)
            .map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        prop_assert!(direct <= eps + 1e-12);
        prop_assert!((marginal_distance(&rows, &out) - direct).abs() < 1e-15);
        for q in &out {
            prop_assert!(q.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pe_adversarial_is_not_benign(z in 3usize..7, extra in 1usize..4, d in 0.01f64..0.99) {
        let env = pe_adversarial(z + extra, z, d).unwrap();
        prop_assert!(!env.is_conditionally_benign(1e-12));
        prop_assert_eq!(env.best_action(), 0);
    }
}
