use bandit_frontier::policy::Policy;
use bandit_frontier::ucb::{cucb_index, ucb_index, Cucb, UcbState};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reward_one_never_lowers_mean_and_bonus_shrinks(
        count in 0u64..500,
        frac in 0.0f64..=1.0,
        n_actions in 1usize..10,
    ) {
        let sum = frac * count as f64;
        let mut s = UcbState::new(n_actions, 0.1, 1000).with_stats(0, count, sum);
        let (mean0, bonus0) = (s.mean(0), s.bonus(0));
        s.record(0, 1.0);
        prop_assert!(s.mean(0) >= mean0 - 1e-15);
        if count >= 1 {
            prop_assert!(s.bonus(0) < bonus0);
        }
        prop_assert!(ucb_index(&s, 0).is_finite());
    }

    #[test]
    fn cucb_statistics_ignore_the_action(
        steps in prop::collection::vec((0usize..4, 0usize..4, 0usize..3, 0.0f64..=1.0), 1..60),
    ) {
        let q = vec![
            vec![0.5, 0.5, 0.0],
            vec![0.2, 0.3, 0.5],
            vec![0.0, 0.0, 1.0],
            vec![1.0 / 3.0; 3],
        ];
        let mut x = Cucb::new(q.clone(), 0.1, 1000);
        let mut y = Cucb::new(q, 0.1, 1000);
        for (t, &(a1, a2, z, r)) in steps.iter().enumerate() {
            x.select(t as u64 + 1);
            y.select(t as u64 + 1);
            x.observe(a1, z, r);
            y.observe(a2, z, r);
        }
        for z in 0..3 {
            prop_assert_eq!(x.state().count(z), y.state().count(z));
            prop_assert_eq!(x.state().sum(z).to_bits(), y.state().sum(z).to_bits());
        }
        for a in 0..4 {
            prop_assert_eq!(cucb_index(x.state(), a).to_bits(), cucb_index(y.state(), a).to_bits());
        }
    }
}
