use bandit_frontier::env::{benign_from_parts, dim_span, BenignSpec, RewardKind, RANK_TOL};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simplex_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

fn benign_spec() -> impl Strategy<Value = BenignSpec> {
    (2usize..6, 2usize..5, any::<bool>()).prop_flat_map(|(a, z, bern)| {
        (
            prop::collection::vec(simplex_row(z), a),
            prop::collection::vec(0.0f64..=1.0, z),
        )
            .prop_map(move |(marginals, mu_z)| BenignSpec {
                marginals,
                mu_z,
                reward_kind: if bern { RewardKind::Bernoulli } else { RewardKind::Deterministic },
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn benign_parts_are_benign(spec in benign_spec()) {
        let env = benign_from_parts(&spec).unwrap();
        prop_assert!(env.is_conditionally_benign(1e-12));
        for a in 0..env.n_actions() {
            let expect: f64 = spec.marginals[a].iter().zip(&spec.mu_z).map(|(p, m)| p * m).sum();
            prop_assert!((env.mean_reward(a) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn dim_span_ignores_order_and_duplicates(
        rows in prop::collection::vec(simplex_row(4), 1..7),
        perm_seed in any::<u64>(),
        dup in 0usize..7,
    ) {
        let base = dim_span(&rows, RANK_TOL);
        let mut shuffled = rows.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        prop_assert_eq!(dim_span(&shuffled, RANK_TOL), base);
        shuffled.push(rows[dup % rows.len()].clone());
        prop_assert_eq!(dim_span(&shuffled, RANK_TOL), base);
    }

    #[test]
    fn identical_seeds_give_identical_traces(spec in benign_spec(), seed in any::<u64>()) {
        let env = benign_from_parts(&spec).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        for t in 0..500 {
            let a = t % env.n_actions();
            let x = env.sample_step(a, &mut r1);
            let y = env.sample_step(a, &mut r2);
            prop_assert_eq!(x.context, y.context);
            prop_assert_eq!(x.reward.to_bits(), y.reward.to_bits());
        }
    }
}

#[test]
fn monte_carlo_means_match_reduction() {
    let spec = BenignSpec {
        marginals: vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6], vec![1.0 / 3.0; 3]],
        mu_z: vec![0.9, 0.5, 0.2],
        reward_kind: RewardKind::Bernoulli,
    };
    let env = benign_from_parts(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    for a in 0..env.n_actions() {
        let sum: f64 = (0..n).map(|_| env.sample_step(a, &mut rng).reward).sum();
        let mu = env.mean_reward(a);
        let se = (mu * (1.0 - mu) / n as f64).sqrt();
        assert!((sum / n as f64 - mu).abs() <= 3.0 * se, "action {a}");
    }
}
