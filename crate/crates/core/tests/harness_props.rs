use bandit_frontier::harness::{curve_csv, run_simulation, MarginalSource, PolicySpec, RunConfig};
use bandit_frontier::instances::{hard_benign, SplitSpec};
use bandit_frontier::Environment;
use proptest::prelude::*;

fn env() -> Environment {
    hard_benign(8, 4, SplitSpec::halves(4, 0.1)).unwrap()
}

fn policies() -> Vec<PolicySpec> {
    vec![
        PolicySpec::ucb(0.1),
        PolicySpec::cucb(0.1, MarginalSource::True),
        PolicySpec::pe(0.1, MarginalSource::True, Default::default()),
        PolicySpec::db(PolicySpec::cucb(0.1, MarginalSource::True), PolicySpec::ucb(0.1)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn config_and_seed_fix_every_byte(seed in any::<u64>(), which in 0usize..4) {
        let cfg = RunConfig::new(env(), policies()[which].clone(), 500)
            .with_replicates(3)
            .with_seed(seed);
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        prop_assert_eq!(curve_csv(&[&a]), curve_csv(&[&b]));
    }

    #[test]
    fn regret_is_between_zero_and_t_times_max_gap(seed in any::<u64>(), which in 0usize..4) {
        let e = env();
        let max_gap = e.gaps().into_iter().fold(0.0, f64::max);
        let cfg = RunConfig::new(e, policies()[which].clone(), 300).with_seed(seed).every_round();
        let res = run_simulation(&cfg).unwrap();
        for rep in &res.replicates {
            let mut prev = 0.0;
            for (&t, &r) in res.curve.checkpoints.iter().zip(&rep.regret) {
                prop_assert!(r >= prev);
                prop_assert!(r <= t as f64 * max_gap + 1e-9);
                prev = r;
            }
        }
    }
}

#[test]
fn disjoint_replicate_halves_agree() {
    let cfg = RunConfig::new(env(), PolicySpec::ucb(0.1), 2000)
        .with_replicates(80)
        .with_seed(5);
    let res = run_simulation(&cfg).unwrap();
    let finals = res.curve.finals();
    let (a, b) = finals.split_at(40);
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let var = |x: &[f64]| {
        let m = mean(x);
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    };
    let pooled = ((var(a) + var(b)) / 40.0).sqrt();
    assert!((mean(a) - mean(b)).abs() <= 4.0 * pooled);
}
