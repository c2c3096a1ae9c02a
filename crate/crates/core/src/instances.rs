//! Named instance families used by the lower-bound and linear-regret constructions.
//!
//! Action `1` is the distinguished arm of the two-block families
//! ([`hard_benign`], [`hard_nonbenign_variant`], [`agnostic_variant`]); the
//! block `Z₀` is the first `z0_size` contexts and `Z₁` the rest, with mass
//! spread uniformly inside each block.

use crate::env::{ActionId, EnvError, Environment, RewardModel};
use thiserror::Error;

/// The distinguished arm of the two-block families.
pub const SPECIAL_ARM: ActionId = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("perturbation of size {epsilon} is infeasible for row {row}: {detail}")]
    InfeasiblePerturbation {
        row: usize,
        epsilon: f64,
        detail: String,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Split of the context space into `Z₀ = {0..z0_size}` and its complement, plus the gap parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub z0_size: usize,
    pub delta: f64,
}

impl SplitSpec {
    pub fn new(z0_size: usize, delta: f64) -> Self {
        Self { z0_size, delta }
    }

    /// `Z₀` of size `⌊n_contexts / 2⌋`.
    pub fn halves(n_contexts: usize, delta: f64) -> Self {
        Self::new(n_contexts / 2, delta)
    }

    fn check(&self, n_contexts: usize, max_delta: f64, family: &str) -> Result<(), InstanceError> {
        if n_contexts < 2 {
            return Err(InstanceError::Parameter(format!(
                "{family}: need at least 2 contexts, got {n_contexts}"
            )));
        }
        if self.z0_size == 0 || self.z0_size >= n_contexts {
            return Err(InstanceError::Parameter(format!(
                "{family}: z0_size {} must lie in [1, {}]",
                self.z0_size,
                n_contexts - 1
            )));
        }
        if !(self.delta > 0.0 && self.delta <= max_delta) {
            return Err(InstanceError::Parameter(format!(
                "{family}: delta {} must lie in (0, {max_delta}]",
                self.delta
            )));
        }
        Ok(())
    }

    fn in_z0(&self, z: usize) -> bool {
        z < self.z0_size
    }
}

fn block_row(n_contexts: usize, split: &SplitSpec, mass_z0: f64) -> Vec<f64> {
    let n0 = split.z0_size as f64;
    let n1 = (n_contexts - split.z0_size) as f64;
    (0..n_contexts)
        .map(|z| {
            if split.in_z0(z) {
                mass_z0 / n0
            } else {
                (1.0 - mass_z0) / n1
            }
        })
        .collect()
}

fn block_rewards(n_contexts: usize, split: &SplitSpec, p_z0: f64) -> Vec<RewardModel> {
    (0..n_contexts)
        .map(|z| RewardModel::Bernoulli {
            p: if split.in_z0(z) { p_z0 } else { 0.25 },
        })
        .collect()
}

fn check_actions(n_actions: usize, family: &str) -> Result<(), InstanceError> {
    if n_actions < 2 {
        return Err(InstanceError::Parameter(format!(
            "{family}: need at least 2 actions, got {n_actions}"
        )));
    }
    Ok(())
}

fn check_a0(a0: ActionId, n_actions: usize) -> Result<(), InstanceError> {
    if a0 == SPECIAL_ARM {
        return Err(InstanceError::Parameter(format!(
            "a0 must differ from the distinguished arm {SPECIAL_ARM}"
        )));
    }
    if a0 >= n_actions {
        return Err(InstanceError::Parameter(format!(
            "a0 = {a0} out of range for {n_actions} actions"
        )));
    }
    Ok(())
}

fn lower_bound_marginals(n_actions: usize, n_contexts: usize, split: &SplitSpec) -> Vec<Vec<f64>> {
    (0..n_actions)
        .map(|a| {
            let mass = if a == SPECIAL_ARM {
                0.5 + 2.0 * split.delta
            } else {
                0.5
            };
            block_row(n_contexts, split, mass)
        })
        .collect()
}

/// Conditionally benign two-block instance: arm 1 puts `1/2 + 2Δ` on `Z₀`, the
/// rest `1/2`; rewards are Bernoulli(3/4) on `Z₀` and Bernoulli(1/4) on `Z₁`.
pub fn hard_benign(
    n_actions: usize,
    n_contexts: usize,
    split: SplitSpec,
) -> Result<Environment, InstanceError> {
    check_actions(n_actions, "d1-benign")?;
    split.check(n_contexts, 0.25, "d1-benign")?;
    let marginals = lower_bound_marginals(n_actions, n_contexts, &split);
    let rewards = vec![block_rewards(n_contexts, &split, 0.75); n_actions];
    Ok(Environment::new(marginals, rewards)?)
}

/// [`hard_benign`] with the conditional of arm `a0` on `Z₀` raised to `3/4 + 4Δ`.
pub fn hard_nonbenign_variant(
    n_actions: usize,
    n_contexts: usize,
    split: SplitSpec,
    a0: ActionId,
) -> Result<Environment, InstanceError> {
    check_actions(n_actions, "d1-variant")?;
    // 3/4 + 4Δ must stay a probability
    split.check(n_contexts, 1.0 / 16.0, "d1-variant")?;
    check_a0(a0, n_actions)?;
    let marginals = lower_bound_marginals(n_actions, n_contexts, &split);
    let rewards = (0..n_actions)
        .map(|a| {
            let p = if a == a0 {
                0.75 + 4.0 * split.delta
            } else {
                0.75
            };
            block_rewards(n_contexts, &split, p)
        })
        .collect();
    Ok(Environment::new(marginals, rewards)?)
}

/// Benign family with shared conditionals where only the marginals move:
/// arm 1 puts `1/2 + 2Δ` on `Z₀`, arm `a0` (when given) `1/2 + 4Δ`, the rest `1/2`.
pub fn agnostic_variant(
    n_actions: usize,
    n_contexts: usize,
    split: SplitSpec,
    a0: Option<ActionId>,
) -> Result<Environment, InstanceError> {
    check_actions(n_actions, "d2")?;
    split.check(n_contexts, 0.125, "d2")?;
    if let Some(a0) = a0 {
        check_a0(a0, n_actions)?;
    }
    let marginals = (0..n_actions)
        .map(|a| {
            let mass = if a == SPECIAL_ARM {
                0.5 + 2.0 * split.delta
            } else if Some(a) == a0 {
                0.5 + 4.0 * split.delta
            } else {
                0.5
            };
            block_row(n_contexts, &split, mass)
        })
        .collect();
    let rewards = vec![block_rewards(n_contexts, &split, 0.75); n_actions];
    Ok(Environment::new(marginals, rewards)?)
}

/// `Δ = (1/40)·√((|A| − 1)/T)`, the gap used with [`agnostic_variant`].
pub fn default_agnostic_delta(n_actions: usize, horizon: u64) -> f64 {
    ((n_actions as f64 - 1.0) / horizon as f64).sqrt() / 40.0
}

/// Instance on which exact-design phased elimination never plays the optimal arm.
///
/// Action 0 is `a*` with marginal `(e₁ + e₂)/2` and reward 1 on both contexts;
/// action `i` in `1..=|Z|` has marginal `e_i` and reward 0, except action `|Z|`
/// which pays `1 − Δ`. Actions beyond `|Z|` replicate action 1.
pub fn pe_adversarial(
    n_actions: usize,
    n_contexts: usize,
    delta: f64,
) -> Result<Environment, InstanceError> {
    if n_contexts < 3 {
        return Err(InstanceError::Parameter(format!(
            "pe-adversarial: need at least 3 contexts, got {n_contexts}"
        )));
    }
    if n_actions < n_contexts + 1 {
        return Err(InstanceError::Parameter(format!(
            "pe-adversarial: need at least {} actions, got {n_actions}",
            n_contexts + 1
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(InstanceError::Parameter(format!(
            "pe-adversarial: delta {delta} must lie in (0, 1)"
        )));
    }
    let zero = RewardModel::Deterministic { v: 0.0 };
    let mut marginals = Vec::with_capacity(n_actions);
    let mut rewards = Vec::with_capacity(n_actions);

    let mut star = vec![0.0; n_contexts];
    star[0] = 0.5;
    star[1] = 0.5;
    let mut star_rewards = vec![zero; n_contexts];
    star_rewards[0] = RewardModel::Deterministic { v: 1.0 };
    star_rewards[1] = RewardModel::Deterministic { v: 1.0 };
    marginals.push(star);
    rewards.push(star_rewards);

    for i in 0..n_contexts {
        let mut row = vec![0.0; n_contexts];
        row[i] = 1.0;
        let mut r = vec![zero; n_contexts];
        if i == n_contexts - 1 {
            r[i] = RewardModel::Deterministic { v: 1.0 - delta };
        }
        marginals.push(row);
        rewards.push(r);
    }
    for _ in n_contexts + 1..n_actions {
        marginals.push(marginals[1].clone());
        rewards.push(rewards[1].clone());
    }
    Ok(Environment::new(marginals, rewards)?)
}

/// Moves `ε/2` mass in every row from its heaviest context to its lightest
/// other context (lowest index on ties), giving per-row L1 distance exactly `ε`.
pub fn perturb_marginals(
    marginals: &[Vec<f64>],
    epsilon: f64,
) -> Result<Vec<Vec<f64>>, InstanceError> {
    if !(0.0..=2.0).contains(&epsilon) {
        return Err(InstanceError::Parameter(format!(
            "epsilon {epsilon} must lie in [0, 2]"
        )));
    }
    if epsilon == 0.0 {
        return Ok(marginals.to_vec());
    }
    let shift = epsilon / 2.0;
    marginals
        .iter()
        .enumerate()
        .map(|(row_idx, row)| {
            if row.len() < 2 {
                return Err(InstanceError::InfeasiblePerturbation {
                    row: row_idx,
                    epsilon,
                    detail: "a single context leaves nowhere to move mass".into(),
                });
            }
            let hi = argmax_lowest(row);
            let lo = (0..row.len())
                .filter(|&z| z != hi)
                .fold(None, |best: Option<usize>, z| match best {
                    Some(b) if row[b] <= row[z] => Some(b),
                    _ => Some(z),
                })
                .expect("at least two contexts");
            if row[hi] < shift {
                return Err(InstanceError::InfeasiblePerturbation {
                    row: row_idx,
                    epsilon,
                    detail: format!("largest entry {} is below ε/2 = {shift}", row[hi]),
                });
            }
            let mut out = row.clone();
            out[hi] -= shift;
            out[lo] += shift;
            Ok(out)
        })
        .collect()
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (z, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = z;
        }
    }
    best
}

/// `sup_a Σ_z |p_a(z) − q_a(z)|`.
pub fn marginal_distance(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{dim_span, RANK_TOL};

    #[test]
    fn hard_benign_marginals_and_means() {
        let env = hard_benign(4, 6, SplitSpec::halves(6, 0.1)).unwrap();
        let z0_mass: f64 = env.marginal(1)[..3].iter().sum();
        assert!((z0_mass - 0.7).abs() < 1e-12);
        assert!((env.mean_reward(1) - 0.6).abs() < 1e-12);
        assert!((env.mean_reward(0) - 0.5).abs() < 1e-12);
        assert!(env.is_conditionally_benign(1e-12));
        let (a_star, gap) = env.optimal_stats().unwrap();
        assert_eq!(a_star, 1);
        assert!((gap - 0.1).abs() < 1e-12);
    }

    #[test]
    fn hard_benign_rejects_bad_parameters() {
        assert!(hard_benign(4, 1, SplitSpec::new(1, 0.1)).is_err());
        assert!(hard_benign(4, 4, SplitSpec::new(4, 0.1)).is_err());
        assert!(hard_benign(4, 4, SplitSpec::new(0, 0.1)).is_err());
        assert!(hard_benign(4, 4, SplitSpec::new(2, 0.0)).is_err());
        assert!(hard_benign(4, 4, SplitSpec::new(2, 0.3)).is_err());
    }

    #[test]
    fn nonbenign_variant_conditionals() {
        let env = hard_nonbenign_variant(5, 4, SplitSpec::halves(4, 0.05), 2).unwrap();
        assert_eq!(env.reward_model(2, 0), RewardModel::Bernoulli { p: 0.95 });
        assert_eq!(env.reward_model(2, 3), RewardModel::Bernoulli { p: 0.25 });
        assert!(!env.is_conditionally_benign(1e-12));
        let (a_star, gap) = env.optimal_stats().unwrap();
        assert_eq!(a_star, 2);
        assert!((env.mean_reward(2) - 0.6).abs() < 1e-12);
        assert!((gap - 0.05).abs() < 1e-12);
        // identical marginals to the benign instance
        let benign = hard_benign(5, 4, SplitSpec::halves(4, 0.05)).unwrap();
        assert_eq!(env.marginals(), benign.marginals());
    }

    #[test]
    fn nonbenign_variant_rejects_special_arm_and_large_delta() {
        let split = SplitSpec::halves(4, 0.05);
        assert!(hard_nonbenign_variant(5, 4, split, SPECIAL_ARM).is_err());
        assert!(hard_nonbenign_variant(5, 4, split, 7).is_err());
        assert!(hard_nonbenign_variant(5, 4, SplitSpec::halves(4, 0.1), 2).is_err());
    }

    #[test]
    fn agnostic_family() {
        let delta = default_agnostic_delta(10, 10_000);
        assert!((delta - 0.00075).abs() < 1e-15);
        let split = SplitSpec::halves(4, 0.02);
        let base = agnostic_variant(6, 4, split, None).unwrap();
        let moved = agnostic_variant(6, 4, split, Some(3)).unwrap();
        assert!(base.is_conditionally_benign(1e-12));
        assert!(moved.is_conditionally_benign(1e-12));
        assert!((moved.mean_reward(3) - (0.5 + 2.0 * 0.02)).abs() < 1e-12);
        assert_eq!(base.rewards(), moved.rewards());
        let l1 = marginal_distance(base.marginals(), moved.marginals());
        // 4Δ of mass moves from Z₁ to Z₀, so the row moves by 8Δ in L1
        assert!((l1 - 8.0 * 0.02).abs() < 1e-12);
    }

    #[test]
    fn pe_adversarial_structure() {
        let env = pe_adversarial(4, 3, 0.3).unwrap();
        let means = env.means();
        let expected = [1.0, 0.0, 0.0, 0.7];
        for (m, e) in means.iter().zip(expected) {
            assert!((m - e).abs() < 1e-12);
        }
        let (a_star, gap) = env.optimal_stats().unwrap();
        assert_eq!(a_star, 0);
        assert!((gap - 0.3).abs() < 1e-12);
        assert!(!env.is_conditionally_benign(1e-12));
        assert_eq!(dim_span(env.marginals(), RANK_TOL), 3);
    }

    #[test]
    fn pe_adversarial_dummies_copy_first_basis_arm() {
        let env = pe_adversarial(7, 3, 0.2).unwrap();
        for a in 4..7 {
            assert_eq!(env.marginal(a), env.marginal(1));
            assert_eq!(env.mean_reward(a), 0.0);
        }
        assert!(pe_adversarial(4, 2, 0.2).is_err());
        assert!(pe_adversarial(3, 3, 0.2).is_err());
        assert!(pe_adversarial(4, 3, 1.0).is_err());
    }

    #[test]
    fn perturbation_examples() {
        let rows = vec![vec![0.5, 0.5]];
        assert_eq!(perturb_marginals(&rows, 0.0).unwrap(), rows);
        let out = perturb_marginals(&rows, 0.2).unwrap();
        assert!((out[0][0] - 0.4).abs() < 1e-15);
        assert!((out[0][1] - 0.6).abs() < 1e-15);
        assert!((marginal_distance(&rows, &out) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn perturbation_infeasible_row_is_named() {
        let rows = vec![vec![0.5, 0.5], vec![0.1; 10]];
        match perturb_marginals(&rows, 0.4) {
            Err(InstanceError::InfeasiblePerturbation { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(perturb_marginals(&rows, 2.5).is_err());
    }
}
