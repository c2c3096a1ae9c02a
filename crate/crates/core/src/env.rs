//! Finite stochastic environments with post-action contexts.
//!
//! An [`Environment`] holds, for every action, a distribution over contexts
//! (the action's marginal) and, for every `(action, context)` cell, a reward
//! model on `[0, 1]`. Playing action `a` draws a context from row `a` of the
//! marginal matrix and then a reward from the model at `(a, context)`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of an action, `0..n_actions`.
pub type ActionId = usize;
/// Index of a context, `0..n_contexts`.
pub type ContextId = usize;

/// Row-sum tolerance for marginal distributions.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Default relative tolerance for numeric rank.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("degenerate action set: need at least 2 actions, got {0}")]
    DegenerateActionSet(usize),
    #[error("environment needs at least one action and one context")]
    Empty,
    #[error("marginals shape mismatch: expected {expected_rows}x{expected_cols}, row {row} has {found} entries")]
    MarginalShape {
        expected_rows: usize,
        expected_cols: usize,
        row: usize,
        found: usize,
    },
    #[error("rewards shape mismatch at row {row}: expected {expected} entries, found {found}")]
    RewardShape {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("marginal entry ({row}, {col}) = {value} is not a probability")]
    BadProbability { row: usize, col: usize, value: f64 },
    #[error("marginal row {row} sums to {sum}, not 1")]
    RowSum { row: usize, sum: f64 },
    #[error("reward model at ({row}, {col}) is invalid: {detail}")]
    BadReward {
        row: usize,
        col: usize,
        detail: String,
    },
    #[error("action {0} out of range")]
    ActionOutOfRange(ActionId),
    #[error("environment is not conditionally benign")]
    NotBenign,
    #[error("invalid benign spec: {0}")]
    BadSpec(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Conditional reward distribution at one `(action, context)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RewardModel {
    #[serde(rename = "bernoulli")]
    Bernoulli { p: f64 },
    #[serde(rename = "det")]
    Deterministic { v: f64 },
}

impl RewardModel {
    pub fn mean(&self) -> f64 {
        match *self {
            RewardModel::Bernoulli { p } => p,
            RewardModel::Deterministic { v } => v,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let (name, x) = match *self {
            RewardModel::Bernoulli { p } => ("p", p),
            RewardModel::Deterministic { v } => ("v", v),
        };
        if x.is_finite() && (0.0..=1.0).contains(&x) {
            Ok(())
        } else {
            Err(format!("{name} = {x} outside [0, 1]"))
        }
    }

    /// Draws a reward from the uniform variate `u` in `[0, 1)`.
    fn realize(&self, u: f64) -> f64 {
        match *self {
            RewardModel::Bernoulli { p } => {
                if u < p {
                    1.0
                } else {
                    0.0
                }
            }
            RewardModel::Deterministic { v } => v,
        }
    }

    fn same_kind(&self, other: &RewardModel) -> bool {
        matches!(
            (self, other),
            (RewardModel::Bernoulli { .. }, RewardModel::Bernoulli { .. })
                | (RewardModel::Deterministic { .. }, RewardModel::Deterministic { .. })
        )
    }
}

/// Which family the per-context conditionals of a [`BenignSpec`] belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Bernoulli,
    Deterministic,
}

/// Ingredients of a conditionally benign environment: marginals plus one
/// conditional mean per context shared by every action.
#[derive(Debug, Clone, PartialEq)]
pub struct BenignSpec {
    pub marginals: Vec<Vec<f64>>,
    pub mu_z: Vec<f64>,
    pub reward_kind: RewardKind,
}

/// A realized `(context, reward)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub context: ContextId,
    pub reward: f64,
}

/// Finite environment: one context marginal and one row of reward models per action.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    n_actions: usize,
    n_contexts: usize,
    marginals: Vec<Vec<f64>>,
    rewards: Vec<Vec<RewardModel>>,
    // per-row cumulative sums for inverse-CDF sampling
    cumulative: Vec<Vec<f64>>,
    means: Vec<f64>,
}

/// On-disk JSON layout of an environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentFile {
    pub n_actions: usize,
    pub n_contexts: usize,
    pub marginals: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<RewardModel>>,
}

impl Environment {
    /// Builds an environment, validating every invariant and reporting the
    /// first offending row/column.
    pub fn new(marginals: Vec<Vec<f64>>, rewards: Vec<Vec<RewardModel>>) -> Result<Self, EnvError> {
        let n_actions = marginals.len();
        let n_contexts = marginals.first().map_or(0, Vec::len);
        Self::with_shape(n_actions, n_contexts, marginals, rewards)
    }

    fn with_shape(
        n_actions: usize,
        n_contexts: usize,
        marginals: Vec<Vec<f64>>,
        rewards: Vec<Vec<RewardModel>>,
    ) -> Result<Self, EnvError> {
        if n_actions == 0 || n_contexts == 0 {
            return Err(EnvError::Empty);
        }
        validate_marginals(&marginals, n_actions, n_contexts)?;
        if rewards.len() != n_actions {
            return Err(EnvError::RewardShape {
                row: rewards.len().min(n_actions),
                expected: n_contexts,
                found: 0,
            });
        }
        for (a, row) in rewards.iter().enumerate() {
            if row.len() != n_contexts {
                return Err(EnvError::RewardShape {
                    row: a,
                    expected: n_contexts,
                    found: row.len(),
                });
            }
            for (z, model) in row.iter().enumerate() {
                model.validate().map_err(|detail| EnvError::BadReward {
                    row: a,
                    col: z,
                    detail,
                })?;
            }
        }
        let cumulative = marginals
            .iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, &p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        let means = marginals
            .iter()
            .zip(&rewards)
            .map(|(q, r)| q.iter().zip(r).map(|(p, m)| p * m.mean()).sum())
            .collect();
        Ok(Self {
            n_actions,
            n_contexts,
            marginals,
            rewards,
            cumulative,
            means,
        })
    }

    pub fn from_file_struct(file: EnvironmentFile) -> Result<Self, EnvError> {
        Self::with_shape(file.n_actions, file.n_contexts, file.marginals, file.rewards)
    }

    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let file: EnvironmentFile =
            serde_json::from_str(text).map_err(|e| EnvError::Parse(e.to_string()))?;
        Self::from_file_struct(file)
    }

    pub fn to_file_struct(&self) -> EnvironmentFile {
        EnvironmentFile {
            n_actions: self.n_actions,
            n_contexts: self.n_contexts,
            marginals: self.marginals.clone(),
            rewards: self.rewards.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_struct()).expect("environment serializes")
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn marginals(&self) -> &[Vec<f64>] {
        &self.marginals
    }

    pub fn marginal(&self, a: ActionId) -> &[f64] {
        &self.marginals[a]
    }

    pub fn reward_model(&self, a: ActionId, z: ContextId) -> RewardModel {
        self.rewards[a][z]
    }

    pub fn rewards(&self) -> &[Vec<RewardModel>] {
        &self.rewards
    }

    /// Expected reward `Σ_z ν_a(z) · E[Y | a, z]`.
    pub fn mean_reward(&self, a: ActionId) -> f64 {
        self.means[a]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Lowest-index optimal action and the minimum positive-or-zero gap to it.
    pub fn optimal_stats(&self) -> Result<(ActionId, f64), EnvError> {
        if self.n_actions < 2 {
            return Err(EnvError::DegenerateActionSet(self.n_actions));
        }
        let a_star = self.best_action();
        let best = self.means[a_star];
        let gap_min = self
            .means
            .iter()
            .enumerate()
            .filter(|&(a, _)| a != a_star)
            .map(|(_, &m)| best - m)
            .fold(f64::INFINITY, f64::min);
        Ok((a_star, gap_min))
    }

    /// Lowest-index maximizer of the mean reward.
    pub fn best_action(&self) -> ActionId {
        let mut best = 0;
        for a in 1..self.n_actions {
            if self.means[a] > self.means[best] {
                best = a;
            }
        }
        best
    }

    /// Per-action gaps `μ(a*) − μ(a)`.
    pub fn gaps(&self) -> Vec<f64> {
        let best = self.means[self.best_action()];
        self.means.iter().map(|m| best - m).collect()
    }

    /// Draws a context from row `a` and then a reward at `(a, context)`.
    ///
    /// Always consumes exactly two uniform variates from `rng`.
    pub fn sample_step<R: Rng + ?Sized>(&self, a: ActionId, rng: &mut R) -> StepOutcome {
        let u_ctx: f64 = rng.gen();
        let u_rew: f64 = rng.gen();
        let context = self.context_for(a, u_ctx);
        StepOutcome {
            context,
            reward: self.rewards[a][context].realize(u_rew),
        }
    }

    fn context_for(&self, a: ActionId, u: f64) -> ContextId {
        let cum = &self.cumulative[a];
        match cum.iter().position(|&c| u < c) {
            Some(z) => z,
            // rounding left u above the last partial sum: take the last reachable context
            None => self.marginals[a]
                .iter()
                .rposition(|&p| p > 0.0)
                .unwrap_or(self.n_contexts - 1),
        }
    }

    /// True iff every context reached by more than one action carries the
    /// same reward model (same kind, means within `tol`) for all of them.
    pub fn is_conditionally_benign(&self, tol: f64) -> bool {
        (0..self.n_contexts).all(|z| {
            let mut reaching = (0..self.n_actions).filter(|&a| self.marginals[a][z] > 0.0);
            match reaching.next() {
                None => true,
                Some(first) => {
                    let reference = self.rewards[first][z];
                    reaching.all(|a| {
                        let m = self.rewards[a][z];
                        m.same_kind(&reference) && (m.mean() - reference.mean()).abs() <= tol
                    })
                }
            }
        })
    }

    /// Shared conditional means `E[Y | Z = z]` of a benign environment.
    /// Contexts no action reaches map to `None`.
    pub fn context_means(&self, tol: f64) -> Result<Vec<Option<f64>>, EnvError> {
        if !self.is_conditionally_benign(tol) {
            return Err(EnvError::NotBenign);
        }
        Ok((0..self.n_contexts)
            .map(|z| {
                (0..self.n_actions)
                    .find(|&a| self.marginals[a][z] > 0.0)
                    .map(|a| self.rewards[a][z].mean())
            })
            .collect())
    }
}

pub(crate) fn validate_marginals(
    marginals: &[Vec<f64>],
    n_actions: usize,
    n_contexts: usize,
) -> Result<(), EnvError> {
    if marginals.len() != n_actions {
        return Err(EnvError::MarginalShape {
            expected_rows: n_actions,
            expected_cols: n_contexts,
            row: marginals.len().min(n_actions),
            found: 0,
        });
    }
    for (a, row) in marginals.iter().enumerate() {
        if row.len() != n_contexts {
            return Err(EnvError::MarginalShape {
                expected_rows: n_actions,
                expected_cols: n_contexts,
                row: a,
                found: row.len(),
            });
        }
        for (z, &p) in row.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(EnvError::BadProbability {
                    row: a,
                    col: z,
                    value: p,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(EnvError::RowSum { row: a, sum });
        }
    }
    Ok(())
}

/// Numeric rank of the marginal matrix: singular values above `tol` times the largest.
pub fn dim_span(marginals: &[Vec<f64>], tol: f64) -> usize {
    let rows = marginals.len();
    let cols = marginals.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0;
    }
    let m = DMatrix::from_fn(rows, cols, |i, j| marginals[i][j]);
    let sv = m.singular_values();
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * largest).count()
}

/// Builds the environment whose conditional at `(a, z)` depends on `z` only.
pub fn benign_from_parts(spec: &BenignSpec) -> Result<Environment, EnvError> {
    let n_actions = spec.marginals.len();
    let n_contexts = spec.mu_z.len();
    if n_actions == 0 || n_contexts == 0 {
        return Err(EnvError::BadSpec("empty marginals or mu_z".into()));
    }
    if let Some((z, m)) = spec
        .mu_z
        .iter()
        .enumerate()
        .find(|(_, m)| !m.is_finite() || !(0.0..=1.0).contains(*m))
    {
        return Err(EnvError::BadSpec(format!("mu_z[{z}] = {m} outside [0, 1]")));
    }
    validate_marginals(&spec.marginals, n_actions, n_contexts)?;
    let row: Vec<RewardModel> = spec
        .mu_z
        .iter()
        .map(|&m| match spec.reward_kind {
            RewardKind::Bernoulli => RewardModel::Bernoulli { p: m },
            RewardKind::Deterministic => RewardModel::Deterministic { v: m },
        })
        .collect();
    Environment::new(spec.marginals.clone(), vec![row; n_actions])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{hard_benign, hard_nonbenign_variant, SplitSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det(v: f64) -> RewardModel {
        RewardModel::Deterministic { v }
    }

    #[test]
    fn mean_reward_on_benign_lower_bound_instance() {
        let env = hard_benign(5, 4, SplitSpec::new(2, 0.1)).unwrap();
        assert!((env.mean_reward(1) - 0.6).abs() < 1e-12);
        for a in [0, 2, 3, 4] {
            assert!((env.mean_reward(a) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_rewards_have_unit_mean() {
        let env = Environment::new(
            vec![vec![0.3, 0.7], vec![1.0, 0.0]],
            vec![vec![det(1.0), det(1.0)]; 2],
        )
        .unwrap();
        assert_eq!(env.mean_reward(0), 1.0);
        assert_eq!(env.mean_reward(1), 1.0);
    }

    #[test]
    fn optimal_stats_ties_go_to_lowest_index() {
        let env = Environment::new(vec![vec![1.0]; 3], vec![vec![det(0.4)]; 3]).unwrap();
        assert_eq!(env.optimal_stats().unwrap(), (0, 0.0));
    }

    #[test]
    fn optimal_stats_on_nonbenign_variant() {
        let env = hard_nonbenign_variant(6, 4, SplitSpec::new(2, 0.05), 2).unwrap();
        let (a, gap) = env.optimal_stats().unwrap();
        assert_eq!(a, 2);
        assert!((gap - 0.05).abs() < 1e-12);
    }

    #[test]
    fn optimal_stats_needs_two_actions() {
        let env = Environment::new(vec![vec![1.0]], vec![vec![det(0.4)]]).unwrap();
        assert_eq!(env.optimal_stats(), Err(EnvError::DegenerateActionSet(1)));
    }

    #[test]
    fn point_mass_and_deterministic_reward_is_fixed() {
        let env = Environment::new(
            vec![vec![0.0, 0.0, 0.0, 1.0]],
            vec![vec![det(0.1), det(0.2), det(0.3), det(0.7)]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            assert_eq!(
                env.sample_step(0, &mut rng),
                StepOutcome {
                    context: 3,
                    reward: 0.7
                }
            );
        }
    }

    #[test]
    fn benign_check_detects_shared_conditionals() {
        let benign = hard_benign(4, 4, SplitSpec::new(2, 0.02)).unwrap();
        assert!(benign.is_conditionally_benign(1e-12));
        let variant = hard_nonbenign_variant(4, 4, SplitSpec::new(2, 0.02), 2).unwrap();
        assert!(!variant.is_conditionally_benign(1e-12));
        let single = Environment::new(
            vec![vec![0.5, 0.5]],
            vec![vec![det(0.3), RewardModel::Bernoulli { p: 0.9 }]],
        )
        .unwrap();
        assert!(single.is_conditionally_benign(0.0));
    }

    #[test]
    fn benign_check_ignores_unreached_contexts() {
        // context 1 is never reached by action 0, so its differing model is irrelevant
        let env = Environment::new(
            vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            vec![vec![det(0.2), det(0.9)], vec![det(0.2), det(0.1)]],
        )
        .unwrap();
        assert!(env.is_conditionally_benign(0.0));
    }

    #[test]
    fn benign_check_compares_kinds() {
        let env = Environment::new(
            vec![vec![1.0], vec![1.0]],
            vec![vec![det(0.5)], vec![RewardModel::Bernoulli { p: 0.5 }]],
        )
        .unwrap();
        assert!(!env.is_conditionally_benign(1e-9));
    }

    #[test]
    fn dim_span_examples() {
        let e = |i: usize| {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            v
        };
        let half = vec![0.5, 0.5, 0.0];
        assert_eq!(dim_span(&[e(0), e(1), e(2), half.clone()], RANK_TOL), 3);
        assert_eq!(dim_span(&[e(0), e(1), half], RANK_TOL), 2);
        assert_eq!(dim_span(&[e(0), e(1), e(2)], RANK_TOL), 3);
    }

    #[test]
    fn benign_from_parts_examples() {
        let spec = BenignSpec {
            marginals: vec![vec![0.5, 0.5]; 3],
            mu_z: vec![0.75, 0.25],
            reward_kind: RewardKind::Bernoulli,
        };
        let env = benign_from_parts(&spec).unwrap();
        assert!(env.means().iter().all(|&m| (m - 0.5).abs() < 1e-15));
        assert!(env.is_conditionally_benign(0.0));

        let zero = BenignSpec {
            mu_z: vec![0.0, 0.0],
            ..spec.clone()
        };
        assert!(benign_from_parts(&zero)
            .unwrap()
            .means()
            .iter()
            .all(|&m| m == 0.0));

        let bad = BenignSpec {
            mu_z: vec![1.5, 0.0],
            ..spec
        };
        assert!(matches!(benign_from_parts(&bad), Err(EnvError::BadSpec(_))));
    }

    #[test]
    fn loader_reports_first_violation() {
        let text = r#"{"n_actions":2,"n_contexts":2,
            "marginals":[[0.5,0.5],[0.7,0.2]],
            "rewards":[[{"kind":"bernoulli","p":0.5},{"kind":"det","v":0.7}],
                       [{"kind":"det","v":0.1},{"kind":"det","v":0.2}]]}"#;
        match Environment::from_json(text) {
            Err(EnvError::RowSum { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"{"n_actions":1,"n_contexts":2,
            "marginals":[[0.5,0.5]],
            "rewards":[[{"kind":"bernoulli","p":0.5},{"kind":"bernoulli","p":1.2}]]}"#;
        match Environment::from_json(text) {
            Err(EnvError::BadReward { row, col, .. }) => assert_eq!((row, col), (0, 1)),
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"{"n_actions":1,"n_contexts":2,
            "marginals":[[1.5,-0.5]],
            "rewards":[[{"kind":"det","v":0.5},{"kind":"det","v":0.5}]]}"#;
        match Environment::from_json(text) {
            Err(EnvError::BadProbability { row, col, .. }) => assert_eq!((row, col), (0, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let env = hard_benign(3, 4, SplitSpec::new(2, 0.03)).unwrap();
        let back = Environment::from_json(&env.to_json()).unwrap();
        assert_eq!(env, back);
    }
}
