//! Brute-force oracles and runtime diagnostics.
//!
//! Everything here is written independently of the optimized code paths it
//! validates: designs are found by exhaustive grid search, regret of
//! deterministic dynamics by unrolling without randomness, and the
//! concentration events by replaying counters from a recorded trace.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::design::{frank_wolfe_report, kw_gap, reduce_to_span, Design, DesignError};
use crate::env::{ActionId, ContextId, EnvError, Environment, RewardModel, RANK_TOL};
use crate::policy::Policy;

/// Largest action count accepted by [`exact_design_grid`].
pub const MAX_GRID_ACTIONS: usize = 5;
/// Smallest grid resolution accepted by [`exact_design_grid`].
pub const MIN_GRID_RESOLUTION: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("KL divergence is infinite: p = {p}, q = {q}")]
    InfiniteDivergence { p: f64, q: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("grid search supports at most {MAX_GRID_ACTIONS} actions, got {0}")]
    TooManyActions(usize),
    #[error("no design on the grid has an invertible moment matrix")]
    NoInvertibleDesign,
    #[error("dynamics are stochastic on the executed path at round {round}: {detail}")]
    Inapplicable { round: u64, detail: String },
    #[error("unknown event {0:?}, expected EA, EZ or EMG")]
    UnknownEvent(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// `KL(Bernoulli(p) ‖ Bernoulli(q))` in nats.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64, OracleError> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(OracleError::Parameter(format!(
            "probabilities must lie in [0, 1], got p = {p}, q = {q}"
        )));
    }
    if p == q {
        return Ok(0.0);
    }
    if q == 0.0 || q == 1.0 {
        return Err(OracleError::InfiniteDivergence { p, q });
    }
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    Ok((term(p, q) + term(1.0 - p, 1.0 - q)).max(0.0))
}

/// Exhaustive minimization of `g(π)` over the simplex grid with step `1/resolution`.
///
/// Grid points are visited in lexicographic order of their integer counts and
/// a later point replaces the incumbent only when strictly better, so ties go
/// to the lexicographically smallest count vector.
pub fn exact_design_grid(vectors: &[Vec<f64>], resolution: usize) -> Result<Design, OracleError> {
    let n = vectors.len();
    if n == 0 {
        return Err(OracleError::Parameter("no vectors".into()));
    }
    if n > MAX_GRID_ACTIONS {
        return Err(OracleError::TooManyActions(n));
    }
    if resolution < MIN_GRID_RESOLUTION {
        return Err(OracleError::Parameter(format!(
            "resolution must be at least {MIN_GRID_RESOLUTION}, got {resolution}"
        )));
    }
    let red = reduce_to_span(vectors, RANK_TOL);
    let x: Vec<DVector<f64>> = red
        .reduced_vectors()
        .iter()
        .map(|v| DVector::from_column_slice(v))
        .collect();
    let r = red.rank();
    if r == 0 {
        return Err(OracleError::NoInvertibleDesign);
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut counts = vec![0usize; n];
    visit_compositions(&mut counts, 0, resolution, &mut |c| {
        let mut v = DMatrix::<f64>::zeros(r, r);
        for (xi, &ci) in x.iter().zip(c) {
            if ci > 0 {
                v += xi * xi.transpose() * (ci as f64 / resolution as f64);
            }
        }
        if v.rank(1e-10 * v.norm().max(f64::MIN_POSITIVE)) < r {
            return;
        }
        let Some(inv) = v.try_inverse() else { return };
        let g = x
            .iter()
            .map(|xi| xi.dot(&(&inv * xi)))
            .fold(f64::NEG_INFINITY, f64::max);
        if best.as_ref().is_none_or(|(bg, _)| g < bg - 1e-12) {
            best = Some((g, c.to_vec()));
        }
    });
    let (_, counts) = best.ok_or(OracleError::NoInvertibleDesign)?;
    let weights = counts
        .iter()
        .map(|&c| c as f64 / resolution as f64)
        .collect();
    Design::new(weights).map_err(|e| OracleError::Parameter(e.to_string()))
}

/// Small action sets on which Frank–Wolfe and grid search are compared.
pub fn bundled_design_instances() -> Vec<(&'static str, Vec<Vec<f64>>)> {
    vec![
        ("simplex-3", vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]),
        ("line-3", vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]),
        ("skewed-3", vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.6, 0.4]]),
        (
            "pe-adversarial",
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![0.5, 0.5, 0.0],
            ],
        ),
        (
            "rank-2-in-3",
            vec![
                vec![0.5, 0.5, 0.0],
                vec![0.25, 0.25, 0.5],
                vec![0.0, 0.0, 1.0],
                vec![0.4, 0.4, 0.2],
            ],
        ),
    ]
}

/// Certified `g(π)` from both solvers on one action set.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignCheck {
    pub rank: usize,
    pub fw_gap: f64,
    pub fw_support: usize,
    pub exact_gap: f64,
    /// `fw_gap / exact_gap`.
    pub ratio: f64,
}

/// Runs Frank–Wolfe and grid search on `vectors` and reports both `g(π)`.
pub fn design_cross_check(
    vectors: &[Vec<f64>],
    resolution: usize,
    fw_tol: f64,
) -> Result<DesignCheck, OracleError> {
    let rank = reduce_to_span(vectors, RANK_TOL).rank();
    let fw = frank_wolfe_report(vectors, rank, 10_000, fw_tol)?;
    let exact = exact_design_grid(vectors, resolution)?;
    let exact_gap = kw_gap(vectors, &exact)?;
    Ok(DesignCheck {
        rank,
        fw_gap: fw.gap,
        fw_support: fw.design.support().len(),
        exact_gap,
        ratio: fw.gap / exact_gap,
    })
}

fn visit_compositions(
    counts: &mut [usize],
    pos: usize,
    remaining: usize,
    f: &mut impl FnMut(&[usize]),
) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        f(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        visit_compositions(counts, pos + 1, remaining - c, f);
    }
}

/// Result of a deterministic unroll.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactRun {
    pub actions: Vec<ActionId>,
    /// Cumulative pseudo-regret after each round.
    pub regret: Vec<f64>,
}

/// Unrolls `policy` on `env` for `horizon` rounds without any randomness.
///
/// Each executed step must be deterministic: the reward has to be the same
/// deterministic value on every context the action can reach, and the realized
/// context must either be certain or irrelevant to the policy. The context
/// reported to the policy is the lowest-index one in the action's support.
pub fn exact_regret_deterministic(
    env: &Environment,
    policy: &mut dyn Policy,
    horizon: u64,
) -> Result<ExactRun, OracleError> {
    let gaps = env.gaps();
    let mut actions = Vec::with_capacity(horizon as usize);
    let mut regret = Vec::with_capacity(horizon as usize);
    let mut cum = 0.0;
    for t in 1..=horizon {
        let a = policy.select(t);
        if a >= env.n_actions() {
            return Err(OracleError::Parameter(format!(
                "policy selected action {a} of {}",
                env.n_actions()
            )));
        }
        let support: Vec<ContextId> = env
            .marginal(a)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(z, _)| z)
            .collect();
        if support.len() > 1 && !policy.ignores_contexts() {
            return Err(OracleError::Inapplicable {
                round: t,
                detail: format!("action {a} has a random context and the policy reads contexts"),
            });
        }
        let mut reward = None;
        for &z in &support {
            match env.reward_model(a, z) {
                RewardModel::Deterministic { v } if reward.is_none_or(|r| r == v) => {
                    reward = Some(v)
                }
                other => {
                    return Err(OracleError::Inapplicable {
                        round: t,
                        detail: format!("action {a} context {z} has reward model {other:?}"),
                    })
                }
            }
        }
        let reward = reward.expect("rows have non-empty support");
        policy.observe(a, support[0], reward);
        cum += gaps[a];
        actions.push(a);
        regret.push(cum);
    }
    Ok(ExactRun { actions, regret })
}

/// One of the three concentration events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Per-action mean concentration.
    EA,
    /// Per-context mean concentration; benign environments only.
    EZ,
    /// Martingale bound on the context-count drift.
    EMG,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::EA => "EA",
            EventKind::EZ => "EZ",
            EventKind::EMG => "EMG",
        }
    }
}

impl std::str::FromStr for EventKind {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('^', "").as_str() {
            "EA" => Ok(EventKind::EA),
            "EZ" => Ok(EventKind::EZ),
            "EMG" => Ok(EventKind::EMG),
            _ => Err(OracleError::UnknownEvent(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventReport {
    pub event: EventKind,
    pub held: bool,
    pub first_violation: Option<u64>,
}

/// A complete interaction record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub actions: Vec<ActionId>,
    pub contexts: Vec<ContextId>,
    pub rewards: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, a: ActionId, z: ContextId, y: f64) {
        self.actions.push(a);
        self.contexts.push(z);
        self.rewards.push(y);
    }
}

/// Tolerance on conditional means when deciding whether `E^Z` applies.
pub const BENIGN_TOL: f64 = 1e-12;

/// Replays `trace` and checks the chosen event at every round `t ∈ [T]`, `T = trace.len()`.
pub fn event_monitor(
    trace: &Trace,
    env: &Environment,
    delta: f64,
    which: EventKind,
) -> Result<EventReport, OracleError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(OracleError::Parameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let n = trace.len();
    if trace.contexts.len() != n || trace.rewards.len() != n {
        return Err(OracleError::Parameter("trace columns differ in length".into()));
    }
    for (t, (&a, &z)) in trace.actions.iter().zip(&trace.contexts).enumerate() {
        if a >= env.n_actions() || z >= env.n_contexts() {
            return Err(OracleError::Parameter(format!(
                "round {}: action {a} or context {z} out of range",
                t + 1
            )));
        }
    }
    let horizon = n.max(1) as f64;
    let first_violation = match which {
        EventKind::EA => {
            let means = env.means();
            let log_term = (2.0 * env.n_actions() as f64 * horizon / delta).ln();
            mean_band_violation(&trace.actions, &trace.rewards, means, log_term)
        }
        EventKind::EZ => {
            let ctx = env.context_means(BENIGN_TOL)?;
            let means: Vec<f64> = ctx.iter().map(|m| m.unwrap_or(0.0)).collect();
            let log_term = (2.0 * env.n_contexts() as f64 * horizon / delta).ln();
            mean_band_violation(&trace.contexts, &trace.rewards, &means, log_term)
        }
        EventKind::EMG => {
            let mut counts = vec![0u64; env.n_contexts()];
            let log_term = (horizon / delta).ln();
            let mut m = 0.0;
            let mut violation = None;
            for (s, (&a, &z)) in trace.actions.iter().zip(&trace.contexts).enumerate() {
                let row = env.marginal(a);
                for (zz, &p) in row.iter().enumerate() {
                    let ind = if zz == z { 1.0 } else { 0.0 };
                    m += (p - ind) / (counts[zz].max(1) as f64).sqrt();
                }
                counts[z] += 1;
                let t = (s + 1) as f64;
                if m > (2.0 * t * log_term).sqrt() {
                    violation = Some(s as u64 + 1);
                    break;
                }
            }
            violation
        }
    };
    Ok(EventReport {
        event: which,
        held: first_violation.is_none(),
        first_violation,
    })
}

/// First round at which some key's running mean leaves its `√(log_term/(2N))` band.
fn mean_band_violation(keys: &[usize], rewards: &[f64], means: &[f64], log_term: f64) -> Option<u64> {
    let k = means.len();
    let mut counts = vec![0u64; k];
    let mut sums = vec![0.0; k];
    for (s, (&key, &y)) in keys.iter().zip(rewards).enumerate() {
        counts[key] += 1;
        sums[key] += y;
        let violated = (0..k).any(|i| {
            let nn = counts[i].max(1) as f64;
            let est = sums[i] / nn;
            (est - means[i]).abs() > (log_term / (2.0 * nn)).sqrt()
        });
        if violated {
            return Some(s as u64 + 1);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{benign_from_parts, BenignSpec, RewardKind};

    #[test]
    fn kl_examples() {
        assert_eq!(kl_bernoulli(0.5, 0.5).unwrap(), 0.0);
        assert!((kl_bernoulli(0.5, 0.6).unwrap() - 0.020_410_997).abs() < 1e-8);
        let d = 0.02;
        let kl = kl_bernoulli(0.75, 0.75 + 4.0 * d).unwrap();
        assert!((kl - 0.020_401_249_5).abs() < 1e-9);
        assert!(kl <= 64.0 * d * d);
        assert!(matches!(
            kl_bernoulli(0.3, 0.0),
            Err(OracleError::InfiniteDivergence { .. })
        ));
        assert_eq!(kl_bernoulli(1.0, 1.0).unwrap(), 0.0);
        assert!(kl_bernoulli(0.0, 0.5).unwrap() > 0.0);
    }

    #[test]
    fn grid_on_basis_pair_is_uniform() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let d = exact_design_grid(&v, 10).unwrap();
        assert_eq!(d.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn grid_on_pe_adversarial_avoids_the_optimal_arm() {
        let v = vec![
            vec![0.5, 0.5, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let d = exact_design_grid(&v, 60).unwrap();
        assert_eq!(d.weight(0), 0.0);
        for a in 1..4 {
            assert!((d.weight(a) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_rejects_large_sets() {
        let v = vec![vec![1.0]; 6];
        assert_eq!(exact_design_grid(&v, 10), Err(OracleError::TooManyActions(6)));
    }

    fn env_two_arms() -> Environment {
        benign_from_parts(&BenignSpec {
            marginals: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            mu_z: vec![0.8, 0.2],
            reward_kind: RewardKind::Bernoulli,
        })
        .unwrap()
    }

    #[test]
    fn displaced_mean_violates_at_round_five() {
        let env = env_two_arms();
        let mut trace = Trace::default();
        // arm 1 has mean 0.2 but pays 1 every round; with T = 10 the band
        // √(ln(400)/(2N)) first drops below 0.8 at N = 5
        for _ in 0..10 {
            trace.push(1, 1, 1.0);
        }
        let report = event_monitor(&trace, &env, 0.1, EventKind::EA).unwrap();
        assert!(!report.held);
        assert_eq!(report.first_violation, Some(5));
    }

    #[test]
    fn deterministic_means_hold() {
        let env = benign_from_parts(&BenignSpec {
            marginals: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            mu_z: vec![1.0, 0.0],
            reward_kind: RewardKind::Deterministic,
        })
        .unwrap();
        let mut trace = Trace::default();
        for t in 0..50 {
            let a = t % 2;
            trace.push(a, a, if a == 0 { 1.0 } else { 0.0 });
        }
        for ev in [EventKind::EA, EventKind::EZ, EventKind::EMG] {
            assert!(event_monitor(&trace, &env, 0.1, ev).unwrap().held);
        }
    }

    #[test]
    fn ez_rejects_non_benign_environments() {
        let env = crate::instances::hard_nonbenign_variant(
            3,
            2,
            crate::instances::SplitSpec::halves(2, 0.05),
            2,
        )
        .unwrap();
        let trace = Trace::default();
        assert!(event_monitor(&trace, &env, 0.1, EventKind::EZ).is_err());
    }

    #[test]
    fn bundled_designs_agree() {
        for (name, v) in bundled_design_instances() {
            let c = design_cross_check(&v, 60, 0.05).unwrap();
            assert!(c.exact_gap >= c.rank as f64 - 1e-9, "{name}");
            assert!(c.ratio <= 1.05 + 1e-9, "{name}: {c:?}");
        }
    }

    #[test]
    fn event_names_parse() {
        assert_eq!("EA".parse::<EventKind>().unwrap(), EventKind::EA);
        assert_eq!("e^mg".parse::<EventKind>().unwrap(), EventKind::EMG);
        assert!("EX".parse::<EventKind>().is_err());
    }
}
