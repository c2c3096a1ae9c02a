//! Anytime UCB over actions and the causal C-UCB over contexts.
//!
//! Both follow the clamped counters `N_t(a) = 1 ∨ #pulls` and
//! `M_t(z) = 1 ∨ #observations`, so the indices are finite from the first
//! round and no initial round-robin is forced. The action chosen at round `t`
//! maximizes the index computed from the first `t − 1` observations.

use crate::env::{ActionId, ContextId};
use crate::policy::{argmax_lowest, Policy, RoundGuard};

/// Per-action statistics of UCB.
#[derive(Debug, Clone)]
pub struct UcbState {
    counts: Vec<u64>,
    sums: Vec<f64>,
    delta: f64,
    horizon: u64,
    log_term: f64,
}

impl UcbState {
    pub fn new(n_actions: usize, delta: f64, horizon: u64) -> Self {
        assert!(n_actions > 0);
        assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
        let log_term = (2.0 * n_actions as f64 * horizon.max(1) as f64 / delta).ln();
        Self {
            counts: vec![0; n_actions],
            sums: vec![0.0; n_actions],
            delta,
            horizon,
            log_term,
        }
    }

    /// Overrides the raw statistics of one arm.
    pub fn with_stats(mut self, a: ActionId, count: u64, sum: f64) -> Self {
        self.counts[a] = count;
        self.sums[a] = sum;
        self
    }

    pub fn n_actions(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, a: ActionId) -> u64 {
        self.counts[a]
    }

    pub fn sum(&self, a: ActionId) -> f64 {
        self.sums[a]
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn mean(&self, a: ActionId) -> f64 {
        self.sums[a] / self.counts[a].max(1) as f64
    }

    /// `√(log(2|A|T/δ) / (2 N(a)))`.
    pub fn bonus(&self, a: ActionId) -> f64 {
        (self.log_term / (2.0 * self.counts[a].max(1) as f64)).sqrt()
    }

    pub fn record(&mut self, a: ActionId, reward: f64) {
        self.counts[a] += 1;
        self.sums[a] += reward;
    }
}

pub fn ucb_index(state: &UcbState, a: ActionId) -> f64 {
    state.mean(a) + state.bonus(a)
}

/// Per-context statistics of C-UCB together with the marginals it was given.
#[derive(Debug, Clone)]
pub struct CucbState {
    counts: Vec<u64>,
    sums: Vec<f64>,
    marginals: Vec<Vec<f64>>,
    delta: f64,
    horizon: u64,
    log_term: f64,
}

impl CucbState {
    /// `marginals` is the `|A| × |Z|` prior knowledge `q`, not necessarily the truth.
    pub fn new(marginals: Vec<Vec<f64>>, delta: f64, horizon: u64) -> Self {
        assert!(!marginals.is_empty());
        assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
        let n_contexts = marginals[0].len();
        assert!(n_contexts > 0);
        let log_term = (2.0 * n_contexts as f64 * horizon.max(1) as f64 / delta).ln();
        Self {
            counts: vec![0; n_contexts],
            sums: vec![0.0; n_contexts],
            marginals,
            delta,
            horizon,
            log_term,
        }
    }

    pub fn with_stats(mut self, z: ContextId, count: u64, sum: f64) -> Self {
        self.counts[z] = count;
        self.sums[z] = sum;
        self
    }

    pub fn n_actions(&self) -> usize {
        self.marginals.len()
    }

    pub fn n_contexts(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, z: ContextId) -> u64 {
        self.counts[z]
    }

    pub fn sum(&self, z: ContextId) -> f64 {
        self.sums[z]
    }

    pub fn marginals(&self) -> &[Vec<f64>] {
        &self.marginals
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Per-context upper confidence bound `U(z)`.
    pub fn context_ucb(&self, z: ContextId) -> f64 {
        let n = self.counts[z].max(1) as f64;
        self.sums[z] / n + (self.log_term / (2.0 * n)).sqrt()
    }

    pub fn record(&mut self, z: ContextId, reward: f64) {
        self.counts[z] += 1;
        self.sums[z] += reward;
    }

    fn context_ucbs(&self) -> Vec<f64> {
        (0..self.n_contexts()).map(|z| self.context_ucb(z)).collect()
    }
}

/// `Σ_z q_a(z) · U(z)`.
pub fn cucb_index(state: &CucbState, a: ActionId) -> f64 {
    state.marginals[a]
        .iter()
        .enumerate()
        .map(|(z, q)| q * state.context_ucb(z))
        .sum()
}

/// UCB as a [`Policy`].
#[derive(Debug, Clone)]
pub struct Ucb {
    state: UcbState,
    guard: RoundGuard,
}

impl Ucb {
    pub fn new(n_actions: usize, delta: f64, horizon: u64) -> Self {
        Self {
            state: UcbState::new(n_actions, delta, horizon),
            guard: RoundGuard::default(),
        }
    }

    pub fn state(&self) -> &UcbState {
        &self.state
    }
}

impl Policy for Ucb {
    fn name(&self) -> &str {
        "ucb"
    }

    fn select(&mut self, t: u64) -> ActionId {
        self.guard.on_select(t);
        let s = &self.state;
        argmax_lowest((0..s.n_actions()).map(|a| ucb_index(s, a)))
    }

    fn observe(&mut self, action: ActionId, _context: ContextId, reward: f64) {
        self.guard.on_observe();
        self.state.record(action, reward);
    }
}

/// C-UCB as a [`Policy`]; its statistics are keyed on contexts only.
#[derive(Debug, Clone)]
pub struct Cucb {
    state: CucbState,
    guard: RoundGuard,
}

impl Cucb {
    pub fn new(marginals: Vec<Vec<f64>>, delta: f64, horizon: u64) -> Self {
        Self {
            state: CucbState::new(marginals, delta, horizon),
            guard: RoundGuard::default(),
        }
    }

    pub fn state(&self) -> &CucbState {
        &self.state
    }
}

impl Policy for Cucb {
    fn name(&self) -> &str {
        "cucb"
    }

    fn select(&mut self, t: u64) -> ActionId {
        self.guard.on_select(t);
        let u = self.state.context_ucbs();
        argmax_lowest(
            self.state
                .marginals
                .iter()
                .map(|row| row.iter().zip(&u).map(|(q, u)| q * u).sum()),
        )
    }

    fn observe(&mut self, _action: ActionId, context: ContextId, reward: f64) {
        self.guard.on_observe();
        self.state.record(context, reward);
    }
}
