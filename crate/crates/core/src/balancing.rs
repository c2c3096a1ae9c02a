//! Dynamic Balancing over two base learners.
//!
//! Each learner declares a candidate regret bound `d_i·√n`. The balancer plays
//! the active learner with the smallest scaled bound `v_i·d_i·√n_i` and
//! deactivates, reversibly, any learner whose bias-adjusted average reward
//! falls too far below the best one.

use thiserror::Error;

use crate::env::{ActionId, ContextId};
use crate::policy::{Policy, RoundGuard};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("rate pair is not reasonable: {0}")]
    InvalidRates(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Target regret rates `(R₁(T), R₂(T))` for the benign and the arbitrary class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    pub r1: f64,
    pub r2: f64,
}

impl RatePair {
    /// The minimax-benign pair `R₁ = √(|Z|T)`, `R₂ = √(|A|/|Z|)·√(|A|T)`.
    pub fn balanced(n_actions: usize, n_contexts: usize, horizon: u64) -> Self {
        let (a, z, t) = (n_actions as f64, n_contexts as f64, horizon as f64);
        Self {
            r1: (z * t).sqrt(),
            r2: (a / z).sqrt() * (a * t).sqrt(),
        }
    }

    /// `R₁ = √(|Z|T)` and `R₂ = z2·√(|A|T)`.
    pub fn from_z2(z2: f64, n_actions: usize, n_contexts: usize, horizon: u64) -> Self {
        let (a, z, t) = (n_actions as f64, n_contexts as f64, horizon as f64);
        Self {
            r1: (z * t).sqrt(),
            r2: z2 * (a * t).sqrt(),
        }
    }

    /// Checks `R₁ ≥ √(|Z|T)`, `R₂ ≥ √(|A|T)` and `R₁·R₂ ≥ |A|·T`, up to a relative 1e-12.
    pub fn validate(&self, n_actions: usize, n_contexts: usize, horizon: u64) -> Result<(), BalanceError> {
        let (a, z, t) = (n_actions as f64, n_contexts as f64, horizon as f64);
        let slack = 1.0 - 1e-12;
        if !(self.r1.is_finite() && self.r2.is_finite()) {
            return Err(BalanceError::InvalidRates("rates must be finite".into()));
        }
        if self.r1 < slack * (z * t).sqrt() {
            return Err(BalanceError::InvalidRates(format!(
                "R1 = {} < sqrt(|Z| T) = {}",
                self.r1,
                (z * t).sqrt()
            )));
        }
        if self.r2 < slack * (a * t).sqrt() {
            return Err(BalanceError::InvalidRates(format!(
                "R2 = {} < sqrt(|A| T) = {}",
                self.r2,
                (a * t).sqrt()
            )));
        }
        if self.r1 * self.r2 < slack * a * t {
            return Err(BalanceError::InvalidRates(format!(
                "R1 R2 = {} < |A| T = {}",
                self.r1 * self.r2,
                a * t
            )));
        }
        Ok(())
    }
}

/// Scale, coefficient and bound factor of both learners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub z: [f64; 2],
    pub v: [f64; 2],
    pub d: [f64; 2],
}

impl Hyperparams {
    /// Reward bias `b_i(n)` of learner `i`.
    pub fn bias(&self, i: usize, n: u64, delta: f64) -> f64 {
        bias(self.z[i], n, delta)
    }
}

/// `Z₁ = 1`, `Z₂ = R₂/√(|A|T)` and `v_i = √(Z_i/d_i³)`.
pub fn db_hyperparams(
    rates: RatePair,
    d1: f64,
    d2: f64,
    n_actions: usize,
    n_contexts: usize,
    horizon: u64,
) -> Result<Hyperparams, BalanceError> {
    rates.validate(n_actions, n_contexts, horizon)?;
    if !(d1 > 0.0 && d2 > 0.0 && d1.is_finite() && d2.is_finite()) {
        return Err(BalanceError::Parameter(format!(
            "bound factors must be positive, got d1 = {d1}, d2 = {d2}"
        )));
    }
    let z2 = rates.r2 / (n_actions as f64 * horizon as f64).sqrt();
    let z = [1.0, z2];
    let d = [d1, d2];
    let v = [(z[0] / d1.powi(3)).sqrt(), (z[1] / d2.powi(3)).sqrt()];
    Ok(Hyperparams { z, v, d })
}

fn clamped_ln(n: u64) -> f64 {
    (n.max(1) as f64).ln().max(1.0)
}

/// `b(n) = max(2Z/√n, 3√(2·log(2·log n/δ))/√n)` with `n ∨ 1` and `log n ∨ 1`.
pub fn bias(z: f64, n: u64, delta: f64) -> f64 {
    let sn = (n.max(1) as f64).sqrt();
    let conf = 3.0 * (2.0 * (2.0 * clamped_ln(n) / delta).ln()).sqrt() / sn;
    (2.0 * z / sn).max(conf)
}

/// `γ(n) = 3√(log(2·log n/δ)/n)` with `n ∨ 1` and `log n ∨ 1`.
pub fn confidence_width(n: u64, delta: f64) -> f64 {
    3.0 * ((2.0 * clamped_ln(n) / delta).ln() / n.max(1) as f64).sqrt()
}

/// Balancer bookkeeping for one base learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSlot {
    pub d: f64,
    pub v: f64,
    pub z: f64,
    /// Cumulative reward collected while selected.
    pub u: f64,
    /// Number of selections.
    pub n: u64,
    pub active: bool,
}

impl LearnerSlot {
    pub fn new(d: f64, v: f64, z: f64) -> Self {
        Self {
            d,
            v,
            z,
            u: 0.0,
            n: 0,
            active: true,
        }
    }
}

/// Lowest-index minimizer of `v·d·√n` over active slots, or over all slots if none is active.
pub fn select_learner(slots: &[LearnerSlot]) -> usize {
    let any_active = slots.iter().any(|s| s.active);
    let mut best = None;
    let mut best_score = f64::INFINITY;
    for (i, s) in slots.iter().enumerate() {
        if any_active && !s.active {
            continue;
        }
        let score = s.v * s.d * (s.n as f64).sqrt();
        if best.is_none() || score < best_score {
            best = Some(i);
            best_score = score;
        }
    }
    best.expect("at least one learner")
}

/// `(η, γ)` with `η = U/(n ∨ 1) − b(n)`.
pub fn learner_stats(slot: &LearnerSlot, delta: f64) -> (f64, f64) {
    let eta = slot.u / slot.n.max(1) as f64 - bias(slot.z, slot.n, delta);
    (eta, confidence_width(slot.n, delta))
}

/// Recomputes every slot's flag from scratch; reactivates all slots if none survives.
pub fn update_active_set(slots: &mut [LearnerSlot], delta: f64) {
    let stats: Vec<(f64, f64)> = slots.iter().map(|s| learner_stats(s, delta)).collect();
    let top = stats.iter().map(|(e, g)| e + g).fold(f64::NEG_INFINITY, f64::max);
    for (s, (eta, gamma)) in slots.iter_mut().zip(&stats) {
        s.active = eta + gamma + s.d / (s.n.max(1) as f64).sqrt() >= top;
    }
    if !slots.iter().any(|s| s.active) {
        slots.iter_mut().for_each(|s| s.active = true);
    }
}

/// `d_UCB = √(8|A|·log(2|A|T/δ))`.
pub fn d_ucb(n_actions: usize, horizon: u64, delta: f64) -> f64 {
    let a = n_actions as f64;
    (8.0 * a * (2.0 * a * horizon as f64 / delta).ln()).sqrt()
}

/// `d_CUCB = √(log(2|Z|T/δ))·(√(8|Z|) + √(4·log(T/δ)))`.
pub fn d_cucb(n_contexts: usize, horizon: u64, delta: f64) -> f64 {
    let z = n_contexts as f64;
    let t = horizon as f64;
    (2.0 * z * t / delta).ln().sqrt() * ((8.0 * z).sqrt() + (4.0 * (t / delta).ln()).sqrt())
}

/// Default constant of [`d_pe`].
pub const PE_BOUND_CONSTANT: f64 = 8.0;

/// `d_PE = C·√(d·log(2|A|·log₂T/δ))`, with `log₂T` clamped to at least 1.
pub fn d_pe(d_span: usize, n_actions: usize, horizon: u64, delta: f64, c: f64) -> f64 {
    let log2_t = (horizon as f64).log2().max(1.0);
    c * (d_span as f64 * (2.0 * n_actions as f64 * log2_t / delta).ln()).sqrt()
}

/// Dynamic Balancing as a [`Policy`].
pub struct DynamicBalancing {
    learners: [Box<dyn Policy>; 2],
    slots: [LearnerSlot; 2],
    delta: f64,
    current: Option<usize>,
    last: Option<usize>,
    guard: RoundGuard,
}

impl DynamicBalancing {
    pub fn new(learners: [Box<dyn Policy>; 2], params: Hyperparams, delta: f64) -> Result<Self, BalanceError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(BalanceError::Parameter(format!("delta must lie in (0, 1), got {delta}")));
        }
        let slots = [0, 1].map(|i| LearnerSlot::new(params.d[i], params.v[i], params.z[i]));
        Ok(Self {
            learners,
            slots,
            delta,
            current: None,
            last: None,
            guard: RoundGuard::default(),
        })
    }

    pub fn slots(&self) -> &[LearnerSlot; 2] {
        &self.slots
    }

    pub fn learner(&self, i: usize) -> &dyn Policy {
        self.learners[i].as_ref()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

impl Policy for DynamicBalancing {
    fn name(&self) -> &str {
        "db"
    }

    fn select(&mut self, t: u64) -> ActionId {
        self.guard.on_select(t);
        let i = select_learner(&self.slots);
        self.current = Some(i);
        // base learners count only the rounds they are given
        self.learners[i].select(self.slots[i].n + 1)
    }

    fn observe(&mut self, action: ActionId, context: ContextId, reward: f64) {
        self.guard.on_observe();
        let i = self.current.take().expect("select precedes observe");
        self.learners[i].observe(action, context, reward);
        self.slots[i].u += reward;
        self.slots[i].n += 1;
        update_active_set(&mut self.slots, self.delta);
        self.last = Some(i);
    }

    fn last_learner(&self) -> Option<usize> {
        self.last
    }
}
