//! Phased elimination on the linear reduction of a causal bandit.
//!
//! Each action is represented by its (possibly misspecified) context marginal
//! `ν̃_a`, and the expected reward is linear in it: `μ(a) = ⟨μ^Z, ν_a⟩` on
//! benign instances. Realized contexts are never used.

use nalgebra::DVector;
use thiserror::Error;

use crate::design::{
    checked_cholesky, frank_wolfe_design, moment_matrix, reduce_to_span, support_bound, Design,
    DesignError, SpanReduction,
};
use crate::env::{dim_span, ActionId, ContextId, EnvError, RANK_TOL};
use crate::oracle::{exact_design_grid, OracleError, MAX_GRID_ACTIONS};
use crate::policy::{Policy, RoundGuard};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Marginals(#[from] EnvError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// How the per-phase design is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DesignMode {
    #[default]
    FrankWolfe,
    /// Exhaustive grid search; limited to small action sets.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeConfig {
    pub delta: f64,
    pub horizon: u64,
    pub design: DesignMode,
    pub fw_max_iters: usize,
    pub fw_tol: f64,
    pub grid_resolution: usize,
}

impl PeConfig {
    pub fn new(delta: f64, horizon: u64) -> Self {
        Self {
            delta,
            horizon,
            design: DesignMode::FrankWolfe,
            fw_max_iters: 10_000,
            fw_tol: 0.05,
            grid_resolution: 60,
        }
    }

    pub fn with_design(mut self, design: DesignMode) -> Self {
        self.design = design;
        self
    }
}

/// `m_ℓ = 2^{ℓ−1}·(4d·max(log log d, 0) + 16)`.
pub fn phase_length(d_span: usize, ell: u32) -> f64 {
    assert!(ell >= 1, "phases are numbered from 1");
    2f64.powi(ell as i32 - 1) * support_bound(d_span)
}

/// Phase length and per-action play counts `⌈m_ℓ·π(a)⌉`.
pub fn phase_schedule(d_span: usize, ell: u32, design: &Design) -> (f64, Vec<u64>) {
    let m = phase_length(d_span, ell);
    let plays = design
        .weights()
        .iter()
        .map(|&w| if w > 0.0 { (m * w).ceil() as u64 } else { 0 })
        .collect();
    (m, plays)
}

/// `2·√((4d/m)·log(2|A|·log₂T/δ))`, with `log₂T` clamped to at least 1.
pub fn elimination_threshold(d_span: usize, m: f64, n_actions: usize, horizon: u64, delta: f64) -> f64 {
    let log2_t = (horizon as f64).log2().max(1.0);
    let log_term = (2.0 * n_actions as f64 * log2_t / delta).ln();
    2.0 * ((4.0 * d_span as f64 / m) * log_term).sqrt()
}

/// Least-squares fit `θ̂ = V⁻¹ Σ_t ν̃_{A_t} Y_t` in span coordinates.
#[derive(Debug, Clone)]
pub struct LinearEstimate {
    reduction: SpanReduction,
    theta: Vec<f64>,
}

impl LinearEstimate {
    /// `θ̂` in the reduced coordinates.
    pub fn theta_reduced(&self) -> &[f64] {
        &self.theta
    }

    /// The minimum-norm `θ̂` in the original coordinates.
    pub fn theta(&self) -> Vec<f64> {
        self.reduction.lift(&self.theta)
    }

    /// Predicted mean `⟨θ̂, x⟩` of a feature vector.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.reduction
            .project(x)
            .iter()
            .zip(&self.theta)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Fits `θ̂` from per-action play counts and reward sums of one phase.
///
/// Only actions with a positive count contribute, and the fit lives on the
/// span of their feature vectors.
pub fn phase_estimate(features: &[Vec<f64>], counts: &[u64], sums: &[f64]) -> Result<LinearEstimate, PeError> {
    if features.len() != counts.len() || counts.len() != sums.len() {
        return Err(PeError::Parameter("features, counts and sums differ in length".into()));
    }
    let played: Vec<usize> = (0..counts.len()).filter(|&a| counts[a] > 0).collect();
    if played.is_empty() {
        return Err(PeError::Parameter("no observations in the phase".into()));
    }
    let vectors: Vec<Vec<f64>> = played.iter().map(|&a| features[a].clone()).collect();
    let reduction = reduce_to_span(&vectors, RANK_TOL);
    let x = reduction.reduced_vectors();
    let w: Vec<f64> = played.iter().map(|&a| counts[a] as f64).collect();
    let chol = checked_cholesky(moment_matrix(x, &w))?;
    let mut b = DVector::zeros(reduction.rank());
    for (xi, &a) in x.iter().zip(&played) {
        b += DVector::from_column_slice(xi) * sums[a];
    }
    let theta = chol.solve(&b).iter().copied().collect();
    Ok(LinearEstimate { reduction, theta })
}

/// Summary of a completed phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRecord {
    pub ell: u32,
    pub active: Vec<ActionId>,
    pub design: Vec<f64>,
    pub m: f64,
    pub plays: Vec<u64>,
    pub threshold: f64,
    pub eliminated: Vec<ActionId>,
}

/// Phased elimination as a [`Policy`].
#[derive(Debug, Clone)]
pub struct PhasedElimination {
    features: Vec<Vec<f64>>,
    d_span: usize,
    cfg: PeConfig,
    ell: u32,
    active: Vec<ActionId>,
    // design weights over all actions, zero outside the active set
    design: Vec<f64>,
    m: f64,
    plays: Vec<u64>,
    schedule: Vec<ActionId>,
    cursor: usize,
    counts: Vec<u64>,
    sums: Vec<f64>,
    history: Vec<PhaseRecord>,
    design_fallbacks: u32,
    guard: RoundGuard,
}

impl PhasedElimination {
    /// `features` are the marginals handed to the learner; they may differ from the truth.
    pub fn new(features: Vec<Vec<f64>>, cfg: PeConfig) -> Result<Self, PeError> {
        if features.is_empty() || features[0].is_empty() {
            return Err(PeError::Parameter("empty marginal matrix".into()));
        }
        crate::env::validate_marginals(&features, features.len(), features[0].len())?;
        if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
            return Err(PeError::Parameter(format!("delta must lie in (0, 1), got {}", cfg.delta)));
        }
        if cfg.horizon == 0 {
            return Err(PeError::Parameter("horizon must be at least 1".into()));
        }
        let n = features.len();
        if cfg.design == DesignMode::Exact && n > MAX_GRID_ACTIONS {
            return Err(PeError::Parameter(format!(
                "exact designs support at most {MAX_GRID_ACTIONS} actions, got {n}"
            )));
        }
        let d_span = dim_span(&features, RANK_TOL);
        let mut pe = Self {
            features,
            d_span,
            cfg,
            ell: 0,
            active: (0..n).collect(),
            design: vec![0.0; n],
            m: 0.0,
            plays: vec![0; n],
            schedule: Vec::new(),
            cursor: 0,
            counts: vec![0; n],
            sums: vec![0.0; n],
            history: Vec::new(),
            design_fallbacks: 0,
            guard: RoundGuard::default(),
        };
        let first = pe.compute_design()?;
        pe.start_phase(first);
        Ok(pe)
    }

    pub fn d_span(&self) -> usize {
        self.d_span
    }

    /// Current phase index, starting at 1.
    pub fn phase(&self) -> u32 {
        self.ell
    }

    pub fn active_set(&self) -> &[ActionId] {
        &self.active
    }

    pub fn current_design(&self) -> &[f64] {
        &self.design
    }

    pub fn current_plays(&self) -> &[u64] {
        &self.plays
    }

    /// Completed phases in order.
    pub fn history(&self) -> &[PhaseRecord] {
        &self.history
    }

    /// Phases in which the design solver failed and uniform weights were used instead.
    pub fn design_fallbacks(&self) -> u32 {
        self.design_fallbacks
    }

    fn compute_design(&self) -> Result<Vec<f64>, PeError> {
        let vectors: Vec<Vec<f64>> = self.active.iter().map(|&a| self.features[a].clone()).collect();
        let local = match self.cfg.design {
            DesignMode::Exact => exact_design_grid(&vectors, self.cfg.grid_resolution)?,
            DesignMode::FrankWolfe => {
                frank_wolfe_design(&vectors, self.d_span, self.cfg.fw_max_iters, self.cfg.fw_tol)?
            }
        };
        let mut w = vec![0.0; self.features.len()];
        for (&a, &p) in self.active.iter().zip(local.weights()) {
            w[a] = p;
        }
        Ok(w)
    }

    fn start_phase(&mut self, design: Vec<f64>) {
        self.ell += 1;
        self.design = design;
        self.m = phase_length(self.d_span, self.ell);
        self.plays = self
            .design
            .iter()
            .map(|&w| if w > 0.0 { (self.m * w).ceil() as u64 } else { 0 })
            .collect();
        let rounds = self.plays.iter().copied().max().unwrap_or(0);
        self.schedule.clear();
        for k in 0..rounds {
            for (a, &p) in self.plays.iter().enumerate() {
                if p > k {
                    self.schedule.push(a);
                }
            }
        }
        self.cursor = 0;
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.sums.iter_mut().for_each(|s| *s = 0.0);
    }

    fn finish_phase(&mut self) {
        let threshold = elimination_threshold(
            self.d_span,
            self.m,
            self.features.len(),
            self.cfg.horizon,
            self.cfg.delta,
        );
        let mut eliminated = Vec::new();
        if let Ok(est) = phase_estimate(&self.features, &self.counts, &self.sums) {
            let pred: Vec<f64> = self.active.iter().map(|&a| est.predict(&self.features[a])).collect();
            let best = pred.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut keep = Vec::with_capacity(self.active.len());
            for (&a, &p) in self.active.iter().zip(&pred) {
                if best - p > threshold {
                    eliminated.push(a);
                } else {
                    keep.push(a);
                }
            }
            self.active = keep;
        }
        self.history.push(PhaseRecord {
            ell: self.ell,
            active: self.active.iter().chain(&eliminated).copied().collect(),
            design: self.design.clone(),
            m: self.m,
            plays: self.plays.clone(),
            threshold,
            eliminated,
        });
        let design = match self.compute_design() {
            Ok(d) => d,
            Err(_) => {
                self.design_fallbacks += 1;
                let mut w = vec![0.0; self.features.len()];
                for &a in &self.active {
                    w[a] = 1.0 / self.active.len() as f64;
                }
                w
            }
        };
        self.start_phase(design);
    }
}

impl Policy for PhasedElimination {
    fn name(&self) -> &str {
        "pe"
    }

    fn select(&mut self, t: u64) -> ActionId {
        self.guard.on_select(t);
        self.schedule[self.cursor]
    }

    fn observe(&mut self, action: ActionId, _context: ContextId, reward: f64) {
        self.guard.on_observe();
        debug_assert_eq!(action, self.schedule[self.cursor]);
        self.counts[action] += 1;
        self.sums[action] += reward;
        self.cursor += 1;
        if self.cursor == self.schedule.len() {
            self.finish_phase();
        }
    }

    fn ignores_contexts(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_length_examples() {
        assert_eq!(phase_length(2, 1), 16.0);
        let m3 = phase_length(3, 1);
        assert!((m3 - 17.129).abs() < 1e-3);
        assert!((m3 - (12.0 * 3f64.ln().ln() + 16.0)).abs() < 1e-12);
        assert_eq!(phase_length(2, 3), 64.0);
    }

    #[test]
    fn schedule_rounds_up() {
        let d = Design::new(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]).unwrap();
        let (m, plays) = phase_schedule(3, 1, &d);
        assert!((m / 3.0 - 5.7096).abs() < 1e-4);
        assert_eq!(plays, vec![6, 6, 6, 0]);
    }

    #[test]
    fn threshold_examples() {
        let th = elimination_threshold(2, 16.0, 4, 1024, 0.1);
        assert!((th - 3.6564).abs() < 1e-4);
        assert!((th - 2.0 * (0.5 * 800f64.ln()).sqrt()).abs() < 1e-12);
        let next = elimination_threshold(2, 32.0, 4, 1024, 0.1);
        assert!((th / next - 2f64.sqrt()).abs() < 1e-12);
        assert!(elimination_threshold(2, 16.0, 4, 1, 0.1).is_finite());
    }

    #[test]
    fn noiseless_estimate_recovers_means() {
        let features = vec![
            vec![0.7, 0.3, 0.0],
            vec![0.1, 0.4, 0.5],
            vec![0.2, 0.2, 0.6],
            vec![0.5, 0.5, 0.0],
        ];
        let theta = [0.9, 0.4, 0.1];
        let mean = |x: &[f64]| x.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>();
        let counts = vec![3, 2, 5, 1];
        let sums: Vec<f64> = features.iter().zip(&counts).map(|(x, &c)| c as f64 * mean(x)).collect();
        let est = phase_estimate(&features, &counts, &sums).unwrap();
        for x in &features {
            assert!((est.predict(x) - mean(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_rows_merge() {
        let features = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let split = phase_estimate(&features, &[2, 3, 4], &[1.0, 2.0, 3.0]).unwrap();
        let merged = phase_estimate(&features[..2], &[6, 3], &[4.0, 2.0]).unwrap();
        for (a, b) in split.theta().iter().zip(merged.theta()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adversarial_instance_first_phase() {
        let env = crate::instances::pe_adversarial(4, 3, 0.3).unwrap();
        let cfg = PeConfig::new(0.1, 10_000).with_design(DesignMode::Exact);
        let mut pe = PhasedElimination::new(env.marginals().to_vec(), cfg).unwrap();
        assert_eq!(pe.current_plays(), &[0, 6, 6, 6]);
        let mut t = 0;
        while pe.phase() == 1 {
            t += 1;
            let a = pe.select(t);
            let reward = env.mean_reward(a);
            pe.observe(a, 0, reward);
        }
        assert_eq!(t, 18);
        let rec = &pe.history()[0];
        assert!(rec.eliminated.is_empty());
        let counts = [0, 6, 6, 6];
        let sums = [0.0, 0.0, 0.0, 6.0 * 0.7];
        let est = phase_estimate(env.marginals(), &counts, &sums).unwrap();
        let theta = est.theta();
        for (a, b) in theta.iter().zip([0.0, 0.0, 0.7]) {
            assert!((a - b).abs() < 1e-12);
        }
        let pred: Vec<f64> = env.marginals().iter().map(|x| est.predict(x)).collect();
        let best = pred.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let spreads: Vec<f64> = pred.iter().map(|p| best - p).collect();
        for s in &spreads[..3] {
            assert!((s - 0.7).abs() < 1e-12);
        }
        assert!(spreads[3].abs() < 1e-12);
    }

    #[test]
    fn exact_mode_rejects_large_action_sets() {
        let rows = vec![vec![1.0]; 6];
        let cfg = PeConfig::new(0.1, 100).with_design(DesignMode::Exact);
        assert!(PhasedElimination::new(rows, cfg).is_err());
    }

    #[test]
    fn noiseless_elimination_keeps_zero_spread_arms() {
        // two optimal arms with identical features, one clearly worse arm
        let features = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let means = [1.0, 1.0, 0.0];
        let mut pe = PhasedElimination::new(features, PeConfig::new(0.1, 100_000)).unwrap();
        for t in 1..=20_000 {
            let a = pe.select(t);
            pe.observe(a, 0, means[a]);
        }
        assert!(pe.active_set().contains(&0));
        assert!(pe.active_set().contains(&1));
        assert!(!pe.active_set().contains(&2));
        // the bad arm leaves at the first phase whose threshold is below its spread
        let first_below = pe.history().iter().find(|r| r.threshold < 1.0).unwrap().ell;
        let gone = pe.history().iter().find(|r| r.eliminated.contains(&2)).unwrap().ell;
        assert_eq!(first_below, gone);
    }
}
