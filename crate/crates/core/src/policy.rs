use crate::env::{ActionId, ContextId};

/// A sequential decision rule.
///
/// `select` is called with `t = 1, 2, ...` strictly increasing, and every
/// `select` is followed by exactly one `observe` carrying the chosen action and
/// the realized context and reward.
pub trait Policy: Send {
    fn name(&self) -> &str;

    fn select(&mut self, t: u64) -> ActionId;

    fn observe(&mut self, action: ActionId, context: ContextId, reward: f64);

    /// Index of the base learner that produced the last selection, for meta-policies.
    fn last_learner(&self) -> Option<usize> {
        None
    }

    /// Whether realized contexts never influence future selections.
    fn ignores_contexts(&self) -> bool {
        false
    }
}

/// Tracks the `select`/`observe` alternation and the strictly increasing round index.
#[derive(Debug, Clone, Default)]
pub(crate) struct RoundGuard {
    last_t: u64,
    pending: bool,
}

impl RoundGuard {
    pub(crate) fn on_select(&mut self, t: u64) {
        assert!(
            t > self.last_t,
            "select called with t = {t} after t = {}",
            self.last_t
        );
        assert!(!self.pending, "select called twice without observe");
        self.last_t = t;
        self.pending = true;
    }

    pub(crate) fn on_observe(&mut self) {
        assert!(self.pending, "observe called without a preceding select");
        self.pending = false;
    }
}

/// Lowest index attaining the maximum of `scores`.
pub(crate) fn argmax_lowest(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}
