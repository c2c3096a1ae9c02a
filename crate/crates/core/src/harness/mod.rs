//! Seeded Monte Carlo simulation and pseudo-regret accounting.
//!
//! Replicate `r` draws from `ChaCha8Rng` seeded with
//! `splitmix64(base_seed ^ splitmix64(r))`. Replicates run in parallel and are
//! collected in index order, so the output never depends on scheduling.

mod config;
mod output;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use config::{
    build_family, default_checkpoints, DOverrides, DeltaSpec, DesignChoice, EnvSpec, Family,
    FixedAction, MarginalSource, PolicySpec, RatesSpec, RunConfig, RunFile, SweepFile, SweepPlan, Z2Units,
    DEFAULT_DELTA, LOG_CHECKPOINTS,
};
pub use output::{
    config_hash, curve_csv, pareto_csv, pareto_svg, regret_svg, write_run_outputs,
    write_sweep_outputs, RunMetadata, GENERATOR,
};

use crate::balancing::BalanceError;
use crate::env::{ActionId, EnvError, Environment};
use crate::instances::InstanceError;
use crate::oracle::Trace;
use crate::phased_elim::PeError;
use crate::stats;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("policy and environment disagree: {0}")]
    Arity(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Pe(#[from] PeError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
}

pub(crate) fn read_file(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `r`.
pub fn replicate_seed(base_seed: u64, replicate: u32) -> u64 {
    splitmix64(base_seed ^ splitmix64(replicate as u64))
}

/// Prefix sums of the gaps of `actions`.
pub fn pseudo_regret(env: &Environment, actions: &[ActionId]) -> Result<Vec<f64>, HarnessError> {
    let gaps = env.gaps();
    let mut cum = 0.0;
    actions
        .iter()
        .map(|&a| {
            let g = gaps.get(a).ok_or_else(|| {
                HarnessError::Arity(format!("action {a} out of range for {} actions", gaps.len()))
            })?;
            cum += g;
            Ok(cum)
        })
        .collect()
}

/// Cumulative pseudo-regret at the checkpoints of every replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCurve {
    pub checkpoints: Vec<u64>,
    /// `per_replicate[r][k]` is the regret of replicate `r` after `checkpoints[k]` rounds.
    pub per_replicate: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl RegretCurve {
    pub fn from_replicates(checkpoints: Vec<u64>, per_replicate: Vec<Vec<f64>>) -> Self {
        let k = checkpoints.len();
        let column = |i: usize| per_replicate.iter().map(|r| r[i]).collect::<Vec<f64>>();
        let mean = (0..k).map(|i| stats::mean(&column(i))).collect();
        let stderr = (0..k).map(|i| stats::std_err(&column(i))).collect();
        Self {
            checkpoints,
            per_replicate,
            mean,
            stderr,
        }
    }

    pub fn final_mean(&self) -> f64 {
        *self.mean.last().expect("non-empty curve")
    }

    pub fn final_stderr(&self) -> f64 {
        *self.stderr.last().expect("non-empty curve")
    }

    /// Final regret of every replicate.
    pub fn finals(&self) -> Vec<f64> {
        self.per_replicate
            .iter()
            .map(|r| *r.last().expect("non-empty curve"))
            .collect()
    }
}

/// Everything one replicate produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub seed: u64,
    pub regret: Vec<f64>,
    /// Learner index of balancing policies at each checkpoint.
    pub learner: Vec<Option<usize>>,
    pub action_counts: Vec<u64>,
    /// Sum of realized rewards.
    pub total_reward: f64,
    pub trace: Option<Trace>,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub run_id: String,
    pub policy: String,
    pub env: String,
    pub curve: RegretCurve,
    pub replicates: Vec<ReplicateResult>,
}

/// Runs every replicate of `cfg`.
pub fn run_simulation(cfg: &RunConfig) -> Result<SimulationResult, HarnessError> {
    cfg.validate()?;
    // fail early on arity and parameter errors
    cfg.policy
        .build(&cfg.env, cfg.horizon, cfg.delta, &cfg.base_dir)?;
    let replicates: Vec<ReplicateResult> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect::<Result<_, _>>()?;
    let curve = RegretCurve::from_replicates(
        cfg.checkpoints.clone(),
        replicates.iter().map(|r| r.regret.clone()).collect(),
    );
    Ok(SimulationResult {
        run_id: cfg.run_id.clone(),
        policy: cfg.policy.label(),
        env: cfg.env_name.clone(),
        curve,
        replicates,
    })
}

fn run_replicate(cfg: &RunConfig, r: u32) -> Result<ReplicateResult, HarnessError> {
    let env = &cfg.env;
    let mut policy = cfg.policy.build(env, cfg.horizon, cfg.delta, &cfg.base_dir)?;
    let seed = replicate_seed(cfg.base_seed, r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaps = env.gaps();
    let mut counts = vec![0u64; env.n_actions()];
    let mut regret = Vec::with_capacity(cfg.checkpoints.len());
    let mut learner = Vec::with_capacity(cfg.checkpoints.len());
    let mut trace = cfg.keep_traces.then(Trace::default);
    let mut next = cfg.checkpoints.iter().peekable();
    let mut cum = 0.0;
    let mut total_reward = 0.0;
    for t in 1..=cfg.horizon {
        let a = policy.select(t);
        if a >= env.n_actions() {
            return Err(HarnessError::Arity(format!(
                "policy {} chose action {a} but the environment has {}",
                policy.name(),
                env.n_actions()
            )));
        }
        let step = env.sample_step(a, &mut rng);
        policy.observe(a, step.context, step.reward);
        counts[a] += 1;
        cum += gaps[a];
        total_reward += step.reward;
        if let Some(tr) = trace.as_mut() {
            tr.push(a, step.context, step.reward);
        }
        if next.peek() == Some(&&t) {
            next.next();
            regret.push(cum);
            learner.push(policy.last_learner());
        }
    }
    Ok(ReplicateResult {
        seed,
        regret,
        learner,
        action_counts: counts,
        total_reward,
        trace,
    })
}

/// One grid point of a Pareto sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoRow {
    pub z2: f64,
    pub benign_regret: f64,
    pub benign_stderr: f64,
    pub hard_regret: f64,
    pub hard_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoTable {
    pub rows: Vec<ParetoRow>,
    /// Grid values whose rate pair was invalid, with the reason.
    pub skipped: Vec<(f64, String)>,
}

impl ParetoTable {
    /// Spearman correlation between benign and hard final regrets.
    pub fn spearman(&self) -> Option<f64> {
        let b: Vec<f64> = self.rows.iter().map(|r| r.benign_regret).collect();
        let h: Vec<f64> = self.rows.iter().map(|r| r.hard_regret).collect();
        stats::spearman(&b, &h)
    }
}

/// Runs balancing at every `Z₂` in the grid on both environments.
///
/// `base` supplies the policy, horizon, replicates and seed; its environment is
/// ignored. Invalid rate pairs are skipped and reported.
pub fn sweep_pareto(
    base: &RunConfig,
    z2_grid: &[f64],
    benign: (&str, &Environment),
    hard: (&str, &Environment),
) -> Result<ParetoTable, HarnessError> {
    if z2_grid.is_empty() {
        return Err(HarnessError::Config("Z2 grid is empty".into()));
    }
    let (be, he) = (benign.1, hard.1);
    if be.n_actions() != he.n_actions() || be.n_contexts() != he.n_contexts() {
        return Err(HarnessError::Arity("benign and hard environments differ in size".into()));
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &z2 in z2_grid {
        let spec = base.policy.with_z2(z2)?;
        let rates = spec.rates(be, base.horizon)?;
        if let Err(e) = rates.validate(be.n_actions(), be.n_contexts(), base.horizon) {
            skipped.push((z2, e.to_string()));
            continue;
        }
        let run = |name: &str, env: &Environment| {
            let mut cfg = base.clone();
            cfg.env = env.clone();
            cfg.env_name = name.to_string();
            cfg.policy = spec.clone();
            cfg.run_id = format!("{}-z2={z2}", base.run_id);
            run_simulation(&cfg)
        };
        let b = run(benign.0, be)?;
        let h = run(hard.0, he)?;
        rows.push(ParetoRow {
            z2,
            benign_regret: b.curve.final_mean(),
            benign_stderr: b.curve.final_stderr(),
            hard_regret: h.curve.final_mean(),
            hard_stderr: h.curve.final_stderr(),
        });
    }
    Ok(ParetoTable { rows, skipped })
}
