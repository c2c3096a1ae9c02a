//! Run descriptions: TOML files, policy specs and their resolution into live objects.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::balancing::{
    d_cucb, d_pe, d_ucb, db_hyperparams, DynamicBalancing, RatePair, PE_BOUND_CONSTANT,
};
use crate::env::{dim_span, Environment, RANK_TOL};
use crate::instances::{
    agnostic_variant, hard_benign, hard_nonbenign_variant, pe_adversarial, perturb_marginals,
    SplitSpec,
};
use crate::phased_elim::{DesignMode, PeConfig, PhasedElimination};
use crate::policy::Policy;
use crate::ucb::{Cucb, Ucb};

/// Confidence level of non-balancing policies when nothing else specifies one.
pub const DEFAULT_DELTA: f64 = 0.1;

/// A confidence level, either a number or the horizon-dependent `"1/T"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeltaRepr", into = "DeltaRepr")]
pub enum DeltaSpec {
    Value(f64),
    InverseHorizon,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DeltaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<DeltaRepr> for DeltaSpec {
    type Error = String;

    fn try_from(r: DeltaRepr) -> Result<Self, Self::Error> {
        match r {
            DeltaRepr::Number(x) => Ok(DeltaSpec::Value(x)),
            DeltaRepr::Text(s) if s.replace(' ', "") == "1/T" => Ok(DeltaSpec::InverseHorizon),
            DeltaRepr::Text(s) => Err(format!("delta must be a number or \"1/T\", got {s:?}")),
        }
    }
}

impl From<DeltaSpec> for DeltaRepr {
    fn from(d: DeltaSpec) -> Self {
        match d {
            DeltaSpec::Value(x) => DeltaRepr::Number(x),
            DeltaSpec::InverseHorizon => DeltaRepr::Text("1/T".into()),
        }
    }
}

impl DeltaSpec {
    pub fn resolve(self, horizon: u64) -> Result<f64, HarnessError> {
        let d = match self {
            DeltaSpec::Value(x) => x,
            DeltaSpec::InverseHorizon => 1.0 / horizon as f64,
        };
        if d > 0.0 && d < 1.0 {
            Ok(d)
        } else {
            Err(HarnessError::Config(format!("delta resolves to {d}, outside (0, 1)")))
        }
    }
}

/// Where a marginal-consuming policy gets its prior `q`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MarginalSource {
    #[default]
    True,
    File(PathBuf),
    Perturbed(f64),
}

impl FromStr for MarginalSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "true" {
            Ok(MarginalSource::True)
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(MarginalSource::File(PathBuf::from(p)))
        } else if let Some(e) = s.strip_prefix("perturbed:") {
            e.trim()
                .parse()
                .map(MarginalSource::Perturbed)
                .map_err(|_| format!("bad perturbation size in {s:?}"))
        } else {
            Err(format!("marginals must be \"true\", \"file:<path>\" or \"perturbed:<eps>\", got {s:?}"))
        }
    }
}

impl TryFrom<String> for MarginalSource {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for MarginalSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginalSource::True => write!(f, "true"),
            MarginalSource::File(p) => write!(f, "file:{}", p.display()),
            MarginalSource::Perturbed(e) => write!(f, "perturbed:{e}"),
        }
    }
}

impl From<MarginalSource> for String {
    fn from(m: MarginalSource) -> Self {
        m.to_string()
    }
}

impl MarginalSource {
    /// The marginals a policy is handed, given the true environment.
    pub fn resolve(&self, env: &Environment, base_dir: &Path) -> Result<Vec<Vec<f64>>, HarnessError> {
        let q = match self {
            MarginalSource::True => env.marginals().to_vec(),
            MarginalSource::Perturbed(eps) => perturb_marginals(env.marginals(), *eps)?,
            MarginalSource::File(p) => read_marginals(&base_dir.join(p))?,
        };
        if q.len() != env.n_actions() || q.iter().any(|r| r.len() != env.n_contexts()) {
            return Err(HarnessError::Arity(format!(
                "marginals are not {}x{}",
                env.n_actions(),
                env.n_contexts()
            )));
        }
        Ok(q)
    }
}

/// Reads either a bare `|A|×|Z|` array or any JSON object with a `marginals` field.
fn read_marginals(path: &Path) -> Result<Vec<Vec<f64>>, HarnessError> {
    let text = super::read_file(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let m = value.get("marginals").cloned().unwrap_or(value);
    serde_json::from_value(m).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignChoice {
    #[default]
    Fw,
    Exact,
}

/// `R₁` is always `√(|Z|T)`; `R₂ = r2_scale·√(|A|T)`, defaulting to `√(|A|/|Z|)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2_scale: Option<f64>,
}

/// Replacements for the default bound factors of the two base learners.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<f64>,
}

/// Serializable description of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicySpec {
    Ucb {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<DeltaSpec>,
    },
    Cucb {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<DeltaSpec>,
        #[serde(default)]
        marginals: MarginalSource,
    },
    Pe {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<DeltaSpec>,
        #[serde(default)]
        marginals: MarginalSource,
        #[serde(default)]
        design: DesignChoice,
    },
    Db {
        base: Vec<PolicySpec>,
        #[serde(default)]
        rates: RatesSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<DeltaSpec>,
        #[serde(default)]
        d_overrides: DOverrides,
        /// Constant of the default phased-elimination bound factor.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pe_constant: Option<f64>,
    },
    /// Always plays the lowest-index optimal action; a reference point.
    Best,
}

impl PolicySpec {
    pub fn ucb(delta: f64) -> Self {
        PolicySpec::Ucb { delta: Some(DeltaSpec::Value(delta)) }
    }

    pub fn cucb(delta: f64, marginals: MarginalSource) -> Self {
        PolicySpec::Cucb {
            delta: Some(DeltaSpec::Value(delta)),
            marginals,
        }
    }

    pub fn pe(delta: f64, marginals: MarginalSource, design: DesignChoice) -> Self {
        PolicySpec::Pe {
            delta: Some(DeltaSpec::Value(delta)),
            marginals,
            design,
        }
    }

    /// Balancing with default rates, δ = 1/T and default bound factors.
    pub fn db(first: PolicySpec, second: PolicySpec) -> Self {
        PolicySpec::Db {
            base: vec![first, second],
            rates: RatesSpec::default(),
            delta: None,
            d_overrides: DOverrides::default(),
            pe_constant: None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PolicySpec::Ucb { .. } => "ucb",
            PolicySpec::Cucb { .. } => "cucb",
            PolicySpec::Pe { .. } => "pe",
            PolicySpec::Db { .. } => "db",
            PolicySpec::Best => "best",
        }
    }

    /// Short human-readable label, e.g. `db(pe,ucb)`.
    pub fn label(&self) -> String {
        match self {
            PolicySpec::Db { base, .. } => format!(
                "db({})",
                base.iter().map(|b| b.label()).collect::<Vec<_>>().join(",")
            ),
            other => other.kind().to_string(),
        }
    }

    /// A copy whose balancing rates use `R₂ = z2·√(|A|T)`.
    pub fn with_z2(&self, z2: f64) -> Result<Self, HarnessError> {
        match self {
            PolicySpec::Db {
                base,
                rates,
                delta,
                d_overrides,
                pe_constant,
            } => Ok(PolicySpec::Db {
                base: base.clone(),
                rates: RatesSpec {
                    r1: rates.r1.clone(),
                    r2_scale: Some(z2),
                },
                delta: *delta,
                d_overrides: *d_overrides,
                pe_constant: *pe_constant,
            }),
            other => Err(HarnessError::Config(format!(
                "Z2 applies to balancing policies, not {}",
                other.kind()
            ))),
        }
    }

    /// The rate pair a balancing spec resolves to.
    pub fn rates(&self, env: &Environment, horizon: u64) -> Result<RatePair, HarnessError> {
        let PolicySpec::Db { rates, .. } = self else {
            return Err(HarnessError::Config("only balancing policies have rates".into()));
        };
        if let Some(r1) = &rates.r1 {
            if r1 != "sqrt_ZT" {
                return Err(HarnessError::Config(format!(
                    "rates.r1 must be \"sqrt_ZT\", got {r1:?}"
                )));
            }
        }
        let (a, z) = (env.n_actions(), env.n_contexts());
        Ok(match rates.r2_scale {
            Some(s) => RatePair::from_z2(s, a, z, horizon),
            None => RatePair::balanced(a, z, horizon),
        })
    }

    /// Builds a fresh policy for `env`.
    ///
    /// δ is taken from the spec itself, then `inherited`, then a default of
    /// `1/T` for balancing and [`DEFAULT_DELTA`] for everything else.
    pub fn build(
        &self,
        env: &Environment,
        horizon: u64,
        inherited: Option<DeltaSpec>,
        base_dir: &Path,
    ) -> Result<Box<dyn Policy>, HarnessError> {
        let resolve = |own: &Option<DeltaSpec>, fallback: DeltaSpec| {
            own.or(inherited).unwrap_or(fallback).resolve(horizon)
        };
        let default = DeltaSpec::Value(DEFAULT_DELTA);
        Ok(match self {
            PolicySpec::Ucb { delta } => {
                Box::new(Ucb::new(env.n_actions(), resolve(delta, default)?, horizon))
            }
            PolicySpec::Cucb { delta, marginals } => Box::new(Cucb::new(
                marginals.resolve(env, base_dir)?,
                resolve(delta, default)?,
                horizon,
            )),
            PolicySpec::Pe {
                delta,
                marginals,
                design,
            } => {
                let mode = match design {
                    DesignChoice::Fw => DesignMode::FrankWolfe,
                    DesignChoice::Exact => DesignMode::Exact,
                };
                let cfg = PeConfig::new(resolve(delta, default)?, horizon).with_design(mode);
                Box::new(PhasedElimination::new(marginals.resolve(env, base_dir)?, cfg)?)
            }
            PolicySpec::Db {
                base,
                delta,
                d_overrides,
                pe_constant,
                ..
            } => {
                if base.len() != 2 {
                    return Err(HarnessError::Config(format!(
                        "balancing needs exactly two base learners, got {}",
                        base.len()
                    )));
                }
                if base.iter().any(|b| matches!(b, PolicySpec::Db { .. })) {
                    return Err(HarnessError::Config("nested balancing is not supported".into()));
                }
                let own = delta.or(inherited).unwrap_or(DeltaSpec::InverseHorizon);
                let db_delta = own.resolve(horizon)?;
                let c = pe_constant.unwrap_or(PE_BOUND_CONSTANT);
                let d_default = |b: &PolicySpec| -> Result<f64, HarnessError> {
                    Ok(match b {
                        PolicySpec::Ucb { .. } => d_ucb(env.n_actions(), horizon, db_delta),
                        PolicySpec::Cucb { .. } => d_cucb(env.n_contexts(), horizon, db_delta),
                        PolicySpec::Pe { marginals, .. } => {
                            let q = marginals.resolve(env, base_dir)?;
                            d_pe(dim_span(&q, RANK_TOL), env.n_actions(), horizon, db_delta, c)
                        }
                        other => {
                            return Err(HarnessError::Config(format!(
                                "no default bound factor for {}",
                                other.kind()
                            )))
                        }
                    })
                };
                let d1 = match d_overrides.d1 {
                    Some(d) => d,
                    None => d_default(&base[0])?,
                };
                let d2 = match d_overrides.d2 {
                    Some(d) => d,
                    None => d_default(&base[1])?,
                };
                let rates = self.rates(env, horizon)?;
                let hp = db_hyperparams(rates, d1, d2, env.n_actions(), env.n_contexts(), horizon)?;
                let learners = [
                    base[0].build(env, horizon, Some(own), base_dir)?,
                    base[1].build(env, horizon, Some(own), base_dir)?,
                ];
                Box::new(DynamicBalancing::new(learners, hp, db_delta)?)
            }
            PolicySpec::Best => Box::new(FixedAction::new(env.best_action())),
        })
    }
}

/// Plays one action forever.
#[derive(Debug, Clone)]
pub struct FixedAction {
    action: usize,
}

impl FixedAction {
    pub fn new(action: usize) -> Self {
        Self { action }
    }
}

impl Policy for FixedAction {
    fn name(&self) -> &str {
        "best"
    }

    fn select(&mut self, _t: u64) -> usize {
        self.action
    }

    fn observe(&mut self, _action: usize, _context: usize, _reward: f64) {}

    fn ignores_contexts(&self) -> bool {
        true
    }
}

/// Named instance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "d1-benign")]
    D1Benign,
    #[serde(rename = "d1-variant")]
    D1Variant,
    #[serde(rename = "d2")]
    D2,
    #[serde(rename = "pe-adversarial")]
    PeAdversarial,
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "d1-benign" => Ok(Family::D1Benign),
            "d1-variant" => Ok(Family::D1Variant),
            "d2" => Ok(Family::D2),
            "pe-adversarial" => Ok(Family::PeAdversarial),
            _ => Err(format!(
                "unknown family {s:?}; expected d1-benign, d1-variant, d2 or pe-adversarial"
            )),
        }
    }
}

/// Environment section of a run file: a JSON file or an instance family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contexts: Option<usize>,
    /// Gap parameter of the family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0_size: Option<usize>,
}

impl EnvSpec {
    pub fn family(family: Family, actions: usize, contexts: usize, delta: f64, a0: Option<usize>) -> Self {
        Self {
            family: Some(family),
            actions: Some(actions),
            contexts: Some(contexts),
            delta: Some(delta),
            a0,
            ..Self::default()
        }
    }

    pub fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        if let Some(f) = &self.file {
            return f.file_stem().map_or_else(|| "env".into(), |s| s.to_string_lossy().into_owned());
        }
        match self.family {
            Some(f) => serde_json::to_value(f)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_else(|| "family".into()),
            None => "env".into(),
        }
    }

    pub fn build(&self, base_dir: &Path) -> Result<Environment, HarnessError> {
        match (&self.file, self.family) {
            (Some(path), None) => {
                let text = super::read_file(&base_dir.join(path))?;
                Ok(Environment::from_json(&text)?)
            }
            (None, Some(family)) => {
                let need = |v: Option<usize>, what: &str| {
                    v.ok_or_else(|| HarnessError::Config(format!("env.{what} is required for families")))
                };
                let actions = need(self.actions, "actions")?;
                let contexts = need(self.contexts, "contexts")?;
                let delta = self
                    .delta
                    .ok_or_else(|| HarnessError::Config("env.delta is required for families".into()))?;
                build_family(family, actions, contexts, delta, self.a0, self.z0_size)
            }
            _ => Err(HarnessError::Config(
                "env needs exactly one of `file` or `family`".into(),
            )),
        }
    }
}

/// Builds a member of a named family; `z0_size` defaults to `⌊|Z|/2⌋`.
pub fn build_family(
    family: Family,
    actions: usize,
    contexts: usize,
    delta: f64,
    a0: Option<usize>,
    z0_size: Option<usize>,
) -> Result<Environment, HarnessError> {
    let split = SplitSpec::new(z0_size.unwrap_or(contexts / 2), delta);
    Ok(match family {
        Family::D1Benign => hard_benign(actions, contexts, split)?,
        Family::D1Variant => {
            let a0 = a0.ok_or_else(|| HarnessError::Config("d1-variant needs a0".into()))?;
            hard_nonbenign_variant(actions, contexts, split, a0)?
        }
        Family::D2 => agnostic_variant(actions, contexts, split, a0)?,
        Family::PeAdversarial => pe_adversarial(actions, contexts, delta)?,
    })
}

fn default_replicates() -> u32 {
    1
}

/// TOML layout of `simulate --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub horizon: u64,
    #[serde(default = "default_replicates")]
    pub replicates: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    pub env: EnvSpec,
    pub policy: PolicySpec,
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Resolves environment and defaults; relative paths are taken from `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<RunConfig, HarnessError> {
        let env = self.env.build(base_dir)?;
        let env_name = self.env.display_name();
        let mut cfg = RunConfig::new(env, self.policy.clone(), self.horizon)
            .with_replicates(self.replicates)
            .with_seed(self.seed)
            .with_names(
                self.run_id.clone().unwrap_or_else(|| format!("{}-{}", self.policy.label(), env_name)),
                env_name,
            )
            .with_base_dir(base_dir);
        cfg.delta = self.delta;
        if let Some(c) = &self.checkpoints {
            cfg.checkpoints = c.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Grid units of a Pareto sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Z2Units {
    /// Values are `Z₂` itself.
    #[default]
    Absolute,
    /// Values are multiples of the price of adaptivity `√(|A|/|Z|)`.
    Price,
}

/// TOML layout of `sweep-pareto --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub horizon: u64,
    #[serde(default = "default_replicates")]
    pub replicates: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaSpec>,
    pub z2_grid: Vec<f64>,
    #[serde(default)]
    pub z2_units: Z2Units,
    pub benign: EnvSpec,
    pub hard: EnvSpec,
    pub policy: PolicySpec,
}

impl SweepFile {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Builds both environments and converts the grid to absolute `Z₂` values.
    pub fn resolve(&self, base_dir: &Path) -> Result<SweepPlan, HarnessError> {
        let benign = self.benign.build(base_dir)?;
        let hard = self.hard.build(base_dir)?;
        let scale = match self.z2_units {
            Z2Units::Absolute => 1.0,
            Z2Units::Price => (benign.n_actions() as f64 / benign.n_contexts() as f64).sqrt(),
        };
        let run_id = self
            .run_id
            .clone()
            .unwrap_or_else(|| format!("sweep-{}", self.policy.label()));
        let mut base = RunConfig::new(benign.clone(), self.policy.clone(), self.horizon)
            .with_replicates(self.replicates)
            .with_seed(self.seed)
            .with_names(run_id, self.benign.display_name())
            .with_base_dir(base_dir)
            .with_checkpoints(vec![self.horizon]);
        base.delta = self.delta;
        base.validate()?;
        Ok(SweepPlan {
            base,
            z2_grid: self.z2_grid.iter().map(|z| z * scale).collect(),
            benign: (self.benign.display_name(), benign),
            hard: (self.hard.display_name(), hard),
        })
    }
}

/// A resolved Pareto sweep.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub base: RunConfig,
    pub z2_grid: Vec<f64>,
    pub benign: (String, Environment),
    pub hard: (String, Environment),
}

impl SweepPlan {
    pub fn run(&self) -> Result<super::ParetoTable, HarnessError> {
        super::sweep_pareto(
            &self.base,
            &self.z2_grid,
            (&self.benign.0, &self.benign.1),
            (&self.hard.0, &self.hard.1),
        )
    }
}

/// A fully resolved simulation request.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub run_id: String,
    pub env_name: String,
    pub env: Environment,
    pub policy: PolicySpec,
    pub horizon: u64,
    pub replicates: u32,
    pub base_seed: u64,
    pub checkpoints: Vec<u64>,
    /// Fallback confidence level for policies without their own.
    pub delta: Option<DeltaSpec>,
    /// Keep full per-round traces (actions, contexts, rewards) of every replicate.
    pub keep_traces: bool,
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn new(env: Environment, policy: PolicySpec, horizon: u64) -> Self {
        Self {
            run_id: policy.label(),
            env_name: "env".into(),
            env,
            checkpoints: default_checkpoints(horizon),
            policy,
            horizon,
            replicates: 1,
            base_seed: 0,
            delta: None,
            keep_traces: false,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn with_replicates(mut self, n: u32) -> Self {
        self.replicates = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_names(mut self, run_id: impl Into<String>, env_name: impl Into<String>) -> Self {
        self.run_id = run_id.into();
        self.env_name = env_name.into();
        self
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    /// Records the cumulative regret after every round.
    pub fn every_round(self) -> Self {
        let h = self.horizon;
        self.with_checkpoints((1..=h).collect())
    }

    pub fn with_traces(mut self) -> Self {
        self.keep_traces = true;
        self
    }

    pub fn with_base_dir(mut self, dir: &Path) -> Self {
        self.base_dir = dir.to_path_buf();
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.horizon == 0 {
            return Err(HarnessError::Config("horizon must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(HarnessError::Config("replicates must be at least 1".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(HarnessError::Config("checkpoint list is empty".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Config("checkpoints must be strictly increasing".into()));
        }
        if self.checkpoints[0] < 1 || *self.checkpoints.last().expect("non-empty") > self.horizon {
            return Err(HarnessError::Config(format!(
                "checkpoints must lie in [1, {}]",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Number of log-spaced checkpoints before the final one.
pub const LOG_CHECKPOINTS: usize = 32;

/// 32 log-spaced rounds in `[1, T]`, deduplicated, plus `T` itself.
pub fn default_checkpoints(horizon: u64) -> Vec<u64> {
    let h = horizon.max(1);
    let mut out: Vec<u64> = (0..LOG_CHECKPOINTS)
        .map(|i| {
            let frac = i as f64 / LOG_CHECKPOINTS as f64;
            ((h as f64).powf(frac).round() as u64).clamp(1, h)
        })
        .collect();
    out.push(h);
    out.dedup();
    out
}
