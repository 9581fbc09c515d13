//! Run configuration: one TOML document per run, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use softpmd::bellman::{ClampMode, Horizon, TargetEstimator};
use softpmd::bounds::{c_floor, Method};
use softpmd::env::{chain_mdp, garnet, gridworld, GridSpec};
use softpmd::objectives::ObjectiveFamily;
use softpmd::policy_update::{ActorSchedule, ScheduleMode};
use softpmd::Mdp64;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    NpgRkl,
    SpmaRkl,
    NpgFkl,
    SpmaFkl,
    Dsac,
}

impl Family {
    /// The actor objective the family optimizes; DSAC is the η → ∞ limit of NPG-RKL.
    pub fn objective(self) -> ObjectiveFamily {
        match self {
            Family::NpgRkl | Family::Dsac => ObjectiveFamily::NpgRkl,
            Family::SpmaRkl => ObjectiveFamily::SpmaRkl,
            Family::NpgFkl => ObjectiveFamily::NpgFkl,
            Family::SpmaFkl => ObjectiveFamily::SpmaFkl,
        }
    }

    pub fn is_spma(self) -> bool {
        matches!(self, Family::SpmaRkl | Family::SpmaFkl)
    }

    /// The method whose guarantees cover this family, if any.
    pub fn theory_method(self) -> Option<Method> {
        match self {
            Family::NpgRkl => Some(Method::SoftNpg),
            Family::SpmaRkl => Some(Method::SoftSpma),
            _ => None,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrWord {
    Num(f64),
    Word(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IntOrWord {
    Int(usize),
    Word(String),
}

/// Actor entropy: a fixed value or tuned online.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(try_from = "NumOrWord")]
pub enum TauSpec {
    Fixed(f64),
    Auto,
}

impl TryFrom<NumOrWord> for TauSpec {
    type Error = String;
    fn try_from(raw: NumOrWord) -> std::result::Result<Self, String> {
        match raw {
            NumOrWord::Num(x) if x >= 0.0 && x.is_finite() => Ok(TauSpec::Fixed(x)),
            NumOrWord::Num(x) => Err(format!("tau = {x} must be a nonnegative number")),
            NumOrWord::Word(w) if w == "auto" => Ok(TauSpec::Auto),
            NumOrWord::Word(w) => Err(format!("tau must be a number or \"auto\", got {w:?}")),
        }
    }
}

/// Critic entropy: a fixed value or equal to the actor's (possibly tuned) τ.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(try_from = "NumOrWord")]
pub enum ZetaSpec {
    Fixed(f64),
    Tau,
}

impl Default for ZetaSpec {
    fn default() -> Self {
        ZetaSpec::Fixed(0.0)
    }
}

impl TryFrom<NumOrWord> for ZetaSpec {
    type Error = String;
    fn try_from(raw: NumOrWord) -> std::result::Result<Self, String> {
        match raw {
            NumOrWord::Num(x) if x >= 0.0 && x.is_finite() => Ok(ZetaSpec::Fixed(x)),
            NumOrWord::Num(x) => Err(format!("zeta = {x} must be a nonnegative number")),
            NumOrWord::Word(w) if w == "tau" => Ok(ZetaSpec::Tau),
            NumOrWord::Word(w) => Err(format!("zeta must be a number or \"tau\", got {w:?}")),
        }
    }
}

/// Evaluation depth: a positive integer or `"infinite"`.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(try_from = "IntOrWord")]
pub struct MSteps(pub Horizon);

impl Default for MSteps {
    fn default() -> Self {
        MSteps(Horizon::Infinite)
    }
}

impl TryFrom<IntOrWord> for MSteps {
    type Error = String;
    fn try_from(raw: IntOrWord) -> std::result::Result<Self, String> {
        match raw {
            IntOrWord::Int(0) => Err("m_steps must be positive".into()),
            IntOrWord::Int(m) => Ok(MSteps(Horizon::Finite(m))),
            IntOrWord::Word(w) if w == "infinite" => Ok(MSteps(Horizon::Infinite)),
            IntOrWord::Word(w) => Err(format!("m_steps must be an integer or \"infinite\", got {w:?}")),
        }
    }
}

/// Schedule constant `c`: a value or the smallest one the sub-optimality guarantee admits.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(try_from = "NumOrWord")]
pub enum CSpec {
    Fixed(f64),
    Floor,
}

impl TryFrom<NumOrWord> for CSpec {
    type Error = String;
    fn try_from(raw: NumOrWord) -> std::result::Result<Self, String> {
        match raw {
            NumOrWord::Num(x) if x >= 0.0 && x.is_finite() => Ok(CSpec::Fixed(x)),
            NumOrWord::Num(x) => Err(format!("c = {x} must be a nonnegative number")),
            NumOrWord::Word(w) if w == "floor" => Ok(CSpec::Floor),
            NumOrWord::Word(w) => Err(format!("c must be a number or \"floor\", got {w:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Garnet {
        states: usize,
        actions: usize,
        branching: usize,
        gamma: f64,
        /// Generator seed; defaults to the run seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Chain {
        length: usize,
        #[serde(default)]
        slip: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
    Gridworld(GridSpec),
    /// An MDP document as written by `dump-mdp`.
    Json { path: PathBuf },
}

impl EnvSpec {
    pub fn build(&self, run_seed: u64) -> Result<Mdp64> {
        Ok(match self {
            EnvSpec::Garnet { states, actions, branching, gamma, seed } => {
                garnet(*states, *actions, *branching, *gamma, seed.unwrap_or(run_seed))?
            }
            EnvSpec::Chain { length, slip, gamma } => {
                let mdp = chain_mdp(*length, *slip)?;
                match gamma {
                    Some(g) => mdp.with_discount(*g)?,
                    None => mdp,
                }
            }
            EnvSpec::Gridworld(grid) => gridworld(grid)?,
            EnvSpec::Json { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
                Mdp64::from_json(&text)?
            }
        })
    }

    /// Makes a relative JSON path relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let EnvSpec::Json { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub mode: ScheduleMode,
    #[serde(default)]
    pub c: Option<CSpec>,
    #[serde(default)]
    pub eta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorUpdate {
    /// Closed-form update of the family (exact mode default).
    #[default]
    ClosedForm,
    /// `inner_steps` gradient steps on the family objective.
    InnerLoop,
    /// Gradient ascent on the family objective until the gradient vanishes.
    Stationarity,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    #[serde(default)]
    pub update: Option<ActorUpdate>,
    #[serde(default = "default_inner_steps")]
    pub inner_steps: usize,
    #[serde(default = "default_inner_step_size")]
    pub step_size: f64,
    #[serde(default = "default_true")]
    pub backtracking: bool,
    /// Tolerance of the FKL projection and of the stationarity loop.
    #[serde(default = "default_actor_tol")]
    pub tol: f64,
}

fn default_inner_steps() -> usize {
    10
}

fn default_inner_step_size() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_actor_tol() -> f64 {
    1e-10
}

impl Default for ActorSpec {
    fn default() -> Self {
        Self {
            update: None,
            inner_steps: default_inner_steps(),
            step_size: default_inner_step_size(),
            backtracking: true,
            tol: default_actor_tol(),
        }
    }
}

/// Sampled-mode data collection and critic settings.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledSpec {
    /// `N`, environment steps per outer iteration.
    pub env_steps: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Critic minibatch updates per outer iteration.
    #[serde(default = "default_one")]
    pub critic_updates: usize,
    #[serde(default = "default_critic_lr")]
    pub critic_lr: f64,
    #[serde(default = "default_one")]
    pub critic_steps: usize,
    #[serde(default = "default_smoothing")]
    pub target_smoothing: f64,
    #[serde(default)]
    pub target_estimator: TargetEstimator,
    /// Episodes are cut after this many steps.
    #[serde(default = "default_episode_length")]
    pub episode_length: usize,
    /// Transitions collected under `π_0` before the first iteration.
    #[serde(default)]
    pub warmup_steps: usize,
}

fn default_one() -> usize {
    1
}

fn default_critic_lr() -> f64 {
    0.5
}

fn default_smoothing() -> f64 {
    0.05
}

fn default_episode_length() -> usize {
    100
}

/// Entropy-coefficient tuner used with `tau = "auto"`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerSpec {
    #[serde(default = "default_alpha")]
    pub initial_alpha: f64,
    /// Target entropy as a fraction of `ln A`.
    #[serde(default = "default_target_scale")]
    pub target_entropy_scale: f64,
    #[serde(default = "default_tuner_lr")]
    pub lr: f64,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_target_scale() -> f64 {
    0.5
}

fn default_tuner_lr() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// Tolerance of the soft-optimal comparator solve.
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    /// Evaluate the greedy policy every iteration in sampled mode.
    #[serde(default = "default_true")]
    pub greedy_return: bool,
}

fn default_solver_tol() -> f64 {
    1e-12
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self { solver_tol: default_solver_tol(), greedy_return: true }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub mode: Mode,
    pub family: Family,
    pub env: EnvSpec,
    pub tau: TauSpec,
    #[serde(default)]
    pub zeta: ZetaSpec,
    #[serde(default)]
    pub m_steps: MSteps,
    /// Defaults to output clamping in exact mode and none in sampled mode.
    #[serde(default)]
    pub clamp: Option<ClampMode>,
    /// `K`, outer iterations.
    pub iterations: usize,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub actor: ActorSpec,
    #[serde(default)]
    pub sampled: Option<SampledSpec>,
    #[serde(default)]
    pub tuner: Option<TunerSpec>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.env.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn run_id(&self) -> String {
        match &self.name {
            Some(n) => format!("{n}-s{}", self.seed),
            None => format!("{:?}-s{}", self.family, self.seed).to_lowercase(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Exact => {
                if self.sampled.is_some() {
                    return Err(invalid("exact mode takes no [sampled] block (buffer/batch settings)"));
                }
                if self.tau == TauSpec::Auto {
                    return Err(invalid("tau = \"auto\" is only available in sampled mode"));
                }
            }
            Mode::Sampled => {
                let s = self
                    .sampled
                    .as_ref()
                    .ok_or_else(|| invalid("sampled mode requires a [sampled] block"))?;
                if s.batch_size == 0 || s.buffer_capacity == 0 {
                    return Err(invalid("batch_size and buffer_capacity must be positive"));
                }
                if s.episode_length == 0 || s.critic_updates == 0 {
                    return Err(invalid("episode_length and critic_updates must be positive"));
                }
                if self.actor.update == Some(ActorUpdate::ClosedForm) && self.family != Family::Dsac {
                    return Err(invalid("sampled mode updates the actor through its objective"));
                }
            }
        }
        match (self.tau, &self.tuner) {
            (TauSpec::Auto, None) => return Err(invalid("tau = \"auto\" requires a [tuner] block")),
            (TauSpec::Fixed(_), Some(_)) => return Err(invalid("[tuner] is only used with tau = \"auto\"")),
            _ => {}
        }
        if let TauSpec::Fixed(t) = self.tau {
            if self.family == Family::Dsac && t <= 0.0 {
                return Err(invalid("dsac needs tau > 0"));
            }
        }
        if self.family != Family::Dsac {
            self.schedule
                .as_ref()
                .ok_or_else(|| invalid("a [schedule] block is required for this family"))?;
        }
        if let Some(s) = &self.schedule {
            match s.mode {
                ScheduleMode::TheoryDecay if s.c.is_none() => {
                    return Err(invalid("theory_decay schedule needs c"))
                }
                ScheduleMode::Constant if s.eta.is_none() => {
                    return Err(invalid("constant schedule needs eta"))
                }
                _ => {}
            }
            if let Some(eta) = s.eta {
                if eta.is_nan() || eta <= 0.0 {
                    return Err(invalid("eta must be positive"));
                }
            }
        }
        if self.actor.inner_steps == 0 && self.actor_update() == ActorUpdate::InnerLoop {
            return Err(invalid("inner_steps must be positive"));
        }
        if !(self.actor.step_size > 0.0 && self.actor.tol > 0.0) {
            return Err(invalid("actor step_size and tol must be positive"));
        }
        Ok(())
    }

    pub fn actor_update(&self) -> ActorUpdate {
        self.actor.update.unwrap_or(match self.mode {
            Mode::Exact => ActorUpdate::ClosedForm,
            Mode::Sampled => ActorUpdate::InnerLoop,
        })
    }

    pub fn clamp_mode(&self) -> ClampMode {
        self.clamp.unwrap_or(match self.mode {
            Mode::Exact => ClampMode::Output,
            Mode::Sampled => ClampMode::Off,
        })
    }

    pub fn horizon(&self) -> Horizon {
        self.m_steps.0
    }

    /// The fixed τ, or an error for tuned runs.
    pub fn fixed_tau(&self) -> Result<f64> {
        match self.tau {
            TauSpec::Fixed(t) => Ok(t),
            TauSpec::Auto => Err(invalid("run needs a fixed tau")),
        }
    }

    /// `c` with `"floor"` resolved for this family.
    pub fn schedule_c(&self, gamma: f64, num_actions: usize) -> Result<Option<f64>> {
        let Some(spec) = &self.schedule else { return Ok(None) };
        Ok(match spec.c {
            None => None,
            Some(CSpec::Fixed(c)) => Some(c),
            Some(CSpec::Floor) => {
                let method = self
                    .family
                    .theory_method()
                    .ok_or_else(|| invalid("c = \"floor\" needs family npg_rkl or spma_rkl"))?;
                let tau = self.fixed_tau()?;
                if tau <= 0.0 {
                    return Err(invalid("c = \"floor\" needs tau > 0"));
                }
                Some(c_floor(method, gamma, tau, num_actions))
            }
        })
    }

    /// Actor schedule for actor entropy `tau`.
    pub fn actor_schedule(&self, tau: f64, gamma: f64, num_actions: usize) -> Result<ActorSchedule<f64>> {
        let spec = self.schedule.as_ref().ok_or_else(|| invalid("missing [schedule]"))?;
        let schedule = match spec.mode {
            ScheduleMode::TheoryDecay => {
                let c = self.schedule_c(gamma, num_actions)?.expect("validated");
                ActorSchedule::theory_decay(c, tau)
            }
            ScheduleMode::Constant => ActorSchedule::constant(spec.eta.expect("validated"), tau),
        };
        schedule.validate()?;
        Ok(schedule)
    }
}
