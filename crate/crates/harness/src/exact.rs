//! Exact-tabular runs: m-step evaluation of the true operator and closed-form
//! (or objective-based) actor updates on every state.

use softpmd::bellman::{m_step_evaluate, CriticConfig};
use softpmd::diagnostics::{Extras, RunTrace};
use softpmd::mdp::exact_soft_values;
use softpmd::objectives::{inner_loop_optimize, optimize_to_stationarity, InnerLoopOptions, ObjectiveSpec, TabularLogits};
use softpmd::policy_update::{
    dsac_actor_exact, fkl_project, npg_intermediate, soft_npg_step, soft_spma_step, spma_intermediate,
};
use softpmd::{Mdp64, Policy64, QFunction64};

use crate::config::{ActorUpdate, Family, Mode, RunConfig, ZetaSpec};
use crate::error::{AtIteration, HarnessError, Result};

/// Iteration budget of the stationarity loop.
const STATIONARITY_MAX_STEPS: usize = 200_000;

/// A finished run together with the MDP it ran on.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub run_id: String,
    pub mdp: Mdp64,
    pub trace: RunTrace<f64>,
    /// Greedy-policy `J` after each iteration (sampled mode).
    pub greedy_returns: Vec<f64>,
}

/// How the actor moves from `π_t` to `π_{t+1}` given the critic.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ActorStep<'a> {
    pub family: Family,
    pub update: ActorUpdate,
    pub eta: f64,
    pub tau: f64,
    pub tau_t: f64,
    pub zeta: f64,
    pub inner_steps: usize,
    pub step_size: f64,
    pub backtracking: bool,
    pub tol: f64,
    pub state_weights: Option<&'a [f64]>,
}

impl ActorStep<'_> {
    pub(crate) fn apply(&self, pi: &Policy64, q: &QFunction64) -> softpmd::Result<Policy64> {
        let v = q.soft_state_values(pi, self.zeta);
        if self.family == Family::Dsac {
            return dsac_actor_exact(q, self.tau);
        }
        match self.update {
            ActorUpdate::ClosedForm => match self.family {
                Family::NpgRkl => soft_npg_step(pi, q, self.eta, self.tau_t),
                Family::SpmaRkl => soft_spma_step(pi, q, &v, self.eta, self.tau_t),
                Family::NpgFkl => fkl_project(&npg_intermediate(pi, q, self.eta)?, self.tau_t, self.tol),
                Family::SpmaFkl => {
                    fkl_project(&spma_intermediate(pi, q, &v, self.eta)?, self.tau_t, self.tol)
                }
                Family::Dsac => unreachable!("handled above"),
            },
            ActorUpdate::InnerLoop | ActorUpdate::Stationarity => {
                let n = pi.num_states();
                let weights = match self.state_weights {
                    Some(w) => w.to_vec(),
                    None => vec![1.0 / n as f64; n],
                };
                let spec = ObjectiveSpec::new(self.family.objective(), self.eta, self.tau, weights)?;
                let theta = TabularLogits::from_policy(pi);
                let theta = if self.update == ActorUpdate::InnerLoop {
                    let opts = InnerLoopOptions {
                        steps: self.inner_steps,
                        step_size: self.step_size,
                        backtracking: self.backtracking,
                    };
                    inner_loop_optimize(&spec, &theta, pi, q, &v, opts)?
                } else {
                    optimize_to_stationarity(&spec, &theta, pi, q, &v, self.tol, STATIONARITY_MAX_STEPS)?
                };
                Ok(theta.policy())
            }
        }
    }
}

/// Runs `K` outer iterations of exact evaluation and actor updates from the uniform policy.
pub fn run_exact(config: &RunConfig) -> Result<RunOutput> {
    if config.mode != Mode::Exact {
        return Err(HarnessError::Config("run_exact needs mode = \"exact\"".into()));
    }
    config.validate()?;
    let mdp = config.env.build(config.seed)?;
    let (n, na) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.discount();
    let tau = config.fixed_tau()?;
    let zeta = match config.zeta {
        ZetaSpec::Fixed(z) => z,
        ZetaSpec::Tau => tau,
    };
    let schedule = match config.family {
        Family::Dsac => None,
        _ => Some(config.actor_schedule(tau, gamma, na)?),
    };
    let mut critic = CriticConfig::exact(&mdp, tau, zeta, config.horizon());
    critic.clamp = config.clamp_mode();
    critic.validate()?;

    let mut trace = RunTrace::new(&mdp, tau, zeta, config.diagnostics.solver_tol)?;
    let mut pi = Policy64::uniform(n, na);
    // base case of the evaluation recursion: exact q_ζ of π_0
    let mut q = exact_soft_values(&mdp, &pi, zeta)?.1;
    for t in 0..config.iterations {
        if t > 0 {
            q = m_step_evaluate(&mdp, &pi, &critic, &q).at(t)?;
        }
        let (eta, tau_t) = match &schedule {
            Some(s) => {
                let step = s.step_at(t).at(t)?;
                (step.eta, step.tau_t)
            }
            None => (f64::INFINITY, f64::INFINITY),
        };
        trace.record(&mdp, &pi, &q, eta, tau_t, Extras::default()).at(t)?;
        let step = ActorStep {
            family: config.family,
            update: config.actor_update(),
            eta,
            tau,
            tau_t,
            zeta,
            inner_steps: config.actor.inner_steps,
            step_size: config.actor.step_size,
            backtracking: config.actor.backtracking,
            tol: config.actor.tol,
            state_weights: None,
        };
        pi = step.apply(&pi, &q).at(t)?;
    }
    trace.finish(&mdp, &pi)?;
    Ok(RunOutput { run_id: config.run_id(), mdp, trace, greedy_returns: Vec::new() })
}
