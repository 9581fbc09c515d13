//! Sampled off-policy runs: environment interaction into a replay buffer, a
//! tabular critic trained on minibatches against a Polyak target, and actor
//! steps on the family objective weighted by the batch state distribution.

use softpmd::bellman::{polyak_update, sampled_critic_update, CriticConfig, Horizon};
use softpmd::diagnostics::{Extras, RunTrace};
use softpmd::env::{env_step, reset, sample_index, stream_rng, ReplayBuffer, Transition};
use softpmd::mdp::{exact_soft_values, return_j};
use softpmd::objectives::EntropyTuner;
use softpmd::policy_update::spma_max_eta;
use softpmd::{Mdp64, Policy64, QFunction64};

use crate::config::{Family, Mode, RunConfig, TauSpec, ZetaSpec};
use crate::error::{AtIteration, HarnessError, Result};
use crate::exact::{ActorStep, RunOutput};

const ENV_STREAM: u64 = 1;
const BUFFER_STREAM: u64 = 2;
const CRITIC_STREAM: u64 = 3;

/// Largest fraction of the admissible SPMA step used in sampled mode.
const SPMA_STEP_FRACTION: f64 = 0.9;

/// `J` of the greedy (argmax) version of `pi` under the unregularized objective.
pub fn greedy_return(mdp: &Mdp64, pi: &Policy64) -> Result<f64> {
    let (v, _) = exact_soft_values(mdp, &pi.greedy(), 0.0)?;
    Ok(return_j(mdp, &v))
}

fn absorbing_states(mdp: &Mdp64) -> Vec<bool> {
    (0..mdp.num_states())
        .map(|s| (0..mdp.num_actions()).all(|a| mdp.transition(s, a)[s] == 1.0))
        .collect()
}

/// Episodic interaction with the MDP: an episode ends after `max_len` steps
/// or after the first step taken from an absorbing state.
struct Collector {
    rng: rand_chacha::ChaCha8Rng,
    absorbing: Vec<bool>,
    max_len: usize,
    state: usize,
    len: usize,
    ret: f64,
    discount: f64,
    finished: Vec<f64>,
}

impl Collector {
    fn new(mdp: &Mdp64, seed: u64, max_len: usize) -> Self {
        let mut rng = stream_rng(seed, ENV_STREAM);
        let state = reset(mdp, &mut rng);
        Self {
            rng,
            absorbing: absorbing_states(mdp),
            max_len,
            state,
            len: 0,
            ret: 0.0,
            discount: 1.0,
            finished: Vec::new(),
        }
    }

    fn collect(&mut self, mdp: &Mdp64, pi: &Policy64, steps: usize, buffer: &mut ReplayBuffer<f64>) {
        for _ in 0..steps {
            let s = self.state;
            let a = sample_index(pi.row(s), &mut self.rng);
            let (next, r) = env_step(mdp, s, a, &mut self.rng);
            buffer.push(Transition { state: s, action: a, reward: r, next_state: next });
            self.ret += self.discount * r;
            self.discount *= mdp.discount();
            self.len += 1;
            if self.absorbing[s] || self.len >= self.max_len {
                self.finished.push(self.ret);
                self.state = reset(mdp, &mut self.rng);
                self.len = 0;
                self.ret = 0.0;
                self.discount = 1.0;
            } else {
                self.state = next;
            }
        }
    }

    /// Mean discounted return of the episodes finished since the last call.
    fn take_mean_return(&mut self) -> Option<f64> {
        if self.finished.is_empty() {
            return None;
        }
        let mean = self.finished.iter().sum::<f64>() / self.finished.len() as f64;
        self.finished.clear();
        Some(mean)
    }
}

fn state_weights(batch: &[Transition<f64>], num_states: usize) -> Vec<f64> {
    let mut w = vec![0.0; num_states];
    for tr in batch {
        w[tr.state] += 1.0;
    }
    let total = batch.len() as f64;
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Runs the off-policy actor-critic loop for `K` iterations of `N` environment steps.
///
/// With `tau = "auto"` the trace measures sub-optimality against the
/// unregularized optimum.
pub fn run_sampled(config: &RunConfig) -> Result<RunOutput> {
    if config.mode != Mode::Sampled {
        return Err(HarnessError::Config("run_sampled needs mode = \"sampled\"".into()));
    }
    config.validate()?;
    let spec = config.sampled.as_ref().expect("validated");
    let mdp = config.env.build(config.seed)?;
    let (n, na) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.discount();

    let mut tuner = match (&config.tau, &config.tuner) {
        (TauSpec::Auto, Some(t)) => Some(EntropyTuner::new(
            t.initial_alpha,
            EntropyTuner::default_target(na, t.target_entropy_scale),
            t.lr,
        )?),
        _ => None,
    };
    let current_tau = |tuner: &Option<EntropyTuner<f64>>| match tuner {
        Some(t) => t.alpha(),
        None => config.fixed_tau().expect("fixed when no tuner"),
    };
    let current_zeta = |tau: f64| match config.zeta {
        ZetaSpec::Fixed(z) => z,
        ZetaSpec::Tau => tau,
    };
    let (ref_tau, ref_zeta) = match config.tau {
        TauSpec::Fixed(t) => (t, current_zeta(t)),
        TauSpec::Auto => (0.0, 0.0),
    };
    let mut trace = RunTrace::new(&mdp, ref_tau, ref_zeta, config.diagnostics.solver_tol)?;

    let mut buffer = ReplayBuffer::new(spec.buffer_capacity, stream_rng(config.seed, BUFFER_STREAM))?;
    let mut critic_rng = stream_rng(config.seed, CRITIC_STREAM);
    let mut collector = Collector::new(&mdp, config.seed, spec.episode_length);
    let mut pi = Policy64::uniform(n, na);
    let mut q_online = QFunction64::zeros(n, na);
    let mut q_target = QFunction64::zeros(n, na);
    let mut greedy = Vec::new();
    collector.collect(&mdp, &pi, spec.warmup_steps, &mut buffer);
    collector.take_mean_return();

    for t in 0..config.iterations {
        let tau = current_tau(&tuner);
        let zeta = current_zeta(tau);
        collector.collect(&mdp, &pi, spec.env_steps, &mut buffer);

        let critic = CriticConfig {
            zeta,
            m_steps: Horizon::Finite(1),
            clamp: config.clamp_mode(),
            h_tau_bound: mdp.h_tau(tau.max(zeta)),
            target_smoothing: spec.target_smoothing,
            critic_lr: spec.critic_lr,
            critic_steps: spec.critic_steps,
            target_estimator: spec.target_estimator,
        };
        critic.validate()?;
        for _ in 0..spec.critic_updates {
            let batch = buffer.sample(spec.batch_size).at(t)?;
            q_online = sampled_critic_update(&batch, gamma, &pi, &q_target, &critic, &q_online, &mut critic_rng)
                .at(t)?;
            q_target = polyak_update(&q_target, &q_online, spec.target_smoothing).at(t)?;
        }

        let batch = buffer.sample(spec.batch_size).at(t)?;
        let weights = state_weights(&batch, n);
        let (mut eta, mut tau_t) = match config.family {
            Family::Dsac => (f64::INFINITY, f64::INFINITY),
            _ => {
                let step = config.actor_schedule(tau, gamma, na)?.step_at(t).at(t)?;
                (step.eta, step.tau_t)
            }
        };
        if config.family.is_spma() {
            let v = q_online.soft_state_values(&pi, zeta);
            let cap = SPMA_STEP_FRACTION * spma_max_eta(&pi, &q_online, &v);
            if eta > cap {
                log::debug!("iteration {t}: SPMA step {eta} capped at {cap}");
                eta = cap;
                tau_t = eta * tau;
            }
        }
        let extras = Extras {
            return_empirical: collector.take_mean_return(),
            alpha: tuner.as_ref().map(|t| t.alpha()),
        };
        trace.record(&mdp, &pi, &q_online, eta, tau_t, extras).at(t)?;

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
            state_weights: Some(&weights),
        };
        pi = step.apply(&pi, &q_online).at(t)?;
        if let Some(tn) = tuner.as_mut() {
            *tn = tn.step(&pi, &weights);
        }
        if config.diagnostics.greedy_return {
            greedy.push(greedy_return(&mdp, &pi)?);
        }
    }
    trace.finish(&mdp, &pi)?;
    Ok(RunOutput { run_id: config.run_id(), mdp, trace, greedy_returns: greedy })
}
