//! Soft Bellman operators on q-functions, m-step clamped evaluation, and the
//! sampled squared-loss critic with a Polyak-averaged target.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{sample_index, Transition};
use crate::error::{Error, Result};
use crate::mdp::{exact_soft_values, Mdp};
use crate::scalar::{xlogx, Scalar};
use crate::tables::{Policy, QFunction, Table};

/// Number of operator applications per evaluation; `Infinite` is the exact fixed point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

impl Horizon {
    pub fn is_infinite(self) -> bool {
        matches!(self, Horizon::Infinite)
    }
}

/// Where the `[0, H_τ]` projection is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampMode {
    #[default]
    Off,
    /// Clamp the result of the m applications.
    Output,
    /// Clamp every backed-up target (after each application, or each sampled target).
    Target,
}

/// How the next action in a sampled look-ahead target is integrated out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetEstimator {
    /// Exact expectation over `a' ~ π(·|s')`.
    #[default]
    Expected,
    /// A single sampled `a' ~ π(·|s')`.
    SampledAction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticConfig<T> {
    pub zeta: T,
    pub m_steps: Horizon,
    pub clamp: ClampMode,
    /// Clamp ceiling, normally `H_τ` of the run's actor τ.
    pub h_tau_bound: T,
    /// Polyak coefficient in `(0, 1]`.
    pub target_smoothing: T,
    pub critic_lr: T,
    pub critic_steps: usize,
    pub target_estimator: TargetEstimator,
}

impl<T: Scalar> CriticConfig<T> {
    /// Exact-mode defaults: m-step evaluation with output clamping at `H_τ`.
    pub fn exact(mdp: &Mdp<T>, tau: T, zeta: T, m_steps: Horizon) -> Self {
        Self {
            zeta,
            m_steps,
            clamp: ClampMode::Output,
            h_tau_bound: mdp.h_tau(tau),
            target_smoothing: T::one(),
            critic_lr: T::lit(0.5),
            critic_steps: 1,
            target_estimator: TargetEstimator::Expected,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta >= T::zero()) {
            return Err(Error::InvalidParameter(format!("ζ = {} must be nonnegative", self.zeta)));
        }
        if !(self.target_smoothing > T::zero() && self.target_smoothing <= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "target smoothing {} not in (0, 1]",
                self.target_smoothing
            )));
        }
        if !(self.h_tau_bound > T::zero()) {
            return Err(Error::InvalidParameter("H_τ bound must be positive".into()));
        }
        if !(self.critic_lr > T::zero()) || self.critic_steps == 0 {
            return Err(Error::InvalidParameter(
                "critic learning rate and step count must be positive".into(),
            ));
        }
        if self.m_steps == Horizon::Finite(0) {
            return Err(Error::InvalidParameter("m must be positive".into()));
        }
        Ok(())
    }
}

/// `E_{a~π}[q(s,a)] + ζ H(π(·|s))` for a single state.
#[inline]
fn soft_state_value<T: Scalar>(q: &[T], pi: &[T], zeta: T) -> T {
    q.iter()
        .zip(pi)
        .map(|(&x, &p)| if p > T::zero() { p * x - zeta * xlogx(p) } else { T::zero() })
        .sum()
}

/// `(T_ζ^π q)(s,a) = r(s,a) + γ E_{s'}[E_{a'~π} q(s',a') + ζ H(π(·|s'))]`.
pub fn soft_bellman_q<T: Scalar>(
    mdp: &Mdp<T>,
    policy: &Policy<T>,
    zeta: T,
    q: &QFunction<T>,
) -> Result<QFunction<T>> {
    let (n, na) = (mdp.num_states(), mdp.num_actions());
    policy.check_shape(n, na)?;
    q.check_shape(n, na)?;
    let v: Vec<T> = (0..n)
        .map(|s| soft_state_value(q.row(s), policy.row(s), zeta))
        .collect();
    Ok(mdp.backup(&v))
}

/// m applications of the soft Bellman operator from `q_prev`, projected onto
/// `[0, H_τ]` according to `cfg.clamp`. The infinite horizon returns the exact
/// fixed point `q_ζ^π` unclamped.
pub fn m_step_evaluate<T: Scalar>(
    mdp: &Mdp<T>,
    policy: &Policy<T>,
    cfg: &CriticConfig<T>,
    q_prev: &QFunction<T>,
) -> Result<QFunction<T>> {
    match cfg.m_steps {
        Horizon::Infinite => Ok(exact_soft_values(mdp, policy, cfg.zeta)?.1),
        Horizon::Finite(m) => {
            if m == 0 {
                return Err(Error::InvalidParameter("m must be positive".into()));
            }
            let (lo, hi) = (T::zero(), cfg.h_tau_bound);
            let mut q = q_prev.clone();
            for _ in 0..m {
                q = soft_bellman_q(mdp, policy, cfg.zeta, &q)?;
                if cfg.clamp == ClampMode::Target {
                    q = q.clamped(lo, hi);
                }
            }
            if cfg.clamp == ClampMode::Output {
                q = q.clamped(lo, hi);
            }
            Ok(q)
        }
    }
}

/// One-step look-ahead target `r + γ Σ_{a'} π(a'|s') [q(s',a') - ζ ln π(a'|s')]`.
pub fn lookahead_target<T: Scalar>(
    transition: &Transition<T>,
    gamma: T,
    policy: &Policy<T>,
    q_target: &QFunction<T>,
    zeta: T,
    clamp: bool,
    h_tau: T,
) -> T {
    let sp = transition.next_state;
    let y = transition.reward + gamma * soft_state_value(q_target.row(sp), policy.row(sp), zeta);
    if clamp {
        y.max(T::zero()).min(h_tau)
    } else {
        y
    }
}

fn sampled_action_target<T: Scalar, R: Rng + ?Sized>(
    transition: &Transition<T>,
    gamma: T,
    policy: &Policy<T>,
    q_target: &QFunction<T>,
    zeta: T,
    rng: &mut R,
) -> T {
    let sp = transition.next_state;
    let a = sample_index(policy.row(sp), rng);
    transition.reward + gamma * (q_target.get(sp, a) - zeta * policy.prob(sp, a).ln())
}

/// `critic_steps` gradient steps on `mean_i (q(s_i,a_i) - y_i)^2` with targets
/// held fixed. `rng` is only drawn from with [`TargetEstimator::SampledAction`].
pub fn sampled_critic_update<T: Scalar, R: Rng + ?Sized>(
    batch: &[Transition<T>],
    gamma: T,
    policy: &Policy<T>,
    q_target: &QFunction<T>,
    cfg: &CriticConfig<T>,
    q_online: &QFunction<T>,
    rng: &mut R,
) -> Result<QFunction<T>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("critic batch"));
    }
    let clamp = cfg.clamp != ClampMode::Off;
    let targets: Vec<T> = batch
        .iter()
        .map(|tr| match cfg.target_estimator {
            TargetEstimator::Expected => {
                lookahead_target(tr, gamma, policy, q_target, cfg.zeta, clamp, cfg.h_tau_bound)
            }
            TargetEstimator::SampledAction => {
                let y = sampled_action_target(tr, gamma, policy, q_target, cfg.zeta, rng);
                if clamp {
                    y.max(T::zero()).min(cfg.h_tau_bound)
                } else {
                    y
                }
            }
        })
        .collect();
    let scale = T::lit(2.0) / T::from_usize_lossy(batch.len());
    let mut q = q_online.clone();
    let mut grad = Table::zeros(q.num_states(), q.num_actions());
    for _ in 0..cfg.critic_steps {
        grad.as_mut_slice().iter_mut().for_each(|g| *g = T::zero());
        for (tr, &y) in batch.iter().zip(&targets) {
            let g = grad.get(tr.state, tr.action) + scale * (q.get(tr.state, tr.action) - y);
            grad.set(tr.state, tr.action, g);
        }
        for (x, &g) in q.table_mut().as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *x -= cfg.critic_lr * g;
        }
    }
    Ok(q)
}

/// `(1 - coef) q_target + coef q_online`.
pub fn polyak_update<T: Scalar>(
    q_target: &QFunction<T>,
    q_online: &QFunction<T>,
    coef: T,
) -> Result<QFunction<T>> {
    if !q_target.table().same_shape(q_online.table()) {
        return Err(Error::Shape {
            expected: format!("{}x{}", q_target.num_states(), q_target.num_actions()),
            got: format!("{}x{}", q_online.num_states(), q_online.num_actions()),
        });
    }
    let data = q_target
        .table()
        .as_slice()
        .iter()
        .zip(q_online.table().as_slice())
        .map(|(&t, &o)| (T::one() - coef) * t + coef * o)
        .collect();
    Ok(QFunction::from_table_unchecked(Table::from_vec(
        q_target.num_states(),
        q_target.num_actions(),
        data,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::garnet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bandit(rewards: Vec<f64>, gamma: f64) -> Mdp<f64> {
        let a = rewards.len();
        Mdp::new(1, a, vec![1.0; a], rewards, vec![1.0], gamma).unwrap()
    }

    fn tr(s: usize, a: usize, r: f64, sp: usize) -> Transition<f64> {
        Transition { state: s, action: a, reward: r, next_state: sp }
    }

    #[test]
    fn zero_discount_returns_reward() {
        let mdp = garnet::<f64>(4, 3, 2, 0.0, 3).unwrap();
        let q = QFunction::from_table_unchecked(Table::filled(4, 3, 7.0));
        let out = soft_bellman_q(&mdp, &Policy::uniform(4, 3), 0.5, &q).unwrap();
        for s in 0..4 {
            for a in 0..3 {
                assert_eq!(out.get(s, a), mdp.reward(s, a));
            }
        }
    }

    #[test]
    fn pure_entropy_backup() {
        let mdp = bandit(vec![0.0, 0.0], 0.5);
        let out = soft_bellman_q(&mdp, &Policy::uniform(1, 2), 1.0, &QFunction::zeros(1, 2)).unwrap();
        assert!((out.get(0, 0) - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn matches_nested_loop_expectation() {
        let mdp = garnet::<f64>(5, 3, 5, 0.8, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = QFunction::from_table_unchecked(Table::from_fn(5, 3, |_, _| rng.gen::<f64>() * 3.0));
        let pi = Policy::from_table_unchecked(Table::from_fn(5, 3, |s, a| [0.2, 0.3, 0.5][(s + a) % 3]));
        let zeta = 0.3;
        let out = soft_bellman_q(&mdp, &pi, zeta, &q).unwrap();
        for s in 0..5 {
            for a in 0..3 {
                let mut acc = 0.0;
                for sp in 0..5 {
                    let mut inner = 0.0;
                    for ap in 0..3 {
                        let p = pi.prob(sp, ap);
                        inner += p * (q.get(sp, ap) - zeta * p.ln());
                    }
                    acc += mdp.transition(s, a)[sp] * inner;
                }
                let want = mdp.reward(s, a) + 0.8 * acc;
                assert!((out.get(s, a) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_step_clamp_ignores_prev() {
        let mdp = garnet::<f64>(3, 2, 2, 0.0, 5).unwrap();
        let cfg = CriticConfig { h_tau_bound: 10.0, ..CriticConfig::exact(&mdp, 0.0, 0.0, Horizon::Finite(1)) };
        let prev = QFunction::from_table_unchecked(Table::filled(3, 2, -40.0));
        let out = m_step_evaluate(&mdp, &Policy::uniform(3, 2), &cfg, &prev).unwrap();
        for s in 0..3 {
            assert_eq!(out.row(s), &[mdp.reward(s, 0), mdp.reward(s, 1)]);
        }
    }

    #[test]
    fn infinite_horizon_is_fixed_point() {
        let mdp = garnet::<f64>(6, 3, 3, 0.9, 2).unwrap();
        let pi = Policy::uniform(6, 3);
        let cfg = CriticConfig::exact(&mdp, 0.1, 0.1, Horizon::Infinite);
        let q = m_step_evaluate(&mdp, &pi, &cfg, &QFunction::zeros(6, 3)).unwrap();
        let (_, exact) = exact_soft_values(&mdp, &pi, 0.1).unwrap();
        assert!(q.max_abs_diff(&exact) < 1e-8);
    }

    #[test]
    fn finite_horizon_contracts_toward_fixed_point() {
        let mdp = garnet::<f64>(8, 3, 4, 0.9, 9).unwrap();
        let pi = Policy::uniform(8, 3);
        let cfg = CriticConfig { clamp: ClampMode::Off, ..CriticConfig::exact(&mdp, 0.1, 0.1, Horizon::Finite(50)) };
        let q = m_step_evaluate(&mdp, &pi, &cfg, &QFunction::zeros(8, 3)).unwrap();
        let (_, exact) = exact_soft_values(&mdp, &pi, 0.1).unwrap();
        let bound = 0.9f64.powi(50) * exact.table().max_abs() + 1e-9;
        assert!(q.max_abs_diff(&exact) <= bound);
    }

    #[test]
    fn lookahead_examples() {
        let pi = Policy::uniform(2, 3);
        let q = QFunction::from_rows(&[vec![0.0; 3], vec![1.0, 2.0, 3.0]]).unwrap();
        let t = tr(0, 1, 0.4, 1);
        assert_eq!(lookahead_target(&t, 0.0, &pi, &q, 0.2, false, 10.0), 0.4);
        let y = lookahead_target(&t, 0.9, &pi, &q, 0.2, false, 10.0);
        assert!((y - (0.4 + 0.9 * (2.0 + 0.2 * 3f64.ln()))).abs() < 1e-12);
        let det = Policy::deterministic(3, &[0, 2]).unwrap();
        assert!((lookahead_target(&t, 0.9, &det, &q, 0.0, false, 10.0) - (0.4 + 0.9 * 3.0)).abs() < 1e-12);
        assert_eq!(lookahead_target(&t, 0.9, &det, &q, 0.0, true, 1.0), 1.0);
    }

    #[test]
    fn single_sample_full_step_hits_target() {
        let mdp = bandit(vec![0.3, 0.6], 0.5);
        let cfg = CriticConfig { critic_lr: 0.5, critic_steps: 1, clamp: ClampMode::Off, ..CriticConfig::exact(&mdp, 0.0, 0.0, Horizon::Finite(1)) };
        let pi = Policy::uniform(1, 2);
        let qt = QFunction::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let q0 = QFunction::from_rows(&[vec![5.0, -1.0]]).unwrap();
        let t = tr(0, 0, 0.3, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = sampled_critic_update(&[t], 0.5, &pi, &qt, &cfg, &q0, &mut rng).unwrap();
        assert!((out.get(0, 0) - (0.3 + 0.5 * 1.5)).abs() < 1e-12);
        assert_eq!(out.get(0, 1), -1.0);
    }

    #[test]
    fn repeated_pairs_converge_to_mean_target() {
        let mdp = Mdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![0.0, 0.0], vec![1.0, 0.0], 0.5).unwrap();
        let cfg = CriticConfig { critic_lr: 0.25, critic_steps: 200, clamp: ClampMode::Off, ..CriticConfig::exact(&mdp, 0.0, 0.0, Horizon::Finite(1)) };
        let pi = Policy::uniform(2, 1);
        let qt = QFunction::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let batch = [tr(0, 0, 0.1, 1), tr(0, 0, 0.5, 1), tr(0, 0, 0.9, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = sampled_critic_update(&batch, 0.5, &pi, &qt, &cfg, &QFunction::zeros(2, 1), &mut rng).unwrap();
        assert!((out.get(0, 0) - 1.5).abs() < 1e-6);
        assert!(sampled_critic_update(&[], 0.5, &pi, &qt, &cfg, &qt, &mut rng).is_err());
    }

    #[test]
    fn polyak_examples() {
        let zero = QFunction::<f64>::zeros(1, 1);
        let four = QFunction::from_rows(&[vec![4.0]]).unwrap();
        assert_eq!(polyak_update(&zero, &four, 1.0).unwrap(), four);
        assert_eq!(polyak_update(&zero, &four, 0.5).unwrap().get(0, 0), 2.0);
        assert_eq!(polyak_update(&four, &four, 0.3).unwrap(), four);
    }
}
