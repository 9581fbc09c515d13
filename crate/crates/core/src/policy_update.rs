//! Closed-form tabular policy updates: NPG and SPMA intermediate policies,
//! reverse/forward KL projections with actor entropy, the fused soft steps,
//! the DSAC limit and step-size schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{softmax_into, Scalar};
use crate::simplex::{minimize_on_simplex_scaled, SimplexOptions};
use crate::tables::{entropy, Policy, QFunction, Table, VFunction};

/// Smallest admissible value of `1 + η (q - v)` in SPMA updates.
pub const SPMA_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// `η_t = 1 / (c + τ (t + 1))`.
    TheoryDecay,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActorSchedule<T> {
    pub mode: ScheduleMode,
    pub c: T,
    pub tau: T,
    pub eta_const: T,
}

/// Step size at one iteration together with the derived `τ_t = η_t τ` and `α_t = 1 / (1 + τ_t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSize<T> {
    pub eta: T,
    pub tau_t: T,
    pub alpha: T,
}

impl<T: Scalar> ActorSchedule<T> {
    pub fn theory_decay(c: T, tau: T) -> Self {
        Self { mode: ScheduleMode::TheoryDecay, c, tau, eta_const: T::zero() }
    }

    pub fn constant(eta: T, tau: T) -> Self {
        Self { mode: ScheduleMode::Constant, c: T::zero(), tau, eta_const: eta }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= T::zero()) {
            return Err(Error::InvalidSchedule(format!("τ = {} is negative", self.tau)));
        }
        match self.mode {
            ScheduleMode::TheoryDecay => {
                if !(self.c >= T::zero()) {
                    return Err(Error::InvalidSchedule(format!("c = {} is negative", self.c)));
                }
                if self.c == T::zero() && self.tau == T::zero() {
                    return Err(Error::InvalidSchedule(
                        "theory_decay needs c > 0 or τ > 0".into(),
                    ));
                }
            }
            ScheduleMode::Constant => {
                if !(self.eta_const > T::zero()) {
                    return Err(Error::InvalidSchedule(format!(
                        "constant step {} must be positive",
                        self.eta_const
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eta_at(&self, t: usize) -> Result<T> {
        Ok(self.step_at(t)?.eta)
    }

    pub fn step_at(&self, t: usize) -> Result<StepSize<T>> {
        self.validate()?;
        let eta = match self.mode {
            ScheduleMode::TheoryDecay => {
                T::one() / (self.c + self.tau * T::from_usize_lossy(t + 1))
            }
            ScheduleMode::Constant => self.eta_const,
        };
        let tau_t = eta * self.tau;
        Ok(StepSize { eta, tau_t, alpha: T::one() / (T::one() + tau_t) })
    }
}

/// `η_t` for `schedule` at iteration `t`.
pub fn eta_at<T: Scalar>(schedule: &ActorSchedule<T>, t: usize) -> Result<T> {
    schedule.eta_at(t)
}

fn check_pair<T: Scalar>(pi: &Policy<T>, q: &QFunction<T>) -> Result<()> {
    q.check_shape(pi.num_states(), pi.num_actions())
}

/// Builds a policy row by row from log-weights (`-inf` marks zero mass).
fn from_log_weights<T: Scalar>(
    num_states: usize,
    num_actions: usize,
    mut logw: impl FnMut(usize, &mut [T]),
) -> Policy<T> {
    let mut table = Table::zeros(num_states, num_actions);
    let mut buf = vec![T::zero(); num_actions];
    for s in 0..num_states {
        logw(s, &mut buf);
        softmax_into(&buf, table.row_mut(s));
    }
    Policy::from_table_unchecked(table)
}

#[inline]
fn ln_or_neg_inf<T: Scalar>(p: T) -> T {
    if p > T::zero() {
        p.ln()
    } else {
        T::neg_infinity()
    }
}

/// `π(a|s) ∝ exp(scale q(s,a))`.
pub fn softmax_of_scaled<T: Scalar>(q: &QFunction<T>, scale: T) -> Policy<T> {
    from_log_weights(q.num_states(), q.num_actions(), |s, buf| {
        for (b, &x) in buf.iter_mut().zip(q.row(s)) {
            *b = scale * x;
        }
    })
}

/// NPG intermediate policy `π_t exp(η q)`, normalized per state.
pub fn npg_intermediate<T: Scalar>(pi_t: &Policy<T>, q: &QFunction<T>, eta: T) -> Result<Policy<T>> {
    check_pair(pi_t, q)?;
    Ok(from_log_weights(pi_t.num_states(), pi_t.num_actions(), |s, buf| {
        for ((b, &p), &x) in buf.iter_mut().zip(pi_t.row(s)).zip(q.row(s)) {
            *b = ln_or_neg_inf(p) + eta * x;
        }
    }))
}

/// Checks `1 + η (q - v) ≥ 1e-9` on the support of `pi_t` and returns the
/// per-entry factors (zero off the support).
fn spma_factors<T: Scalar>(
    pi_t: &Policy<T>,
    q: &QFunction<T>,
    v: &VFunction<T>,
    eta: T,
) -> Result<Table<T>> {
    check_pair(pi_t, q)?;
    if v.len() != pi_t.num_states() {
        return Err(Error::Shape {
            expected: format!("{} state values", pi_t.num_states()),
            got: v.len().to_string(),
        });
    }
    let margin = T::lit(SPMA_MARGIN);
    let (n, na) = (pi_t.num_states(), pi_t.num_actions());
    let mut out = Table::zeros(n, na);
    let mut violation = None;
    let mut max_eta = T::infinity();
    for s in 0..n {
        for a in 0..na {
            if pi_t.prob(s, a) <= T::zero() {
                continue;
            }
            let adv = q.get(s, a) - v.get(s);
            let f = T::one() + eta * adv;
            if adv < T::zero() {
                max_eta = max_eta.min((T::one() - margin) / -adv);
            }
            if !(f >= margin) && violation.is_none() {
                violation = Some((s, a, f));
            }
            out.set(s, a, f);
        }
    }
    if let Some((state, action, value)) = violation {
        return Err(Error::StepTooLarge {
            state,
            action,
            eta: eta.as_f64(),
            value: value.as_f64(),
            max_eta: max_eta.as_f64(),
        });
    }
    Ok(out)
}

/// Largest `η` keeping `1 + η (q - v) ≥ 1e-9` on the support of `pi_t`.
pub fn spma_max_eta<T: Scalar>(pi_t: &Policy<T>, q: &QFunction<T>, v: &VFunction<T>) -> T {
    let margin = T::lit(SPMA_MARGIN);
    let mut best = T::infinity();
    for s in 0..pi_t.num_states() {
        for a in 0..pi_t.num_actions() {
            let adv = q.get(s, a) - v.get(s);
            if pi_t.prob(s, a) > T::zero() && adv < T::zero() {
                best = best.min((T::one() - margin) / -adv);
            }
        }
    }
    best
}

/// SPMA intermediate policy `π_t (1 + η (q - v))`, normalized per state.
pub fn spma_intermediate<T: Scalar>(
    pi_t: &Policy<T>,
    q: &QFunction<T>,
    v: &VFunction<T>,
    eta: T,
) -> Result<Policy<T>> {
    let f = spma_factors(pi_t, q, v, eta)?;
    let (n, na) = (pi_t.num_states(), pi_t.num_actions());
    let mut table = Table::zeros(n, na);
    for s in 0..n {
        let row = table.row_mut(s);
        for (a, r) in row.iter_mut().enumerate() {
            *r = pi_t.prob(s, a) * f.get(s, a);
        }
        let z: T = row.iter().copied().sum();
        row.iter_mut().for_each(|x| *x /= z);
    }
    Ok(Policy::from_table_unchecked(table))
}

/// Reverse-KL proximal projection `π ∝ π_half^{1/(1+τ_t)}`.
pub fn rkl_project<T: Scalar>(pi_half: &Policy<T>, tau_t: T) -> Result<Policy<T>> {
    if !(tau_t >= T::zero()) {
        return Err(Error::InvalidParameter(format!("τ_t = {tau_t} must be nonnegative")));
    }
    if tau_t == T::zero() {
        return Ok(pi_half.clone());
    }
    let alpha = T::one() / (T::one() + tau_t);
    Ok(from_log_weights(pi_half.num_states(), pi_half.num_actions(), |s, buf| {
        for (b, &p) in buf.iter_mut().zip(pi_half.row(s)) {
            *b = alpha * ln_or_neg_inf(p);
        }
    }))
}

/// Forward-KL proximal projection: per state, the minimizer over the simplex of
/// `KL(π_half || π) - τ_t H(π)`.
///
/// With `τ_t > 0` the minimizer has full support even where `π_half` is zero.
pub fn fkl_project<T: Scalar>(pi_half: &Policy<T>, tau_t: T, tol: T) -> Result<Policy<T>> {
    fkl_project_with(pi_half, tau_t, SimplexOptions::new(tol))
}

pub fn fkl_project_with<T: Scalar>(
    pi_half: &Policy<T>,
    tau_t: T,
    opts: SimplexOptions<T>,
) -> Result<Policy<T>> {
    if !(opts.tol > T::zero()) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    if !(tau_t >= T::zero()) {
        return Err(Error::InvalidParameter(format!("τ_t = {tau_t} must be nonnegative")));
    }
    if tau_t == T::zero() {
        return Ok(pi_half.clone());
    }
    let (n, na) = (pi_half.num_states(), pi_half.num_actions());
    let support = vec![true; na];
    let mut table = Table::zeros(n, na);
    let mix = T::lit(0.5) / T::from_usize_lossy(na);
    for s in 0..n {
        let p = pi_half.row(s);
        let init: Vec<T> = p.iter().map(|&x| x * T::lit(0.5) + mix).collect();
        // f(π) = -Σ p ln π + τ_t Σ π ln π  (KL(p||π) up to a constant)
        let sol = minimize_on_simplex_scaled(
            &init,
            &support,
            |pi, g, w| {
                let mut val = T::zero();
                for b in 0..na {
                    let pb = pi[b].max(T::min_positive_value());
                    let lp = pb.ln();
                    if p[b] > T::zero() {
                        val -= p[b] * pi[b].ln();
                    }
                    val += tau_t * pi[b] * lp;
                    g[b] = -p[b] / pb + tau_t * (lp + T::one());
                    // 1 / (π_b ∂²f/∂π_b²)
                    w[b] = T::one() / (p[b] / pb + tau_t);
                }
                if !val.is_finite() {
                    return T::infinity();
                }
                val
            },
            opts,
        )?;
        table.row_mut(s).copy_from_slice(&sol.point);
    }
    Ok(Policy::from_table_unchecked(table))
}

/// Soft NPG: `π ∝ π_t^{α_t} exp(η α_t q)`, `α_t = 1/(1+τ_t)`.
pub fn soft_npg_step<T: Scalar>(
    pi_t: &Policy<T>,
    q: &QFunction<T>,
    eta: T,
    tau_t: T,
) -> Result<Policy<T>> {
    check_pair(pi_t, q)?;
    let alpha = T::one() / (T::one() + tau_t);
    Ok(from_log_weights(pi_t.num_states(), pi_t.num_actions(), |s, buf| {
        for ((b, &p), &x) in buf.iter_mut().zip(pi_t.row(s)).zip(q.row(s)) {
            *b = alpha * (ln_or_neg_inf(p) + eta * x);
        }
    }))
}

/// Soft SPMA: `π ∝ π_t^{α_t} (1 + η (q - v))^{α_t}`.
pub fn soft_spma_step<T: Scalar>(
    pi_t: &Policy<T>,
    q: &QFunction<T>,
    v: &VFunction<T>,
    eta: T,
    tau_t: T,
) -> Result<Policy<T>> {
    let f = spma_factors(pi_t, q, v, eta)?;
    let alpha = T::one() / (T::one() + tau_t);
    Ok(from_log_weights(pi_t.num_states(), pi_t.num_actions(), |s, buf| {
        for (a, b) in buf.iter_mut().enumerate() {
            let p = pi_t.prob(s, a);
            *b = if p > T::zero() { alpha * (p.ln() + f.get(s, a).ln()) } else { T::neg_infinity() };
        }
    }))
}

/// The `η → ∞` limit of NPG-RKL: `softmax(q / τ)`.
pub fn dsac_actor_exact<T: Scalar>(q: &QFunction<T>, tau: T) -> Result<Policy<T>> {
    if !(tau > T::zero()) {
        return Err(Error::InvalidParameter(format!("τ = {tau} must be positive")));
    }
    Ok(softmax_of_scaled(q, T::one() / tau))
}

/// Objective `KL(π || π_half) - τ_t H(π)` of the reverse-KL projection, summed over states.
pub fn rkl_objective<T: Scalar>(pi: &Policy<T>, pi_half: &Policy<T>, tau_t: T) -> T {
    (0..pi.num_states())
        .map(|s| {
            crate::tables::kl_divergence(pi.row(s), pi_half.row(s)) - tau_t * entropy(pi.row(s))
        })
        .sum()
}
