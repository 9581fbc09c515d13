//! Parameterized actor objectives over tabular softmax logits, their analytic
//! gradients, the inner-loop optimizer and the entropy-coefficient tuner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy_update::SPMA_MARGIN;
use crate::scalar::{softmax_into, Scalar};
use crate::tables::{entropy, Policy, QFunction, Table, VFunction};

/// Actor logits `θ[s][a]`; the induced policy is a per-state softmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularLogits<T> {
    table: Table<T>,
}

impl<T: Scalar> TabularLogits<T> {
    pub fn new(table: Table<T>) -> Result<Self> {
        if let Some(x) = table.as_slice().iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("logit {x} is not finite")));
        }
        Ok(Self { table })
    }

    /// All-zero logits, i.e. the uniform policy.
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self { table: Table::zeros(num_states, num_actions) }
    }

    /// `θ = ln π`, with zero probabilities mapped to the most negative finite log.
    pub fn from_policy(pi: &Policy<T>) -> Self {
        let floor = T::min_positive_value();
        Self { table: pi.table().map(|p| p.max(floor).ln()) }
    }

    pub fn table(&self) -> &Table<T> {
        &self.table
    }

    pub fn num_states(&self) -> usize {
        self.table.rows()
    }

    pub fn num_actions(&self) -> usize {
        self.table.cols()
    }

    pub fn policy(&self) -> Policy<T> {
        let mut out = Table::zeros(self.num_states(), self.num_actions());
        for s in 0..self.num_states() {
            softmax_into(self.table.row(s), out.row_mut(s));
        }
        Policy::from_table_unchecked(out)
    }

    fn axpy(&self, step: T, dir: &Table<T>) -> Self {
        let data = self
            .table
            .as_slice()
            .iter()
            .zip(dir.as_slice())
            .map(|(&x, &d)| x + step * d)
            .collect();
        Self {
            table: Table::from_vec(self.num_states(), self.num_actions(), data)
                .expect("same shape"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveFamily {
    NpgRkl,
    SpmaRkl,
    NpgFkl,
    SpmaFkl,
}

impl ObjectiveFamily {
    pub const ALL: [ObjectiveFamily; 4] = [
        ObjectiveFamily::NpgRkl,
        ObjectiveFamily::SpmaRkl,
        ObjectiveFamily::NpgFkl,
        ObjectiveFamily::SpmaFkl,
    ];

    pub fn is_spma(self) -> bool {
        matches!(self, ObjectiveFamily::SpmaRkl | ObjectiveFamily::SpmaFkl)
    }

    pub fn is_fkl(self) -> bool {
        matches!(self, ObjectiveFamily::NpgFkl | ObjectiveFamily::SpmaFkl)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec<T> {
    pub family: ObjectiveFamily,
    pub eta: T,
    pub tau: T,
    /// Distribution over states weighting the per-state terms.
    pub state_weights: Vec<T>,
}

impl<T: Scalar> ObjectiveSpec<T> {
    pub fn new(family: ObjectiveFamily, eta: T, tau: T, state_weights: Vec<T>) -> Result<Self> {
        let spec = Self { family, eta, tau, state_weights };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform_weights(family: ObjectiveFamily, eta: T, tau: T, num_states: usize) -> Self {
        let w = T::one() / T::from_usize_lossy(num_states);
        Self { family, eta, tau, state_weights: vec![w; num_states] }
    }

    /// `τ_t = η τ`.
    pub fn tau_t(&self) -> T {
        self.eta * self.tau
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero()) {
            return Err(Error::InvalidParameter(format!("η = {} must be positive", self.eta)));
        }
        if !(self.tau >= T::zero()) {
            return Err(Error::InvalidParameter(format!("τ = {} must be nonnegative", self.tau)));
        }
        if self.state_weights.iter().any(|&w| !(w >= T::zero())) {
            return Err(Error::InvalidParameter("state weights must be nonnegative".into()));
        }
        let total: T = self.state_weights.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-9) {
            return Err(Error::InvalidParameter(format!("state weights sum to {total}")));
        }
        Ok(())
    }
}

/// Per-state inputs shared by value and gradient.
struct StateTerms<'a, T> {
    pi_t: &'a [T],
    q: &'a [T],
    v: T,
}

fn spma_factor<T: Scalar>(eta: T, q: T, v: T, s: usize, a: usize) -> Result<T> {
    let f = T::one() + eta * (q - v);
    if !(f >= T::lit(SPMA_MARGIN)) {
        return Err(Error::Domain(format!(
            "1 + η(q - v) = {f} below {SPMA_MARGIN} at state {s}, action {a}"
        )));
    }
    Ok(f)
}

/// FKL target weights: the NPG or SPMA intermediate distribution for one state.
fn fkl_weights<T: Scalar>(spec: &ObjectiveSpec<T>, st: &StateTerms<T>, s: usize, out: &mut [T]) -> Result<()> {
    match spec.family {
        ObjectiveFamily::NpgFkl => {
            let logw: Vec<T> = st
                .pi_t
                .iter()
                .zip(st.q)
                .map(|(&p, &x)| if p > T::zero() { p.ln() + spec.eta * x } else { T::neg_infinity() })
                .collect();
            softmax_into(&logw, out);
        }
        ObjectiveFamily::SpmaFkl => {
            for (a, o) in out.iter_mut().enumerate() {
                *o = if st.pi_t[a] > T::zero() {
                    st.pi_t[a] * spma_factor(spec.eta, st.q[a], st.v, s, a)?
                } else {
                    T::zero()
                };
            }
            let z: T = out.iter().copied().sum();
            out.iter_mut().for_each(|x| *x /= z);
        }
        _ => unreachable!("rkl families have no target weights"),
    }
    Ok(())
}

/// `ln π_t` on the support, or a domain error where an RKL term would be infinite.
fn log_pi_t<T: Scalar>(pi_t: &[T], s: usize) -> Result<Vec<T>> {
    pi_t.iter()
        .enumerate()
        .map(|(a, &p)| {
            if p > T::zero() {
                Ok(p.ln())
            } else {
                Err(Error::Domain(format!(
                    "reverse-KL objective needs π_t(·|{s}) > 0, action {a} has zero mass"
                )))
            }
        })
        .collect()
}

/// Value of the per-state term and (optionally) its logit gradient.
fn state_term<T: Scalar>(
    spec: &ObjectiveSpec<T>,
    theta: &[T],
    st: &StateTerms<T>,
    s: usize,
    grad: Option<&mut [T]>,
) -> Result<T> {
    let na = theta.len();
    let mut pi = vec![T::zero(); na];
    softmax_into(theta, &mut pi);
    let log_pi: Vec<T> = pi.iter().map(|&p| p.max(T::min_positive_value()).ln()).collect();
    let tau_t = spec.tau_t();
    if spec.family.is_fkl() {
        let mut w = vec![T::zero(); na];
        fkl_weights(spec, st, s, &mut w)?;
        let h = entropy(&pi);
        let value = w.iter().zip(&log_pi).map(|(&x, &l)| x * l).sum::<T>() + tau_t * h;
        if let Some(g) = grad {
            for b in 0..na {
                g[b] = w[b] - pi[b] - tau_t * pi[b] * (log_pi[b] + h);
            }
        }
        return Ok(value);
    }
    let lpt = log_pi_t(st.pi_t, s)?;
    // π-gradient of the per-state term, constants included
    let mut g_pi = vec![T::zero(); na];
    match spec.family {
        ObjectiveFamily::NpgRkl => {
            let inv = T::one() / spec.eta;
            for a in 0..na {
                g_pi[a] = st.q[a] - spec.tau * (log_pi[a] + T::one())
                    - inv * (log_pi[a] - lpt[a] + T::one());
            }
        }
        ObjectiveFamily::SpmaRkl => {
            for a in 0..na {
                let f = spma_factor(spec.eta, st.q[a], st.v, s, a)?;
                g_pi[a] = f.max(T::lit(SPMA_MARGIN)).ln() - tau_t * (log_pi[a] + T::one())
                    - (log_pi[a] - lpt[a] + T::one());
            }
        }
        _ => unreachable!(),
    }
    // value: Σ π_a (g_a minus the constants that came from differentiating π ln π)
    let value = match spec.family {
        ObjectiveFamily::NpgRkl => {
            let inv = T::one() / spec.eta;
            (0..na)
                .map(|a| pi[a] * (st.q[a] - spec.tau * log_pi[a] - inv * (log_pi[a] - lpt[a])))
                .sum()
        }
        _ => (0..na)
            .map(|a| {
                let f = T::one() + spec.eta * (st.q[a] - st.v);
                pi[a] * (f.max(T::lit(SPMA_MARGIN)).ln() - tau_t * log_pi[a] - (log_pi[a] - lpt[a]))
            })
            .sum(),
    };
    if let Some(g) = grad {
        let mean: T = pi.iter().zip(&g_pi).map(|(&p, &x)| p * x).sum();
        for b in 0..na {
            g[b] = pi[b] * (g_pi[b] - mean);
        }
    }
    Ok(value)
}

fn check_inputs<T: Scalar>(
    spec: &ObjectiveSpec<T>,
    theta: &TabularLogits<T>,
    pi_t: &Policy<T>,
    q: &QFunction<T>,
    v: &VFunction<T>,
) -> Result<()> {
    let (n, na) = (theta.num_states(), theta.num_actions());
    pi_t.check_shape(n, na)?;
    q.check_shape(n, na)?;
    if v.len() != n || spec.state_weights.len() != n {
        return Err(Error::Shape {
            expected: format!("{n} states"),
            got: format!("v: {}, weights: {}", v.len(), spec.state_weights.len()),
        });
    }
    spec.validate()
}

/// `ℓ_t(θ)` with exact action expectations.
pub fn evaluate_objective<T: Scalar>(
    spec: &ObjectiveSpec<T>,
    theta: &TabularLogits<T>,
    pi_t: &Policy<T>,
    q: &QFunction<T>,
    v: &VFunction<T>,
) -> Result<T> {
    check_inputs(spec, theta, pi_t, q, v)?;
    let mut total = T::zero();
    for s in 0..theta.num_states() {
        let w = spec.state_weights[s];
        if w == T::zero() {
            continue;
        }
        let st = StateTerms { pi_t: pi_t.row(s), q: q.row(s), v: v.get(s) };
        total += w * state_term(spec, theta.table().row(s), &st, s, None)?;
    }
    Ok(total)
}

/// `∂ℓ_t/∂θ`, computed analytically through the softmax.
pub fn objective_gradient<T: Scalar>(
    spec: &ObjectiveSpec<T>,
    theta: &TabularLogits<T>,
    pi_t: &Policy<T>,
    q: &QFunction<T>,
    v: &VFunction<T>,
) -> Result<Table<T>> {
    Ok(value_and_gradient(spec, theta, pi_t, q, v)?.1)
}

pub fn value_and_gradient<T: Scalar>(
    spec: &ObjectiveSpec<T>,
    theta: &TabularLogits<T>,
    pi_t: &Policy<T>,
    q: &QFunction<T>,
    v: &VFunction<T>,
) -> Result<(T, Table<T>)> {
    check_inputs(spec, theta, pi_t, q, v)?;
    let mut grad = Table::zeros(theta.num_states(), theta.num_actions());
    let mut total = T::zero();
    for s in 0..theta.num_states() {
        let w = spec.state_weights[s];
        if w == T::zero() {
            continue;
        }
        let st = StateTerms { pi_t: pi_t.row(s), q: q.row(s), v: v.get(s) };
        let row = grad.row_mut(s);
        total += w * state_term(spec, theta.table().row(s), &st, s, Some(row))?;
        row.iter_mut().for_each(|g| *g *= w);
    }
    Ok((total, grad))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerLoopOptions<T> {
    pub steps: usize,
    pub step_size: T,
    /// Halve the step until the objective does not decrease.
    pub backtracking: bool,
}

/// `n` gradient-ascent steps `θ ← θ + step ∇ℓ_t(θ)`.
pub fn inner_loop_optimize<T: Scalar>(
    spec: &ObjectiveSpec<T>,
    theta_init: &TabularLogits<T>,
    pi_t: &Policy<T>,
    q: &QFunction<T>,
    v: &VFunction<T>,
    opts: InnerLoopOptions<T>,
) -> Result<TabularLogits<T>> {
    if opts.steps == 0 {
        return Err(Error::InvalidParameter("inner loop needs at least one step".into()));
    }
    let mut theta = theta_init.clone();
    let (mut value, mut grad) = value_and_gradient(spec, &theta, pi_t, q, v)?;
    for _ in 0..opts.steps {
        if !opts.backtracking {
            theta = theta.axpy(opts.step_size, &grad);
            (value, grad) = value_and_gradient(spec, &theta, pi_t, q, v)?;
            continue;
        }
        let mut step = opts.step_size;
        let mut moved = false;
        for _ in 0..60 {
            let cand = theta.axpy(step, &grad);
            let (cv, cg) = value_and_gradient(spec, &cand, pi_t, q, v)?;
            if cv >= value {
                theta = cand;
                value = cv;
                grad = cg;
                moved = true;
                break;
            }
            step *= T::lit(0.5);
        }
        if !moved {
            break;
        }
    }
    Ok(theta)
}

/// Runs backtracking gradient ascent with an adaptive step until the gradient
/// ∞-norm falls below `tol`.
pub fn optimize_to_stationarity<T: Scalar>(
    spec: &ObjectiveSpec<T>,
    theta_init: &TabularLogits<T>,
    pi_t: &Policy<T>,
    q: &QFunction<T>,
    v: &VFunction<T>,
    tol: T,
    max_steps: usize,
) -> Result<TabularLogits<T>> {
    let mut theta = theta_init.clone();
    let (mut value, mut grad) = value_and_gradient(spec, &theta, pi_t, q, v)?;
    let wmax = spec.state_weights.iter().copied().fold(T::zero(), T::max);
    let mut step = T::one() / wmax.max(T::min_positive_value());
    for _ in 0..max_steps {
        if grad.max_abs() < tol {
            return Ok(theta);
        }
        let mut moved = false;
        for _ in 0..60 {
            let cand = theta.axpy(step, &grad);
            let (cv, cg) = value_and_gradient(spec, &cand, pi_t, q, v)?;
            if cv >= value {
                theta = cand;
                value = cv;
                grad = cg;
                moved = true;
                break;
            }
            step *= T::lit(0.5);
        }
        if !moved {
            return Ok(theta);
        }
        step *= T::lit(1.5);
    }
    if grad.max_abs() < tol {
        return Ok(theta);
    }
    Err(Error::NonConvergence {
        what: "actor inner loop",
        iterations: max_steps,
        residual: grad.max_abs().as_f64(),
    })
}

/// Entropy-coefficient tuner, `α = exp(log_alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyTuner<T> {
    pub log_alpha: T,
    pub target_entropy: T,
    pub tuner_lr: T,
}

impl<T: Scalar> EntropyTuner<T> {
    pub fn new(initial_alpha: T, target_entropy: T, tuner_lr: T) -> Result<Self> {
        if !(initial_alpha > T::zero()) || !(tuner_lr > T::zero()) {
            return Err(Error::InvalidParameter(
                "initial α and tuner learning rate must be positive".into(),
            ));
        }
        Ok(Self { log_alpha: initial_alpha.ln(), target_entropy, tuner_lr })
    }

    /// Target `scale · ln A`.
    pub fn default_target(num_actions: usize, scale: T) -> T {
        scale * T::from_usize_lossy(num_actions).ln()
    }

    pub fn alpha(&self) -> T {
        self.log_alpha.exp()
    }

    /// One gradient step on `J(α) = E_s E_{a~π}[-α ln π(a|s) - α H̄]` in `log α`.
    pub fn step(&self, pi: &Policy<T>, state_weights: &[T]) -> Self {
        let mean_h: T = state_weights
            .iter()
            .enumerate()
            .map(|(s, &w)| w * pi.entropy(s))
            .sum();
        let grad = mean_h - self.target_entropy;
        Self { log_alpha: self.log_alpha - self.tuner_lr * self.alpha() * grad, ..*self }
    }
}

pub fn entropy_tuner_step<T: Scalar>(
    tuner: &EntropyTuner<T>,
    pi: &Policy<T>,
    state_weights: &[T],
) -> EntropyTuner<T> {
    tuner.step(pi, state_weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy_update::soft_npg_step;

    fn setup() -> (Policy<f64>, QFunction<f64>, VFunction<f64>) {
        let pi = Policy::from_rows(&[vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3]]).unwrap();
        let q = QFunction::from_rows(&[vec![1.0, 0.5, 0.2], vec![0.0, 2.0, 1.0]]).unwrap();
        let v = q.soft_state_values(&pi, 0.0);
        (pi, q, v)
    }

    #[test]
    fn npg_rkl_at_pi_t_is_expected_q() {
        let (pi, q, v) = setup();
        let spec = ObjectiveSpec::new(ObjectiveFamily::NpgRkl, 0.7, 0.0, vec![0.25, 0.75]).unwrap();
        let val = evaluate_objective(&spec, &TabularLogits::from_policy(&pi), &pi, &q, &v).unwrap();
        let ev = q.expect_under(&pi);
        assert!((val - (0.25 * ev[0] + 0.75 * ev[1])).abs() < 1e-12);
    }

    #[test]
    fn spma_fkl_weights_need_no_normalization_at_zero_mean_advantage() {
        let (pi, q, v) = setup();
        let spec = ObjectiveSpec::uniform_weights(ObjectiveFamily::SpmaFkl, 0.3, 0.2, 2);
        for s in 0..2 {
            let z: f64 = (0..3).map(|a| pi.prob(s, a) * (1.0 + 0.3 * (q.get(s, a) - v.get(s)))).sum();
            assert!((z - 1.0).abs() < 1e-15);
        }
        assert!(evaluate_objective(&spec, &TabularLogits::zeros(2, 3), &pi, &q, &v).is_ok());
    }

    #[test]
    fn zero_weight_state_has_zero_gradient() {
        let (pi, q, v) = setup();
        for fam in ObjectiveFamily::ALL {
            let spec = ObjectiveSpec::new(fam, 0.4, 0.3, vec![1.0, 0.0]).unwrap();
            let g = objective_gradient(&spec, &TabularLogits::zeros(2, 3), &pi, &q, &v).unwrap();
            assert!(g.row(1).iter().all(|&x| x == 0.0));
            assert!(g.row(0).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_is_stationary() {
        let (pi, q, v) = setup();
        let spec = ObjectiveSpec::uniform_weights(ObjectiveFamily::NpgRkl, 0.8, 0.5, 2);
        let best = soft_npg_step(&pi, &q, 0.8, spec.tau_t()).unwrap();
        let g = objective_gradient(&spec, &TabularLogits::from_policy(&best), &pi, &q, &v).unwrap();
        assert!(g.max_abs() < 1e-8);
    }

    #[test]
    fn backtracking_never_decreases() {
        let (pi, q, v) = setup();
        let spec = ObjectiveSpec::uniform_weights(ObjectiveFamily::SpmaRkl, 0.5, 0.2, 2);
        let mut theta = TabularLogits::zeros(2, 3);
        let mut last = evaluate_objective(&spec, &theta, &pi, &q, &v).unwrap();
        let opts = InnerLoopOptions { steps: 1, step_size: 50.0, backtracking: true };
        for _ in 0..10 {
            theta = inner_loop_optimize(&spec, &theta, &pi, &q, &v, opts).unwrap();
            let now = evaluate_objective(&spec, &theta, &pi, &q, &v).unwrap();
            assert!(now >= last);
            last = now;
        }
        let zero = InnerLoopOptions { steps: 1, step_size: 0.0, backtracking: false };
        let same = inner_loop_optimize(&spec, &theta, &pi, &q, &v, zero).unwrap();
        assert_eq!(same, theta);
    }

    #[test]
    fn tuner_directions() {
        let u = Policy::<f64>::uniform(2, 4);
        let t = EntropyTuner::new(0.2, 4f64.ln(), 0.1).unwrap();
        assert!((t.step(&u, &[0.5, 0.5]).alpha() - 0.2).abs() < 1e-15);
        let det = Policy::deterministic(4, &[0, 3]).unwrap();
        assert!(t.step(&det, &[0.5, 0.5]).alpha() > 0.2);
        let low = EntropyTuner::new(0.2, 0.1, 0.1).unwrap();
        assert!(low.step(&u, &[0.5, 0.5]).alpha() < 0.2);
    }
}
