//! Finite MDPs, exact (soft) policy evaluation and the soft-optimal comparator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lu_solve;
use crate::scalar::{log_sum_exp, Scalar};
use crate::tables::{argmax, Policy, QFunction, Table, VFunction};

const PROB_TOL: f64 = 1e-12;

/// Finite discounted MDP `<S, A, P, r, ρ, γ>` with rewards in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp<T> {
    num_states: usize,
    num_actions: usize,
    /// `[s][a][s']`, row-major.
    transition: Vec<T>,
    /// `[s][a]`.
    reward: Vec<T>,
    initial_dist: Vec<T>,
    discount: T,
}

fn check_distribution<T: Scalar>(p: &[T], what: impl Fn() -> String) -> Result<()> {
    if let Some(x) = p.iter().find(|&&x| !(x >= T::zero()) || !x.is_finite()) {
        return Err(Error::InvalidMdp(format!("{}: entry {x} is negative or not finite", what())));
    }
    let sum: T = p.iter().copied().sum();
    if (sum - T::one()).abs() > T::lit(PROB_TOL).max(T::epsilon() * T::lit(8.0)) {
        return Err(Error::InvalidMdp(format!("{}: sums to {sum}", what())));
    }
    Ok(())
}

impl<T: Scalar> Mdp<T> {
    /// Builds and validates an MDP. `transition` is `[s][a][s']` flattened, `reward` is `[s][a]`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<T>,
        reward: Vec<T>,
        initial_dist: Vec<T>,
        discount: T,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidMdp("S and A must be positive".into()));
        }
        let (s, a) = (num_states, num_actions);
        if transition.len() != s * a * s {
            return Err(Error::InvalidMdp(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                s * a * s
            )));
        }
        if reward.len() != s * a {
            return Err(Error::InvalidMdp(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                s * a
            )));
        }
        if initial_dist.len() != s {
            return Err(Error::InvalidMdp(format!(
                "initial distribution has {} entries, expected {s}",
                initial_dist.len()
            )));
        }
        if !(discount >= T::zero() && discount < T::one()) {
            return Err(Error::InvalidMdp(format!("discount {discount} not in [0, 1)")));
        }
        for st in 0..s {
            for ac in 0..a {
                let row = &transition[(st * a + ac) * s..(st * a + ac + 1) * s];
                check_distribution(row, || format!("P(.|{st},{ac})"))?;
            }
        }
        if let Some(i) = reward
            .iter()
            .position(|&r| !(r >= T::zero() && r <= T::one()))
        {
            return Err(Error::InvalidMdp(format!(
                "reward r({},{}) = {} outside [0, 1]",
                i / a,
                i % a,
                reward[i]
            )));
        }
        check_distribution(&initial_dist, || "initial distribution".into())?;
        Ok(Self {
            num_states,
            num_actions,
            transition,
            reward,
            initial_dist,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> T {
        self.discount
    }

    /// Same MDP with a different discount factor.
    pub fn with_discount(mut self, discount: T) -> Result<Self> {
        if !(discount >= T::zero() && discount < T::one()) {
            return Err(Error::InvalidMdp(format!("discount {discount} not in [0, 1)")));
        }
        self.discount = discount;
        Ok(self)
    }

    /// Same MDP with a different initial distribution.
    pub fn with_initial_dist(mut self, initial_dist: Vec<T>) -> Result<Self> {
        if initial_dist.len() != self.num_states {
            return Err(Error::InvalidMdp("initial distribution length".into()));
        }
        check_distribution(&initial_dist, || "initial distribution".into())?;
        self.initial_dist = initial_dist;
        Ok(self)
    }

    /// `P(·|s,a)`.
    #[inline]
    pub fn transition(&self, s: usize, a: usize) -> &[T] {
        let n = self.num_states;
        let base = (s * self.num_actions + a) * n;
        &self.transition[base..base + n]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> T {
        self.reward[s * self.num_actions + a]
    }

    pub fn initial_dist(&self) -> &[T] {
        &self.initial_dist
    }

    /// `H_τ = (1 + τ ln A) / (1 - γ)`, the bound on soft values.
    pub fn h_tau(&self, tau: T) -> T {
        (T::one() + tau * T::from_usize_lossy(self.num_actions).ln()) / (T::one() - self.discount)
    }

    /// `E_{s'~P(·|s,a)}[v(s')]`.
    #[inline]
    pub fn expected_next(&self, s: usize, a: usize, v: &[T]) -> T {
        self.transition(s, a)
            .iter()
            .zip(v)
            .map(|(&p, &x)| p * x)
            .sum()
    }

    /// `q(s,a) = r(s,a) + γ E_{s'}[v(s')]` for every pair.
    pub fn backup(&self, v: &[T]) -> QFunction<T> {
        let g = self.discount;
        QFunction::from_table_unchecked(Table::from_fn(self.num_states, self.num_actions, |s, a| {
            self.reward(s, a) + g * self.expected_next(s, a, v)
        }))
    }

    pub fn to_document(&self) -> MdpDocument {
        let (s, a) = (self.num_states, self.num_actions);
        MdpDocument {
            num_states: s,
            num_actions: a,
            gamma: self.discount.as_f64(),
            transition: (0..s)
                .map(|st| {
                    (0..a)
                        .map(|ac| self.transition(st, ac).iter().map(|x| x.as_f64()).collect())
                        .collect()
                })
                .collect(),
            reward: (0..s)
                .map(|st| (0..a).map(|ac| self.reward(st, ac).as_f64()).collect())
                .collect(),
            rho: self.initial_dist.iter().map(|x| x.as_f64()).collect(),
        }
    }

    pub fn from_document(doc: &MdpDocument) -> Result<Self> {
        let (s, a) = (doc.num_states, doc.num_actions);
        let shape_err = |what: &str| Error::InvalidMdp(format!("{what} does not match S={s}, A={a}"));
        if doc.transition.len() != s
            || doc
                .transition
                .iter()
                .any(|r| r.len() != a || r.iter().any(|p| p.len() != s))
        {
            return Err(shape_err("P"));
        }
        if doc.reward.len() != s || doc.reward.iter().any(|r| r.len() != a) {
            return Err(shape_err("r"));
        }
        let conv = |x: &f64| T::lit(*x);
        Self::new(
            s,
            a,
            doc.transition.iter().flatten().flatten().map(conv).collect(),
            doc.reward.iter().flatten().map(conv).collect(),
            doc.rho.iter().map(conv).collect(),
            T::lit(doc.gamma),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// JSON interchange form: `{"S", "A", "gamma", "P"[s][a][s'], "r"[s][a], "rho"[s]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    pub gamma: f64,
    #[serde(rename = "P")]
    pub transition: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "r")]
    pub reward: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
}

/// `H(π(·|s))` with `0 ln 0 = 0`.
pub fn policy_entropy<T: Scalar>(policy: &Policy<T>, state: usize) -> T {
    policy.entropy(state)
}

/// Exact soft values of `policy`: solves `v = r_π + τ H_π + γ P_π v` by LU and
/// returns `(v, q)` with `q(s,a) = r(s,a) + γ E_{s'} v(s')`.
pub fn exact_soft_values<T: Scalar>(
    mdp: &Mdp<T>,
    policy: &Policy<T>,
    tau: T,
) -> Result<(VFunction<T>, QFunction<T>)> {
    let (n, na) = (mdp.num_states(), mdp.num_actions());
    policy.check_shape(n, na)?;
    let g = mdp.discount();
    let mut m = vec![T::zero(); n * n];
    let mut b = vec![T::zero(); n];
    for s in 0..n {
        m[s * n + s] = T::one();
        let mut rhs = tau * policy.entropy(s);
        for a in 0..na {
            let p = policy.prob(s, a);
            if p == T::zero() {
                continue;
            }
            rhs += p * mdp.reward(s, a);
            for (sp, &pt) in mdp.transition(s, a).iter().enumerate() {
                m[s * n + sp] -= g * p * pt;
            }
        }
        b[s] = rhs;
    }
    let v = lu_solve(m, n, b)?;
    let q = mdp.backup(&v);
    Ok((VFunction(v), q))
}

/// Soft advantage `q(s,a) - v(s) - τ ln π(a|s)`.
pub fn soft_advantage<T: Scalar>(
    q: &QFunction<T>,
    v: &VFunction<T>,
    policy: &Policy<T>,
    tau: T,
    s: usize,
    a: usize,
) -> Result<T> {
    let p = policy.prob(s, a);
    let ent = if tau > T::zero() {
        if p <= T::zero() {
            return Err(Error::Domain(format!(
                "soft advantage undefined: π({a}|{s}) = 0 with τ = {tau}"
            )));
        }
        tau * p.ln()
    } else {
        T::zero()
    };
    Ok(q.get(s, a) - v.get(s) - ent)
}

/// `J(π) = Σ_s ρ(s) v(s)`.
pub fn return_j<T: Scalar>(mdp: &Mdp<T>, v: &VFunction<T>) -> T {
    mdp.initial_dist()
        .iter()
        .zip(v.as_slice())
        .map(|(&r, &x)| r * x)
        .sum()
}

/// Iteration cap for the value-iteration solver.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1_000_000,
        }
    }
}

/// Soft-optimal policy `π*_τ` and value `v*_τ` within `tol` of the fixed point.
pub fn optimal_soft_policy<T: Scalar>(
    mdp: &Mdp<T>,
    tau: T,
    tol: T,
) -> Result<(Policy<T>, VFunction<T>)> {
    optimal_soft_policy_with(mdp, tau, tol, SolverOptions::default())
}

pub fn optimal_soft_policy_with<T: Scalar>(
    mdp: &Mdp<T>,
    tau: T,
    tol: T,
    opts: SolverOptions,
) -> Result<(Policy<T>, VFunction<T>)> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    if tau < T::zero() {
        return Err(Error::InvalidParameter(format!("τ = {tau} must be nonnegative")));
    }
    let (n, na) = (mdp.num_states(), mdp.num_actions());
    // Stopping on change < tol (1 - γ) keeps the iterate within tol of the fixed point.
    let threshold = tol * (T::one() - mdp.discount());
    let mut v = vec![T::zero(); n];
    let mut scaled = vec![T::zero(); na];
    let mut change = T::infinity();
    for _ in 0..opts.max_iterations {
        let q = mdp.backup(&v);
        let next: Vec<T> = (0..n)
            .map(|s| {
                let row = q.row(s);
                if tau > T::zero() {
                    for (o, &x) in scaled.iter_mut().zip(row) {
                        *o = x / tau;
                    }
                    tau * log_sum_exp(&scaled)
                } else {
                    row.iter().copied().fold(T::neg_infinity(), T::max)
                }
            })
            .collect();
        change = next
            .iter()
            .zip(&v)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        v = next;
        if change < threshold {
            let q = mdp.backup(&v);
            let policy = if tau > T::zero() {
                crate::policy_update::softmax_of_scaled(&q, T::one() / tau)
            } else {
                let actions: Vec<usize> = (0..n).map(|s| argmax(q.row(s))).collect();
                Policy::deterministic(na, &actions)?
            };
            return Ok((policy, VFunction(v)));
        }
    }
    Err(Error::NonConvergence {
        what: "soft value iteration",
        iterations: opts.max_iterations,
        residual: change.as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(rewards: Vec<f64>, gamma: f64) -> Mdp<f64> {
        let a = rewards.len();
        Mdp::new(1, a, vec![1.0; a], rewards, vec![1.0], gamma).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let p = Policy::from_rows(&[
            vec![0.25_f64; 4],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.0, 0.0],
        ])
        .unwrap();
        assert!((policy_entropy(&p, 0) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(policy_entropy(&p, 1), 0.0);
        assert!((policy_entropy(&p, 2) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn geometric_series_value() {
        let mdp = single_state(vec![1.0], 0.9);
        let (v, q) = exact_soft_values(&mdp, &Policy::uniform(1, 1), 0.0).unwrap();
        assert!((v.get(0) - 10.0).abs() < 1e-12);
        assert!((q.get(0, 0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn pure_entropy_value() {
        let mdp = single_state(vec![0.0, 0.0], 0.5);
        let (v, _) = exact_soft_values(&mdp, &Policy::uniform(1, 2), 1.0).unwrap();
        assert!((v.get(0) - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn soft_advantage_examples() {
        let q = QFunction::from_rows(&[vec![2.0_f64, 1.0]]).unwrap();
        let v = VFunction(vec![1.5]);
        let p = Policy::from_rows(&[vec![0.25, 0.75]]).unwrap();
        let adv = soft_advantage(&q, &v, &p, 0.5, 0, 0).unwrap();
        assert!((adv - (0.5 - 0.5 * 0.25f64.ln())).abs() < 1e-12);
        assert!((adv - 1.1931).abs() < 1e-4);

        let det = Policy::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let qv = QFunction::from_rows(&[vec![1.5, 0.0]]).unwrap();
        assert_eq!(soft_advantage(&qv, &v, &det, 1.0, 0, 0).unwrap(), 0.0);
        assert_eq!(soft_advantage(&qv, &v, &det, 0.0, 0, 0).unwrap(), 0.0);
        assert!(matches!(
            soft_advantage(&qv, &v, &det, 1.0, 0, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn single_step_softmax_optimum() {
        let mdp = single_state(vec![1.0, 0.0], 0.0);
        let (pi, v) = optimal_soft_policy(&mdp, 1.0, 1e-12).unwrap();
        let e = std::f64::consts::E;
        assert!((pi.prob(0, 0) - e / (e + 1.0)).abs() < 1e-12);
        assert!((pi.prob(0, 1) - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!((v.get(0) - (e + 1.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn hard_optimum_breaks_ties_low() {
        let mdp = single_state(vec![0.5, 0.5, 0.2], 0.5);
        let (pi, v) = optimal_soft_policy(&mdp, 0.0, 1e-12).unwrap();
        assert_eq!(pi.row(0), &[1.0, 0.0, 0.0]);
        assert!((v.get(0) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn return_j_examples() {
        let mdp = Mdp::new(
            2,
            1,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            vec![0.25, 0.75],
            0.5,
        )
        .unwrap();
        assert_eq!(return_j(&mdp, &VFunction(vec![4.0, 8.0])), 7.0);
        assert_eq!(return_j(&mdp, &VFunction(vec![3.0, 3.0])), 3.0);
    }

    #[test]
    fn rejects_invalid_mdps() {
        assert!(Mdp::new(1, 1, vec![0.9], vec![0.5], vec![1.0], 0.5).is_err());
        assert!(Mdp::new(1, 1, vec![1.0], vec![1.5], vec![1.0], 0.5).is_err());
        assert!(Mdp::new(1, 1, vec![1.0], vec![0.5], vec![1.0], 1.0).is_err());
        assert!(Mdp::new(1, 1, vec![1.0], vec![0.5], vec![0.5], 0.5).is_err());
        assert!(Mdp::new(2, 1, vec![1.2, -0.2, 0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn json_uses_documented_keys() {
        let mdp = single_state(vec![1.0, 0.0], 0.9);
        let json = mdp.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["S", "A", "gamma", "P", "r", "rho"] {
            assert!(value.get(key).is_some(), "missing {key}");
        }
        assert_eq!(value["P"][0][1][0], 1.0);
        assert_eq!(Mdp::<f64>::from_json(&json).unwrap(), mdp);
        assert!(Mdp::<f64>::from_json(r#"{"S":1,"A":1,"gamma":0.5,"P":[[[1.0]]],"r":[[0.0]],"rho":[1.0],"x":1}"#).is_err());
    }
}
