//! Run traces and numerical checks of the tabular convergence guarantees:
//! regret, policy-evaluation error, the reduction inequality, rate fits, the
//! generic regret bound and the helper lemmas.

use rand::Rng;
use serde::Serialize;

use crate::bellman::soft_bellman_q;
use crate::env::{garnet, stream_rng};
use crate::error::{Error, Result};
use crate::mdp::{exact_soft_values, optimal_soft_policy, Mdp};
use crate::policy_update::ActorSchedule;
use crate::scalar::{log_sum_exp, Scalar};
use crate::tables::{entropy, Policy, QFunction, Table, VFunction};

/// Tolerance on the reduction inequality.
pub const REDUCTION_TOL: f64 = 1e-9;

/// Everything recorded about one outer iteration `t`.
#[derive(Clone, Debug)]
pub struct IterationRecord<T> {
    pub t: usize,
    pub policy: Policy<T>,
    /// Critic estimate `q_ζ^t` the update used.
    pub q_est: QFunction<T>,
    /// Exact `q_τ^{π_t}`.
    pub q_exact: QFunction<T>,
    /// Exact `v_τ^{π_t}`.
    pub v_exact: VFunction<T>,
    pub eta: T,
    pub tau_t: T,
    /// `‖q_ζ^t - q_τ^{π_t}‖∞`.
    pub eps: T,
    /// Per-state `⟨π* - π_t, q_ζ^t⟩ + τ (H(π*) - H(π_t))`.
    pub regret_term: Vec<T>,
    /// `‖v* - v^{π̄}‖∞` for the mixture of `π_0..=π_t`.
    pub subopt_mixture: T,
    /// `‖v* - v^{π_t}‖∞`.
    pub subopt_last: T,
    pub entropy_mean: T,
    pub return_empirical: Option<T>,
    pub alpha: Option<T>,
}

/// Per-iteration history of a run, with the soft-optimal comparator it is measured against.
#[derive(Clone, Debug)]
pub struct RunTrace<T> {
    pub tau: T,
    pub zeta: T,
    pub gamma: T,
    pub pi_star: Policy<T>,
    pub v_star: VFunction<T>,
    pub records: Vec<IterationRecord<T>>,
    /// `π_K` and its exact soft value.
    pub final_policy: Option<Policy<T>>,
    pub final_value: Option<VFunction<T>>,
    value_sum: Vec<T>,
}

/// Optional per-iteration extras recorded by sampled runs.
#[derive(Clone, Copy, Debug, Default)]
pub struct Extras<T> {
    pub return_empirical: Option<T>,
    pub alpha: Option<T>,
}

impl<T: Scalar> RunTrace<T> {
    /// Starts a trace measured against `π*_τ` computed to `tol`.
    pub fn new(mdp: &Mdp<T>, tau: T, zeta: T, tol: T) -> Result<Self> {
        let (pi_star, v_star) = optimal_soft_policy(mdp, tau, tol)?;
        Ok(Self::with_comparator(mdp, tau, zeta, pi_star, v_star))
    }

    pub fn with_comparator(
        mdp: &Mdp<T>,
        tau: T,
        zeta: T,
        pi_star: Policy<T>,
        v_star: VFunction<T>,
    ) -> Self {
        Self {
            tau,
            zeta,
            gamma: mdp.discount(),
            pi_star,
            v_star,
            records: Vec::new(),
            final_policy: None,
            final_value: None,
            value_sum: vec![T::zero(); mdp.num_states()],
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends iteration `t = len()`, evaluating `policy` exactly.
    pub fn record(
        &mut self,
        mdp: &Mdp<T>,
        policy: &Policy<T>,
        q_est: &QFunction<T>,
        eta: T,
        tau_t: T,
        extras: Extras<T>,
    ) -> Result<&IterationRecord<T>> {
        let (v_exact, q_exact) = exact_soft_values(mdp, policy, self.tau)?;
        let eps = pe_error(q_est, &q_exact)?;
        let n = mdp.num_states();
        let regret_term = (0..n)
            .map(|s| regret_term(self.pi_star.row(s), policy.row(s), q_est.row(s), self.tau))
            .collect();
        for (acc, &v) in self.value_sum.iter_mut().zip(v_exact.as_slice()) {
            *acc += v;
        }
        let k = T::from_usize_lossy(self.records.len() + 1);
        let subopt_mixture = self
            .v_star
            .as_slice()
            .iter()
            .zip(&self.value_sum)
            .map(|(&vs, &acc)| (vs - acc / k).abs())
            .fold(T::zero(), T::max);
        let subopt_last = self.v_star.max_abs_diff(&v_exact);
        let entropy_mean = (0..n).map(|s| policy.entropy(s)).sum::<T>() / T::from_usize_lossy(n);
        self.records.push(IterationRecord {
            t: self.records.len(),
            policy: policy.clone(),
            q_est: q_est.clone(),
            q_exact,
            v_exact,
            eta,
            tau_t,
            eps,
            regret_term,
            subopt_mixture,
            subopt_last,
            entropy_mean,
            return_empirical: extras.return_empirical,
            alpha: extras.alpha,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn finish(&mut self, mdp: &Mdp<T>, policy: &Policy<T>) -> Result<()> {
        let (v, _) = exact_soft_values(mdp, policy, self.tau)?;
        self.final_policy = Some(policy.clone());
        self.final_value = Some(v);
        Ok(())
    }

    /// `Regret(k)(s)` from the recorded instantaneous terms.
    pub fn cumulative_regret(&self, k: usize) -> Vec<T> {
        let n = self.v_star.len();
        let mut out = vec![T::zero(); n];
        for rec in &self.records[..k.min(self.records.len())] {
            for (o, &r) in out.iter_mut().zip(&rec.regret_term) {
                *o += r;
            }
        }
        out
    }

    /// `max_s |Regret(k)(s)|` for every prefix `k = 1..=len`.
    pub fn regret_norm_curve(&self) -> Vec<T> {
        let n = self.v_star.len();
        let mut acc = vec![T::zero(); n];
        self.records
            .iter()
            .map(|rec| {
                for (o, &r) in acc.iter_mut().zip(&rec.regret_term) {
                    *o += r;
                }
                acc.iter().map(|x| x.abs()).fold(T::zero(), T::max)
            })
            .collect()
    }
}

fn regret_term<T: Scalar>(pi_star: &[T], pi: &[T], q: &[T], tau: T) -> T {
    let lin: T = pi_star
        .iter()
        .zip(pi)
        .zip(q)
        .map(|((&u, &p), &x)| (u - p) * x)
        .sum();
    lin + tau * (entropy(pi_star) - entropy(pi))
}

/// Entrywise mean of the values; the soft value of the uniform mixture policy.
pub fn mixture_value<T: Scalar>(values: &[VFunction<T>]) -> Result<VFunction<T>> {
    let first = values.first().ok_or(Error::EmptyInput("mixture of value functions"))?;
    let k = T::from_usize_lossy(values.len());
    let mut out = vec![T::zero(); first.len()];
    for v in values {
        if v.len() != out.len() {
            return Err(Error::Shape { expected: out.len().to_string(), got: v.len().to_string() });
        }
        for (o, &x) in out.iter_mut().zip(v.as_slice()) {
            *o += x;
        }
    }
    Ok(VFunction(out.into_iter().map(|x| x / k).collect()))
}

/// `δ(τ, ζ) = |τ - ζ| ln A / (1 - γ)`.
pub fn delta_tz<T: Scalar>(tau: T, zeta: T, num_actions: usize, gamma: T) -> T {
    (tau - zeta).abs() * T::from_usize_lossy(num_actions).ln() / (T::one() - gamma)
}

/// `Regret(K)(s) = Σ_t [⟨π*(·|s) - π_t(·|s), q_ζ^t(s,·)⟩ + τ (H*(s) - H(π_t(·|s)))]`,
/// with `H*(s)` supplied as `star_entropy`.
pub fn per_state_regret<T: Scalar>(
    records: &[IterationRecord<T>],
    pi_star: &Policy<T>,
    star_entropy: &[T],
    tau: T,
) -> Vec<T> {
    let n = pi_star.num_states();
    (0..n)
        .map(|s| {
            records
                .iter()
                .map(|r| {
                    let lin: T = pi_star
                        .row(s)
                        .iter()
                        .zip(r.policy.row(s))
                        .zip(r.q_est.row(s))
                        .map(|((&u, &p), &x)| (u - p) * x)
                        .sum();
                    lin + tau * (star_entropy[s] - r.policy.entropy(s))
                })
                .sum()
        })
        .collect()
}

/// Both sides of the reduction inequality for the first `k` iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Check {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Check {
    pub fn new(lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self { lhs, rhs, holds: lhs <= rhs + tolerance }
    }
}

/// `‖v* - v^{π̄_K}‖∞ ≤ ‖Regret(K)‖∞ / (K(1-γ)) + 2 Σ_t ε_t / (K(1-γ))`.
pub fn reduction_check<T: Scalar>(trace: &RunTrace<T>, v_star: &VFunction<T>, gamma: T, k: usize) -> Result<Check> {
    if k == 0 || k > trace.len() {
        return Err(Error::InvalidParameter(format!(
            "K = {k} outside 1..={}",
            trace.len()
        )));
    }
    let values: Vec<VFunction<T>> = trace.records[..k].iter().map(|r| r.v_exact.clone()).collect();
    let mix = mixture_value(&values)?;
    let lhs = v_star.max_abs_diff(&mix);
    let regret = trace
        .cumulative_regret(k)
        .into_iter()
        .map(|x| x.abs())
        .fold(T::zero(), T::max);
    let eps: T = trace.records[..k].iter().map(|r| r.eps).sum();
    let denom = T::from_usize_lossy(k) * (T::one() - gamma);
    let rhs = regret / denom + T::lit(2.0) * eps / denom;
    Ok(Check::new(lhs.as_f64(), rhs.as_f64(), REDUCTION_TOL))
}

/// `‖q_est - q_true‖∞`.
pub fn pe_error<T: Scalar>(q_est: &QFunction<T>, q_true: &QFunction<T>) -> Result<T> {
    if !q_est.table().same_shape(q_true.table()) {
        return Err(Error::Shape {
            expected: format!("{}x{}", q_true.num_states(), q_true.num_actions()),
            got: format!("{}x{}", q_est.num_states(), q_est.num_actions()),
        });
    }
    Ok(q_est.max_abs_diff(q_true))
}

/// Least-squares fit of `ln y` on `ln x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (usize, usize),
}

/// Fits over the points whose `x` lies in `window` (inclusive).
pub fn rate_fit<T: Scalar>(xs: &[T], ys: &[T], window: (usize, usize)) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(Error::Shape { expected: xs.len().to_string(), got: ys.len().to_string() });
    }
    let (lo, hi) = (window.0 as f64, window.1 as f64);
    let mut pts = Vec::new();
    for (&x, &y) in xs.iter().zip(ys) {
        let (x, y) = (x.as_f64(), y.as_f64());
        if x < lo || x > hi {
            continue;
        }
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::DegenerateWindow(format!(
                "point ({x}, {y}) is not positive"
            )));
        }
        pts.push((x.ln(), y.ln()));
    }
    if pts.len() < 3 {
        return Err(Error::DegenerateWindow(format!(
            "{} points in [{lo}, {hi}], need at least 3",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateWindow("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy <= f64::EPSILON * n { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(RateFit { slope, intercept: my - slope * mx, r_squared, window })
}

/// Outcome of [`generic_regret_experiment`] for the worst comparator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenericRegret {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Index of the worst comparator: `0..A` for vertices, `A` for uniform.
    pub comparator: usize,
}

/// Runs `π_{t+1} ∝ (π_t e^{-d_t})^{1/(1+τ_t)}` from uniform on the loss
/// sequence and evaluates both sides of the telescoping regret bound for every
/// simplex vertex and the uniform comparator.
pub fn generic_regret_experiment<T: Scalar>(
    losses: &[Vec<T>],
    tau: T,
    schedule: &ActorSchedule<T>,
) -> Result<GenericRegret> {
    let na = losses.first().ok_or(Error::EmptyInput("loss sequence"))?.len();
    if na == 0 || losses.iter().any(|d| d.len() != na) {
        return Err(Error::InvalidParameter("loss vectors must share a positive length".into()));
    }
    // log-probabilities: long runs push mass far below the f64 range
    let mut log_policies = vec![vec![-T::from_usize_lossy(na).ln(); na]];
    for (t, d) in losses.iter().enumerate() {
        let st = schedule.step_at(t)?;
        let prev = log_policies.last().expect("nonempty");
        let mut next: Vec<T> = prev.iter().zip(d).map(|(&lp, &x)| st.alpha * (lp - x)).collect();
        let lse = log_sum_exp(&next);
        next.iter_mut().for_each(|l| *l -= lse);
        log_policies.push(next);
    }
    let policies: Vec<Vec<T>> = log_policies.iter().map(|l| l.iter().map(|x| x.exp()).collect()).collect();
    let kl_log = |u: &[T], logp: &[T]| -> T {
        u.iter().zip(logp).filter(|(&w, _)| w > T::zero()).map(|(&w, &lp)| w * (w.ln() - lp)).sum()
    };
    let mut comparators: Vec<Vec<T>> = (0..na)
        .map(|i| (0..na).map(|j| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    comparators.push(policies[0].clone());
    let mut worst: Option<GenericRegret> = None;
    let mut all_hold = true;
    for (ci, u) in comparators.iter().enumerate() {
        let h_u = entropy(u);
        let (mut lhs, mut rhs) = (T::zero(), T::zero());
        for (t, d) in losses.iter().enumerate() {
            let eta = schedule.step_at(t)?.eta;
            let pt = &policies[t];
            let inner: T = pt.iter().zip(u).zip(d).map(|((&p, &w), &x)| (p - w) * x).sum();
            lhs += inner / eta + tau * (h_u - entropy(pt));
            let big_d = d.iter().map(|x| x.abs()).fold(T::zero(), T::max);
            let kl_t = kl_log(u, &log_policies[t]);
            let kl_n = kl_log(u, &log_policies[t + 1]);
            rhs += kl_t / eta - kl_n / eta - tau * kl_n + big_d * big_d / (T::lit(2.0) * eta);
        }
        let c = Check::new(lhs.as_f64(), rhs.as_f64(), 1e-8);
        all_hold &= c.holds;
        let gap = c.lhs - c.rhs;
        if worst.as_ref().is_none_or(|w| gap > w.lhs - w.rhs) {
            worst = Some(GenericRegret { lhs: c.lhs, rhs: c.rhs, holds: c.holds, comparator: ci });
        }
    }
    let mut out = worst.expect("at least one comparator");
    out.holds = all_hold;
    Ok(out)
}

/// Counts of violations for one lemma.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LemmaStat {
    pub trials: usize,
    pub violations: usize,
    /// Largest `lhs - rhs` seen (negative when every trial had slack).
    pub max_excess: f64,
}

impl LemmaStat {
    fn push(&mut self, lhs: f64, rhs: f64) {
        let excess = lhs - rhs;
        if self.trials == 0 || excess > self.max_excess {
            self.max_excess = excess;
        }
        self.trials += 1;
        if excess > 1e-9 {
            self.violations += 1;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LemmaReport {
    pub entropy_difference: LemmaStat,
    pub sequence_sum: LemmaStat,
    pub bellman_difference: LemmaStat,
}

impl LemmaReport {
    pub fn violations(&self) -> usize {
        self.entropy_difference.violations + self.sequence_sum.violations + self.bellman_difference.violations
    }
}

fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

/// Evaluates the entropy-difference, sequence-sum and Bellman-difference
/// lemmas on `trials` random hypothesis-satisfying inputs each.
pub fn lemma_checks(seed: u64, trials: usize) -> Result<LemmaReport> {
    let mut report = LemmaReport::default();

    let mut rng = stream_rng(seed, 101);
    for _ in 0..trials {
        let a = rng.gen_range(2..=12);
        let p = random_simplex(a, &mut rng);
        // Q = P + a perturbation scaled so that ‖P - Q‖₁ ≤ ½
        let target = rng.gen::<f64>() * 0.5;
        let other = random_simplex(a, &mut rng);
        let l1: f64 = p.iter().zip(&other).map(|(x, y)| (x - y).abs()).sum();
        let w = if l1 > 0.0 { (target / l1).min(1.0) } else { 0.0 };
        let q: Vec<f64> = p.iter().zip(&other).map(|(x, y)| (1.0 - w) * x + w * y).collect();
        let dist: f64 = p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum();
        let c = rng.gen_range(1e-6..0.5);
        let af = a as f64;
        let lhs = (entropy(&q) - entropy(&p)).abs();
        let rhs = dist * (af / c).ln() + (((af - 1.0).ln()) / 2.0 + 2f64.sqrt()) * c.sqrt();
        report.entropy_difference.push(lhs, rhs);
    }

    let mut rng = stream_rng(seed, 102);
    let gammas = [0.5, 0.9, 0.99];
    for trial in 0..trials {
        let g: f64 = gammas[trial % gammas.len()];
        let k = rng.gen_range(1..=2000usize);
        let lhs: f64 = (1..=k).map(|i| g.powi((k - i) as i32) / ((i + 1) as f64).sqrt()).sum();
        let kf = k as f64;
        let rhs = (2.0 / kf).sqrt() / (1.0 - g) + g.powf(kf / 2.0) / (1.0 - g);
        report.sequence_sum.push(lhs, rhs);
        if kf >= 1.0 / (1.0 / g).ln().powi(2) {
            report.sequence_sum.push(lhs, 4.0 / (kf.sqrt() * (1.0 - g)));
        }
    }

    let mut rng = stream_rng(seed, 103);
    for trial in 0..trials {
        let s = rng.gen_range(2..=6);
        let a = rng.gen_range(2..=5);
        let gamma = rng.gen_range(0.0..0.99);
        let mdp = garnet::<f64>(s, a, rng.gen_range(1..=s), gamma, seed.wrapping_add(trial as u64))?;
        let pi = Policy::new(Table::from_vec(s, a, (0..s).flat_map(|_| random_simplex(a, &mut rng)).collect())?)?;
        let q0 = QFunction::new(Table::from_fn(s, a, |_, _| rng.gen_range(-5.0..5.0)))?;
        let (tau, zeta) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let m = [1, 2, 5][trial % 3];
        let (mut qt, mut qz) = (q0.clone(), q0);
        for _ in 0..m {
            qt = soft_bellman_q(&mdp, &pi, tau, &qt)?;
            qz = soft_bellman_q(&mdp, &pi, zeta, &qz)?;
        }
        let lhs = qt.max_abs_diff(&qz);
        report.bellman_difference.push(lhs, delta_tz(tau, zeta, a, gamma));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy_update::{soft_npg_step, ScheduleMode};

    #[test]
    fn mixture_examples() {
        let a = VFunction(vec![2.0_f64, 2.0]);
        let b = VFunction(vec![4.0, 4.0]);
        assert_eq!(mixture_value(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(mixture_value(&[a.clone(), b.clone()]).unwrap(), VFunction(vec![3.0, 3.0]));
        assert_eq!(mixture_value(&[b.clone(), a.clone()]).unwrap(), mixture_value(&[a, b]).unwrap());
        assert!(mixture_value::<f64>(&[]).is_err());
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_tz(0.3, 0.3, 5, 0.9), 0.0);
        assert!((delta_tz(0.2, 0.0, 4, 0.9) - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert_eq!(delta_tz(0.7, 0.1, 1, 0.5), 0.0);
    }

    #[test]
    fn pe_error_examples() {
        let a = QFunction::from_rows(&[vec![1.0_f64, 2.0]]).unwrap();
        let b = QFunction::from_rows(&[vec![1.3, 2.3]]).unwrap();
        assert_eq!(pe_error(&a, &a).unwrap(), 0.0);
        assert!((pe_error(&a, &b).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rate_fit_examples() {
        let xs: Vec<f64> = (1..=50).map(|x| x as f64).collect();
        let inv: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
        let f = rate_fit(&xs, &inv, (1, 50)).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        let flat = vec![3.0; 50];
        assert!(rate_fit(&xs, &flat, (1, 50)).unwrap().slope.abs() < 1e-12);
        assert!(matches!(rate_fit(&xs, &inv, (1, 2)), Err(Error::DegenerateWindow(_))));
    }

    #[test]
    fn regret_is_zero_at_the_optimum() {
        let mdp = garnet::<f64>(3, 2, 2, 0.8, 4).unwrap();
        let mut trace = RunTrace::new(&mdp, 0.2, 0.2, 1e-12).unwrap();
        let pi = trace.pi_star.clone();
        let (_, q) = exact_soft_values(&mdp, &pi, 0.2).unwrap();
        trace.record(&mdp, &pi, &q, 0.1, 0.02, Extras::default()).unwrap();
        assert!(trace.cumulative_regret(1).iter().all(|r| r.abs() < 1e-12));
        let c = reduction_check(&trace, &trace.v_star, 0.8, 1).unwrap();
        assert!(c.lhs < 1e-9 && c.rhs < 1e-9 && c.holds);
    }

    #[test]
    fn regret_matches_independent_sum() {
        let mdp = garnet::<f64>(3, 3, 2, 0.7, 8).unwrap();
        let tau = 0.1;
        let mut trace = RunTrace::new(&mdp, tau, tau, 1e-12).unwrap();
        let mut pi = Policy::uniform(3, 3);
        for t in 0..6 {
            let (_, q) = exact_soft_values(&mdp, &pi, tau).unwrap();
            trace.record(&mdp, &pi, &q, 0.5, 0.05, Extras::default()).unwrap();
            pi = soft_npg_step(&pi, &q, 0.5 / (t + 1) as f64, 0.05).unwrap();
        }
        let h: Vec<f64> = (0..3).map(|s| trace.pi_star.entropy(s)).collect();
        let a = per_state_regret(&trace.records, &trace.pi_star, &h, tau);
        let b = trace.cumulative_regret(6);
        for s in 0..3 {
            assert!((a[s] - b[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn corrupted_errors_are_detected() {
        let mdp = garnet::<f64>(4, 3, 2, 0.9, 1).unwrap();
        let mut trace = RunTrace::new(&mdp, 0.0, 0.0, 1e-12).unwrap();
        let pi = Policy::uniform(4, 3);
        for _ in 0..5 {
            trace.record(&mdp, &pi, &QFunction::zeros(4, 3), 0.1, 0.0, Extras::default()).unwrap();
        }
        let v_star = trace.v_star.clone();
        assert!(reduction_check(&trace, &v_star, 0.9, 5).unwrap().holds);
        trace.records[2].eps = 0.0;
        for r in trace.records.iter_mut() {
            r.eps = 0.0;
        }
        assert!(!reduction_check(&trace, &v_star, 0.9, 5).unwrap().holds);
    }

    #[test]
    fn generic_regret_zero_losses() {
        let sched = ActorSchedule { mode: ScheduleMode::TheoryDecay, c: 1.0, tau: 0.3, eta_const: 0.0 };
        let r = generic_regret_experiment(&vec![vec![0.0_f64; 4]; 20], 0.3, &sched).unwrap();
        assert!(r.holds && r.lhs <= r.rhs);
        let one = generic_regret_experiment(&[vec![0.4_f64, -0.2, 1.0]], 0.3, &sched).unwrap();
        assert!(one.holds);
    }

    #[test]
    fn lemmas_hold_on_a_small_sample() {
        let report = lemma_checks(5, 60).unwrap();
        assert_eq!(report.violations(), 0, "{report:?}");
        let k1: f64 = 1.0 / 2f64.sqrt();
        assert!(k1 <= 2f64.sqrt() / 0.1 + 0.9f64.sqrt() / 0.1);
    }
}
