//! Minimization of smooth functions over the probability simplex through a
//! softmax parameterization.
//!
//! The descent direction in logit space is the centred π-gradient
//! `g_b - Σ_a π_a g_a`, i.e. the logit gradient preconditioned by `diag(1/π)`.
//! It is always a descent direction and behaves well near the boundary, where
//! the raw logit gradient vanishes with `π_b`.

use crate::error::{Error, Result};
use crate::scalar::{softmax_into, Scalar};

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions<T> {
    /// Stop once the centred gradient is below this on the support.
    pub tol: T,
    pub max_iterations: usize,
    pub initial_step: T,
}

impl<T: Scalar> SimplexOptions<T> {
    pub fn new(tol: T) -> Self {
        Self {
            tol,
            max_iterations: 10_000,
            initial_step: T::one(),
        }
    }
}

/// Outcome of [`minimize_on_simplex`].
#[derive(Clone, Debug)]
pub struct SimplexSolution<T> {
    pub point: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub residual: T,
}

/// Centred gradient `g - <π, g>` restricted to the support, and its ∞-norm.
fn centred<T: Scalar>(pi: &[T], grad: &[T], support: &[bool], out: &mut [T]) -> T {
    let mean: T = pi
        .iter()
        .zip(grad)
        .zip(support)
        .filter(|(_, &on)| on)
        .map(|((&p, &g), _)| p * g)
        .sum();
    let mut norm = T::zero();
    for ((o, &g), &on) in out.iter_mut().zip(grad).zip(support) {
        *o = if on { g - mean } else { T::zero() };
        norm = norm.max(o.abs());
    }
    norm
}

/// Minimizes `f` over distributions supported on `support`.
///
/// `f(π, grad)` returns the objective and writes `∂f/∂π` into `grad`. The
/// search starts at `init` and uses Armijo backtracking, so the objective
/// never increases.
pub fn minimize_on_simplex<T, F>(
    init: &[T],
    support: &[bool],
    mut f: F,
    opts: SimplexOptions<T>,
) -> Result<SimplexSolution<T>>
where
    T: Scalar,
    F: FnMut(&[T], &mut [T]) -> T,
{
    minimize_on_simplex_scaled(
        init,
        support,
        |p, g, w| {
            w.iter_mut().for_each(|x| *x = T::one());
            f(p, g)
        },
        opts,
    )
}

/// [`minimize_on_simplex`] with a per-coordinate step scale.
///
/// `f(π, grad, scale)` additionally writes positive factors `w_b`; the logit
/// direction becomes `w_b (g_b - μ)`. Passing `w_b = 1 / (π_b ∂²f/∂π_b²)`
/// gives a diagonal Newton step, which removes the ill-conditioning of
/// objectives whose curvature differs strongly between actions.
pub fn minimize_on_simplex_scaled<T, F>(
    init: &[T],
    support: &[bool],
    mut f: F,
    opts: SimplexOptions<T>,
) -> Result<SimplexSolution<T>>
where
    T: Scalar,
    F: FnMut(&[T], &mut [T], &mut [T]) -> T,
{
    let n = init.len();
    if n == 0 || support.len() != n || !support.iter().any(|&s| s) {
        return Err(Error::InvalidParameter("simplex problem needs a nonempty support".into()));
    }
    let mut theta: Vec<T> = init
        .iter()
        .zip(support)
        .map(|(&p, &on)| {
            if on {
                p.max(T::lit(1e-300).max(T::min_positive_value())).ln()
            } else {
                T::neg_infinity()
            }
        })
        .collect();
    let mut pi = vec![T::zero(); n];
    softmax_into(&theta, &mut pi);
    let mut grad = vec![T::zero(); n];
    let mut scale = vec![T::one(); n];
    let mut dir = vec![T::zero(); n];
    let mut trial_theta = theta.clone();
    let mut trial_pi = pi.clone();
    let mut trial_grad = grad.clone();
    let mut trial_scale = scale.clone();
    let mut value = f(&pi, &mut grad, &mut scale);
    if !value.is_finite() {
        return Err(Error::Domain("simplex objective not finite at the start point".into()));
    }
    let mut step = opts.initial_step;
    let armijo = T::lit(1e-4);
    let resolution = T::epsilon() * T::lit(16.0);
    let mut scratch = vec![T::zero(); n];
    for it in 0..opts.max_iterations {
        let residual = centred(&pi, &grad, support, &mut dir);
        if residual < opts.tol {
            return Ok(SimplexSolution { point: pi, value, iterations: it, residual });
        }
        // scaled direction w_b (g_b - μ), μ the (π w)-weighted mean of g
        let (num, den) = pi
            .iter()
            .zip(&grad)
            .zip(&scale)
            .zip(support)
            .filter(|(_, &on)| on)
            .fold((T::zero(), T::zero()), |(a, b), (((&p, &g), &w), _)| (a + p * w * g, b + p * w));
        let mu = num / den;
        for b in 0..n {
            dir[b] = if support[b] { scale[b] * (grad[b] - mu) } else { T::zero() };
        }
        let slope: T = (0..n).map(|b| pi[b] * dir[b] * (grad[b] - mu)).sum();
        let mut accepted = false;
        let mut via_residual = false;
        for _ in 0..60 {
            for ((t, &base), &d) in trial_theta.iter_mut().zip(&theta).zip(&dir) {
                *t = if base == T::neg_infinity() { base } else { base - step * d };
            }
            softmax_into(&trial_theta, &mut trial_pi);
            let trial = f(&trial_pi, &mut trial_grad, &mut trial_scale);
            // Close to the optimum the decrease drops below the resolution of
            // `value`; a smaller gradient is then accepted as progress instead.
            let flat = (trial - value).abs() <= resolution * (T::one() + value.abs());
            let decrease = trial < value && value - trial >= armijo * step * slope;
            if trial.is_finite()
                && (decrease
                    || (flat
                        && centred(&trial_pi, &trial_grad, support, &mut scratch)
                            < residual * T::lit(0.99)))
            {
                accepted = true;
                via_residual = !decrease;
                value = trial;
                break;
            }
            step *= T::lit(0.5);
        }
        if !accepted {
            // Backtracking exhausted: the remaining progress is below floating-point resolution.
            return Ok(SimplexSolution { point: pi, value, iterations: it, residual });
        }
        std::mem::swap(&mut theta, &mut trial_theta);
        std::mem::swap(&mut pi, &mut trial_pi);
        std::mem::swap(&mut grad, &mut trial_grad);
        std::mem::swap(&mut scale, &mut trial_scale);
        // Keep logits centred so they cannot drift.
        let shift = theta.iter().copied().filter(|t| t.is_finite()).fold(T::neg_infinity(), T::max);
        for t in theta.iter_mut().filter(|t| t.is_finite()) {
            *t -= shift;
        }
        if !via_residual {
            step = (step * T::lit(2.0)).min(T::lit(1e6));
        }
    }
    let residual = centred(&pi, &grad, support, &mut dir);
    if residual < opts.tol {
        return Ok(SimplexSolution { point: pi, value, iterations: opts.max_iterations, residual });
    }
    Err(Error::NonConvergence {
        what: "simplex minimization",
        iterations: opts.max_iterations,
        residual: residual.as_f64(),
    })
}
