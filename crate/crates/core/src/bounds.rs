//! Closed-form constants and right-hand sides of the tabular convergence
//! guarantees for soft NPG / soft SPMA and their unregularized variants.

use serde::{Deserialize, Serialize};

use crate::bellman::Horizon;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SoftNpg,
    SoftSpma,
}

/// Problem constants the bounds depend on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Setting<T> {
    pub gamma: T,
    pub tau: T,
    pub zeta: T,
    pub num_actions: usize,
}

impl<T: Scalar> Setting<T> {
    fn ln_a(&self) -> T {
        T::from_usize_lossy(self.num_actions).ln()
    }

    /// `H_τ = (1 + τ ln A) / (1 - γ)`.
    pub fn h_tau(&self) -> T {
        (T::one() + self.tau * self.ln_a()) / (T::one() - self.gamma)
    }

    /// `δ(τ, ζ) = |τ - ζ| ln A / (1 - γ)`.
    pub fn delta(&self) -> T {
        (self.tau - self.zeta).abs() * self.ln_a() / (T::one() - self.gamma)
    }
}

/// `γ^m`, zero for exact evaluation.
pub fn gamma_pow<T: Scalar>(gamma: T, m: Horizon) -> T {
    match m {
        Horizon::Infinite => T::zero(),
        Horizon::Finite(m) => gamma.powf(T::from_usize_lossy(m)),
    }
}

/// Smallest schedule constant `c` the sub-optimality theorem admits (`τ > 0`).
pub fn c_floor<T: Scalar>(method: Method, gamma: T, tau: T, num_actions: usize) -> T {
    let ln_a = T::from_usize_lossy(num_actions).ln();
    let one_g = T::one() - gamma;
    let b = T::one() + tau * ln_a;
    let tl = tau * ln_a;
    let lit = T::lit;
    match method {
        Method::SoftNpg => (lit(8.0) * b / one_g)
            .max(lit(32.0) * tl)
            .max(lit(2.0) * b * b / (one_g * one_g * tl)),
        Method::SoftSpma => (lit(4.0) * b / one_g)
            .max(lit(32.0) * tl)
            .max(b * b / (one_g * one_g * lit(2.0) * tl))
            .max(lit(2.0) * b / one_g),
    }
}

/// Right-hand side of the mixture sub-optimality theorem after `k` iterations.
pub fn subopt_rhs<T: Scalar>(method: Method, s: &Setting<T>, c: T, k: usize, m: Horizon) -> T {
    let lit = T::lit;
    let kk = T::from_usize_lossy(k);
    let a = T::from_usize_lossy(s.num_actions);
    let ln_a = a.ln();
    let one_g = T::one() - s.gamma;
    let b = T::one() + s.tau * ln_a;
    let lead = match method {
        Method::SoftNpg => b * b / (lit(2.0) * s.tau * one_g * one_g),
        Method::SoftSpma => lit(3.0) * b * b / (lit(2.0) * s.tau * one_g * one_g),
    };
    let regret_part = (lead * (T::one() + kk.ln()) + (c + s.tau) * ln_a) / (kk * one_g);
    let gm = gamma_pow(s.gamma, m);
    let eval_part = if gm == T::zero() {
        T::zero()
    } else {
        let sk = kk.sqrt();
        lit(16.0) * b * gm / (one_g.powi(4) * kk)
            * ((T::one() + s.tau * (a * kk).ln()) * ln_a.sqrt() * (sk + T::one() / (T::one() - s.gamma.sqrt()))
                + s.tau * (ln_a + T::one()) * sk)
    };
    regret_part + eval_part + lit(2.0) * s.delta() / one_g
}

/// Bound on `max_s |Regret(K)(s)|` under the theory schedule with constant `c`.
pub fn regret_bound<T: Scalar>(method: Method, s: &Setting<T>, c: T, k: usize) -> T {
    let h = s.h_tau();
    let ln_a = T::from_usize_lossy(s.num_actions).ln();
    let lead = match method {
        Method::SoftNpg => h * h / (T::lit(2.0) * s.tau),
        Method::SoftSpma => T::lit(3.0) * h * h / s.tau,
    };
    lead * (T::one() + T::from_usize_lossy(k).ln()) + (c + s.tau) * ln_a
}

/// Constant step of the unregularized theorem for `k` iterations.
pub fn eta_unregularized<T: Scalar>(method: Method, gamma: T, num_actions: usize, k: usize) -> T {
    let ln_a = T::from_usize_lossy(num_actions).ln();
    let base = T::SQRT_2() * (T::one() - gamma) * ln_a.sqrt() / T::from_usize_lossy(k).sqrt();
    match method {
        Method::SoftNpg => base,
        Method::SoftSpma => base.min((T::one() - gamma) / T::lit(2.0)),
    }
}

/// Sub-optimality rhs of the unregularized (`τ = ζ = 0`) theorems.
pub fn subopt_rhs_unregularized<T: Scalar>(
    method: Method,
    gamma: T,
    num_actions: usize,
    k: usize,
    m: Horizon,
) -> T {
    let ln_a = T::from_usize_lossy(num_actions).ln();
    let kk = T::from_usize_lossy(k);
    let one_g = T::one() - gamma;
    let gm = gamma_pow(gamma, m);
    match method {
        Method::SoftNpg => {
            (T::lit(2.0) * ln_a).sqrt() / (kk.sqrt() * one_g * one_g)
                + T::lit(4.0) * ln_a.sqrt() * gm / (kk.sqrt() * one_g.powi(4))
        }
        Method::SoftSpma => {
            regret_bound_unregularized(method, gamma, num_actions, k) / (kk * one_g)
                + T::lit(2.0) * ln_a.sqrt() * gm / (kk.sqrt() * one_g.powi(4))
        }
    }
}

/// Regret bound of the unregularized methods at their constant step.
pub fn regret_bound_unregularized<T: Scalar>(method: Method, gamma: T, num_actions: usize, k: usize) -> T {
    let ln_a = T::from_usize_lossy(num_actions).ln();
    let sk = T::from_usize_lossy(k).sqrt();
    let one_g = T::one() - gamma;
    match method {
        Method::SoftNpg => (T::lit(2.0) * ln_a).sqrt() * sk / one_g,
        Method::SoftSpma => {
            T::lit(7.0) * ln_a.sqrt() * sk / (T::SQRT_2() * one_g) + T::lit(2.0) * ln_a / one_g
        }
    }
}
