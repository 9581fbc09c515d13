//! Tabular off-policy actor-critic with decoupled actor and critic entropy.
//!
//! The crate covers finite MDPs and their exact soft evaluation, m-step and
//! sampled soft Bellman critics, NPG/SPMA policy updates with forward and
//! reverse KL projections, the four parameterized actor objectives, small
//! environments with a replay buffer, and numerical checks of the tabular
//! convergence guarantees.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common instantiations.

// `!(x > 0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bellman;
pub mod bounds;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod linalg;
pub mod mdp;
pub mod objectives;
pub mod policy_update;
pub mod scalar;
pub mod simplex;
pub mod tables;

pub use error::{Error, Result};
pub use mdp::Mdp;
pub use scalar::Scalar;
pub use tables::{Policy, QFunction, Table, VFunction};

pub type Mdp64 = Mdp<f64>;
pub type Policy64 = Policy<f64>;
pub type QFunction64 = QFunction<f64>;
pub type VFunction64 = VFunction<f64>;
pub type RunTrace64 = diagnostics::RunTrace<f64>;

pub type Mdp32 = Mdp<f32>;
pub type Policy32 = Policy<f32>;
pub type QFunction32 = QFunction<f32>;
pub type VFunction32 = VFunction<f32>;
pub type RunTrace32 = diagnostics::RunTrace<f32>;
