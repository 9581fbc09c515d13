//! Experiment harness for the `softpmd` library: TOML run configurations,
//! exact and sampled training loops, theory verification grids and their
//! CSV/JSON outputs.

pub mod config;
pub mod error;
pub mod exact;
pub mod output;
pub mod sampled;
pub mod verify;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
pub use exact::{run_exact, RunOutput};
pub use sampled::{greedy_return, run_sampled};
pub use verify::{verify_theory, TheoryGrid, VerificationReport};

/// Runs `config` in its configured mode.
pub fn train(config: &RunConfig) -> Result<RunOutput> {
    match config.mode {
        config::Mode::Exact => run_exact(config),
        config::Mode::Sampled => run_sampled(config),
    }
}
