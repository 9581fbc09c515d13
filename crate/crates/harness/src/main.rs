use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use softpmd::mdp::{optimal_soft_policy, return_j};
use softpmd_harness::config::TauSpec;
use softpmd_harness::output::{write_report, write_traces_file};
use softpmd_harness::verify::Status;
use softpmd_harness::{train, verify_theory, RunConfig, TheoryGrid};

#[derive(Parser)]
#[command(name = "softpmd", version, about = "Tabular off-policy actor-critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration (a run, or a cell grid for verify-theory).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for grid cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Soft-optimal policy and value of the configured environment.
    Solve,
    /// Run the configured exact or sampled training loop.
    Train,
    /// Evaluate a theory grid (the acceptance grid when no config is given).
    VerifyTheory,
    /// Write the configured environment as an MDP JSON document.
    DumpMdp,
}

fn load_run(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().context("--config is required")?;
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Serialize)]
struct Solution {
    tau: f64,
    value: Vec<f64>,
    policy: Vec<Vec<f64>>,
    j: f64,
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    run_id: &'a str,
    iterations: usize,
    final_subopt: Option<f64>,
    final_greedy_return: Option<f64>,
    optimal_return: f64,
}

fn run(cli: &Cli) -> Result<bool> {
    match cli.command {
        Command::Solve => {
            let cfg = load_run(cli)?;
            let tau = match cfg.tau {
                TauSpec::Fixed(t) => t,
                TauSpec::Auto => 0.0,
            };
            let mdp = cfg.env.build(cfg.seed)?;
            let (pi, v) = optimal_soft_policy(&mdp, tau, cfg.diagnostics.solver_tol)?;
            let sol = Solution {
                tau,
                j: return_j(&mdp, &v),
                value: v.0,
                policy: (0..pi.num_states()).map(|s| pi.row(s).to_vec()).collect(),
            };
            ensure_dir(&cli.out)?;
            std::fs::write(cli.out.join("solution.json"), serde_json::to_string_pretty(&sol)?)?;
            println!("J* = {:.10} (tau = {tau})", sol.j);
            Ok(true)
        }
        Command::Train => {
            let cfg = load_run(cli)?;
            let out = train(&cfg)?;
            ensure_dir(&cli.out)?;
            write_traces_file(&cli.out.join("trace.csv"), &[&out])?;
            let (_, v_opt) = optimal_soft_policy(&out.mdp, 0.0, cfg.diagnostics.solver_tol)?;
            let summary = TrainSummary {
                run_id: &out.run_id,
                iterations: out.trace.len(),
                final_subopt: out.trace.records.last().map(|r| r.subopt_last),
                final_greedy_return: out.greedy_returns.last().copied(),
                optimal_return: return_j(&out.mdp, &v_opt),
            };
            std::fs::write(cli.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            println!("{}", serde_json::to_string(&summary)?);
            Ok(true)
        }
        Command::VerifyTheory => {
            let grid = match &cli.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    let mut grid = TheoryGrid::from_toml(&text)?;
                    if let Some(seed) = cli.seed {
                        grid.cells.iter_mut().for_each(|c| c.seeds = vec![seed]);
                    }
                    grid
                }
                None => {
                    let seeds: Vec<u64> = match cli.seed {
                        Some(s) => vec![s],
                        None => (0..5).collect(),
                    };
                    TheoryGrid::acceptance(&seeds)
                }
            };
            if cli.jobs == 0 {
                bail!("--jobs must be positive");
            }
            let report = verify_theory(&grid, cli.jobs)?;
            ensure_dir(&cli.out)?;
            write_report(&cli.out, &report)?;
            let count = |s: Status| report.checks.iter().filter(|c| c.status == s).count();
            println!(
                "{} checks: {} pass, {} fail, {} out of hypothesis, {} errors",
                report.checks.len(),
                count(Status::Pass),
                count(Status::Fail),
                count(Status::OutOfHypothesis),
                count(Status::Error)
            );
            for c in report.checks.iter().filter(|c| matches!(c.status, Status::Fail | Status::Error)) {
                eprintln!(
                    "{:?}: {} / {} seed {} k {:?}: {} > {} {}",
                    c.status,
                    c.cell,
                    c.name,
                    c.seed,
                    c.k,
                    c.lhs,
                    c.rhs,
                    c.detail.as_deref().unwrap_or("")
                );
            }
            Ok(report.all_passed())
        }
        Command::DumpMdp => {
            let cfg = load_run(cli)?;
            let mdp = cfg.env.build(cfg.seed)?;
            ensure_dir(&cli.out)?;
            std::fs::write(cli.out.join("mdp.json"), mdp.to_json()?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
