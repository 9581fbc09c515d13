//! Theory verification over a grid of exact runs: each cell runs once per seed
//! and evaluates its checks; failures are collected, never fatal.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use softpmd::bellman::{ClampMode, Horizon};
use softpmd::bounds::{
    c_floor, eta_unregularized, regret_bound, subopt_rhs, subopt_rhs_unregularized, Method, Setting,
};
use softpmd::diagnostics::{generic_regret_experiment, lemma_checks, rate_fit, reduction_check, REDUCTION_TOL};
use softpmd::env::stream_rng;
use softpmd::policy_update::{ActorSchedule, ScheduleMode};

use crate::config::{ActorUpdate, CSpec, Family, Mode, RunConfig, ScheduleSpec, ZetaSpec};
use crate::error::{HarnessError, Result};
use crate::exact::{run_exact, RunOutput};

/// Slack allowed on the closed-form bounds.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryGrid {
    #[serde(default)]
    pub cells: Vec<TheoryCell>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryCell {
    pub name: String,
    /// Seeds to run; defaults to the run's own seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub checks: Vec<CheckSpec>,
    /// Exact-mode run the checks read from (not needed by the run-free checks).
    #[serde(default)]
    pub run: Option<RunConfig>,
}

/// `ks` lists the iteration counts to check; empty means every `1..=K`.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    /// Reduction inequality.
    Reduction {
        #[serde(default)]
        ks: Vec<usize>,
    },
    /// Mixture sub-optimality against the regularized theorem's rhs.
    Suboptimality {
        #[serde(default)]
        ks: Vec<usize>,
    },
    /// `‖Regret(k)‖∞` against the regret corollary.
    Regret {
        #[serde(default)]
        ks: Vec<usize>,
    },
    /// Log-log slope of the mixture sub-optimality over `window`.
    Rate { window: (usize, usize), slope: (f64, f64) },
    /// `τ = ζ = 0`: one run per `k` at the theorem's constant step, bound at
    /// each `k` and the slope across them.
    Unregularized { ks: Vec<usize>, slope: (f64, f64) },
    /// Telescoping regret bound of the entropy-regularized mirror step on
    /// random and block-switching loss sequences.
    GenericRegret {
        sequences: usize,
        horizon: usize,
        #[serde(default = "default_generic_tau")]
        tau: f64,
        #[serde(default = "default_generic_c")]
        c: f64,
    },
    /// Helper lemmas on random hypothesis-satisfying inputs.
    Lemmas { trials: usize },
}

fn default_generic_tau() -> f64 {
    0.2
}

fn default_generic_c() -> f64 {
    1.0
}

impl CheckSpec {
    fn needs_run(&self) -> bool {
        !matches!(
            self,
            CheckSpec::GenericRegret { .. } | CheckSpec::Lemmas { .. } | CheckSpec::Unregularized { .. }
        )
    }

    fn label(&self) -> &'static str {
        match self {
            CheckSpec::Reduction { .. } => "reduction",
            CheckSpec::Suboptimality { .. } => "suboptimality",
            CheckSpec::Regret { .. } => "regret",
            CheckSpec::Rate { .. } => "rate",
            CheckSpec::Unregularized { .. } => "unregularized",
            CheckSpec::GenericRegret { .. } => "generic_regret",
            CheckSpec::Lemmas { .. } => "lemmas",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The run does not satisfy the guarantee's hypotheses; reported, not failed.
    OutOfHypothesis,
    Error,
}

/// One evaluated inequality `lhs ≤ rhs + tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub cell: String,
    pub seed: u64,
    pub k: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub tolerance: f64,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// A measured quantity next to its bound at iteration `k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub cell: String,
    pub seed: u64,
    pub check: String,
    pub k: usize,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    #[serde(skip)]
    pub rates: Vec<RateRow>,
}

impl VerificationReport {
    pub fn failures(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| matches!(c.status, Status::Fail | Status::Error))
            .count()
    }

    pub fn all_passed(&self) -> bool {
        self.failures() == 0
    }
}

struct Ctx<'a> {
    cell: &'a str,
    seed: u64,
    out: &'a mut VerificationReport,
}

impl Ctx<'_> {
    fn push(&mut self, name: &str, k: Option<usize>, lhs: f64, rhs: f64, tol: f64, gate: &Option<String>) {
        let holds = lhs <= rhs + tol;
        let status = match (gate, holds) {
            (Some(_), _) => Status::OutOfHypothesis,
            (None, true) => Status::Pass,
            (None, false) => Status::Fail,
        };
        self.out.checks.push(CheckResult {
            name: name.to_string(),
            cell: self.cell.to_string(),
            seed: self.seed,
            k,
            lhs,
            rhs,
            holds,
            tolerance: tol,
            status,
            detail: gate.clone(),
        });
    }

    fn error(&mut self, name: &str, err: impl std::fmt::Display) {
        self.out.checks.push(CheckResult {
            name: name.to_string(),
            cell: self.cell.to_string(),
            seed: self.seed,
            k: None,
            lhs: f64::NAN,
            rhs: f64::NAN,
            holds: false,
            tolerance: 0.0,
            status: Status::Error,
            detail: Some(err.to_string()),
        });
    }

    fn rate(&mut self, check: &str, k: usize, measured: f64, bound: f64) {
        self.out.rates.push(RateRow {
            cell: self.cell.to_string(),
            seed: self.seed,
            check: check.to_string(),
            k,
            measured,
            bound,
        });
    }
}

fn ks_or_all(ks: &[usize], len: usize) -> Vec<usize> {
    if ks.is_empty() {
        (1..=len).collect()
    } else {
        ks.to_vec()
    }
}

fn resolved_zeta(run: &RunConfig, tau: f64) -> f64 {
    match run.zeta {
        ZetaSpec::Fixed(z) => z,
        ZetaSpec::Tau => tau,
    }
}

/// Why a run falls outside the regularized guarantees, if it does.
fn regularized_gate(run: &RunConfig, method: Option<Method>, gamma: f64, na: usize) -> (Option<String>, f64) {
    let Some(method) = method else {
        return (Some(format!("family {:?} has no closed-form guarantee", run.family)), 0.0);
    };
    let tau = run.fixed_tau().unwrap_or(0.0);
    if tau <= 0.0 {
        return (Some("needs tau > 0".into()), 0.0);
    }
    if run.actor_update() != ActorUpdate::ClosedForm {
        return (Some("needs the closed-form actor update".into()), 0.0);
    }
    if run.horizon() != Horizon::Infinite && run.clamp_mode() == ClampMode::Off {
        return (Some("finite m needs the [0, H_τ] projection".into()), 0.0);
    }
    let Some(ScheduleSpec { mode: ScheduleMode::TheoryDecay, .. }) = &run.schedule else {
        return (Some("needs the theory_decay schedule".into()), 0.0);
    };
    let c = match run.schedule_c(gamma, na) {
        Ok(Some(c)) => c,
        _ => return (Some("schedule constant unavailable".into()), 0.0),
    };
    let floor = c_floor(method, gamma, tau, na);
    if c < floor {
        return (Some(format!("c = {c} below the admissible floor {floor}")), c);
    }
    (None, c)
}

fn method_of(family: Family) -> Option<Method> {
    family.theory_method()
}

fn run_checks_on(out: &RunOutput, run: &RunConfig, checks: &[CheckSpec], ctx: &mut Ctx) {
    let trace = &out.trace;
    let gamma = out.mdp.discount();
    let na = out.mdp.num_actions();
    let method = method_of(run.family);
    let tau = trace.tau;
    let setting = Setting { gamma, tau, zeta: resolved_zeta(run, tau), num_actions: na };
    let (gate, c) = regularized_gate(run, method, gamma, na);
    for check in checks {
        match check {
            CheckSpec::Reduction { ks } => {
                for k in ks_or_all(ks, trace.len()) {
                    match reduction_check(trace, &trace.v_star, gamma, k) {
                        Ok(r) => ctx.push("reduction", Some(k), r.lhs, r.rhs, REDUCTION_TOL, &None),
                        Err(e) => ctx.error("reduction", e),
                    }
                }
            }
            CheckSpec::Suboptimality { ks } => {
                let Some(m) = method else {
                    ctx.push("suboptimality", None, f64::NAN, f64::NAN, BOUND_TOL, &gate);
                    continue;
                };
                for k in ks_or_all(ks, trace.len()) {
                    let Some(rec) = trace.records.get(k.wrapping_sub(1)) else {
                        ctx.error("suboptimality", format!("K = {k} beyond the run"));
                        continue;
                    };
                    let rhs = subopt_rhs(m, &setting, c, k, run.horizon());
                    ctx.rate("suboptimality", k, rec.subopt_mixture, rhs);
                    ctx.push("suboptimality", Some(k), rec.subopt_mixture, rhs, BOUND_TOL, &gate);
                }
            }
            CheckSpec::Regret { ks } => {
                let Some(m) = method else {
                    ctx.push("regret", None, f64::NAN, f64::NAN, BOUND_TOL, &gate);
                    continue;
                };
                let mut gate = gate.clone();
                if gate.is_none() && m == Method::SoftSpma {
                    let need = 2.0 * setting.h_tau().max(setting.zeta * (na as f64).ln());
                    if c < need {
                        gate = Some(format!("c = {c} below 2 max(H_τ, ζ ln A) = {need}"));
                    }
                }
                let curve = trace.regret_norm_curve();
                for k in ks_or_all(ks, trace.len()) {
                    let Some(&measured) = curve.get(k.wrapping_sub(1)) else {
                        ctx.error("regret", format!("K = {k} beyond the run"));
                        continue;
                    };
                    let rhs = regret_bound(m, &setting, c, k);
                    ctx.rate("regret", k, measured, rhs);
                    ctx.push("regret", Some(k), measured, rhs, BOUND_TOL, &gate);
                }
            }
            CheckSpec::Rate { window, slope } => {
                let xs: Vec<f64> = (1..=trace.len()).map(|k| k as f64).collect();
                let ys: Vec<f64> = trace.records.iter().map(|r| r.subopt_mixture).collect();
                push_slope(ctx, "rate", &xs, &ys, *window, *slope);
            }
            CheckSpec::Unregularized { .. } | CheckSpec::GenericRegret { .. } | CheckSpec::Lemmas { .. } => {
                unreachable!("run-free checks are handled separately")
            }
        }
    }
}

/// Records `slope.0 ≤ fit ≤ slope.1` as two one-sided checks folded into one row.
fn push_slope(ctx: &mut Ctx, name: &str, xs: &[f64], ys: &[f64], window: (usize, usize), slope: (f64, f64)) {
    match rate_fit(xs, ys, window) {
        Ok(fit) => {
            // distance outside the admissible band, as lhs ≤ rhs = 0
            let outside = (slope.0 - fit.slope).max(fit.slope - slope.1);
            ctx.push(name, Some(window.1), outside, 0.0, 0.0, &None);
            let last = ctx.out.checks.last_mut().expect("just pushed");
            last.detail = Some(format!("slope {:.4} in [{}, {}]", fit.slope, slope.0, slope.1));
        }
        Err(e) => ctx.error(name, e),
    }
}

fn unregularized_check(run: &RunConfig, ks: &[usize], slope: (f64, f64), ctx: &mut Ctx) {
    let Some(method) = method_of(run.family) else {
        ctx.push("unregularized", None, f64::NAN, f64::NAN, BOUND_TOL, &Some("needs npg_rkl or spma_rkl".into()));
        return;
    };
    let gate = match (run.fixed_tau(), run.zeta) {
        (Ok(t), ZetaSpec::Fixed(z)) if t == 0.0 && z == 0.0 => None,
        _ => Some("needs tau = zeta = 0".to_string()),
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &k in ks {
        let mut cfg = run.clone();
        cfg.seed = ctx.seed;
        cfg.iterations = k;
        let result = cfg.env.build(ctx.seed).and_then(|mdp| {
            let eta = eta_unregularized(method, mdp.discount(), mdp.num_actions(), k);
            cfg.schedule = Some(ScheduleSpec { mode: ScheduleMode::Constant, c: None, eta: Some(eta) });
            let out = run_exact(&cfg)?;
            let rhs = subopt_rhs_unregularized(method, mdp.discount(), mdp.num_actions(), k, cfg.horizon());
            Ok((out, rhs))
        });
        match result {
            Ok((out, rhs)) => {
                let measured = out.trace.records.last().map_or(f64::NAN, |r| r.subopt_mixture);
                ctx.rate("unregularized", k, measured, rhs);
                ctx.push("unregularized", Some(k), measured, rhs, BOUND_TOL, &gate);
                xs.push(k as f64);
                ys.push(measured);
            }
            Err(e) => ctx.error("unregularized", e),
        }
    }
    if xs.len() == ks.len() && !ks.is_empty() {
        let lo = *ks.iter().min().expect("nonempty");
        let hi = *ks.iter().max().expect("nonempty");
        push_slope(ctx, "unregularized_rate", &xs, &ys, (lo, hi), slope);
    }
}

/// Random losses in `[-1, 1]` for even sequences; odd ones switch the
/// favoured action in blocks of random length to punish slow tracking.
pub fn loss_sequence(seed: u64, index: usize, horizon: usize) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 200 + index as u64);
    let na = rng.gen_range(2..8);
    if index.is_multiple_of(2) {
        return (0..horizon).map(|_| (0..na).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    }
    let mut out = Vec::with_capacity(horizon);
    let mut best = 0;
    while out.len() < horizon {
        let block = rng.gen_range(1..=horizon.max(2) / 2);
        for _ in 0..block.min(horizon - out.len()) {
            out.push((0..na).map(|a| if a == best { -1.0 } else { 1.0 }).collect());
        }
        best = (best + rng.gen_range(1..na)) % na;
    }
    out
}

fn run_free_check(check: &CheckSpec, run: Option<&RunConfig>, ctx: &mut Ctx) {
    match check {
        CheckSpec::GenericRegret { sequences, horizon, tau, c } => {
            let schedule = ActorSchedule::theory_decay(*c, *tau);
            for i in 0..*sequences {
                let losses = loss_sequence(ctx.seed, i, *horizon);
                match generic_regret_experiment(&losses, *tau, &schedule) {
                    Ok(r) => ctx.push("generic_regret", Some(*horizon), r.lhs, r.rhs, 1e-8, &None),
                    Err(e) => ctx.error("generic_regret", e),
                }
            }
        }
        CheckSpec::Lemmas { trials } => match lemma_checks(ctx.seed, *trials) {
            Ok(rep) => {
                for (name, stat) in [
                    ("lemma_entropy_difference", &rep.entropy_difference),
                    ("lemma_sequence_sum", &rep.sequence_sum),
                    ("lemma_bellman_difference", &rep.bellman_difference),
                ] {
                    ctx.push(name, None, stat.violations as f64, 0.0, 0.0, &None);
                    ctx.out.checks.last_mut().expect("just pushed").detail =
                        Some(format!("{} trials, max excess {:.3e}", stat.trials, stat.max_excess));
                }
            }
            Err(e) => ctx.error("lemmas", e),
        },
        CheckSpec::Unregularized { ks, slope } => match run {
            Some(run) => unregularized_check(run, ks, *slope, ctx),
            None => ctx.error("unregularized", "check needs a run"),
        },
        _ => unreachable!("run-based checks are handled separately"),
    }
}

fn verify_cell_seed(cell: &TheoryCell, seed: u64) -> VerificationReport {
    let mut report = VerificationReport::default();
    let mut ctx = Ctx { cell: &cell.name, seed, out: &mut report };
    let (with_run, free): (Vec<_>, Vec<_>) = cell.checks.iter().cloned().partition(|c| c.needs_run());
    for check in &free {
        run_free_check(check, cell.run.as_ref(), &mut ctx);
    }
    if with_run.is_empty() {
        return report;
    }
    let Some(run) = &cell.run else {
        for c in &with_run {
            ctx.error(c.label(), "check needs a run");
        }
        return report;
    };
    let mut cfg = run.clone();
    cfg.seed = seed;
    if cfg.mode != Mode::Exact {
        ctx.error("run", "theory checks need exact mode");
        return report;
    }
    match run_exact(&cfg) {
        Ok(out) => run_checks_on(&out, &cfg, &with_run, &mut ctx),
        Err(e) => {
            for c in &with_run {
                ctx.error(c.label(), &e);
            }
        }
    }
    report
}

/// Runs every cell for every seed, `jobs` cells at a time.
pub fn verify_theory(grid: &TheoryGrid, jobs: usize) -> Result<VerificationReport> {
    let work: Vec<(&TheoryCell, u64)> = grid
        .cells
        .iter()
        .flat_map(|cell| {
            let seeds = if cell.seeds.is_empty() {
                vec![cell.run.as_ref().map_or(0, |r| r.seed)]
            } else {
                cell.seeds.clone()
            };
            seeds.into_iter().map(move |s| (cell, s))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let parts: Vec<VerificationReport> =
        pool.install(|| work.par_iter().map(|&(cell, seed)| verify_cell_seed(cell, seed)).collect());
    let mut report = VerificationReport::default();
    for p in parts {
        report.checks.extend(p.checks);
        report.rates.extend(p.rates);
    }
    Ok(report)
}

impl TheoryGrid {
    pub fn from_toml(text: &str) -> Result<Self> {
        let grid: TheoryGrid = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for cell in &grid.cells {
            if let Some(run) = &cell.run {
                run.validate()?;
            }
        }
        Ok(grid)
    }

    /// The grid exercised by the acceptance suite: theory-sized Garnets
    /// (S = A = 10, branching 5, γ = 0.4), τ = 0.1 unless stated.
    pub fn acceptance(seeds: &[u64]) -> Self {
        let garnet = crate::config::EnvSpec::Garnet { states: 10, actions: 10, branching: 5, gamma: 0.4, seed: None };
        let run = |family: Family, tau: f64, zeta: f64, m: Horizon, k: usize| RunConfig {
            name: None,
            seed: 0,
            mode: Mode::Exact,
            family,
            env: garnet.clone(),
            tau: crate::config::TauSpec::Fixed(tau),
            zeta: ZetaSpec::Fixed(zeta),
            m_steps: crate::config::MSteps(m),
            clamp: None,
            iterations: k,
            schedule: Some(ScheduleSpec { mode: ScheduleMode::TheoryDecay, c: Some(CSpec::Floor), eta: None }),
            actor: Default::default(),
            sampled: None,
            tuner: None,
            diagnostics: Default::default(),
        };
        let seeds = seeds.to_vec();
        let mut cells = Vec::new();
        for (fam, tag) in [(Family::NpgRkl, "npg"), (Family::SpmaRkl, "spma")] {
            for zeta in [0.1, 0.0] {
                for (m, mtag) in [(Horizon::Finite(1), "1"), (Horizon::Finite(5), "5"), (Horizon::Infinite, "inf")] {
                    let mut checks = vec![CheckSpec::Reduction { ks: vec![10, 50, 100, 500, 1000] }];
                    if zeta == 0.1 {
                        checks.push(CheckSpec::Suboptimality { ks: vec![] });
                        checks.push(CheckSpec::Regret { ks: vec![] });
                        if m == Horizon::Infinite {
                            checks.push(CheckSpec::Rate { window: (250, 1000), slope: (-1.3, -0.6) });
                        }
                    }
                    cells.push(TheoryCell {
                        name: format!("{tag}_zeta{zeta}_m{mtag}"),
                        seeds: seeds.clone(),
                        checks,
                        run: Some(run(fam, 0.1, zeta, m, 1000)),
                    });
                }
            }
            cells.push(TheoryCell {
                name: format!("{tag}_decoupled_floor"),
                seeds: seeds.clone(),
                checks: vec![CheckSpec::Suboptimality { ks: vec![2000] }],
                run: Some(run(fam, 0.1, 0.0, Horizon::Infinite, 2000)),
            });
            let mut unreg = run(fam, 0.0, 0.0, Horizon::Infinite, 1);
            unreg.schedule = Some(ScheduleSpec { mode: ScheduleMode::Constant, c: None, eta: Some(1.0) });
            cells.push(TheoryCell {
                name: format!("{tag}_unregularized"),
                seeds: seeds.clone(),
                checks: vec![CheckSpec::Unregularized { ks: vec![100, 400, 1600], slope: (-0.7, -0.3) }],
                run: Some(unreg),
            });
        }
        Self { cells }
    }
}
