//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use softpmd::bellman::soft_bellman_q;
use softpmd::diagnostics::{delta_tz, lemma_checks};
use softpmd::env::{garnet, stream_rng, GridSpec};
use softpmd::mdp::{exact_soft_values, optimal_soft_policy, return_j};
use softpmd::objectives::{
    evaluate_objective, objective_gradient, optimize_to_stationarity, ObjectiveFamily, ObjectiveSpec, TabularLogits,
};
use softpmd::policy_update::{
    dsac_actor_exact, fkl_project, npg_intermediate, rkl_project, soft_npg_step, soft_spma_step, spma_intermediate,
    spma_max_eta,
};
use softpmd::simplex::{minimize_on_simplex, SimplexOptions};
use softpmd::tables::total_variation;
use softpmd::{Policy64, QFunction64, Table, VFunction64};
use softpmd_harness::config::{EnvSpec, Family, Mode, RunConfig, SampledSpec, TauSpec, TunerSpec, ZetaSpec};
use softpmd_harness::verify::{CheckSpec, Status, TheoryCell, VerificationReport};
use softpmd_harness::{run_sampled, verify_theory, TheoryGrid};

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: impl Into<String>) -> Outcome {
    Outcome { pass, summary: summary.into() }
}

fn simplex_row(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

fn random_policy(s: usize, a: usize, rng: &mut ChaCha8Rng) -> Policy64 {
    let rows: Vec<Vec<f64>> = (0..s).map(|_| simplex_row(a, rng)).collect();
    Policy64::from_rows(&rows).unwrap()
}

fn random_q(s: usize, a: usize, hi: f64, rng: &mut ChaCha8Rng) -> QFunction64 {
    QFunction64::new(Table::from_fn(s, a, |_, _| rng.gen_range(0.0..hi))).unwrap()
}

fn exact_evaluation() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mdp = garnet::<f64>(20, 5, 4, 0.9, seed).unwrap();
        let mut rng = stream_rng(seed, 1000);
        let pi = random_policy(20, 5, &mut rng);
        for tau in [0.0, 0.1] {
            let (_, q_exact) = exact_soft_values(&mdp, &pi, tau).unwrap();
            let mut q = QFunction64::zeros(20, 5);
            for _ in 0..10_000 {
                q = soft_bellman_q(&mdp, &pi, tau, &q).unwrap();
            }
            worst = worst.max(q.max_abs_diff(&q_exact));
        }
    }
    outcome(worst < 1e-8, format!("max |q_exact - T^10000 q| = {worst:.2e} over 40 cases"))
}

fn contraction_and_bellman_difference() -> Outcome {
    let mut rng = stream_rng(2, 1000);
    let (mut worst_c, mut worst_d) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for trial in 0..100u64 {
        let s = rng.gen_range(2..=8);
        let a = rng.gen_range(2..=5);
        let gamma = rng.gen_range(0.0..0.99);
        let mdp = garnet::<f64>(s, a, rng.gen_range(1..=s), gamma, trial).unwrap();
        let pi = random_policy(s, a, &mut rng);
        let q1 = QFunction64::new(Table::from_fn(s, a, |_, _| rng.gen_range(-5.0..5.0))).unwrap();
        let q2 = QFunction64::new(Table::from_fn(s, a, |_, _| rng.gen_range(-5.0..5.0))).unwrap();
        let (zeta, tau) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let m = rng.gen_range(1..=5);
        let (mut a1, mut a2, mut bt) = (q1.clone(), q2.clone(), q1.clone());
        let mut bz = q1.clone();
        for _ in 0..m {
            a1 = soft_bellman_q(&mdp, &pi, zeta, &a1).unwrap();
            a2 = soft_bellman_q(&mdp, &pi, zeta, &a2).unwrap();
            bt = soft_bellman_q(&mdp, &pi, tau, &bt).unwrap();
            bz = soft_bellman_q(&mdp, &pi, zeta, &bz).unwrap();
        }
        worst_c = worst_c.max(a1.max_abs_diff(&a2) - gamma.powi(m) * q1.max_abs_diff(&q2));
        worst_d = worst_d.max(bt.max_abs_diff(&bz) - delta_tz(tau, zeta, a, gamma));
    }
    outcome(
        worst_c <= 1e-12 && worst_d <= 1e-9,
        format!("max contraction excess {worst_c:.2e}, max Bellman-difference excess {worst_d:.2e}"),
    )
}

fn closed_form_projections() -> Outcome {
    let mut rng = stream_rng(3, 1000);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = rng.gen_range(2..=6);
        let half = simplex_row(a, &mut rng);
        let tau_t = rng.gen_range(0.01..3.0);
        let pi_half = Policy64::from_rows(std::slice::from_ref(&half)).unwrap();
        let closed = rkl_project(&pi_half, tau_t).unwrap();
        // KL(π‖π½) - τ_t H(π)
        let sol = minimize_on_simplex(
            &vec![1.0 / a as f64; a],
            &vec![true; a],
            |p, g| {
                let mut val = 0.0;
                for b in 0..a {
                    let lp = p[b].max(f64::MIN_POSITIVE).ln();
                    val += (1.0 + tau_t) * p[b] * lp - p[b] * half[b].ln();
                    g[b] = (1.0 + tau_t) * (lp + 1.0) - half[b].ln();
                }
                val
            },
            SimplexOptions::new(1e-9),
        )
        .unwrap();
        for b in 0..a {
            worst = worst.max((sol.point[b] - closed.prob(0, b)).abs());
        }
    }
    // forward KL against a 2-action grid search
    let mut worst_fkl: f64 = 0.0;
    for (p0, tau_t) in [(0.9, 0.5), (0.7, 0.1), (0.99, 2.0), (0.5, 1.0), (0.2, 0.05)] {
        let pi_half = Policy64::from_rows(&[vec![p0, 1.0 - p0]]).unwrap();
        let got = fkl_project(&pi_half, tau_t, 1e-12).unwrap();
        let f = |x: f64| -p0 * x.ln() - (1.0 - p0) * (1.0 - x).ln() + tau_t * (x * x.ln() + (1.0 - x) * (1.0 - x).ln());
        let best = (1..10_000)
            .map(|i| i as f64 * 1e-4)
            .min_by(|x, y| f(*x).total_cmp(&f(*y)))
            .unwrap();
        worst_fkl = worst_fkl.max((got.prob(0, 0) - best).abs());
    }
    outcome(
        worst < 1e-6 && worst_fkl < 2e-4,
        format!("RKL vs numeric max {worst:.2e} (50 cases); FKL vs grid max {worst_fkl:.2e}"),
    )
}

struct Instance {
    pi: Policy64,
    q: QFunction64,
    v: VFunction64,
    eta: f64,
    tau: f64,
}

fn instance(family: ObjectiveFamily, rng: &mut ChaCha8Rng) -> Instance {
    let (s, a) = (rng.gen_range(1..=4), rng.gen_range(2..=5));
    let pi = random_policy(s, a, rng);
    let q = random_q(s, a, 10.0, rng);
    let v = q.soft_state_values(&pi, 0.0);
    let mut eta: f64 = rng.gen_range(0.05..1.0);
    if family.is_spma() {
        eta = eta.min(0.9 * spma_max_eta(&pi, &q, &v));
    }
    Instance { pi, q, v, eta, tau: rng.gen_range(0.05..1.0) }
}

fn gradient_check() -> Outcome {
    let mut rng = stream_rng(4, 1000);
    let mut worst: f64 = 0.0;
    for family in ObjectiveFamily::ALL {
        for _ in 0..20 {
            let inst = instance(family, &mut rng);
            let (s, a) = (inst.pi.num_states(), inst.pi.num_actions());
            let weights = simplex_row(s, &mut rng);
            let spec = ObjectiveSpec::new(family, inst.eta, inst.tau, weights).unwrap();
            let theta = TabularLogits::new(Table::from_fn(s, a, |_, _| rng.gen_range(-1.0..1.0))).unwrap();
            let grad = objective_gradient(&spec, &theta, &inst.pi, &inst.q, &inst.v).unwrap();
            let h = 1e-5;
            let mut err: f64 = 0.0;
            for i in 0..s {
                for j in 0..a {
                    let shifted = |d: f64| {
                        let mut t = theta.table().clone();
                        t.set(i, j, t.get(i, j) + d);
                        let t = TabularLogits::new(t).unwrap();
                        evaluate_objective(&spec, &t, &inst.pi, &inst.q, &inst.v).unwrap()
                    };
                    let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                    err = err.max((fd - grad.get(i, j)).abs());
                }
            }
            worst = worst.max(err / grad.max_abs().max(1e-3));
        }
    }
    outcome(worst <= 1e-5, format!("max relative error {worst:.2e} over 4 x 20 instances"))
}

fn objective_consistency() -> Outcome {
    let mut rng = stream_rng(5, 1000);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for family in ObjectiveFamily::ALL {
        for _ in 0..10 {
            let inst = instance(family, &mut rng);
            let s = inst.pi.num_states();
            let spec = ObjectiveSpec::uniform_weights(family, inst.eta, inst.tau, s);
            let tau_t = inst.eta * inst.tau;
            let closed = match family {
                ObjectiveFamily::NpgRkl => soft_npg_step(&inst.pi, &inst.q, inst.eta, tau_t).unwrap(),
                ObjectiveFamily::SpmaRkl => soft_spma_step(&inst.pi, &inst.q, &inst.v, inst.eta, tau_t).unwrap(),
                ObjectiveFamily::NpgFkl => {
                    fkl_project(&npg_intermediate(&inst.pi, &inst.q, inst.eta).unwrap(), tau_t, 1e-12).unwrap()
                }
                ObjectiveFamily::SpmaFkl => fkl_project(
                    &spma_intermediate(&inst.pi, &inst.q, &inst.v, inst.eta).unwrap(),
                    tau_t,
                    1e-12,
                )
                .unwrap(),
            };
            let theta = TabularLogits::from_policy(&inst.pi);
            match optimize_to_stationarity(&spec, &theta, &inst.pi, &inst.q, &inst.v, 1e-7, 200_000) {
                Ok(opt) => worst = worst.max(opt.policy().max_tv(&closed)),
                Err(e) => failures.push(format!("{family:?}: {e}")),
            }
        }
    }
    // DSAC as the η → ∞ limit of NPG-RKL
    let mut worst_dsac: f64 = 0.0;
    for _ in 0..10 {
        let (s, a) = (rng.gen_range(1..=4), rng.gen_range(2..=5));
        let pi = random_policy(s, a, &mut rng);
        let q = random_q(s, a, 10.0, &mut rng);
        let tau = rng.gen_range(0.1..1.0);
        let eta = 1e6;
        let spec = ObjectiveSpec::uniform_weights(ObjectiveFamily::NpgRkl, eta, tau, s);
        let v = q.soft_state_values(&pi, 0.0);
        let target = dsac_actor_exact(&q, tau).unwrap();
        match optimize_to_stationarity(&spec, &TabularLogits::from_policy(&pi), &pi, &q, &v, 1e-6, 200_000) {
            Ok(opt) => {
                let p = opt.policy();
                worst_dsac = worst_dsac.max((0..s).map(|r| total_variation(p.row(r), target.row(r))).fold(0.0, f64::max));
            }
            Err(e) => failures.push(format!("dsac limit: {e}")),
        }
    }
    outcome(
        failures.is_empty() && worst < 1e-3 && worst_dsac < 1e-4,
        format!(
            "stationary vs closed form max TV {worst:.2e}; eta=1e6 vs DSAC max TV {worst_dsac:.2e}{}",
            if failures.is_empty() { String::new() } else { format!("; errors: {}", failures.join(", ")) }
        ),
    )
}

fn summarize(report: &VerificationReport, pick: impl Fn(&str, &str) -> bool) -> Outcome {
    let sel: Vec<_> = report.checks.iter().filter(|c| pick(&c.cell, &c.name)).collect();
    let fails: Vec<_> = sel.iter().filter(|c| matches!(c.status, Status::Fail | Status::Error)).collect();
    let out_of_hyp = sel.iter().filter(|c| c.status == Status::OutOfHypothesis).count();
    let slack = sel
        .iter()
        .filter(|c| c.rhs.is_finite() && c.lhs.is_finite())
        .map(|c| c.rhs - c.lhs)
        .fold(f64::INFINITY, f64::min);
    let mut summary = format!("{} checks, {} failed, min slack {slack:.3e}", sel.len(), fails.len());
    if out_of_hyp > 0 {
        summary.push_str(&format!(", {out_of_hyp} out of hypothesis"));
    }
    let slopes: Vec<f64> = sel
        .iter()
        .filter_map(|c| c.detail.as_deref()?.strip_prefix("slope ")?.split_whitespace().next()?.parse().ok())
        .collect();
    if !slopes.is_empty() {
        let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summary.push_str(&format!("; {} fitted slopes in [{lo:.3}, {hi:.3}]", slopes.len()));
    }
    if let Some(f) = fails.first() {
        summary.push_str(&format!("; first failure {} / {} k={:?}: {} vs {}", f.cell, f.name, f.k, f.lhs, f.rhs));
    }
    outcome(!sel.is_empty() && fails.is_empty() && out_of_hyp == 0, summary)
}

fn lemmas() -> Outcome {
    match lemma_checks(11, 1000) {
        Ok(r) => outcome(
            r.violations() == 0,
            format!(
                "violations: entropy difference {}/{}, sequence sum {}/{}, Bellman difference {}/{}",
                r.entropy_difference.violations,
                r.entropy_difference.trials,
                r.sequence_sum.violations,
                r.sequence_sum.trials,
                r.bellman_difference.violations,
                r.bellman_difference.trials
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn grid_config(family: Family, zeta: ZetaSpec, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        name: Some(format!("{family:?}")),
        seed,
        mode: Mode::Sampled,
        family,
        env: EnvSpec::Gridworld(GridSpec {
            width: 5,
            height: 5,
            start: (0, 0),
            goal: (4, 4),
            obstacles: vec![],
            step_reward: 0.0,
            goal_reward: 1.0,
            gamma: 0.9,
        }),
        tau: TauSpec::Auto,
        zeta,
        m_steps: Default::default(),
        clamp: None,
        iterations: 150,
        schedule: None,
        actor: Default::default(),
        sampled: Some(SampledSpec {
            env_steps: 1000,
            batch_size: 128,
            buffer_capacity: 20_000,
            critic_updates: 20,
            critic_lr: 0.5,
            critic_steps: 1,
            target_smoothing: 0.1,
            target_estimator: Default::default(),
            episode_length: 50,
            warmup_steps: 0,
        }),
        tuner: Some(TunerSpec { initial_alpha: 1.0, target_entropy_scale: 0.5, lr: 0.05 }),
        diagnostics: Default::default(),
    };
    if family == Family::NpgRkl {
        cfg.schedule = Some(softpmd_harness::config::ScheduleSpec {
            mode: softpmd::policy_update::ScheduleMode::Constant,
            c: None,
            eta: Some(1.0),
        });
    }
    cfg
}

fn sampled_sanity() -> Outcome {
    let probe = grid_config(Family::Dsac, ZetaSpec::Fixed(0.0), 0);
    let mdp = probe.env.build(0).unwrap();
    let (_, v_opt) = optimal_soft_policy(&mdp, 0.0, 1e-12).unwrap();
    let j_opt = return_j(&mdp, &v_opt);
    let mut parts = Vec::new();
    let mut pass = true;
    for family in [Family::Dsac, Family::NpgRkl] {
        let start = Instant::now();
        let mut total = 0.0;
        let mut steps = 0;
        for seed in 0..5 {
            let cfg = grid_config(family, ZetaSpec::Fixed(0.0), seed);
            let spec = cfg.sampled.as_ref().unwrap();
            steps = cfg.iterations * spec.env_steps + spec.warmup_steps;
            match run_sampled(&cfg) {
                Ok(out) => total += out.greedy_returns.last().copied().unwrap_or(0.0),
                Err(e) => {
                    pass = false;
                    parts.push(format!("{family:?} seed {seed}: {e}"));
                }
            }
        }
        let ratio = total / 5.0 / j_opt;
        let secs = start.elapsed().as_secs_f64();
        pass &= ratio >= 0.9 && steps <= 200_000 && secs < 300.0;
        parts.push(format!("{family:?} zeta=0 J/J* = {ratio:.3} ({steps} steps, {secs:.1}s)"));
    }
    // contrast: critic entropy tied to the tuned actor entropy
    let start = Instant::now();
    let mut total = 0.0;
    for seed in 0..5 {
        match run_sampled(&grid_config(Family::Dsac, ZetaSpec::Tau, seed)) {
            Ok(out) => total += out.greedy_returns.last().copied().unwrap_or(0.0),
            Err(e) => {
                pass = false;
                parts.push(format!("zeta=tau seed {seed}: {e}"));
            }
        }
    }
    parts.push(format!(
        "Dsac zeta=tau J/J* = {:.3} (contrast, {:.1}s)",
        total / 5.0 / j_opt,
        start.elapsed().as_secs_f64()
    ));
    outcome(pass, parts.join("; "))
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: u32, title: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        all &= o.pass;
        println!(
            "criterion {id:>2} {} {title}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.summary,
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "exact evaluation oracle", &exact_evaluation);
    report(2, "contraction and Bellman-difference bound", &contraction_and_bellman_difference);
    report(3, "closed-form proximal projections", &closed_form_projections);
    report(4, "actor objective gradients", &gradient_check);
    report(5, "closed-form / objective consistency", &objective_consistency);

    let start = Instant::now();
    let mut grid = TheoryGrid::acceptance(&[0, 1, 2, 3, 4]);
    grid.cells.push(TheoryCell {
        name: "generic".into(),
        seeds: vec![0],
        checks: vec![CheckSpec::GenericRegret { sequences: 100, horizon: 1000, tau: 0.2, c: 1.0 }],
        run: None,
    });
    let theory = verify_theory(&grid, std::thread::available_parallelism().map_or(1, |n| n.get())).unwrap();
    println!("theory grid: {} checks in {:.1}s", theory.checks.len(), start.elapsed().as_secs_f64());
    let exactly = |name: &'static str| move |_: &str, n: &str| n == name;
    report(6, "reduction inequality", &|| summarize(&theory, exactly("reduction")));
    report(7, "regularized rates", &|| {
        summarize(&theory, |cell, n| {
            cell.contains("zeta0.1") && (n == "suboptimality" || n == "rate")
        })
    });
    report(8, "decoupling floor", &|| summarize(&theory, |cell, _| cell.ends_with("decoupled_floor")));
    report(9, "unregularized rates", &|| summarize(&theory, |_, n| n.starts_with("unregularized")));
    report(10, "regret bounds", &|| summarize(&theory, |_, n| n == "regret" || n == "generic_regret"));
    report(11, "helper lemmas", &lemmas);
    report(12, "sampled-mode gridworld", &sampled_sanity);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
