//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::Instant;

use plsgd::envelope::{envelope_iterate, qtrick_max, RecursionCoefficients};
use plsgd::objectives::{double_well, finite_diff_grad, monomial, Objective, Quadratic, RadialMonomial};
use plsgd::optimizers::{drive, Method, RunSpec};
use plsgd::oracle::{verify_abc, AbcConstants, AdditiveOracle, NoiseModel};
use plsgd::rl::{self, PlContext, TabularMdp};
use plsgd::rng::stream;
use plsgd::schedules::{admissible_eta_lower_bound, optimal_theta, StepSchedule};
use plsgd_cli::bundle::three_sigma;
use plsgd_cli::config::{ExperimentConfig, ExperimentKind, ObjectiveSpec, RegionSpec, RlSpec};
use plsgd_cli::{figure1_preset, run_experiment};
use rand::Rng;
use rayon::prelude::*;

const SLOPE_TOL: f64 = 0.25;
const AUX_TOL: f64 = 1e-10;
const ENVELOPE_UPPER_RATIO: f64 = 0.1;
const ENVELOPE_LOWER_RATIO: f64 = 0.5;
const ENVELOPE_ETA_OFFSET: f64 = 0.05;
const QTRICK_REL_TOL: f64 = 1e-9;
const QTRICK_GRID: usize = 10_000_000;
const FD_REL_TOL: f64 = 1e-5;
const FD_POINTS: usize = 100;
const ABC_POINTS: usize = 20;
const ABC_SAMPLES: usize = 10_000;
const TRAP_DELTA: f64 = 0.1;
const TRAP_RUNS: u64 = 1_000;
const DECAY_RATIO: f64 = 0.1;
const PL_SAMPLES: usize = 10_000;
const RL_RUNS: u64 = 100;
const N_MAX: u64 = 100_000;

type Verdict = (bool, String);
type Criterion = (&'static str, &'static str, fn() -> Verdict);

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

fn c1_figure1() -> Verdict {
    let dir = tmp();
    let mut ok = true;
    let mut parts = Vec::new();
    for cfg in figure1_preset() {
        let name = cfg.name.clone().unwrap();
        let out = match run_experiment(&cfg, &dir.path().join(&name)) {
            Ok(o) => o,
            Err(e) => return (false, format!("{name}: {e}")),
        };
        let m = &out.manifest.metrics;
        if cfg.check.as_ref().is_some_and(|c| c.monotone_final_decade) {
            let from = cfg.n_max / 10;
            let tail: Vec<f64> =
                out.stats.checkpoints.iter().zip(&out.stats.mean).filter(|(&n, _)| n >= from).map(|(_, &g)| g).collect();
            let mono = tail.len() >= 2 && tail.windows(2).all(|w| w[1] <= w[0]);
            ok &= mono;
            parts.push(format!("{name} monotone={mono}"));
        } else {
            let target = -m["reference_rate"];
            let slope = m.get("fitted_slope").copied().unwrap_or(f64::NAN);
            let pass = (slope - target).abs() <= SLOPE_TOL;
            ok &= pass;
            parts.push(format!("{name} {slope:.3}/{target:.3}"));
        }
    }
    (ok, parts.join(", "))
}

/// FNV-1a over the bit patterns of every iterate.
fn path_hash(obj: &dyn Objective, noise: NoiseModel, sched: &StepSchedule, x1: &[f64], spec: &RunSpec, i: u64) -> (u64, Vec<u64>) {
    let oracle = AdditiveOracle::new(obj, noise);
    let mut h: u64 = 0xcbf29ce484222325;
    let mut rng = stream(spec.base_seed, i);
    let t = drive(obj, &oracle, sched, x1, spec, i, &mut rng, &mut |e| {
        for v in e.x_next {
            h = (h ^ v.to_bits()).wrapping_mul(0x100000001b3);
        }
    })
    .expect("run");
    (h, t.checkpoints.iter().map(|c| c.gap.to_bits()).collect())
}

fn c2_collapse() -> Verdict {
    let mut mismatches = 0usize;
    let mut total = 0usize;
    for cfg in figure1_preset().into_iter().filter(|c| c.kind == ExperimentKind::GlobalSgd) {
        let obj = cfg.objective.as_ref().unwrap().build().unwrap();
        let beta = obj.pl_meta().unwrap().beta;
        let sched = cfg.schedule.unwrap().build(Some(beta)).unwrap();
        let init = cfg.init.clone().unwrap();
        let sgd = RunSpec::new(Method::Sgd, cfg.n_max, cfg.base_seed);
        let shb = RunSpec::new(Method::Shb { nu: 0.0 }, cfg.n_max, cfg.base_seed);
        let bad: usize = (0..cfg.n_runs)
            .into_par_iter()
            .map(|i| {
                let x1 = init.sample(1, &mut stream(cfg.base_seed, i));
                let a = path_hash(obj.as_ref(), cfg.noise, &sched, &x1, &sgd, i);
                let b = path_hash(obj.as_ref(), cfg.noise, &sched, &x1, &shb, i);
                usize::from(a != b)
            })
            .sum();
        mismatches += bad;
        total += cfg.n_runs as usize;
    }
    (mismatches == 0, format!("{mismatches} of {total} runs differ bitwise"))
}

fn c3_auxiliary() -> Verdict {
    let nu = 0.5;
    let k = nu / (1.0 - nu);
    let obj = monomial(2.0).unwrap();
    let sched = StepSchedule::optimal(0.2, 0.5).unwrap();
    let spec = RunSpec::new(Method::Shb { nu }, N_MAX, 11);
    let oracle = AdditiveOracle::new(&obj, NoiseModel::Gaussian { sigma: 1.0 });
    let mut worst = 0.0f64;
    for i in 0..10 {
        let mut rng = stream(11, i);
        drive(&obj, &oracle, &sched, &[2.0], &spec, i, &mut rng, &mut |e| {
            let w = e.x[0] - e.x_prev[0];
            let z = e.x[0] + k * w;
            let w_next = nu * w - e.gamma * e.v[0];
            let z_next = z - e.gamma / (1.0 - nu) * e.v[0];
            let w_actual = e.x_next[0] - e.x[0];
            let z_actual = e.x_next[0] + k * w_actual;
            let scale = 1.0 + (z_actual * z_actual + w_actual * w_actual).sqrt();
            worst = worst.max((z_actual - z_next).abs() / scale).max((w_actual - w_next).abs() / scale);
        })
        .unwrap();
    }
    (worst <= AUX_TOL, format!("max scaled residual {worst:.3e} (tol {AUX_TOL:e})"))
}

fn envelope_ratio(beta: f64, eta_offset: f64) -> (f64, f64) {
    let theta = optimal_theta(beta).unwrap();
    let sched = StepSchedule::new(0.5, theta).unwrap();
    let coef = RecursionCoefficients::new(1.0, 1.0, 1.0, beta).unwrap();
    let run = envelope_iterate(&coef, &sched, 1.0, 1_000_000).unwrap();
    let eta = admissible_eta_lower_bound(beta, theta).unwrap() + eta_offset;
    (eta, run.weighted(1_000_000, eta) / run.weighted(1_000, eta))
}

fn c4a_envelope_upper() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [0.6, 0.75, 1.0] {
        let (eta, r) = envelope_ratio(beta, ENVELOPE_ETA_OFFSET);
        ok &= r <= ENVELOPE_UPPER_RATIO;
        parts.push(format!("beta={beta} eta={eta:.3} ratio={r:.3}"));
    }
    (ok, format!("{} (need <= {ENVELOPE_UPPER_RATIO})", parts.join(", ")))
}

fn c4b_envelope_lower() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [0.6, 0.75, 1.0] {
        let (eta, r) = envelope_ratio(beta, -ENVELOPE_ETA_OFFSET);
        ok &= r >= ENVELOPE_LOWER_RATIO;
        parts.push(format!("beta={beta} eta={eta:.3} ratio={r:.3}"));
    }
    (ok, format!("{} (need >= {ENVELOPE_LOWER_RATIO})", parts.join(", ")))
}

fn c5_qtrick() -> Verdict {
    let mut rng = stream(5, 0);
    let cases: Vec<(f64, f64, f64)> =
        (0..100).map(|_| (rng.random_range(0.1..10.0), rng.random_range(0.1..10.0), rng.random_range(0.55..=1.0))).collect();
    let worst = cases
        .par_iter()
        .map(|&(a, b, beta)| {
            let (_, closed) = qtrick_max(a, b, beta).unwrap();
            let p = 2.0 * beta;
            // f vanishes again at (a/b)^{1/(p−1)}, so the maximiser lies below it.
            let hi = (a / b).powf(1.0 / (p - 1.0));
            let grid = (0..=QTRICK_GRID)
                .map(|i| {
                    let x = hi * i as f64 / QTRICK_GRID as f64;
                    a * x - b * x.powf(p)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            (closed - grid).abs() / closed.abs()
        })
        .reduce(|| 0.0, f64::max);
    (worst <= QTRICK_REL_TOL, format!("max relative gap {worst:.3e} over 100 cases"))
}

fn c6_gradients() -> Verdict {
    let mut rng = stream(6, 0);
    let objectives: Vec<(String, Box<dyn Objective>)> = vec![
        ("monomial p=2".into(), Box::new(monomial(2.0).unwrap())),
        ("monomial p=3".into(), Box::new(monomial(3.0).unwrap())),
        ("monomial p=6".into(), Box::new(monomial(6.0).unwrap())),
        ("monomial p=12".into(), Box::new(monomial(12.0).unwrap())),
        ("double well".into(), Box::new(double_well())),
        ("quadratic d=3".into(), Box::new(Quadratic::new(3).unwrap())),
        ("radial p=3 d=3".into(), Box::new(RadialMonomial::new(3.0, 3).unwrap())),
    ];
    let mut worst: (f64, String) = (0.0, String::new());
    for (name, obj) in &objectives {
        for _ in 0..FD_POINTS {
            let x: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let fd = finite_diff_grad(obj.as_ref(), &x, 1e-5).unwrap();
            let e = rel_err(&obj.gradient(&x), &fd);
            if e > worst.0 {
                worst = (e, name.clone());
            }
        }
    }
    for (mname, mdp) in [("bandit", TabularMdp::bandit()), ("chain3", TabularMdp::chain3())] {
        for lambda in [0.0, 0.1, 1.0] {
            for _ in 0..FD_POINTS {
                let w: Vec<f64> = (0..mdp.n_params()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let exact = rl::exact_gradient(&mdp, &w, lambda).unwrap();
                let fd = rl::finite_diff_value_gradient(&mdp, &w, lambda, 1e-5).unwrap();
                let e = rel_err(&exact, &fd);
                if e > worst.0 {
                    worst = (e, format!("{mname} lambda={lambda}"));
                }
            }
        }
    }
    (worst.0 <= FD_REL_TOL, format!("max relative error {:.3e} ({})", worst.0, worst.1))
}

fn c7_abc() -> Verdict {
    let mut rng = stream(7, 0);
    let mut failed = 0;
    let mut parts = Vec::new();
    let sigma = 1.0;
    let objectives: Vec<Box<dyn Objective>> = vec![Box::new(double_well()), Box::new(Quadratic::new(3).unwrap())];
    for obj in &objectives {
        let d = obj.dim();
        let oracle = AdditiveOracle::new(obj.as_ref(), NoiseModel::Gaussian { sigma });
        let abc = AbcConstants::new(0.0, 1.0, sigma * sigma * d as f64).unwrap();
        let pts: Vec<Vec<f64>> = (0..ABC_POINTS).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let rep = verify_abc(obj.as_ref(), &oracle, &abc, &pts, ABC_SAMPLES, &mut rng).unwrap();
        failed += rep.n_failed();
        parts.push(format!("d={d}: {} of {ABC_POINTS} failed", rep.n_failed()));
    }
    (failed == 0, parts.join(", "))
}

fn local_config() -> ExperimentConfig {
    ExperimentConfig {
        kind: ExperimentKind::Local,
        name: Some("trapping".into()),
        n_max: N_MAX,
        n_runs: TRAP_RUNS,
        base_seed: 8,
        nu: None,
        output: None,
        objective: Some(ObjectiveSpec::DoubleWell),
        noise: NoiseModel::Gaussian { sigma: 1.0 },
        schedule: None,
        init: None,
        checkpoints: Default::default(),
        region: Some(RegionSpec {
            radius: 0.5,
            delta: TRAP_DELTA,
            level: 0.0,
            minima: None,
            theta: 0.75,
            x1: vec![1.02],
        }),
        envelope: None,
        rl: None,
        check: None,
    }
}

fn c8_c9_trapping() -> (Verdict, Verdict) {
    let dir = tmp();
    let out = match run_experiment(&local_config(), dir.path()) {
        Ok(o) => o,
        Err(e) => return ((false, e.to_string()), (false, "no runs".into())),
    };
    let m = &out.manifest.metrics;
    let allowed = TRAP_DELTA + three_sigma(TRAP_DELTA, TRAP_RUNS);
    let exit = m["exit_fraction"];
    let violations = m["violations"];
    let c8 = (
        exit <= allowed && violations == 0.0,
        format!("exit fraction {exit:.4} (allowed {allowed:.4}), {violations} pathwise violations, gamma1 {:.4e}", m["gamma1"]),
    );
    let c9 = match m.get("decay_ratio") {
        Some(&r) => (
            r <= DECAY_RATIO && m["mean_gap_early"] > 0.0,
            format!("mean gap {:.3e} -> {:.3e}, ratio {r:.4}", m["mean_gap_early"], m["mean_gap_final"]),
        ),
        None => (false, "no stayed runs".into()),
    };
    (c8, c9)
}

fn c10_pl() -> Verdict {
    let mut rng = stream(10, 0);
    let mut ok = true;
    let mut parts = Vec::new();
    for (mname, mdp) in [("bandit", TabularMdp::bandit()), ("chain3", TabularMdp::chain3())] {
        for lambda in [0.0, 0.1] {
            let ctx = PlContext::new(&mdp, lambda).unwrap();
            let radius = rl::local_radius(&mdp, lambda, 0.5).unwrap();
            let (mut violations, mut inside, mut inside_bad) = (0, 0, 0);
            for _ in 0..PL_SAMPLES {
                let w: Vec<f64> = (0..mdp.n_params()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let chk = ctx.check(&w).unwrap();
                if !chk.holds {
                    violations += 1;
                }
                if chk.gap <= radius.r {
                    inside += 1;
                    if chk.c_value < radius.c {
                        inside_bad += 1;
                    }
                }
            }
            ok &= violations == 0 && inside_bad == 0;
            let vacuous = if inside == 0 { format!(" (vacuous, r = {:.1e})", radius.r) } else { String::new() };
            parts.push(format!("{mname} lambda={lambda}: {violations} PL failures, {inside_bad}/{inside} inside below c{vacuous}"));
        }
    }
    (ok, parts.join("; "))
}

fn rl_config(mdp: &str) -> ExperimentConfig {
    ExperimentConfig {
        kind: ExperimentKind::Rl,
        name: Some(format!("pg-{mdp}")),
        n_max: N_MAX,
        n_runs: RL_RUNS,
        base_seed: 11,
        nu: None,
        output: None,
        objective: None,
        noise: NoiseModel::None,
        schedule: None,
        init: None,
        checkpoints: Default::default(),
        region: None,
        envelope: None,
        rl: Some(RlSpec {
            mdp: format!("builtin:{mdp}"),
            lambda: 0.1,
            alpha: 0.5,
            radius: None,
            delta: TRAP_DELTA,
            theta: 2.0 / 3.0,
        }),
        check: None,
    }
}

fn c11_policy_gradient() -> Verdict {
    let need = 1.0 - TRAP_DELTA - three_sigma(TRAP_DELTA, RL_RUNS);
    let mut ok = true;
    let mut parts = Vec::new();
    for mdp in ["bandit", "chain3"] {
        let dir = tmp();
        match run_experiment(&rl_config(mdp), dir.path()) {
            Err(e) => {
                ok = false;
                parts.push(format!("{mdp}: {e}"));
            }
            Ok(out) => {
                let m = &out.manifest.metrics;
                let stayed = m["stayed_fraction"];
                let early = m.get("mean_gap_early").copied().unwrap_or(f64::NAN);
                let ratio = m.get("decay_ratio").copied().unwrap_or(f64::NAN);
                // A zero early gap makes the ratio meaningless.
                let pass = stayed >= need && early > 0.0 && ratio <= DECAY_RATIO;
                ok &= pass;
                parts.push(format!(
                    "{mdp}: r={:.3e}, stayed {stayed:.2} (need {need:.2}), gap {early:.3e} -> ratio {ratio:.3e}",
                    m["radius"]
                ));
            }
        }
    }
    (ok, parts.join("; "))
}

fn report(id: &str, name: &str, start: Instant, v: &Verdict, failures: &mut Vec<String>) {
    let tag = if v.0 { "PASS" } else { "FAIL" };
    println!("{tag} [{id}] {name}: {} ({:.1}s)", v.1, start.elapsed().as_secs_f64());
    if !v.0 {
        failures.push(id.to_string());
    }
}

fn main() {
    let mut failures = Vec::new();
    let singles: [Criterion; 9] = [
        ("1", "figure-1 rates", c1_figure1),
        ("2", "heavy ball with nu=0 equals SGD", c2_collapse),
        ("3", "heavy-ball auxiliary recursions", c3_auxiliary),
        ("4a", "envelope decays for eta above the bound", c4a_envelope_upper),
        ("4b", "envelope does not decay for eta below the bound", c4b_envelope_lower),
        ("5", "q-trick closed form", c5_qtrick),
        ("6", "gradients vs finite differences", c6_gradients),
        ("7", "ABC second-moment condition", c7_abc),
        ("10", "non-uniform PL inequality and local constant", c10_pl),
    ];
    for (id, name, f) in &singles[..8] {
        let t = Instant::now();
        report(id, name, t, &f(), &mut failures);
    }
    let t = Instant::now();
    let (c8, c9) = c8_c9_trapping();
    report("8", "local trapping", t, &c8, &mut failures);
    report("9", "conditional decay", t, &c9, &mut failures);
    let (id, name, f) = singles[8];
    let t = Instant::now();
    report(id, name, t, &f(), &mut failures);
    let t = Instant::now();
    report("11", "policy gradient stays and decays", t, &c11_policy_gradient(), &mut failures);
    println!("{} of 12 criteria failed{}", failures.len(), if failures.is_empty() { String::new() } else { format!(": {}", failures.join(", ")) });
    if !failures.is_empty() {
        std::process::exit(1);
    }
}
