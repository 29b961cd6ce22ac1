//! Artifact bundles: `runs.csv`, `summary.csv`, `plot.svg`, `config.toml`
//! and `manifest.toml` in one directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plsgd::envelope::{envelope_iterate, RecursionCoefficients};
use plsgd::local::{region_contains, run_trapping_ensemble, select_epsilon, required_budget, LocalRegion, RegionSet, TrappingSetup};
use plsgd::objectives::{Objective, PlScope};
use plsgd::optimizers::{run_ensemble, Checkpoint, RunSpec, Trajectory};
use plsgd::oracle::AdditiveOracle;
use plsgd::rate::{ensemble_stats, fit_rate, theoretical_rate, EnsembleStats};
use plsgd::rl::{self, PolicyGradientOracle, PolicyObjective, TabularMdp};
use plsgd::rng::stream;
use plsgd::schedules::{admissible_eta_lower_bound, max_gamma1_for_budget, StepSchedule};
use plsgd::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::svg;

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PLOT_FILE: &str = "plot.svg";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const CONFIG_FILE: &str = "config.toml";

/// An experiment is marked failed when more than this share of runs diverge.
pub const MAX_DIVERGED_FRACTION: f64 = 0.5;
/// Reference lines are pinned to the mean curve here.
pub const ANCHOR_N: u64 = 1_000;
/// Early checkpoint for the local and RL decay ratios.
pub const DECAY_FROM: u64 = 100;
/// Monte-Carlo samples used to estimate the RL noise constant.
pub const RL_MOMENT_SAMPLES: usize = 10_000;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub library: String,
    pub version: String,
    pub kind: String,
    pub name: String,
    pub config_digest: String,
    pub base_seed: u64,
    pub n_runs: u64,
    /// How run `i` draws its randomness.
    pub rng: String,
    pub status: Status,
    pub n_diverged: u64,
    pub diverged_runs: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_rate: Option<f64>,
    pub runs_csv_sha256: String,
    pub metrics: BTreeMap<String, f64>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(MANIFEST_FILE, e.to_string()))
    }
}

/// One run as stored in `runs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRows {
    pub run_id: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub stayed: Option<bool>,
    pub diverged: bool,
}

impl RunRows {
    fn from_trajectory(t: &Trajectory, stayed: Option<bool>) -> Self {
        Self {
            run_id: t.run_index,
            checkpoints: t.checkpoints.clone(),
            stayed,
            diverged: t.diverged(),
        }
    }

    fn as_trajectory(&self) -> Trajectory {
        Trajectory {
            run_index: self.run_id,
            seed: 0,
            config_digest: String::new(),
            checkpoints: self.checkpoints.clone(),
            diverged_at: self.diverged.then_some(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub stats: EnsembleStats,
}

struct Produced {
    rows: Vec<RunRows>,
    reference_rate: Option<f64>,
    metrics: BTreeMap<String, f64>,
}

pub fn config_digest(cfg: &ExperimentConfig) -> String {
    format!("sha256:{}", sha256_hex(cfg.canonical_text().as_bytes()))
}

fn run_spec(cfg: &ExperimentConfig, digest: &str) -> RunSpec {
    RunSpec {
        method: cfg.method(),
        n_max: cfg.n_max,
        checkpoints: cfg.checkpoints.clone(),
        base_seed: cfg.base_seed,
        config_digest: digest.to_string(),
    }
}

fn global_beta(obj: &dyn Objective) -> Option<f64> {
    obj.pl_meta().filter(|m| m.scope == PlScope::Global).map(|m| m.beta)
}

fn produce_global(cfg: &ExperimentConfig, digest: &str) -> Result<Produced> {
    let obj = cfg.objective.as_ref().expect("validated").build()?;
    let beta = global_beta(obj.as_ref());
    let sched = cfg.schedule.as_ref().expect("validated").build(beta)?;
    let oracle = AdditiveOracle::new(obj.as_ref(), cfg.noise);
    let trajs = run_ensemble(obj.as_ref(), &oracle, &sched, cfg.init.as_ref().expect("validated"), &run_spec(cfg, digest), cfg.n_runs)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("gamma1".into(), sched.gamma1());
    metrics.insert("theta".into(), sched.theta());
    Ok(Produced {
        rows: trajs.iter().map(|t| RunRows::from_trajectory(t, None)).collect(),
        reference_rate: beta.map(theoretical_rate).transpose()?,
        metrics,
    })
}

fn produce_envelope(cfg: &ExperimentConfig) -> Result<Produced> {
    let e = cfg.envelope.expect("validated");
    let sched = cfg.schedule.as_ref().expect("validated").build(Some(e.beta))?;
    let coef = RecursionCoefficients::new(e.c1, e.c2, e.c3, e.beta)?;
    let run = envelope_iterate(&coef, &sched, e.y1, cfg.n_max)?;
    let bound = admissible_eta_lower_bound(e.beta, sched.theta())?;
    let eta = e.eta.unwrap_or(bound + 0.05);
    let checkpoints = cfg
        .checkpoints
        .indices(cfg.n_max)
        .into_iter()
        .map(|n| Checkpoint { n, gap: run.at(n) })
        .collect();
    let mut metrics = BTreeMap::new();
    metrics.insert("theta".into(), sched.theta());
    metrics.insert("eta_lower_bound".into(), bound);
    metrics.insert("eta".into(), eta);
    metrics.insert("clamp_events".into(), run.clamp_events.len() as f64);
    if cfg.n_max > ANCHOR_N {
        metrics.insert("weighted_ratio".into(), run.weighted(cfg.n_max, eta) / run.weighted(ANCHOR_N, eta));
    }
    Ok(Produced {
        rows: vec![RunRows {
            run_id: 0,
            checkpoints,
            stayed: None,
            diverged: false,
        }],
        reference_rate: Some(1.0 - bound),
        metrics,
    })
}

fn trapping_rows(outcomes: &[plsgd::local::TrappingOutcome]) -> Vec<RunRows> {
    outcomes.iter().map(|o| RunRows::from_trajectory(&o.trajectory, Some(o.stay.stayed))).collect()
}

fn stay_metrics(metrics: &mut BTreeMap<String, f64>, rows: &[RunRows], n_max: u64) {
    let stayed = rows.iter().filter(|r| r.stayed == Some(true)).count();
    metrics.insert("stayed_fraction".into(), stayed as f64 / rows.len() as f64);
    metrics.insert("exit_fraction".into(), 1.0 - stayed as f64 / rows.len() as f64);
    let kept: Vec<Trajectory> = rows.iter().filter(|r| r.stayed == Some(true)).map(RunRows::as_trajectory).collect();
    if let Ok(stats) = ensemble_stats(&kept) {
        if let (Some(a), Some(b)) = (stats.mean_at(DECAY_FROM), stats.mean_at(n_max)) {
            metrics.insert("mean_gap_early".into(), a);
            metrics.insert("mean_gap_final".into(), b);
            metrics.insert("decay_ratio".into(), b / a);
        }
    }
}

fn produce_local(cfg: &ExperimentConfig, digest: &str) -> Result<Produced> {
    let obj = cfg.objective.as_ref().expect("validated").build()?;
    let r = cfg.region.as_ref().expect("validated");
    let minima = r.minima.clone().unwrap_or_else(|| obj.minima());
    let c_noise = cfg.noise.second_moment(obj.dim());
    let setup = TrappingSetup::ball(obj.as_ref(), minima, r.level, r.radius, r.delta, c_noise, r.theta)?;
    let sched = match &cfg.schedule {
        Some(s) => s.build(None)?,
        None => setup.schedule,
    };
    if !region_contains(&setup.region, obj.as_ref(), &r.x1, RegionSet::U1)? {
        return Err(Error::config("region.x1", format!("{:?} is not in U1 (epsilon = {:e})", r.x1, setup.epsilon)));
    }
    let oracle = AdditiveOracle::new(obj.as_ref(), cfg.noise);
    let outcomes = run_trapping_ensemble(
        obj.as_ref(),
        &oracle,
        &sched,
        &setup.region,
        &r.x1,
        &run_spec(cfg, digest),
        cfg.n_runs,
        Some(&setup.proof_params()),
    )?;
    let rows = trapping_rows(&outcomes);
    let mut metrics = BTreeMap::new();
    for (k, v) in [
        ("s", setup.s),
        ("epsilon", setup.epsilon),
        ("pl_constant", setup.pl.c),
        ("lipschitz_g", setup.constants.g),
        ("smoothness_l", setup.constants.l),
        ("noise_c", c_noise),
        ("budget", setup.budget),
        ("gamma1", sched.gamma1()),
        ("theta", sched.theta()),
        ("delta", r.delta),
        ("violations", outcomes.iter().map(|o| o.violations).sum::<usize>() as f64),
    ] {
        metrics.insert(k.into(), v);
    }
    stay_metrics(&mut metrics, &rows, cfg.n_max);
    Ok(Produced {
        rows,
        reference_rate: None,
        metrics,
    })
}

pub fn load_mdp(spec: &str) -> Result<TabularMdp> {
    match spec.strip_prefix("builtin:") {
        Some("bandit") => Ok(TabularMdp::bandit()),
        Some("chain3") => Ok(TabularMdp::chain3()),
        Some(other) => Err(Error::config("rl.mdp", format!("unknown builtin MDP {other:?}"))),
        None => TabularMdp::load(spec),
    }
}

/// Sublevel region, start point and step sizes for a policy-gradient
/// trapping run.
pub struct RlSetup {
    pub objective: PolicyObjective,
    pub region: LocalRegion,
    pub radius: f64,
    pub pl_constant: Option<f64>,
    pub w1: Vec<f64>,
    pub g: f64,
    pub c_noise: f64,
    pub schedule: StepSchedule,
}

pub fn rl_setup(cfg: &ExperimentConfig) -> Result<RlSetup> {
    let spec = cfg.rl.as_ref().expect("validated");
    let mdp = load_mdp(&spec.mdp)?;
    let (radius, pl_constant) = match spec.radius {
        Some(r) => (r, None),
        None => {
            let lr = rl::local_radius(&mdp, spec.lambda, spec.alpha)?;
            (lr.r, Some(lr.c))
        }
    };
    let objective = PolicyObjective::new(mdp, spec.lambda)?;
    let epsilon = select_epsilon(radius)?;
    let region = LocalRegion::sublevel(0.0, radius, epsilon)?;
    // Aim for the middle of U1 so the start is not on its boundary.
    let w1 = rl::point_with_gap(&objective, epsilon / 4.0)
        .map_err(|e| Error::InvalidRegion(format!("cannot place X_1 in U1 (epsilon = {epsilon:e}): {e}")))?;
    if !region.in_u1(&objective, &w1) {
        return Err(Error::InvalidRegion(format!("start point has gap {:e}, outside U1", objective.value(&w1))));
    }
    // G over the segment from w1 to the optimum, which lies inside U.
    let w_star = rl::optimal_params(objective.mdp(), spec.lambda)?;
    let g = (0..=20)
        .map(|k| {
            let t = k as f64 / 20.0;
            let w: Vec<f64> = w1.iter().zip(&w_star).map(|(a, b)| a + t * (b - a)).collect();
            objective.gradient(&w).iter().map(|x| x * x).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max);
    let mut rng = stream(cfg.base_seed, u64::MAX);
    let c_noise = rl::sample_second_moment(objective.mdp(), &w1, spec.lambda, RL_MOMENT_SAMPLES, &mut rng)?;
    let schedule = match &cfg.schedule {
        Some(s) => s.build(None)?,
        None => {
            let budget = required_budget(spec.delta, epsilon, g.max(f64::MIN_POSITIVE), c_noise)?;
            StepSchedule::new(max_gamma1_for_budget(spec.theta, budget)?, spec.theta)?
        }
    };
    Ok(RlSetup {
        objective,
        region,
        radius,
        pl_constant,
        w1,
        g,
        c_noise,
        schedule,
    })
}

fn produce_rl(cfg: &ExperimentConfig, digest: &str) -> Result<Produced> {
    let setup = rl_setup(cfg)?;
    let lambda = cfg.rl.as_ref().expect("validated").lambda;
    let oracle = PolicyGradientOracle {
        mdp: setup.objective.mdp(),
        lambda,
    };
    let outcomes = run_trapping_ensemble(
        &setup.objective,
        &oracle,
        &setup.schedule,
        &setup.region,
        &setup.w1,
        &run_spec(cfg, digest),
        cfg.n_runs,
        None,
    )?;
    let rows = trapping_rows(&outcomes);
    let mut metrics = BTreeMap::new();
    metrics.insert("radius".into(), setup.radius);
    if let Some(c) = setup.pl_constant {
        metrics.insert("pl_constant".into(), c);
    }
    metrics.insert("epsilon".into(), setup.region.epsilon());
    metrics.insert("initial_gap".into(), setup.objective.value(&setup.w1));
    metrics.insert("lipschitz_g".into(), setup.g);
    metrics.insert("noise_c".into(), setup.c_noise);
    metrics.insert("gamma1".into(), setup.schedule.gamma1());
    metrics.insert("theta".into(), setup.schedule.theta());
    metrics.insert("delta".into(), cfg.rl.as_ref().expect("validated").delta);
    stay_metrics(&mut metrics, &rows, cfg.n_max);
    Ok(Produced {
        rows,
        reference_rate: None,
        metrics,
    })
}

pub fn write_runs_csv(rows: &[RunRows]) -> String {
    let with_stay = rows.iter().any(|r| r.stayed.is_some());
    let mut s = String::from(if with_stay { "run_id,checkpoint_n,gap,stayed\n" } else { "run_id,checkpoint_n,gap\n" });
    for r in rows {
        for c in &r.checkpoints {
            let _ = write!(s, "{},{},{:.16e}", r.run_id, c.n, c.gap);
            if with_stay {
                let _ = write!(s, ",{}", r.stayed.unwrap_or(false));
            }
            s.push('\n');
        }
    }
    s
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRows>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::config(RUNS_FILE, e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::config(RUNS_FILE, e.to_string()))?.clone();
    let want = ["run_id", "checkpoint_n", "gap"];
    if headers.len() < 3 || headers.iter().take(3).ne(want) || (headers.len() == 4 && &headers[3] != "stayed") || headers.len() > 4 {
        return Err(Error::config(RUNS_FILE, format!("unexpected header {headers:?}")));
    }
    let with_stay = headers.len() == 4;
    let mut rows: Vec<RunRows> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::config(RUNS_FILE, e.to_string()))?;
        let bad = |what: &str| Error::config(RUNS_FILE, format!("row {}: bad {what}", line + 2));
        let run_id: u64 = rec[0].parse().map_err(|_| bad("run_id"))?;
        let n: u64 = rec[1].parse().map_err(|_| bad("checkpoint_n"))?;
        let gap: f64 = rec[2].parse().map_err(|_| bad("gap"))?;
        let stayed = if with_stay { Some(rec[3].parse::<bool>().map_err(|_| bad("stayed"))?) } else { None };
        match rows.last_mut() {
            Some(r) if r.run_id == run_id => r.checkpoints.push(Checkpoint { n, gap }),
            _ => rows.push(RunRows {
                run_id,
                checkpoints: vec![Checkpoint { n, gap }],
                stayed,
                diverged: false,
            }),
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok(rows)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Statistics over runs that count: not diverged, and (for trapping runs)
/// stayed in U.
fn summarize(rows: &[RunRows]) -> Result<EnsembleStats> {
    let trajs: Vec<Trajectory> = rows
        .iter()
        .map(|r| {
            let mut t = r.as_trajectory();
            if r.stayed == Some(false) {
                t.diverged_at = Some(0);
            }
            t
        })
        .collect();
    let mut stats = ensemble_stats(&trajs)?;
    stats.n_diverged = rows.iter().filter(|r| r.diverged).count();
    Ok(stats)
}

pub fn summary_csv(stats: &EnsembleStats) -> String {
    let mut s = String::from("checkpoint_n,mean_gap,median_gap,p10,p90,n_diverged\n");
    for i in 0..stats.checkpoints.len() {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            stats.checkpoints[i], stats.mean[i], stats.median[i], stats.p10[i], stats.p90[i], stats.n_diverged
        );
    }
    s
}

/// Checkpoint closest to [`ANCHOR_N`] on a log scale with a positive mean.
fn anchor(stats: &EnsembleStats) -> Option<(f64, f64)> {
    stats
        .checkpoints
        .iter()
        .zip(&stats.mean)
        .filter(|(_, &m)| m > 0.0 && m.is_finite())
        .map(|(&n, &m)| (n as f64, m))
        .min_by(|a, b| {
            let da = (a.0.ln() - (ANCHOR_N as f64).ln()).abs();
            let db = (b.0.ln() - (ANCHOR_N as f64).ln()).abs();
            da.total_cmp(&db)
        })
}

/// Rebuild `summary.csv` and `plot.svg` from `runs.csv` and the manifest.
pub fn emit_report(dir: &Path) -> Result<EnsembleStats> {
    let manifest = Manifest::load(dir)?;
    let mut rows = read_runs_csv(&dir.join(RUNS_FILE))?;
    for r in rows.iter_mut() {
        r.diverged = manifest.diverged_runs.binary_search(&r.run_id).is_ok();
    }
    let stats = summarize(&rows)?;
    write_file(&dir.join(SUMMARY_FILE), &summary_csv(&stats))?;
    let runs: Vec<Vec<(f64, f64)>> = rows
        .iter()
        .filter(|r| r.stayed != Some(false))
        .map(|r| r.checkpoints.iter().map(|c| (c.n as f64, c.gap)).collect())
        .collect();
    let mean: Vec<(f64, f64)> = stats.checkpoints.iter().zip(&stats.mean).map(|(&n, &m)| (n as f64, m)).collect();
    let reference = manifest.reference_rate.zip(anchor(&stats)).map(|(rate, (anchor_n, anchor_y))| svg::Reference {
        rate,
        anchor_n,
        anchor_y,
    });
    let title = format!("{} ({}, {} runs)", manifest.name, manifest.kind, manifest.n_runs);
    let plot = svg::render(&svg::Plot {
        title: &title,
        runs: &runs,
        mean: &mean,
        reference,
    });
    write_file(&dir.join(PLOT_FILE), &plot)?;
    Ok(stats)
}

/// Run `cfg` and write its bundle into `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let digest = config_digest(cfg);
    let produced = match cfg.kind {
        ExperimentKind::GlobalSgd | ExperimentKind::GlobalShb => produce_global(cfg, &digest)?,
        ExperimentKind::Envelope => produce_envelope(cfg)?,
        ExperimentKind::Local => produce_local(cfg, &digest)?,
        ExperimentKind::Rl => produce_rl(cfg, &digest)?,
    };
    let runs_text = write_runs_csv(&produced.rows);
    write_file(&dir.join(RUNS_FILE), &runs_text)?;
    write_file(&dir.join(CONFIG_FILE), &cfg.to_toml_string())?;

    let diverged_runs: Vec<u64> = produced.rows.iter().filter(|r| r.diverged).map(|r| r.run_id).collect();
    let n_runs = produced.rows.len() as u64;
    let status = if diverged_runs.len() as f64 > MAX_DIVERGED_FRACTION * n_runs as f64 {
        Status::Failed
    } else {
        Status::Ok
    };
    let mut metrics = produced.metrics;
    let stats = summarize(&produced.rows)?;
    if let Some(rate) = produced.reference_rate {
        metrics.insert("reference_rate".into(), rate);
    }
    let window = (ANCHOR_N, cfg.n_max);
    if window.0 < window.1 {
        if let Ok(fit) = fit_rate(&stats.mean_curve(), window) {
            metrics.insert("fitted_slope".into(), fit.slope);
            metrics.insert("fit_r_squared".into(), fit.r_squared);
        }
    }
    let manifest = Manifest {
        library: "plsgd".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind: cfg.kind.as_str().into(),
        name: cfg.name.clone().unwrap_or_else(|| cfg.kind.as_str().into()),
        config_digest: digest,
        base_seed: cfg.base_seed,
        n_runs,
        rng: "ChaCha8 seeded with base_seed, stream = run index".into(),
        status,
        n_diverged: diverged_runs.len() as u64,
        diverged_runs,
        reference_rate: produced.reference_rate,
        runs_csv_sha256: sha256_hex(runs_text.as_bytes()),
        metrics,
        config: cfg.clone(),
    };
    let manifest_text = toml::to_string(&manifest).map_err(|e| Error::Numerical(format!("manifest: {e}")))?;
    write_file(&dir.join(MANIFEST_FILE), &manifest_text)?;
    emit_report(dir)?;
    Ok(Outcome {
        dir: dir.to_path_buf(),
        manifest,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn line(name: &str, passed: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.into(),
        passed,
        detail,
    }
}

/// Binomial tolerance used for stay and exit fractions.
pub fn three_sigma(p: f64, n: u64) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Thresholds behind `--check`.
pub fn check(cfg: &ExperimentConfig, out: &Outcome) -> Result<Vec<CheckLine>> {
    let m = &out.manifest.metrics;
    let get = |k: &str| m.get(k).copied();
    let mut lines = vec![line(
        "divergence",
        out.manifest.status == Status::Ok,
        format!("{} of {} runs diverged", out.manifest.n_diverged, out.manifest.n_runs),
    )];
    let spec = cfg.check.clone().unwrap_or_default();
    match cfg.kind {
        ExperimentKind::GlobalSgd | ExperimentKind::GlobalShb => {
            if spec.monotone_final_decade {
                let from = cfg.n_max / 10;
                let tail: Vec<f64> = out
                    .stats
                    .checkpoints
                    .iter()
                    .zip(&out.stats.mean)
                    .filter(|(&n, _)| n >= from)
                    .map(|(_, &g)| g)
                    .collect();
                let ok = tail.len() >= 2 && tail.windows(2).all(|w| w[1] <= w[0]);
                lines.push(line("monotone-final-decade", ok, format!("{} checkpoints from n = {from}", tail.len())));
            } else {
                let target = match (spec.slope, out.manifest.reference_rate) {
                    (Some(s), _) => s,
                    (None, Some(r)) => -r,
                    (None, None) => return Err(Error::config("check.slope", "no theoretical rate for this objective")),
                };
                let tol = spec.slope_tolerance.unwrap_or(0.25);
                let window = spec.window.unwrap_or((ANCHOR_N, cfg.n_max));
                lines.push(match fit_rate(&out.stats.mean_curve(), window) {
                    Ok(fit) => line(
                        "slope",
                        (fit.slope - target).abs() <= tol,
                        format!("fitted {:.4} vs {target:.4} ± {tol} on [{}, {}]", fit.slope, window.0, window.1),
                    ),
                    Err(e) => line("slope", false, e.to_string()),
                });
            }
        }
        ExperimentKind::Envelope => {
            let r = get("weighted_ratio").ok_or_else(|| Error::config("n_max", format!("must exceed {ANCHOR_N} for --check")))?;
            lines.push(line("weighted-decay", r <= 0.1, format!("n^(1-eta) y_n ratio {r:.4e} (need <= 0.1)")));
        }
        ExperimentKind::Local => {
            let delta = get("delta").unwrap_or(0.1);
            let allowed = delta + three_sigma(delta, out.manifest.n_runs);
            let exit = get("exit_fraction").unwrap_or(1.0);
            lines.push(line("exit-fraction", exit <= allowed, format!("{exit:.4} (allowed {allowed:.4})")));
            let v = get("violations").unwrap_or(f64::NAN);
            lines.push(line("pathwise-violations", v == 0.0, format!("{v}")));
            lines.push(decay_line(get("mean_gap_early"), get("decay_ratio")));
        }
        ExperimentKind::Rl => {
            let delta = get("delta").unwrap_or(0.1);
            let need = 1.0 - delta - three_sigma(delta, out.manifest.n_runs);
            let stayed = get("stayed_fraction").unwrap_or(0.0);
            lines.push(line("stayed-fraction", stayed >= need, format!("{stayed:.4} (need {need:.4})")));
            lines.push(decay_line(get("mean_gap_early"), get("decay_ratio")));
        }
    }
    Ok(lines)
}

fn decay_line(early: Option<f64>, ratio: Option<f64>) -> CheckLine {
    match (early, ratio) {
        (Some(e), Some(r)) if e > 0.0 => line("decay", r <= 0.1, format!("ratio {r:.4e} (need <= 0.1)")),
        (Some(e), _) => line("decay", false, format!("vacuous: early mean gap is {e:e}")),
        _ => line("decay", false, "no stayed runs with the needed checkpoints".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    fn rows(k: u64, diverged: Option<u64>) -> Vec<RunRows> {
        (0..k)
            .map(|i| RunRows {
                run_id: i,
                checkpoints: [1u64, 10, 100].iter().map(|&n| Checkpoint { n, gap: 1.0 / n as f64 }).collect(),
                stayed: None,
                diverged: Some(i) == diverged,
            })
            .collect()
    }

    #[test]
    fn runs_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rows(3, None);
        r[1].stayed = Some(false);
        r[0].stayed = Some(true);
        r[2].stayed = Some(true);
        let text = write_runs_csv(&r);
        assert!(text.starts_with("run_id,checkpoint_n,gap,stayed\n"));
        assert!(!text.contains('\r'));
        let p = dir.path().join(RUNS_FILE);
        std::fs::write(&p, &text).unwrap();
        let back = read_runs_csv(&p).unwrap();
        assert_eq!(back, r);
        assert_eq!(write_runs_csv(&back), text);
    }

    #[test]
    fn empty_runs_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(RUNS_FILE);
        std::fs::write(&p, "run_id,checkpoint_n,gap\n").unwrap();
        assert!(matches!(read_runs_csv(&p), Err(Error::EmptyEnsemble)));
        std::fs::write(&p, "run,n,gap\n0,1,1.0\n").unwrap();
        assert!(read_runs_csv(&p).is_err());
    }

    #[test]
    fn diverged_run_is_counted_not_averaged() {
        let mut r = rows(100, Some(7));
        r[7].checkpoints.truncate(1);
        r[7].checkpoints[0].gap = 1e13;
        let stats = summarize(&r).unwrap();
        assert_eq!(stats.n_diverged, 1);
        assert_eq!(stats.n_used, 99);
        assert!(summary_csv(&stats).lines().nth(1).unwrap().ends_with(",1"));
    }

    #[test]
    fn power_law_ensemble_has_power_law_mean() {
        let ns: Vec<u64> = (0..=20).map(|k| 10f64.powf(k as f64 / 4.0).round() as u64).collect();
        let r: Vec<RunRows> = (0..5)
            .map(|i| RunRows {
                run_id: i,
                checkpoints: ns.iter().map(|&n| Checkpoint { n, gap: (n as f64).powf(-0.6) }).collect(),
                stayed: None,
                diverged: false,
            })
            .collect();
        let stats = summarize(&r).unwrap();
        let fit = fit_rate(&stats.mean_curve(), (1, 100_000)).unwrap();
        assert!((fit.slope + 0.6).abs() < 1e-12);
        let (n, y) = anchor(&stats).unwrap();
        assert_eq!(n, 1000.0);
        assert!((y - 1000f64.powf(-0.6)).abs() < 1e-15);
    }
}
