//! Local analysis around isolated minima: the regions U and U₁,
//! trapping bookkeeping, the step-size budget and the proof statistics
//! M_n, S_n, R_n with their events.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objectives::{norm, LipschitzMeta, Objective, PlMeta};
use crate::optimizers::{drive, Method, RunSpec, Trajectory};
use crate::oracle::GradientOracle;
use crate::rng::stream;
use crate::schedules::{max_gamma1_for_budget, StepSchedule, StepSizes};

/// Grid points per interval for region scans.
pub const DEFAULT_RESOLUTION: usize = 20_001;
const PROBE_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LocalRegion {
    /// U = {dist(x, minima) < radius/2}, U₁ = U ∩ {f − level ≤ ε/2}.
    Ball {
        minima: Vec<Vec<f64>>,
        level: f64,
        radius: f64,
        epsilon: f64,
    },
    /// U = {f − f* ≤ 2ε + √ε}, U₁ = {f − f* ≤ ε/2}.
    Sublevel { f_star: f64, r: f64, epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionSet {
    U,
    U1,
}

impl LocalRegion {
    /// Ball region; rejects radii on which gradient domination with β = 1/2
    /// fails on a probe grid.
    pub fn ball(obj: &dyn Objective, minima: Vec<Vec<f64>>, level: f64, radius: f64, epsilon: f64) -> Result<Self> {
        if minima.is_empty() {
            return Err(Error::InvalidRegion("no minima".into()));
        }
        for m in &minima {
            check_dim(obj.dim(), m.len())?;
        }
        if !(radius > 0.0) {
            return Err(Error::domain("radius", radius, "(0, inf)"));
        }
        if !(epsilon > 0.0) {
            return Err(Error::domain("epsilon", epsilon, "(0, inf)"));
        }
        let c = ball_pl_constant(obj, &minima, level, radius, 0.5)?;
        if !(c > 0.0) {
            return Err(Error::InvalidRegion(format!(
                "gradient domination fails inside the radius-{radius} neighbourhood"
            )));
        }
        Ok(LocalRegion::Ball {
            minima,
            level,
            radius,
            epsilon,
        })
    }

    pub fn sublevel(f_star: f64, r: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::domain("epsilon", epsilon, "(0, inf)"));
        }
        if !(2.0 * epsilon + epsilon.sqrt() < r) {
            return Err(Error::InvalidRegion(format!("2ε + √ε = {} is not below r = {r}", 2.0 * epsilon + epsilon.sqrt())));
        }
        Ok(LocalRegion::Sublevel { f_star, r, epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            LocalRegion::Ball { epsilon, .. } | LocalRegion::Sublevel { epsilon, .. } => *epsilon,
        }
    }

    /// Reference value the gaps are measured against.
    pub fn level(&self) -> f64 {
        match self {
            LocalRegion::Ball { level, .. } => *level,
            LocalRegion::Sublevel { f_star, .. } => *f_star,
        }
    }

    /// Bound on a single step inside C_n; `None` when the region has no
    /// step-length condition.
    pub fn step_bound(&self) -> Option<f64> {
        match self {
            LocalRegion::Ball { radius, .. } => Some(radius / 4.0),
            LocalRegion::Sublevel { .. } => None,
        }
    }

    pub fn in_u(&self, obj: &dyn Objective, x: &[f64]) -> bool {
        match self {
            LocalRegion::Ball { minima, radius, .. } => min_dist(minima, x) < radius / 2.0,
            LocalRegion::Sublevel { f_star, epsilon, .. } => obj.value(x) - f_star <= 2.0 * epsilon + epsilon.sqrt(),
        }
    }

    pub fn in_u1(&self, obj: &dyn Objective, x: &[f64]) -> bool {
        self.in_u(obj, x) && obj.value(x) - self.level() <= self.epsilon() / 2.0
    }
}

pub fn region_contains(region: &LocalRegion, obj: &dyn Objective, x: &[f64], set: RegionSet) -> Result<bool> {
    check_dim(obj.dim(), x.len())?;
    Ok(match set {
        RegionSet::U => region.in_u(obj, x),
        RegionSet::U1 => region.in_u1(obj, x),
    })
}

fn min_dist(minima: &[Vec<f64>], x: &[f64]) -> f64 {
    minima
        .iter()
        .map(|m| m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// Points whose distance to the minima lies in `[lo, hi]`: a grid per
/// interval in one dimension, seeded random points in shells otherwise.
fn shell_points(minima: &[Vec<f64>], lo: f64, hi: f64, resolution: usize, closed: bool) -> Vec<Vec<f64>> {
    let dim = minima[0].len();
    let mut pts = Vec::new();
    if dim == 1 {
        let k = resolution.max(2);
        for m in minima {
            for sign in [-1.0, 1.0] {
                let end = if closed { k } else { k - 1 };
                for i in 0..end {
                    let t = lo + (hi - lo) * i as f64 / (k - 1) as f64;
                    pts.push(vec![m[0] + sign * t]);
                }
            }
        }
    } else {
        let mut rng = stream(PROBE_SEED, 0);
        for m in minima {
            for _ in 0..resolution {
                let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
                let nd = norm(&dir);
                let t = if closed { rng.random_range(lo..=hi) } else { rng.random_range(lo..hi) };
                pts.push(m.iter().zip(&dir).map(|(a, d)| a + t * d / nd).collect());
            }
        }
    }
    pts.retain(|p| {
        let d = min_dist(minima, p);
        d >= lo && (d < hi || (closed && d == hi))
    });
    pts
}

/// Empirical `c` with `‖∇f‖ ≥ c·(f − level)^β` on the open radius-`radius`
/// neighbourhood, skipping points at the level itself.
pub fn ball_pl_constant(obj: &dyn Objective, minima: &[Vec<f64>], level: f64, radius: f64, beta: f64) -> Result<f64> {
    let pts = shell_points(minima, 0.0, radius, DEFAULT_RESOLUTION, false);
    let mut g = vec![0.0; obj.dim()];
    let mut c = f64::INFINITY;
    let mut used = 0usize;
    for p in &pts {
        let gap = obj.value(p) - level;
        if gap <= 0.0 {
            continue;
        }
        obj.gradient_into(p, &mut g);
        c = c.min(norm(&g) / gap.powf(beta));
        used += 1;
    }
    if used == 0 {
        return Err(Error::EmptyPointSet);
    }
    Ok(c)
}

/// `s = inf (f − level)` over the annulus `radius/2 ≤ dist ≤ 3·radius/4`.
pub fn compute_s(obj: &dyn Objective, region: &LocalRegion, resolution: usize) -> Result<f64> {
    let LocalRegion::Ball { minima, level, radius, .. } = region else {
        return Err(Error::InvalidRegion("s is defined for ball regions only".into()));
    };
    let pts = shell_points(minima, radius / 2.0, 0.75 * radius, resolution, true);
    if pts.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let s = pts.iter().map(|p| obj.value(p) - level).fold(f64::INFINITY, f64::min);
    if !(s > 0.0) {
        return Err(Error::InvalidRegion(format!("s = {s} on the annulus; minima are not isolated at radius {radius}")));
    }
    Ok(s)
}

/// Half of the largest ε with `2ε + √ε < bound`.
pub fn select_epsilon(bound: f64) -> Result<f64> {
    if !(bound > 0.0) {
        return Err(Error::domain("bound", bound, "(0, inf)"));
    }
    // 2t² + t = bound with t = √ε, in a form that keeps tiny bounds nonzero
    let t = 2.0 * bound / (1.0 + (1.0 + 8.0 * bound).sqrt());
    Ok(0.5 * t * t)
}

/// `δε / (2(G²C² + G² + C))`.
pub fn required_budget(delta: f64, epsilon: f64, g: f64, c_noise: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain("delta", delta, "(0, 1)"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::domain("epsilon", epsilon, "(0, inf)"));
    }
    if !(g > 0.0) {
        return Err(Error::domain("G", g, "(0, inf)"));
    }
    if !(c_noise >= 0.0) {
        return Err(Error::domain("C", c_noise, "[0, inf)"));
    }
    let g2 = g * g;
    Ok(delta * epsilon / (2.0 * (g2 * c_noise + g2 + c_noise)))
}

/// Grid-maximised `G = sup|f'|` and `L` (gradient difference quotients) over
/// the closure of U, for one-dimensional objectives.
pub fn region_constants(obj: &dyn Objective, region: &LocalRegion, resolution: usize) -> Result<LipschitzMeta> {
    if obj.dim() != 1 {
        return Err(Error::UnsupportedRun("region constants are grid-based and need dim = 1".into()));
    }
    let intervals: Vec<(f64, f64)> = match region {
        LocalRegion::Ball { minima, radius, .. } => minima.iter().map(|m| (m[0] - radius / 2.0, m[0] + radius / 2.0)).collect(),
        LocalRegion::Sublevel { .. } => vec![(-crate::objectives::WORKING_BOX, crate::objectives::WORKING_BOX)],
    };
    let k = resolution.max(2);
    let (mut g_max, mut l_max) = (0.0f64, 0.0f64);
    let mut used = 0;
    for (lo, hi) in intervals {
        let h = (hi - lo) / (k - 1) as f64;
        let mut prev: Option<f64> = None;
        for i in 0..k {
            let x = [lo + i as f64 * h];
            // ball intervals are already the closure of U
            if matches!(region, LocalRegion::Sublevel { .. }) && !region.in_u(obj, &x) {
                prev = None;
                continue;
            }
            let g = obj.gradient(&x)[0];
            used += 1;
            g_max = g_max.max(g.abs());
            if let Some(p) = prev {
                l_max = l_max.max((g - p).abs() / h);
            }
            prev = Some(g);
        }
    }
    if used == 0 {
        return Err(Error::EmptyPointSet);
    }
    Ok(LipschitzMeta { l: l_max, g: g_max })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StayReport {
    pub stayed: bool,
    pub first_exit: Option<u64>,
    /// `(n, M_n, S_n, R_n)` at checkpoints, when proof statistics were taken.
    pub r_statistic_path: Option<Vec<(u64, f64, f64, f64)>>,
}

/// Iterates, step sizes and sampled gradients of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dim: usize,
    pub method: Method,
    /// `γ_1, …, γ_m` for the `m` performed updates.
    pub gammas: Vec<f64>,
    /// `X_1, …, X_{m+1}` flattened.
    pub xs: Vec<f64>,
    /// `v_1, …, v_m` flattened.
    pub vs: Vec<f64>,
}

impl RunRecord {
    pub fn steps(&self) -> usize {
        self.gammas.len()
    }

    pub fn x(&self, n: usize) -> &[f64] {
        &self.xs[(n - 1) * self.dim..n * self.dim]
    }

    pub fn v(&self, n: usize) -> &[f64] {
        &self.vs[(n - 1) * self.dim..n * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedRun {
    pub trajectory: Trajectory,
    pub stay: StayReport,
    pub record: Option<RunRecord>,
}

/// Measures gaps against the region level instead of `f*`.
#[derive(Debug)]
struct Leveled<'a> {
    inner: &'a dyn Objective,
    level: f64,
}

impl Objective for Leveled<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient_into(x, out)
    }
    fn f_star(&self) -> f64 {
        self.level
    }
}

/// Run from `x1 ∈ U₁`, tracking membership of U at every iterate. After the
/// first exit the run continues; `stayed` only reflects `n ≤ n_max`.
#[allow(clippy::too_many_arguments)]
pub fn run_with_tracking(
    obj: &dyn Objective,
    oracle: &dyn GradientOracle,
    sched: &dyn StepSizes,
    region: &LocalRegion,
    x1: &[f64],
    spec: &RunSpec,
    run_index: u64,
    record: bool,
) -> Result<TrackedRun> {
    check_dim(obj.dim(), x1.len())?;
    if !region.in_u1(obj, x1) {
        return Err(Error::InvalidRegion(format!("initial point {x1:?} is not in U1")));
    }
    let leveled = Leveled {
        inner: obj,
        level: region.level(),
    };
    let mut first_exit = None;
    let mut rec = record.then(|| RunRecord {
        dim: obj.dim(),
        method: spec.method,
        gammas: Vec::with_capacity(spec.n_max as usize),
        xs: x1.to_vec(),
        vs: Vec::with_capacity(spec.n_max as usize * obj.dim()),
    });
    let mut rng = stream(spec.base_seed, run_index);
    let trajectory = drive(&leveled, oracle, sched, x1, spec, run_index, &mut rng, &mut |e| {
        if first_exit.is_none() && !region.in_u(obj, e.x_next) {
            first_exit = Some(e.n + 1);
        }
        if let Some(r) = rec.as_mut() {
            r.gammas.push(e.gamma);
            r.xs.extend_from_slice(e.x_next);
            r.vs.extend_from_slice(e.v);
        }
    })?;
    if first_exit.is_none() && trajectory.diverged() {
        first_exit = trajectory.diverged_at;
    }
    Ok(TrackedRun {
        stay: StayReport {
            stayed: first_exit.is_none(),
            first_exit,
            r_statistic_path: None,
        },
        trajectory,
        record: rec,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProofParams {
    pub pl: PlMeta,
    /// Smoothness constant entering S_n.
    pub l_smooth: f64,
    /// Step exponent θ; fixes q = min(1/θ, 3/2) when β > 1/2.
    pub theta: f64,
}

impl ProofParams {
    pub fn q(&self) -> f64 {
        if self.pl.beta == 0.5 {
            1.0
        } else {
            (1.0 / self.theta).min(1.5)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProofRow {
    pub n: u64,
    pub m: f64,
    pub s: f64,
    pub r: f64,
    pub in_e: bool,
    pub in_c: bool,
    pub in_omega: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofStatistics {
    pub rows: Vec<ProofRow>,
    /// Indices `n` with E_n ∧ C_n but X_{n+1} ∉ U.
    pub violations: Vec<u64>,
}

/// Rebuild M_n, S_n, R_n = M_n² + S_n and the events Ω_n, E_n, C_n from a
/// recorded SGD run.
///
/// `M_n = (1 − γ_n^q c²)(M_{n−1} + γ_n ξ_{n+1} 1_{Ω_n})` with
/// `ξ_{n+1} = −⟨∇f(X_n), v_n − ∇f(X_n)⟩`, and
/// `S_n = S_{n−1} + (L/2) γ_n² ‖v_n‖² 1_{Ω_n}`.
pub fn proof_statistics(
    record: Option<&RunRecord>,
    obj: &dyn Objective,
    region: &LocalRegion,
    params: &ProofParams,
) -> Result<ProofStatistics> {
    let rec = record.ok_or_else(|| Error::UnsupportedRun("run was not recorded".into()))?;
    if rec.method != Method::Sgd {
        return Err(Error::UnsupportedRun("proof statistics are defined for SGD runs".into()));
    }
    check_dim(obj.dim(), rec.dim)?;
    let eps = region.epsilon();
    let c2 = params.pl.c * params.pl.c;
    let q = params.q();
    let step_bound = region.step_bound();
    let mut grad = vec![0.0; rec.dim];
    let (mut m, mut s) = (0.0f64, 0.0f64);
    let (mut omega, mut e, mut c) = (region.in_u(obj, rec.x(1)), true, true);
    let mut rows = Vec::with_capacity(rec.steps());
    let mut violations = Vec::new();
    for n in 1..=rec.steps() {
        let x = rec.x(n);
        let v = rec.v(n);
        let gamma = rec.gammas[n - 1];
        if n > 1 {
            omega = omega && region.in_u(obj, x);
        }
        obj.gradient_into(x, &mut grad);
        let ind = if omega { 1.0 } else { 0.0 };
        let xi: f64 = -grad.iter().zip(v).map(|(g, vi)| g * (vi - g)).sum::<f64>();
        m = (1.0 - gamma.powf(q) * c2) * (m + gamma * xi * ind);
        s += 0.5 * params.l_smooth * gamma * gamma * v.iter().map(|t| t * t).sum::<f64>() * ind;
        let r = m * m + s;
        e = e && r < eps;
        let x_next = rec.x(n + 1);
        if let Some(b) = step_bound {
            let step: f64 = x_next.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            c = c && step <= b;
        }
        if e && c && !region.in_u(obj, x_next) {
            violations.push(n as u64);
        }
        rows.push(ProofRow {
            n: n as u64,
            m,
            s,
            r,
            in_e: e,
            in_c: c,
            in_omega: omega,
        });
    }
    Ok(ProofStatistics { rows, violations })
}

/// Everything a trapping experiment needs, derived from the objective and a
/// confidence level δ.
#[derive(Debug, Clone, PartialEq)]
pub struct TrappingSetup {
    pub region: LocalRegion,
    pub s: f64,
    pub epsilon: f64,
    pub pl: PlMeta,
    /// Constants over U.
    pub constants: LipschitzMeta,
    pub c_noise: f64,
    pub budget: f64,
    pub schedule: StepSchedule,
}

impl TrappingSetup {
    /// Ball region around `minima`; ε from s, G and L from grids over U,
    /// γ₁ from the budget for step exponent `theta`.
    pub fn ball(
        obj: &dyn Objective,
        minima: Vec<Vec<f64>>,
        level: f64,
        radius: f64,
        delta: f64,
        c_noise: f64,
        theta: f64,
    ) -> Result<Self> {
        let c_pl = ball_pl_constant(obj, &minima, level, radius, 0.5)?;
        // ε placeholder only to evaluate s
        let probe = LocalRegion::ball(obj, minima.clone(), level, radius, 1.0)?;
        let s = compute_s(obj, &probe, DEFAULT_RESOLUTION)?;
        let epsilon = select_epsilon(s)?;
        let region = LocalRegion::ball(obj, minima, level, radius, epsilon)?;
        let constants = region_constants(obj, &region, DEFAULT_RESOLUTION)?;
        let budget = required_budget(delta, epsilon, constants.g, c_noise)?;
        let schedule = StepSchedule::new(max_gamma1_for_budget(theta, budget)?, theta)?;
        Ok(Self {
            region,
            s,
            epsilon,
            pl: PlMeta {
                beta: 0.5,
                c: c_pl,
                scope: crate::objectives::PlScope::LocalInMinima,
            },
            constants,
            c_noise,
            budget,
            schedule,
        })
    }

    pub fn proof_params(&self) -> ProofParams {
        ProofParams {
            pl: self.pl,
            l_smooth: self.constants.l,
            theta: self.schedule.theta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrappingOutcome {
    pub trajectory: Trajectory,
    pub stay: StayReport,
    pub violations: usize,
}

/// Parallel tracked runs from a common `x1`, each post-processed by
/// [`proof_statistics`] when `params` is given. Records are dropped after use.
#[allow(clippy::too_many_arguments)]
pub fn run_trapping_ensemble(
    obj: &dyn Objective,
    oracle: &dyn GradientOracle,
    sched: &dyn StepSizes,
    region: &LocalRegion,
    x1: &[f64],
    spec: &RunSpec,
    n_runs: u64,
    params: Option<&ProofParams>,
) -> Result<Vec<TrappingOutcome>> {
    (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let run = run_with_tracking(obj, oracle, sched, region, x1, spec, i, params.is_some())?;
            let mut stay = run.stay;
            let violations = match params {
                Some(p) => {
                    let stats = proof_statistics(run.record.as_ref(), obj, region, p)?;
                    let marks = spec.checkpoints.indices(spec.n_max);
                    stay.r_statistic_path = Some(
                        stats
                            .rows
                            .iter()
                            .filter(|r| marks.binary_search(&r.n).is_ok())
                            .map(|r| (r.n, r.m, r.s, r.r))
                            .collect(),
                    );
                    stats.violations.len()
                }
                None => 0,
            };
            Ok(TrappingOutcome {
                trajectory: run.trajectory,
                stay,
                violations,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{double_well, Quadratic};
    use crate::oracle::{AdditiveOracle, NoiseModel};
    use approx::assert_relative_eq;

    fn dw_region(eps: f64) -> LocalRegion {
        LocalRegion::ball(&double_well(), vec![vec![-1.0], vec![1.0]], 0.0, 0.5, eps).unwrap()
    }

    #[test]
    fn ball_membership() {
        let f = double_well();
        let r = dw_region(0.01);
        assert!(r.in_u(&f, &[1.1]));
        assert!(!r.in_u(&f, &[0.0]));
        assert!(r.in_u1(&f, &[1.001]));
        assert!(!r.in_u1(&f, &[1.1]));
    }

    /// f(x) = x, so gaps are read off exactly.
    #[derive(Debug)]
    struct Identity;

    impl Objective for Identity {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> f64 {
            x[0]
        }
        fn gradient_into(&self, _x: &[f64], out: &mut [f64]) {
            out[0] = 1.0;
        }
        fn f_star(&self) -> f64 {
            0.0
        }
    }

    #[test]
    fn sublevel_membership() {
        let r = LocalRegion::sublevel(0.0, 0.3, 0.04).unwrap();
        assert!(r.in_u1(&Identity, &[0.01]));
        assert!(!r.in_u1(&Identity, &[0.03]));
        assert!(r.in_u(&Identity, &[0.28]));
        assert!(!r.in_u(&Identity, &[0.281]));
        assert!(LocalRegion::sublevel(0.0, 0.28, 0.04).is_err());
        assert!(region_contains(&r, &Identity, &[0.0, 1.0], RegionSet::U).is_err());
    }

    #[test]
    fn s_values() {
        let s = compute_s(&double_well(), &dw_region(0.01), DEFAULT_RESOLUTION).unwrap();
        assert_relative_eq!(s, (0.5625f64 - 1.0).powi(2), max_relative = 1e-9);
        let q = Quadratic::new(1).unwrap();
        let r = LocalRegion::ball(&q, vec![vec![0.0]], 0.0, 1.0, 0.01).unwrap();
        assert_relative_eq!(compute_s(&q, &r, DEFAULT_RESOLUTION).unwrap(), 0.125, max_relative = 1e-12);
        let wide = LocalRegion::Ball {
            minima: vec![vec![1.0]],
            level: 0.0,
            radius: 4.0,
            epsilon: 0.01,
        };
        assert!(matches!(compute_s(&double_well(), &wide, DEFAULT_RESOLUTION), Err(Error::InvalidRegion(_))));
    }

    #[test]
    fn ball_rejects_stationary_point() {
        // the grid hits x = 0, where f' = 0 but f = 1
        assert!(LocalRegion::ball(&double_well(), vec![vec![1.0]], 0.0, 2.0, 0.01).is_err());
    }

    #[test]
    fn epsilon_selection() {
        let eps = select_epsilon(0.1914).unwrap();
        let full = 2.0 * eps;
        assert!((2.0 * full + full.sqrt() - 0.1914).abs() < 1e-12);
        // √ε ≈ bound once bound is far below one
        let tiny = select_epsilon(1e-19).unwrap();
        assert_relative_eq!(tiny, 0.5e-38, max_relative = 1e-12);
    }

    #[test]
    fn budget_examples() {
        assert_relative_eq!(required_budget(0.1, 0.04, 1.0, 1.0).unwrap(), 0.004 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(
            required_budget(0.99, 0.04, 1.0, 1.0).unwrap() / required_budget(0.495, 0.04, 1.0, 1.0).unwrap(),
            2.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(required_budget(0.3, 0.04, 1.0, 0.0).unwrap(), 0.3 * 0.04 / 2.0);
    }

    #[test]
    fn budget_monotone_on_grid() {
        let grid = [0.1, 0.3, 0.5, 0.9];
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!(required_budget(b, 0.1, 1.0, 1.0).unwrap() > required_budget(a, 0.1, 1.0, 1.0).unwrap());
            assert!(required_budget(0.1, b, 1.0, 1.0).unwrap() > required_budget(0.1, a, 1.0, 1.0).unwrap());
            assert!(required_budget(0.1, 0.1, b, 1.0).unwrap() < required_budget(0.1, 0.1, a, 1.0).unwrap());
            assert!(required_budget(0.1, 0.1, 1.0, b).unwrap() < required_budget(0.1, 0.1, 1.0, a).unwrap());
        }
    }

    #[test]
    fn noiseless_run_stays() {
        let f = double_well();
        let region = dw_region(0.02);
        let oracle = AdditiveOracle::new(&f, NoiseModel::None);
        let sched = StepSchedule::new(0.01, 0.75).unwrap();
        let spec = RunSpec::new(Method::Sgd, 2000, 0);
        let run = run_with_tracking(&f, &oracle, &sched, &region, &[1.02], &spec, 0, true).unwrap();
        assert!(run.stay.stayed);
        assert_eq!(run.stay.first_exit, None);
        let pp = ProofParams {
            pl: f.pl_meta().unwrap(),
            l_smooth: 15.0,
            theta: 0.75,
        };
        let stats = proof_statistics(run.record.as_ref(), &f, &region, &pp).unwrap();
        let rec = run.record.as_ref().unwrap();
        assert!(stats.rows.iter().all(|r| r.m == 0.0 && r.r == r.s));
        assert_relative_eq!(stats.rows[0].s, 7.5 * rec.gammas[0].powi(2) * rec.v(1)[0].powi(2), max_relative = 1e-14);
        assert!(stats.violations.is_empty());
    }

    #[test]
    fn loud_noise_escapes() {
        let f = double_well();
        let region = dw_region(0.02);
        let oracle = AdditiveOracle::new(&f, NoiseModel::gaussian(10.0).unwrap());
        let sched = StepSchedule::new(0.05, 0.75).unwrap();
        let spec = RunSpec::new(Method::Sgd, 200, 1);
        let exits = (0..100)
            .filter(|&i| !run_with_tracking(&f, &oracle, &sched, &region, &[1.0], &spec, i, false).unwrap().stay.stayed)
            .count();
        assert!(exits >= 90, "{exits}");
    }

    #[test]
    fn start_outside_u1_rejected() {
        let f = double_well();
        let oracle = AdditiveOracle::new(&f, NoiseModel::None);
        let sched = StepSchedule::new(0.01, 0.75).unwrap();
        let spec = RunSpec::new(Method::Sgd, 10, 0);
        assert!(run_with_tracking(&f, &oracle, &sched, &dw_region(0.02), &[1.2], &spec, 0, false).is_err());
        assert!(proof_statistics(None, &f, &dw_region(0.02), &ProofParams {
            pl: f.pl_meta().unwrap(),
            l_smooth: 1.0,
            theta: 0.75
        })
        .is_err());
    }

    #[test]
    fn trapping_setup_for_double_well() {
        let f = double_well();
        let setup = TrappingSetup::ball(&f, vec![vec![-1.0], vec![1.0]], 0.0, 0.5, 0.1, 1.0, 0.75).unwrap();
        assert_relative_eq!(setup.s, 0.19140625, max_relative = 1e-9);
        assert!(setup.pl.c >= 2.0 && setup.pl.c < 2.01);
        assert_relative_eq!(setup.constants.g, 2.8125, max_relative = 1e-9);
        assert!((setup.constants.l - 14.75).abs() < 1e-2);
        assert!(setup.schedule.gamma1() > 3e-3 && setup.schedule.gamma1() < 4e-3);
    }
}
