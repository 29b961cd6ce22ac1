//! SGD and stochastic heavy ball, plus the trajectory driver used by every
//! experiment.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objectives::Objective;
use crate::oracle::{AdditiveOracle, GradientOracle, NoiseModel};
use crate::rng::{stream, Stream};
use crate::schedules::StepSizes;

/// A run is marked diverged once `|f(X_n) − f*|` exceeds this.
pub const DIVERGENCE_GAP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub x: Vec<f64>,
    pub n: u64,
}

impl SgdState {
    pub fn new(x: Vec<f64>) -> Self {
        Self { x, n: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShbState {
    pub x: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub n: u64,
    nu: f64,
}

impl ShbState {
    /// Fresh state with zero initial momentum.
    pub fn new(x: Vec<f64>, nu: f64) -> Result<Self> {
        check_nu(nu)?;
        Ok(Self {
            x_prev: x.clone(),
            x,
            n: 1,
            nu,
        })
    }

    pub fn with_previous(x: Vec<f64>, x_prev: Vec<f64>, n: u64, nu: f64) -> Result<Self> {
        check_nu(nu)?;
        check_dim(x.len(), x_prev.len())?;
        Ok(Self { x, x_prev, n, nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if (0.0..1.0).contains(&nu) {
        Ok(())
    } else {
        Err(Error::domain("nu", nu, "[0, 1)"))
    }
}

#[inline]
fn update(x: &[f64], x_prev: &[f64], v: &[f64], gamma: f64, nu: f64, out: &mut [f64]) {
    if nu == 0.0 {
        for i in 0..x.len() {
            out[i] = x[i] - gamma * v[i];
        }
    } else {
        for i in 0..x.len() {
            out[i] = x[i] - gamma * v[i] + nu * (x[i] - x_prev[i]);
        }
    }
}

/// x' = x − γ·v.
pub fn sgd_step(state: SgdState, v: &[f64], gamma: f64) -> Result<SgdState> {
    check_dim(state.x.len(), v.len())?;
    let mut x = vec![0.0; v.len()];
    update(&state.x, &state.x, v, gamma, 0.0, &mut x);
    Ok(SgdState { x, n: state.n + 1 })
}

/// x' = x − γ·v + ν(x − x_prev).
pub fn shb_step(state: ShbState, v: &[f64], gamma: f64) -> Result<ShbState> {
    check_dim(state.x.len(), v.len())?;
    check_dim(state.x.len(), state.x_prev.len())?;
    let mut x = vec![0.0; v.len()];
    update(&state.x, &state.x_prev, v, gamma, state.nu, &mut x);
    Ok(ShbState {
        x,
        x_prev: state.x,
        n: state.n + 1,
        nu: state.nu,
    })
}

/// `(z, w)` with `w = x − x_prev` and `z = x + ν/(1−ν)·w`.
pub fn shb_auxiliary(state: &ShbState) -> (Vec<f64>, Vec<f64>) {
    auxiliary(&state.x, &state.x_prev, state.nu)
}

pub(crate) fn auxiliary(x: &[f64], x_prev: &[f64], nu: f64) -> (Vec<f64>, Vec<f64>) {
    let k = nu / (1.0 - nu);
    let w: Vec<f64> = x.iter().zip(x_prev).map(|(a, b)| a - b).collect();
    let z = x.iter().zip(&w).map(|(a, b)| a + k * b).collect();
    (z, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Method {
    Sgd,
    Shb { nu: f64 },
}

impl Method {
    pub fn nu(&self) -> f64 {
        match *self {
            Method::Sgd => 0.0,
            Method::Shb { nu } => nu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_nu(self.nu())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CheckpointRule {
    /// Indices `round(10^{k/per_decade})`, deduplicated, plus `n_max`.
    Geometric { per_decade: u32 },
    Every { stride: u64 },
    Explicit { indices: Vec<u64> },
}

impl Default for CheckpointRule {
    fn default() -> Self {
        CheckpointRule::Geometric { per_decade: 32 }
    }
}

impl CheckpointRule {
    /// Sorted, deduplicated checkpoint indices in `[1, n_max]`.
    pub fn indices(&self, n_max: u64) -> Vec<u64> {
        let mut out: Vec<u64> = match self {
            CheckpointRule::Geometric { per_decade } => {
                let per = (*per_decade).max(1) as f64;
                let mut v = Vec::new();
                let mut k = 0u32;
                loop {
                    let n = 10f64.powf(k as f64 / per).round() as u64;
                    if n > n_max {
                        break;
                    }
                    v.push(n);
                    k += 1;
                }
                v.push(n_max);
                v
            }
            CheckpointRule::Every { stride } => {
                let s = (*stride).max(1);
                let mut v: Vec<u64> = (1..=n_max).step_by(s as usize).collect();
                v.push(n_max);
                v
            }
            CheckpointRule::Explicit { indices } => indices.iter().copied().filter(|&n| n >= 1 && n <= n_max).collect(),
        };
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// How the first iterate of each run is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Init {
    Point { x: Vec<f64> },
    /// Per coordinate: pick one interval uniformly, then a uniform point in it.
    MixtureUniform { intervals: Vec<(f64, f64)> },
}

impl Init {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Init::Point { x } => check_dim(dim, x.len()),
            Init::MixtureUniform { intervals } => {
                if intervals.is_empty() {
                    return Err(Error::config("init.intervals", "at least one interval required"));
                }
                for &(lo, hi) in intervals {
                    if !(lo < hi) {
                        return Err(Error::config("init.intervals", format!("empty interval [{lo}, {hi}]")));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn sample(&self, dim: usize, rng: &mut Stream) -> Vec<f64> {
        match self {
            Init::Point { x } => x.clone(),
            Init::MixtureUniform { intervals } => (0..dim)
                .map(|_| {
                    let (lo, hi) = intervals[rng.random_range(0..intervals.len())];
                    rng.random_range(lo..hi)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub run_index: u64,
    pub seed: u64,
    pub config_digest: String,
    pub checkpoints: Vec<Checkpoint>,
    /// Iteration at which the divergence guard fired.
    pub diverged_at: Option<u64>,
}

impl Trajectory {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn gap_at(&self, n: u64) -> Option<f64> {
        self.checkpoints
            .binary_search_by_key(&n, |c| c.n)
            .ok()
            .map(|i| self.checkpoints[i].gap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub method: Method,
    pub n_max: u64,
    pub checkpoints: CheckpointRule,
    pub base_seed: u64,
    pub config_digest: String,
}

impl RunSpec {
    pub fn new(method: Method, n_max: u64, base_seed: u64) -> Self {
        Self {
            method,
            n_max,
            checkpoints: CheckpointRule::default(),
            base_seed,
            config_digest: String::new(),
        }
    }
}

/// One iteration as seen by an observer: `x_next` was produced from `x`
/// (and `x_prev` for SHB) with the sampled gradient `v` and step `gamma`.
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub n: u64,
    pub gamma: f64,
    pub x_prev: &'a [f64],
    pub x: &'a [f64],
    pub v: &'a [f64],
    pub x_next: &'a [f64],
}

fn is_diverged(gap: f64) -> bool {
    !gap.is_finite() || gap.abs() > DIVERGENCE_GAP
}

/// Iterate from `x1` for `n_max − 1` updates, recording gaps of
/// `X_1, …, X_{n_max}` at checkpoints. Draws noise from `rng` only.
#[allow(clippy::too_many_arguments)]
pub fn drive(
    obj: &dyn Objective,
    oracle: &dyn GradientOracle,
    sched: &dyn StepSizes,
    x1: &[f64],
    spec: &RunSpec,
    run_index: u64,
    rng: &mut Stream,
    observer: &mut dyn FnMut(&StepEvent<'_>),
) -> Result<Trajectory> {
    let d = obj.dim();
    check_dim(d, x1.len())?;
    check_dim(d, oracle.dim())?;
    spec.method.validate()?;
    if spec.n_max == 0 {
        return Err(Error::domain("n_max", 0.0, "[1, inf)"));
    }
    let nu = spec.method.nu();
    let marks = spec.checkpoints.indices(spec.n_max);
    let mut next_mark = 0usize;
    let mut checkpoints = Vec::with_capacity(marks.len());

    let mut x = x1.to_vec();
    let mut x_prev = x1.to_vec();
    let mut x_next = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut diverged_at = None;

    let mut gap = obj.gap(&x);
    let mut n = 1u64;
    loop {
        if is_diverged(gap) {
            diverged_at = Some(n);
            break;
        }
        if next_mark < marks.len() && marks[next_mark] == n {
            checkpoints.push(Checkpoint { n, gap });
            next_mark += 1;
        }
        if n == spec.n_max {
            break;
        }
        oracle.sample_into(&x, rng, &mut v);
        let gamma = sched.step_size(n);
        update(&x, &x_prev, &v, gamma, nu, &mut x_next);
        observer(&StepEvent {
            n,
            gamma,
            x_prev: &x_prev,
            x: &x,
            v: &v,
            x_next: &x_next,
        });
        // rotate buffers: prev <- x <- next
        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut x, &mut x_next);
        n += 1;
        gap = obj.gap(&x);
    }

    Ok(Trajectory {
        run_index,
        seed: spec.base_seed,
        config_digest: spec.config_digest.clone(),
        checkpoints,
        diverged_at,
    })
}

/// Single run with additive-noise oracle and a fixed start, on substream
/// `(spec.base_seed, run_index)`.
pub fn run_trajectory(
    obj: &dyn Objective,
    noise: &NoiseModel,
    sched: &dyn StepSizes,
    x1: &[f64],
    spec: &RunSpec,
    run_index: u64,
) -> Result<Trajectory> {
    let oracle = AdditiveOracle::new(obj, *noise);
    let mut rng = stream(spec.base_seed, run_index);
    drive(obj, &oracle, sched, x1, spec, run_index, &mut rng, &mut |_| {})
}

/// `n_runs` independent runs in parallel. Run `i` uses substream `i` for its
/// initial point and then its noise. Output is ordered by run index.
pub fn run_ensemble(
    obj: &dyn Objective,
    oracle: &dyn GradientOracle,
    sched: &dyn StepSizes,
    init: &Init,
    spec: &RunSpec,
    n_runs: u64,
) -> Result<Vec<Trajectory>> {
    init.validate(obj.dim())?;
    (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.base_seed, i);
            let x1 = init.sample(obj.dim(), &mut rng);
            drive(obj, oracle, sched, &x1, spec, i, &mut rng, &mut |_| {})
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{double_well, monomial, Quadratic};
    use crate::schedules::{ConstantStep, StepSchedule};

    #[test]
    fn sgd_step_examples() {
        assert_eq!(sgd_step(SgdState::new(vec![3.0]), &[6.0], 0.5).unwrap().x, vec![0.0]);
        assert_eq!(sgd_step(SgdState::new(vec![3.0]), &[0.0], 0.5).unwrap().x, vec![3.0]);
        let s = sgd_step(SgdState::new(vec![1.0, 1.0]), &[1.0, -1.0], 0.1).unwrap();
        assert_eq!(s.x, vec![0.9, 1.1]);
        assert_eq!(s.n, 2);
        assert!(sgd_step(SgdState::new(vec![1.0]), &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn shb_step_examples() {
        let s = ShbState::new(vec![3.0], 0.5).unwrap();
        assert_eq!(shb_step(s, &[6.0], 0.5).unwrap().x, vec![0.0]);
        let s = ShbState::with_previous(vec![2.0], vec![3.0], 5, 0.5).unwrap();
        let s = shb_step(s, &[0.0], 0.123).unwrap();
        assert_eq!(s.x, vec![1.5]);
        assert_eq!(s.x_prev, vec![2.0]);
        let s0 = ShbState::with_previous(vec![2.0], vec![3.0], 5, 0.0).unwrap();
        let g = sgd_step(SgdState { x: vec![2.0], n: 5 }, &[0.7], 0.3).unwrap();
        assert_eq!(shb_step(s0, &[0.7], 0.3).unwrap().x, g.x);
        assert!(ShbState::new(vec![0.0], 1.0).is_err());
    }

    #[test]
    fn auxiliary_examples() {
        let s = ShbState::with_previous(vec![2.0], vec![3.0], 2, 0.5).unwrap();
        assert_eq!(shb_auxiliary(&s), (vec![1.0], vec![-1.0]));
        let s = ShbState::new(vec![4.0], 0.9).unwrap();
        assert_eq!(shb_auxiliary(&s), (vec![4.0], vec![0.0]));
        let s = ShbState::with_previous(vec![2.0], vec![3.0], 2, 0.0).unwrap();
        assert_eq!(shb_auxiliary(&s), (vec![2.0], vec![-1.0]));
    }

    #[test]
    fn geometric_checkpoints() {
        let idx = CheckpointRule::default().indices(100_000);
        assert_eq!(idx[0], 1);
        assert_eq!(*idx.last().unwrap(), 100_000);
        assert!(idx.contains(&1000) && idx.contains(&100));
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(idx.len() < 170);
    }

    #[test]
    fn noiseless_quadratic_decays_geometrically() {
        let q = Quadratic::new(1).unwrap();
        let spec = RunSpec {
            checkpoints: CheckpointRule::Every { stride: 1 },
            ..RunSpec::new(Method::Sgd, 20, 0)
        };
        let t = run_trajectory(&q, &NoiseModel::None, &ConstantStep(0.5), &[2.0], &spec, 0).unwrap();
        for w in t.checkpoints.windows(2) {
            assert!((w[1].gap / w[0].gap - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn shb_zero_momentum_matches_sgd_bitwise() {
        let f = monomial(3.0).unwrap();
        let noise = NoiseModel::gaussian(1.0).unwrap();
        let sched = StepSchedule::new(0.13, 0.8).unwrap();
        let a = run_trajectory(&f, &noise, &sched, &[2.0], &RunSpec::new(Method::Sgd, 5000, 9), 3).unwrap();
        let b = run_trajectory(&f, &noise, &sched, &[2.0], &RunSpec::new(Method::Shb { nu: 0.0 }, 5000, 9), 3).unwrap();
        assert_eq!(a.checkpoints.len(), b.checkpoints.len());
        for (p, q) in a.checkpoints.iter().zip(&b.checkpoints) {
            assert_eq!(p.gap.to_bits(), q.gap.to_bits());
        }
    }

    #[test]
    fn divergence_is_flagged() {
        let f = monomial(2.0).unwrap();
        let t = run_trajectory(&f, &NoiseModel::None, &ConstantStep(5.0), &[1.0], &RunSpec::new(Method::Sgd, 1000, 0), 0).unwrap();
        assert!(t.diverged());
        assert!(t.checkpoints.iter().all(|c| c.gap.abs() <= DIVERGENCE_GAP));
    }

    #[test]
    fn auxiliary_recursions_hold_along_run() {
        let f = double_well();
        let noise = NoiseModel::gaussian(1.0).unwrap();
        let oracle = AdditiveOracle::new(&f, noise);
        let sched = StepSchedule::new(0.05, 0.75).unwrap();
        let nu = 0.5;
        let spec = RunSpec::new(Method::Shb { nu }, 2000, 4);
        let mut worst: f64 = 0.0;
        drive(&f, &oracle, &sched, &[1.7], &spec, 0, &mut stream(4, 0), &mut |e| {
            let (z, w) = auxiliary(e.x, e.x_prev, nu);
            let (z1, w1) = auxiliary(e.x_next, e.x, nu);
            let rz = z1[0] - (z[0] - e.gamma / (1.0 - nu) * e.v[0]);
            let rw = w1[0] - (nu * w[0] - e.gamma * e.v[0]);
            worst = worst.max(rz.abs() / (1.0 + z[0].abs())).max(rw.abs() / (1.0 + w[0].abs()));
        })
        .unwrap();
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn noiseless_descent_with_small_steps() {
        for obj in [Box::new(monomial(2.0).unwrap()) as Box<dyn Objective>, Box::new(double_well()), Box::new(monomial(6.0).unwrap())] {
            let l = obj.lipschitz_meta().unwrap().l;
            let spec = RunSpec {
                checkpoints: CheckpointRule::Every { stride: 1 },
                ..RunSpec::new(Method::Sgd, 500, 0)
            };
            let t = run_trajectory(obj.as_ref(), &NoiseModel::None, &ConstantStep(1.0 / l), &[1.9], &spec, 0).unwrap();
            assert!(t.checkpoints.windows(2).all(|w| w[1].gap <= w[0].gap));
        }
    }

    #[test]
    fn ensembles_are_deterministic() {
        let f = monomial(2.0).unwrap();
        let oracle = AdditiveOracle::new(&f, NoiseModel::gaussian(1.0).unwrap());
        let sched = StepSchedule::new(0.2, 0.999).unwrap();
        let init = Init::MixtureUniform {
            intervals: vec![(1.5, 2.5), (-2.5, -1.5)],
        };
        let spec = RunSpec::new(Method::Sgd, 1000, 42);
        let a = run_ensemble(&f, &oracle, &sched, &init, &spec, 8).unwrap();
        let b = run_ensemble(&f, &oracle, &sched, &init, &spec, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].checkpoints[0].gap, a[1].checkpoints[0].gap);
    }

    proptest::proptest! {
        #[test]
        fn shb_collapse_any_seed(seed in 0u64..1000, g in 0.01f64..0.3) {
            let f = double_well();
            let noise = NoiseModel::gaussian(1.0).unwrap();
            let sched = StepSchedule::new(g, 0.7).unwrap();
            let a = run_trajectory(&f, &noise, &sched, &[1.2], &RunSpec::new(Method::Sgd, 300, seed), 0).unwrap();
            let b = run_trajectory(&f, &noise, &sched, &[1.2], &RunSpec::new(Method::Shb { nu: 0.0 }, 300, seed), 0).unwrap();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
