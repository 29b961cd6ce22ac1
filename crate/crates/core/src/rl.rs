//! Tabular softmax policy gradient with optional entropy regularisation.
//!
//! Parameters `w` are laid out row-major as `w[s·|A| + a]`; transition
//! probabilities as `p[(s·|A| + a)·|S| + s']`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objectives::{norm, Objective};
use crate::oracle::GradientOracle;
use crate::rng::Stream;

const ROW_TOL: f64 = 1e-12;
const VI_TOL: f64 = 1e-13;
const VI_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    rho: f64,
    mu: Vec<f64>,
}

/// On-disk layout: flat row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub states: usize,
    pub actions: usize,
    pub rho: f64,
    pub mu: Vec<f64>,
    /// `rewards[s·actions + a]`
    pub rewards: Vec<f64>,
    /// `transitions[(s·actions + a)·states + s']`
    pub transitions: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        rho: f64,
        mu: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("need at least one state and one action".into()));
        }
        let sa = n_states * n_actions;
        if transitions.len() != sa * n_states {
            return Err(Error::InvalidMdp(format!(
                "transitions has {} entries, expected {}",
                transitions.len(),
                sa * n_states
            )));
        }
        if rewards.len() != sa {
            return Err(Error::InvalidMdp(format!("rewards has {} entries, expected {sa}", rewards.len())));
        }
        if mu.len() != n_states {
            return Err(Error::InvalidMdp(format!("mu has {} entries, expected {n_states}", mu.len())));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidMdp(format!("rho = {rho} is outside [0, 1)")));
        }
        for (i, row) in transitions.chunks(n_states).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidMdp(format!("negative transition probability in row {i}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidMdp(format!(
                    "transition row (s={}, a={}) sums to {sum}",
                    i / n_actions,
                    i % n_actions
                )));
            }
        }
        if let Some(r) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidMdp(format!("reward {r} is outside [0, 1]")));
        }
        if mu.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidMdp("mu must be strictly positive".into()));
        }
        let msum: f64 = mu.iter().sum();
        if (msum - 1.0).abs() > ROW_TOL {
            return Err(Error::InvalidMdp(format!("mu sums to {msum}")));
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            rho,
            mu,
        })
    }

    /// One state, two actions, rewards (1, 0), ρ = 1/2.
    pub fn bandit() -> Self {
        Self::new(1, 2, vec![1.0, 1.0], vec![1.0, 0.0], 0.5, vec![1.0]).expect("valid bandit")
    }

    /// Three states in a row; action 1 moves right and action 0 moves left,
    /// each succeeding with probability 0.9. Reward 1 for pushing right at
    /// the right end, 0.2 for pushing left at the left end. ρ = 0.8, μ uniform.
    pub fn chain3() -> Self {
        let (ns, na) = (3, 2);
        let mut p = vec![0.0; ns * na * ns];
        for s in 0..ns {
            let left = s.saturating_sub(1);
            let right = (s + 1).min(ns - 1);
            p[(s * na) * ns + left] += 0.9;
            p[(s * na) * ns + s] += 0.1;
            p[(s * na + 1) * ns + right] += 0.9;
            p[(s * na + 1) * ns + s] += 0.1;
        }
        let mut r = vec![0.0; ns * na];
        r[2 * na + 1] = 1.0;
        r[0] = 0.2;
        Self::new(ns, na, p, r, 0.8, vec![1.0 / 3.0; 3]).expect("valid chain")
    }

    pub fn from_file(file: MdpFile) -> Result<Self> {
        Self::new(file.states, file.actions, file.transitions, file.rewards, file.rho, file.mu)
    }

    pub fn to_file(&self) -> MdpFile {
        MdpFile {
            states: self.n_states,
            actions: self.n_actions,
            rho: self.rho,
            mu: self.mu.clone(),
            rewards: self.rewards.clone(),
            transitions: self.transitions.clone(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: MdpFile = toml::from_str(text).map_err(|e| Error::InvalidMdp(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_file()).expect("MDP files always serialise")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_toml_string()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_params(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let i = (s * self.n_actions + a) * self.n_states;
        &self.transitions[i..i + self.n_states]
    }

    fn bellman_q(&self, v: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.n_params()];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let ev: f64 = self.next_dist(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
                q[s * self.n_actions + a] = self.reward(s, a) + self.rho * ev;
            }
        }
        q
    }

    /// `P_π[s][s'] = Σ_a π(a|s) p(s'|s,a)`.
    fn policy_transition(&self, pi: &[f64]) -> DMatrix<f64> {
        let n = self.n_states;
        let mut m = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let pa = pi[s * self.n_actions + a];
                for (s2, p) in self.next_dist(s, a).iter().enumerate() {
                    m[(s, s2)] += pa * p;
                }
            }
        }
        m
    }
}

/// Softmax policy over a tabular parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    pub w: Vec<f64>,
    n_actions: usize,
}

impl SoftmaxPolicy {
    pub fn new(w: Vec<f64>, n_actions: usize) -> Result<Self> {
        if n_actions == 0 || !w.len().is_multiple_of(n_actions) {
            return Err(Error::DimensionMismatch {
                expected: n_actions,
                got: w.len(),
            });
        }
        Ok(Self { w, n_actions })
    }

    /// `log π(a|s)` via a shifted log-sum-exp per state.
    pub fn log_probs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w.len());
        for row in self.w.chunks(self.n_actions) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|x| x - lse));
        }
        out
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs().into_iter().map(f64::exp).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedValue {
    pub lambda: f64,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    /// `V_λ(μ) = Σ_s μ(s) v(s)`.
    pub value_mu: f64,
    pub pi: Vec<f64>,
    pub log_pi: Vec<f64>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("lambda", lambda, "[0, inf)"))
    }
}

fn lu_solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    a.lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular policy-evaluation system".into()))
}

/// Solve `(I − ρP_π)v = r_π − λh_π`, then `q = r + ρPv`.
pub fn evaluate_policy(mdp: &TabularMdp, w: &[f64], lambda: f64) -> Result<RegularizedValue> {
    check_dim(mdp.n_params(), w.len())?;
    check_lambda(lambda)?;
    let policy = SoftmaxPolicy::new(w.to_vec(), mdp.n_actions)?;
    let log_pi = policy.log_probs();
    let pi: Vec<f64> = log_pi.iter().map(|l| l.exp()).collect();
    evaluate_probs(mdp, pi, log_pi, lambda)
}

fn evaluate_probs(mdp: &TabularMdp, pi: Vec<f64>, log_pi: Vec<f64>, lambda: f64) -> Result<RegularizedValue> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut rhs = DVector::zeros(ns);
    for s in 0..ns {
        for a in 0..na {
            let i = s * na + a;
            let ent = if pi[i] > 0.0 { pi[i] * log_pi[i] } else { 0.0 };
            rhs[s] += pi[i] * mdp.reward(s, a) - lambda * ent;
        }
    }
    let a = DMatrix::identity(ns, ns) - mdp.policy_transition(&pi) * mdp.rho;
    let v: Vec<f64> = lu_solve(a, rhs)?.iter().copied().collect();
    let q = mdp.bellman_q(&v);
    let value_mu = mdp.mu.iter().zip(&v).map(|(m, x)| m * x).sum();
    Ok(RegularizedValue {
        lambda,
        v,
        q,
        value_mu,
        pi,
        log_pi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalValue {
    pub lambda: f64,
    pub v_star: Vec<f64>,
    pub q_star: Vec<f64>,
    pub value_mu: f64,
    /// Greedy (λ = 0, ties to the lowest index) or Boltzmann `∝ exp(q*/λ)`.
    pub pi_star: Vec<f64>,
    pub iterations: usize,
}

/// Value iteration (λ = 0) or soft value iteration with a log-sum-exp
/// backup (λ > 0).
pub fn optimal_value(mdp: &TabularMdp, lambda: f64) -> Result<OptimalValue> {
    check_lambda(lambda)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut v = vec![0.0; ns];
    let mut iterations = 0;
    let backup = |q: &[f64], s: usize| -> f64 {
        let row = &q[s * na..(s + 1) * na];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lambda == 0.0 {
            m
        } else {
            m + lambda * row.iter().map(|x| ((x - m) / lambda).exp()).sum::<f64>().ln()
        }
    };
    loop {
        let q = mdp.bellman_q(&v);
        let next: Vec<f64> = (0..ns).map(|s| backup(&q, s)).collect();
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        iterations += 1;
        if diff <= VI_TOL {
            break;
        }
        if iterations >= VI_MAX_ITERS {
            return Err(Error::Numerical("value iteration did not converge".into()));
        }
    }
    let q_star = mdp.bellman_q(&v);
    let mut pi_star = vec![0.0; ns * na];
    for s in 0..ns {
        let row = &q_star[s * na..(s + 1) * na];
        if lambda == 0.0 {
            pi_star[s * na + argmax(row)] = 1.0;
        } else {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| ((x - m) / lambda).exp()).sum();
            for a in 0..na {
                pi_star[s * na + a] = ((row[a] - m) / lambda).exp() / z;
            }
        }
    }
    let value_mu = mdp.mu.iter().zip(&v).map(|(m, x)| m * x).sum();
    Ok(OptimalValue {
        lambda,
        v_star: v,
        q_star,
        value_mu,
        pi_star,
        iterations,
    })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// `d_μ^π = (1 − ρ)·μᵀ(I − ρP_π)^{−1}` for policy probabilities `pi`.
pub fn discounted_state_distribution(mdp: &TabularMdp, pi: &[f64]) -> Result<Vec<f64>> {
    check_dim(mdp.n_params(), pi.len())?;
    let ns = mdp.n_states;
    let a = (DMatrix::identity(ns, ns) - mdp.policy_transition(pi) * mdp.rho).transpose();
    let b = DVector::from_iterator(ns, mdp.mu.iter().map(|m| (1.0 - mdp.rho) * m));
    Ok(lu_solve(a, b)?.iter().copied().collect())
}

/// `∂V_λ(μ)/∂w(s,a) = d(s)·π(a|s)·(q(s,a) − λ log π(a|s) − v(s)) / (1 − ρ)`.
pub fn exact_gradient(mdp: &TabularMdp, w: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let val = evaluate_policy(mdp, w, lambda)?;
    gradient_from_value(mdp, &val)
}

fn gradient_from_value(mdp: &TabularMdp, val: &RegularizedValue) -> Result<Vec<f64>> {
    let d = discounted_state_distribution(mdp, &val.pi)?;
    let na = mdp.n_actions;
    let scale = 1.0 / (1.0 - mdp.rho);
    Ok((0..mdp.n_params())
        .map(|i| {
            let s = i / na;
            let adv = val.q[i] - val.lambda * val.log_pi[i] - val.v[s];
            scale * d[s] * val.pi[i] * adv
        })
        .collect())
}

fn sample_index(probs: &[f64], rng: &mut Stream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding slack: last index with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Single-trajectory unbiased estimate of `∇_w V_λ(μ)`.
///
/// Roll out from `s₀ ~ μ` for a Geometric(1 − ρ) number of steps, so that the
/// final state `s` is distributed as `d_μ^π`; draw `a ~ π(·|s)`; estimate the
/// entropy-adjusted `q(s,a) − λ log π(a|s)` by an undiscounted sum of
/// `r − λ log π` over an independent Geometric(1 − ρ) continuation; return
/// `(e_a − π(·|s))·Q̂ / (1 − ρ)` in the block of state `s`.
pub fn stochastic_gradient(mdp: &TabularMdp, w: &[f64], lambda: f64, rng: &mut Stream) -> Result<Vec<f64>> {
    check_dim(mdp.n_params(), w.len())?;
    check_lambda(lambda)?;
    let policy = SoftmaxPolicy::new(w.to_vec(), mdp.n_actions)?;
    let log_pi = policy.log_probs();
    let pi: Vec<f64> = log_pi.iter().map(|l| l.exp()).collect();
    let mut out = vec![0.0; mdp.n_params()];
    stochastic_gradient_into(mdp, &pi, &log_pi, lambda, rng, &mut out);
    Ok(out)
}

fn stochastic_gradient_into(mdp: &TabularMdp, pi: &[f64], log_pi: &[f64], lambda: f64, rng: &mut Stream, out: &mut [f64]) {
    let na = mdp.n_actions;
    let row = |s: usize| &pi[s * na..(s + 1) * na];
    let mut s = sample_index(&mdp.mu, rng);
    while rng.random::<f64>() < mdp.rho {
        let a = sample_index(row(s), rng);
        s = sample_index(mdp.next_dist(s, a), rng);
    }
    let a = sample_index(row(s), rng);
    let mut q_hat = mdp.reward(s, a) - lambda * log_pi[s * na + a];
    let (mut s2, mut a2) = (s, a);
    while rng.random::<f64>() < mdp.rho {
        s2 = sample_index(mdp.next_dist(s2, a2), rng);
        a2 = sample_index(row(s2), rng);
        q_hat += mdp.reward(s2, a2) - lambda * log_pi[s2 * na + a2];
    }
    out.fill(0.0);
    let scale = q_hat / (1.0 - mdp.rho);
    for b in 0..na {
        let ind = if b == a { 1.0 } else { 0.0 };
        out[s * na + b] = scale * (ind - pi[s * na + b]);
    }
}

/// Second-moment constant `C = 2(1 + ρ)/(1 − ρ)⁴` of the unregularised
/// estimator (A = B = 0).
pub fn stochastic_gradient_second_moment_bound(rho: f64) -> f64 {
    2.0 * (1.0 + rho) / (1.0 - rho).powi(4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardGap {
    /// Δ*(s); `+∞` for single-action states.
    pub gaps: Vec<f64>,
    pub best: Vec<usize>,
}

impl RewardGap {
    pub fn min_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_degenerate(&self) -> bool {
        self.gaps.iter().any(|&g| g <= 0.0)
    }
}

/// `Δ*(s) = Q*(s, a*(s)) − max_{a ≠ a*(s)} Q*(s, a)`.
pub fn reward_gap(mdp: &TabularMdp) -> Result<RewardGap> {
    let opt = optimal_value(mdp, 0.0)?;
    let na = mdp.n_actions;
    let mut gaps = Vec::with_capacity(mdp.n_states);
    let mut best = Vec::with_capacity(mdp.n_states);
    for s in 0..mdp.n_states {
        let row = &opt.q_star[s * na..(s + 1) * na];
        let b = argmax(row);
        let runner_up = row
            .iter()
            .enumerate()
            .filter(|(a, _)| *a != b)
            .map(|(_, &x)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        gaps.push(row[b] - runner_up);
        best.push(b);
    }
    Ok(RewardGap { gaps, best })
}

/// Precomputed optimum-dependent quantities for repeated PL checks.
#[derive(Debug, Clone)]
pub struct PlContext<'a> {
    mdp: &'a TabularMdp,
    lambda: f64,
    pub optimum: OptimalValue,
    /// `‖d_μ^{π*}/μ‖_∞^{−1}`.
    pub inv_mismatch: f64,
    best: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlCheck {
    pub c_value: f64,
    /// 1 for λ = 0, 1/2 for λ > 0.
    pub exponent: f64,
    pub grad_norm: f64,
    pub gap: f64,
    pub holds: bool,
}

impl<'a> PlContext<'a> {
    pub fn new(mdp: &'a TabularMdp, lambda: f64) -> Result<Self> {
        let optimum = optimal_value(mdp, lambda)?;
        let d_star = discounted_state_distribution(mdp, &optimum.pi_star)?;
        let mismatch = d_star.iter().zip(&mdp.mu).map(|(d, m)| d / m).fold(0.0, f64::max);
        let na = mdp.n_actions;
        let best = (0..mdp.n_states).map(|s| argmax(&optimum.q_star[s * na..(s + 1) * na])).collect();
        Ok(Self {
            mdp,
            lambda,
            optimum,
            inv_mismatch: 1.0 / mismatch,
            best,
        })
    }

    /// Non-uniform PL constant `c_λ(w)`.
    ///
    /// λ = 0: `min_s π(a*(s)|s)·(1 − ρ)/√|S|·‖d*/μ‖⁻¹`;
    /// λ > 0: `2λ(1 − ρ)/|S|·min μ·min π²·‖d*/μ‖⁻¹`.
    pub fn c_value(&self, pi: &[f64]) -> f64 {
        let mdp = self.mdp;
        let (ns, na) = (mdp.n_states as f64, mdp.n_actions);
        if self.lambda == 0.0 {
            let min_best = (0..mdp.n_states).map(|s| pi[s * na + self.best[s]]).fold(f64::INFINITY, f64::min);
            min_best * (1.0 - mdp.rho) / ns.sqrt() * self.inv_mismatch
        } else {
            let min_mu = mdp.mu.iter().copied().fold(f64::INFINITY, f64::min);
            let min_pi = pi.iter().copied().fold(f64::INFINITY, f64::min);
            2.0 * self.lambda * (1.0 - mdp.rho) / ns * min_mu * min_pi * min_pi * self.inv_mismatch
        }
    }

    pub fn check(&self, w: &[f64]) -> Result<PlCheck> {
        let val = evaluate_policy(self.mdp, w, self.lambda)?;
        let grad = gradient_from_value(self.mdp, &val)?;
        let grad_norm = norm(&grad);
        let gap = (self.optimum.value_mu - val.value_mu).max(0.0);
        let c_value = self.c_value(&val.pi);
        let exponent = if self.lambda == 0.0 { 1.0 } else { 0.5 };
        let rhs = (c_value * gap).powf(exponent);
        Ok(PlCheck {
            c_value,
            exponent,
            grad_norm,
            gap,
            holds: grad_norm >= rhs * (1.0 - 1e-12),
        })
    }
}

pub fn pl_constant(mdp: &TabularMdp, w: &[f64], lambda: f64) -> Result<PlCheck> {
    PlContext::new(mdp, lambda)?.check(w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalRadius {
    pub r: f64,
    pub c: f64,
}

/// Radius `r` of the sublevel set `{V* − V ≤ r}` on which `c_λ(w) ≥ c`.
pub fn local_radius(mdp: &TabularMdp, lambda: f64, alpha: f64) -> Result<LocalRadius> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("alpha", alpha, "(0, 1)"));
    }
    let ctx = PlContext::new(mdp, lambda)?;
    let ns = mdp.n_states as f64;
    let rho = mdp.rho;
    let min_mu = mdp.mu.iter().copied().fold(f64::INFINITY, f64::min);
    if lambda == 0.0 {
        let gap = reward_gap(mdp)?;
        if gap.is_degenerate() {
            return Err(Error::InvalidMdp("optimal action is not unique in some state".into()));
        }
        Ok(LocalRadius {
            r: min_mu * gap.min_gap() * (1.0 - alpha),
            c: alpha * (1.0 - rho) / ns.sqrt() * ctx.inv_mismatch,
        })
    } else {
        let floor = (-1.0 / ((1.0 - rho) * lambda)).exp();
        let min_pi_star = ctx.optimum.pi_star.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(LocalRadius {
            r: alpha * alpha * floor * floor * lambda * min_mu / (2.0 * std::f64::consts::LN_2),
            c: 2.0 * lambda * (1.0 - rho) / ns * min_mu * (1.0 - alpha).powi(2) * min_pi_star.powi(2) * ctx.inv_mismatch,
        })
    }
}

/// `f(w) = V*_λ(μ) − V_λ(μ)` as a minimisation objective with `f* = 0`.
#[derive(Debug, Clone)]
pub struct PolicyObjective {
    mdp: TabularMdp,
    lambda: f64,
    v_star: f64,
}

impl PolicyObjective {
    pub fn new(mdp: TabularMdp, lambda: f64) -> Result<Self> {
        let v_star = optimal_value(&mdp, lambda)?.value_mu;
        Ok(Self { mdp, lambda, v_star })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn v_star(&self) -> f64 {
        self.v_star
    }
}

impl Objective for PolicyObjective {
    fn dim(&self) -> usize {
        self.mdp.n_params()
    }

    fn value(&self, w: &[f64]) -> f64 {
        evaluate_policy(&self.mdp, w, self.lambda).map_or(f64::NAN, |v| self.v_star - v.value_mu)
    }

    fn gradient_into(&self, w: &[f64], out: &mut [f64]) {
        match exact_gradient(&self.mdp, w, self.lambda) {
            Ok(g) => {
                for (o, gi) in out.iter_mut().zip(g) {
                    *o = -gi;
                }
            }
            Err(_) => out.fill(f64::NAN),
        }
    }

    fn f_star(&self) -> f64 {
        0.0
    }
}

/// Descent direction for [`PolicyObjective`]: the negated
/// [`stochastic_gradient`].
#[derive(Debug, Clone, Copy)]
pub struct PolicyGradientOracle<'a> {
    pub mdp: &'a TabularMdp,
    pub lambda: f64,
}

impl GradientOracle for PolicyGradientOracle<'_> {
    fn dim(&self) -> usize {
        self.mdp.n_params()
    }

    fn sample_into(&self, w: &[f64], rng: &mut Stream, out: &mut [f64]) {
        let policy = SoftmaxPolicy {
            w: w.to_vec(),
            n_actions: self.mdp.n_actions,
        };
        let log_pi = policy.log_probs();
        let pi: Vec<f64> = log_pi.iter().map(|l| l.exp()).collect();
        stochastic_gradient_into(self.mdp, &pi, &log_pi, self.lambda, rng, out);
        for o in out.iter_mut() {
            *o = -*o;
        }
    }
}

/// Finite parameters of an optimal policy: `log π*` for λ > 0, and a
/// margin-`GREEDY_MARGIN` one-hot for the greedy λ = 0 optimum.
pub fn optimal_params(mdp: &TabularMdp, lambda: f64) -> Result<Vec<f64>> {
    let opt = optimal_value(mdp, lambda)?;
    Ok(if lambda == 0.0 {
        opt.pi_star.iter().map(|&p| if p > 0.0 { GREEDY_MARGIN } else { 0.0 }).collect()
    } else {
        params_for_policy(&opt.pi_star)
    })
}

pub const GREEDY_MARGIN: f64 = 40.0;

/// A point `t·w*` on the segment from the uniform policy to `w*` whose gap
/// is as close to `target` as bisection can get without exceeding it.
pub fn point_with_gap(obj: &PolicyObjective, target: f64) -> Result<Vec<f64>> {
    let w_star = optimal_params(&obj.mdp, obj.lambda)?;
    let at = |t: f64| -> Vec<f64> { w_star.iter().map(|w| t * w).collect() };
    if obj.value(&w_star) > target {
        return Err(Error::Numerical(format!(
            "the gap at the optimum, {:e}, already exceeds {target:e}",
            obj.value(&w_star)
        )));
    }
    if obj.value(&at(0.0)) <= target {
        return Ok(at(0.0));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if obj.value(&at(mid)) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(at(hi))
}

/// Monte-Carlo `E‖ĝ‖²` of [`stochastic_gradient`] at `w`.
pub fn sample_second_moment(mdp: &TabularMdp, w: &[f64], lambda: f64, samples: usize, rng: &mut Stream) -> Result<f64> {
    let mut acc = 0.0;
    for _ in 0..samples {
        acc += stochastic_gradient(mdp, w, lambda, rng)?.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(acc / samples.max(1) as f64)
}

/// Central differences of `w ↦ V_λ(μ)`.
pub fn finite_diff_value_gradient(mdp: &TabularMdp, w: &[f64], lambda: f64, h: f64) -> Result<Vec<f64>> {
    let mut probe = w.to_vec();
    let mut out = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        probe[i] = w[i] + h;
        let up = evaluate_policy(mdp, &probe, lambda)?.value_mu;
        probe[i] = w[i] - h;
        let down = evaluate_policy(mdp, &probe, lambda)?.value_mu;
        probe[i] = w[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Parameters reproducing `pi` (up to a per-state shift): `w = log π`.
pub fn params_for_policy(pi: &[f64]) -> Vec<f64> {
    pi.iter().map(|p| p.ln()).collect()
}
