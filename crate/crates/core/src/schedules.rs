//! Polynomially decaying step sizes and the exponent arithmetic that links
//! the step-size decay, the gradient-domination exponent and the certified
//! almost-sure rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp applied to θ when the optimal exponent hits the excluded endpoint 1.
pub const THETA_CLAMP: f64 = 1.0 - 1e-3;

/// Number of explicit terms before the Euler-Maclaurin tail in [`power_series_sum`].
const SERIES_PARTIAL_TERMS: u64 = 1_000_000;

/// A sequence of positive step sizes indexed from `n = 1`.
pub trait StepSizes: Send + Sync {
    fn step_size(&self, n: u64) -> f64;
}

/// γ_n = γ₁·n^{−θ} with θ in the open interval (1/2, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    gamma1: f64,
    theta: f64,
}

impl StepSchedule {
    pub fn new(gamma1: f64, theta: f64) -> Result<Self> {
        if !(gamma1 > 0.0 && gamma1.is_finite()) {
            return Err(Error::domain("gamma1", gamma1, "(0, inf)"));
        }
        if !(theta > 0.5 && theta < 1.0) {
            return Err(Error::domain("theta", theta, "(1/2, 1)"));
        }
        Ok(Self { gamma1, theta })
    }

    /// Schedule with θ = [`optimal_theta`]`(beta)`, clamped to [`THETA_CLAMP`] when it reaches 1.
    pub fn optimal(gamma1: f64, beta: f64) -> Result<Self> {
        let theta = optimal_theta(beta)?.min(THETA_CLAMP);
        Self::new(gamma1, theta)
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Σ_{n≥1} γ_n².
    pub fn sum_of_squares(&self) -> f64 {
        self.gamma1 * self.gamma1 * power_series_sum(2.0 * self.theta)
    }
}

impl StepSizes for StepSchedule {
    fn step_size(&self, n: u64) -> f64 {
        debug_assert!(n >= 1, "step sizes are indexed from 1");
        self.gamma1 * (n as f64).powf(-self.theta)
    }
}

/// Constant step size. Only meaningful for test harnesses; the rate theory
/// requires decaying steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantStep(pub f64);

impl StepSizes for ConstantStep {
    fn step_size(&self, _n: u64) -> f64 {
        self.0
    }
}

/// Gradient-domination exponent β, rate parameter η and the auxiliary
/// exponent q used when β > 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    beta: f64,
    eta: f64,
    q: f64,
}

impl RateParams {
    pub fn new(beta: f64, eta: f64, q: f64) -> Result<Self> {
        check_beta(beta)?;
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::domain("eta", eta, "(0, 1)"));
        }
        if !(1.0..2.0).contains(&q) {
            return Err(Error::domain("q", q, "[1, 2)"));
        }
        Ok(Self { beta, eta, q })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Exponent p of the certified rate o(n^{-p}), p = 1 − η.
    pub fn rate_exponent(&self) -> f64 {
        1.0 - self.eta
    }

    /// Whether η lies strictly above the admissibility bound for step exponent `theta`.
    pub fn is_admissible_for(&self, theta: f64) -> Result<bool> {
        Ok(self.eta > admissible_eta_lower_bound(self.beta, theta)?)
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if (0.5..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::domain("beta", beta, "[1/2, 1]"))
    }
}

/// Step exponent 2β/(4β−1) giving the fastest certified rate.
///
/// At β = 1/2 this returns 1, which the open θ-interval excludes; use
/// [`StepSchedule::optimal`] to get the clamped schedule.
pub fn optimal_theta(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(2.0 * beta / (4.0 * beta - 1.0))
}

/// Infimum of the admissible η for a given (β, θ): every η strictly between
/// this value and 1 certifies `f(X_n) − f* ∈ o(n^{η−1})`.
pub fn admissible_eta_lower_bound(beta: f64, theta: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(theta > 0.5 && theta < 1.0) {
        return Err(Error::domain("theta", theta, "(1/2, 1)"));
    }
    let from_noise = 2.0 - 2.0 * theta;
    if beta == 0.5 {
        return Ok(from_noise);
    }
    let from_domination = (theta + 2.0 * beta - 2.0) / (2.0 * beta - 1.0);
    Ok(from_noise.max(from_domination))
}

/// Σ_{n≥1} n^{−s} for s > 1: explicit partial sum up to 10⁶ terms and an
/// Euler-Maclaurin remainder. Relative error is far below 1e−10.
pub fn power_series_sum(s: f64) -> f64 {
    assert!(s > 1.0, "series diverges for s <= 1");
    let big_n = SERIES_PARTIAL_TERMS;
    // smallest terms first
    let partial: f64 = (1..big_n).rev().map(|n| (n as f64).powf(-s)).sum();
    let nf = big_n as f64;
    let tail = nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s * nf.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * nf.powf(-s - 3.0) / 720.0;
    partial + tail
}

/// Largest γ₁ such that γ₁²·Σ n^{−2θ} ≤ `budget`.
pub fn max_gamma1_for_budget(theta: f64, budget: f64) -> Result<f64> {
    if !(theta > 0.5 && theta < 1.0) {
        return Err(Error::domain("theta", theta, "(1/2, 1)"));
    }
    if !(budget > 0.0) {
        return Err(Error::domain("budget", budget, "(0, inf)"));
    }
    Ok((budget / power_series_sum(2.0 * theta)).sqrt())
}
