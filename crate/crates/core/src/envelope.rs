//! Deterministic envelope of the supermartingale recursion
//! `y_{n+1} = (1 + c₁γ_n²)·y_n − c₂γ_n·y_n^{2β} + c₃γ_n²`,
//! the closed-form maximum behind the q-trick, and the deterministic
//! sequence lemma `w_{n+1} ≤ (1 − a_n)w_n + b_n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedules::{check_beta, StepSizes};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionCoefficients {
    c1: f64,
    c2: f64,
    c3: f64,
    beta: f64,
}

impl RecursionCoefficients {
    pub fn new(c1: f64, c2: f64, c3: f64, beta: f64) -> Result<Self> {
        if !(c1 >= 0.0) {
            return Err(Error::domain("c1", c1, "[0, inf)"));
        }
        if !(c2 > 0.0) {
            return Err(Error::domain("c2", c2, "(0, inf)"));
        }
        if !(c3 >= 0.0) {
            return Err(Error::domain("c3", c3, "[0, inf)"));
        }
        check_beta(beta)?;
        Ok(Self { c1, c2, c3, beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// One step of the recursion before clamping.
    pub fn raw_step(&self, y: f64, gamma: f64) -> f64 {
        let g2 = gamma * gamma;
        (1.0 + self.c1 * g2) * y - self.c2 * gamma * y.powf(2.0 * self.beta) + self.c3 * g2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRun {
    /// `values[k]` is `y_{k+1}`.
    pub values: Vec<f64>,
    /// Indices `n` at which the unclamped `y_{n+1}` was negative.
    pub clamp_events: Vec<u64>,
}

impl EnvelopeRun {
    pub fn at(&self, n: u64) -> f64 {
        self.values[(n - 1) as usize]
    }

    /// `n^{1−η}·y_n`.
    pub fn weighted(&self, n: u64, eta: f64) -> f64 {
        (n as f64).powf(1.0 - eta) * self.at(n)
    }
}

/// Iterate the recursion as an equality, clamped at zero, returning
/// `y_1, …, y_{n_max}`.
pub fn envelope_iterate(coef: &RecursionCoefficients, sched: &dyn StepSizes, y1: f64, n_max: u64) -> Result<EnvelopeRun> {
    if !(y1 >= 0.0) {
        return Err(Error::domain("y1", y1, "[0, inf)"));
    }
    let mut values = Vec::with_capacity(n_max as usize);
    let mut clamp_events = Vec::new();
    let mut y = y1;
    for n in 1..=n_max {
        values.push(y);
        if n == n_max {
            break;
        }
        let next = coef.raw_step(y, sched.step_size(n));
        if next < 0.0 {
            clamp_events.push(n);
        }
        y = next.max(0.0);
    }
    Ok(EnvelopeRun { values, clamp_events })
}

/// Maximiser and maximum of `x ↦ a·x − b·x^{2β}` on `x ≥ 0`.
pub fn qtrick_max(a: f64, b: f64, beta: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) {
        return Err(Error::domain("a", a, "(0, inf)"));
    }
    if !(b > 0.0) {
        return Err(Error::domain("b", b, "(0, inf)"));
    }
    if !(beta > 0.5 && beta <= 1.0) {
        return Err(Error::domain("beta", beta, "(1/2, 1]"));
    }
    let p = 2.0 * beta;
    let x = (a / (p * b)).powf(1.0 / (p - 1.0));
    Ok((x, a * x - b * x.powf(p)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceLemmaOutcome {
    pub final_value: f64,
    /// The last half of the iterates is non-increasing and ends strictly
    /// below where it started (or sits at zero).
    pub decreasing_tail: bool,
}

/// Iterate `w_{n+1} = (1 − a_n)·w_n + b_n` for `n = 1, …, n_max − 1`.
pub fn check_sequence_lemma(
    w1: f64,
    a: impl Fn(u64) -> f64,
    b: impl Fn(u64) -> f64,
    n_max: u64,
) -> Result<SequenceLemmaOutcome> {
    if !(w1 >= 0.0) {
        return Err(Error::domain("w1", w1, "[0, inf)"));
    }
    if n_max < 2 {
        return Err(Error::domain("n_max", n_max as f64, "[2, inf)"));
    }
    let tail_start = n_max / 2;
    let mut w = w1;
    let mut w_tail = if tail_start <= 1 { w1 } else { f64::NAN };
    let mut monotone = true;
    for n in 1..n_max {
        let an = a(n);
        if !(0.0..=1.0).contains(&an) {
            return Err(Error::domain("a_n", an, "[0, 1]"));
        }
        let bn = b(n);
        if !(bn >= 0.0) {
            return Err(Error::domain("b_n", bn, "[0, inf)"));
        }
        let next = (1.0 - an) * w + bn;
        if n >= tail_start && next > w {
            monotone = false;
        }
        w = next;
        if n + 1 == tail_start {
            w_tail = w;
        }
    }
    let decreasing_tail = monotone && (w < w_tail || w_tail == 0.0);
    Ok(SequenceLemmaOutcome {
        final_value: w,
        decreasing_tail,
    })
}
