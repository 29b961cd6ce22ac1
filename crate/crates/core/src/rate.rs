//! Empirical convergence rates: log-log fits, ensemble curves and pathwise
//! rate certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{Checkpoint, Trajectory};
use crate::schedules::check_beta;

pub const MIN_FIT_POINTS: usize = 5;

/// Exponent `1/(4β − 1)` of the almost-sure rate.
pub fn theoretical_rate(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(1.0 / (4.0 * beta - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    /// Natural-log intercept.
    pub intercept: f64,
    pub window: (u64, u64),
    pub r_squared: f64,
    pub n_points: usize,
    /// In-window checkpoints dropped because their gap was not positive.
    pub n_dropped: usize,
}

/// OLS of `ln gap` on `ln n` over checkpoints with `n_lo ≤ n ≤ n_hi`.
pub fn fit_rate(points: &[Checkpoint], window: (u64, u64)) -> Result<RateFit> {
    let (lo, hi) = window;
    if lo >= hi {
        return Err(Error::domain("window.n_lo", lo as f64, "below n_hi"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n_dropped = 0;
    for c in points.iter().filter(|c| c.n >= lo && c.n <= hi) {
        if c.gap > 0.0 && c.gap.is_finite() {
            xs.push((c.n as f64).ln());
            ys.push(c.gap.ln());
        } else {
            n_dropped += 1;
        }
    }
    let k = xs.len();
    if k < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_POINTS,
            have: k,
        });
    }
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_POINTS,
            have: 1,
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        window,
        r_squared,
        n_points: k,
        n_dropped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub checkpoints: Vec<u64>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub p10: Vec<f64>,
    pub p90: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub n_used: usize,
    pub n_diverged: usize,
}

impl EnsembleStats {
    pub fn mean_curve(&self) -> Vec<Checkpoint> {
        self.checkpoints
            .iter()
            .zip(&self.mean)
            .map(|(&n, &gap)| Checkpoint { n, gap })
            .collect()
    }

    pub fn mean_at(&self, n: u64) -> Option<f64> {
        self.checkpoints.binary_search(&n).ok().map(|i| self.mean[i])
    }
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise statistics over non-diverged runs, which must share a
/// checkpoint grid.
pub fn ensemble_stats(trajectories: &[Trajectory]) -> Result<EnsembleStats> {
    if trajectories.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let used: Vec<&Trajectory> = trajectories.iter().filter(|t| !t.diverged()).collect();
    let n_diverged = trajectories.len() - used.len();
    let grid: Vec<u64> = used.first().map(|t| t.checkpoints.iter().map(|c| c.n).collect()).unwrap_or_default();
    for t in &used {
        if t.checkpoints.len() != grid.len() || t.checkpoints.iter().zip(&grid).any(|(c, &n)| c.n != n) {
            return Err(Error::UnsupportedRun(format!("run {} has a different checkpoint grid", t.run_index)));
        }
    }
    let k = grid.len();
    let mut stats = EnsembleStats {
        checkpoints: grid,
        mean: Vec::with_capacity(k),
        median: Vec::with_capacity(k),
        p10: Vec::with_capacity(k),
        p90: Vec::with_capacity(k),
        min: Vec::with_capacity(k),
        max: Vec::with_capacity(k),
        n_used: used.len(),
        n_diverged,
    };
    let mut column = Vec::with_capacity(used.len());
    for i in 0..k {
        column.clear();
        column.extend(used.iter().map(|t| t.checkpoints[i].gap));
        stats.mean.push(column.iter().sum::<f64>() / column.len() as f64);
        column.sort_by(f64::total_cmp);
        stats.median.push(quantile_sorted(&column, 0.5));
        stats.p10.push(quantile_sorted(&column, 0.1));
        stats.p90.push(quantile_sorted(&column, 0.9));
        stats.min.push(column[0]);
        stats.max.push(column[column.len() - 1]);
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub fraction: f64,
    pub verdicts: Vec<bool>,
}

/// Fraction of runs with `sup_{n ≥ n0} n^{p_exp}·gap_n ≤ bound` over their
/// checkpoints. Diverged runs fail.
pub fn as_certificate(trajectories: &[Trajectory], p_exp: f64, n0: u64, bound: f64) -> Certificate {
    let verdicts: Vec<bool> = trajectories
        .iter()
        .map(|t| {
            !t.diverged()
                && t.checkpoints
                    .iter()
                    .filter(|c| c.n >= n0)
                    .all(|c| (c.n as f64).powf(p_exp) * c.gap <= bound)
        })
        .collect();
    let fraction = if verdicts.is_empty() {
        0.0
    } else {
        verdicts.iter().filter(|&&v| v).count() as f64 / verdicts.len() as f64
    };
    Certificate { fraction, verdicts }
}
