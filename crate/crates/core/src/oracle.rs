//! Stochastic first-order oracle `V(x, ζ) = ∇f(x) + Z(x, ζ)` and Monte-Carlo
//! checks of the (ABC) second-moment condition.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objectives::Objective;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseModel {
    #[default]
    None,
    /// Additive isotropic Gaussian with per-coordinate standard deviation `sigma`.
    Gaussian { sigma: f64 },
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::domain("sigma", sigma, "[0, inf)"));
        }
        Ok(NoiseModel::Gaussian { sigma })
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } => sigma,
        }
    }

    /// E‖Z‖² = σ²d.
    pub fn second_moment(&self, dim: usize) -> f64 {
        self.sigma().powi(2) * dim as f64
    }

    /// Add one draw of Z to `out`. Draws nothing for [`NoiseModel::None`].
    pub fn perturb(&self, rng: &mut Stream, out: &mut [f64]) {
        if let NoiseModel::Gaussian { sigma } = *self {
            for o in out.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *o += sigma * z;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AbcConstants {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        for (name, v) in [("A", a), ("B", b), ("C", c)] {
            if !(v >= 0.0) {
                return Err(Error::domain(name, v, "[0, inf)"));
            }
        }
        Ok(Self { a, b, c })
    }

    /// A(f − f*) + B‖∇f‖² + C.
    pub fn bound(&self, gap: f64, grad_sq: f64) -> f64 {
        self.a * gap + self.b * grad_sq + self.c
    }
}

/// Anything that hands out unbiased gradient samples.
pub trait GradientOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn sample_into(&self, x: &[f64], rng: &mut Stream, out: &mut [f64]);
}

/// ∇f plus state-independent additive noise.
#[derive(Debug, Clone, Copy)]
pub struct AdditiveOracle<'a> {
    pub objective: &'a dyn Objective,
    pub noise: NoiseModel,
}

impl<'a> AdditiveOracle<'a> {
    pub fn new(objective: &'a dyn Objective, noise: NoiseModel) -> Self {
        Self { objective, noise }
    }
}

impl GradientOracle for AdditiveOracle<'_> {
    fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn sample_into(&self, x: &[f64], rng: &mut Stream, out: &mut [f64]) {
        self.objective.gradient_into(x, out);
        self.noise.perturb(rng, out);
    }
}

pub fn sample_gradient(obj: &dyn Objective, noise: &NoiseModel, x: &[f64], rng: &mut Stream) -> Result<Vec<f64>> {
    check_dim(obj.dim(), x.len())?;
    let mut out = vec![0.0; x.len()];
    AdditiveOracle::new(obj, *noise).sample_into(x, rng, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbcPointReport {
    pub point: Vec<f64>,
    /// Monte-Carlo estimate of E‖V‖².
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `bound + 3·std_error − estimate`; nonnegative iff the point passes.
    pub margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbcReport {
    pub points: Vec<AbcPointReport>,
}

impl AbcReport {
    pub fn all_passed(&self) -> bool {
        self.points.iter().all(|p| p.passed)
    }

    pub fn n_failed(&self) -> usize {
        self.points.iter().filter(|p| !p.passed).count()
    }
}

pub const MIN_ABC_SAMPLES: usize = 100;

/// Check `E‖V(x)‖² ≤ A(f − f*) + B‖∇f‖² + C` at each point, allowing three
/// standard errors of Monte-Carlo slack.
pub fn verify_abc(
    obj: &dyn Objective,
    oracle: &dyn GradientOracle,
    constants: &AbcConstants,
    points: &[Vec<f64>],
    samples_per_point: usize,
    rng: &mut Stream,
) -> Result<AbcReport> {
    if samples_per_point < MIN_ABC_SAMPLES {
        return Err(Error::domain(
            "samples_per_point",
            samples_per_point as f64,
            "[100, inf)",
        ));
    }
    check_dim(obj.dim(), oracle.dim())?;
    let mut v = vec![0.0; obj.dim()];
    let mut reports = Vec::with_capacity(points.len());
    for x in points {
        check_dim(obj.dim(), x.len())?;
        // Welford
        let (mut mean, mut m2) = (0.0, 0.0);
        for k in 1..=samples_per_point {
            oracle.sample_into(x, rng, &mut v);
            let s: f64 = v.iter().map(|t| t * t).sum();
            let d = s - mean;
            mean += d / k as f64;
            m2 += d * (s - mean);
        }
        let n = samples_per_point as f64;
        let std_error = (m2 / (n - 1.0)).max(0.0).sqrt() / n.sqrt();
        let g = obj.gradient(x);
        let bound = constants.bound(obj.gap(x), g.iter().map(|t| t * t).sum());
        let margin = bound + 3.0 * std_error - mean;
        reports.push(AbcPointReport {
            point: x.clone(),
            estimate: mean,
            std_error,
            bound,
            margin,
            passed: margin >= 0.0,
        });
    }
    Ok(AbcReport { points: reports })
}
