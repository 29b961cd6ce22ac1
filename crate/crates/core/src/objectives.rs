//! Test objectives with known optimum value, smoothness and
//! gradient-domination metadata.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Where a gradient-domination inequality is known to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlScope {
    Global,
    LocalInMinima,
    LocalInFstar,
}

/// `‖∇f(x)‖ ≥ c·(f(x) − f*)^β` on `scope`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlMeta {
    pub beta: f64,
    pub c: f64,
    pub scope: PlScope,
}

/// Gradient Lipschitz constant `l` and function Lipschitz constant `g`
/// on the working box [−4, 4]^d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzMeta {
    pub l: f64,
    pub g: f64,
}

/// Half-width of the working box for Lipschitz metadata.
pub const WORKING_BOX: f64 = 4.0;
const LIPSCHITZ_GRID: usize = 10_000;

pub trait Objective: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);
    fn f_star(&self) -> f64;

    fn pl_meta(&self) -> Option<PlMeta> {
        None
    }

    fn lipschitz_meta(&self) -> Option<LipschitzMeta> {
        None
    }

    /// Known minimisers, if the objective has an isolated set of them.
    fn minima(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        g
    }

    fn gap(&self, x: &[f64]) -> f64 {
        self.value(x) - self.f_star()
    }
}

/// Grid-maximised (L, G) for a one-dimensional profile `grad` on [−4, 4].
fn lipschitz_1d(grad: impl Fn(f64) -> f64) -> LipschitzMeta {
    let h = 2.0 * WORKING_BOX / (LIPSCHITZ_GRID - 1) as f64;
    let mut g_max: f64 = 0.0;
    let mut l_max: f64 = 0.0;
    let mut prev = grad(-WORKING_BOX);
    g_max = g_max.max(prev.abs());
    for i in 1..LIPSCHITZ_GRID {
        let cur = grad(-WORKING_BOX + i as f64 * h);
        g_max = g_max.max(cur.abs());
        l_max = l_max.max((cur - prev).abs() / h);
        prev = cur;
    }
    LipschitzMeta { l: l_max, g: g_max }
}

/// f(x) = |x|^p on the real line.
#[derive(Debug, Clone)]
pub struct Monomial {
    p: f64,
    lipschitz: LipschitzMeta,
}

impl Monomial {
    pub fn new(p: f64) -> Result<Self> {
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::domain("p", p, "[2, inf)"));
        }
        let lipschitz = lipschitz_1d(|x| monomial_grad(p, x));
        Ok(Self { p, lipschitz })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn beta(&self) -> f64 {
        (self.p - 1.0) / self.p
    }
}

fn monomial_grad(p: f64, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        p * x.abs().powf(p - 1.0) * x.signum()
    }
}

pub fn monomial(p: f64) -> Result<Monomial> {
    Monomial::new(p)
}

impl Objective for Monomial {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        x[0].abs().powf(self.p)
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = monomial_grad(self.p, x[0]);
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn pl_meta(&self) -> Option<PlMeta> {
        // |f'| = p·f^{(p−1)/p} identically
        Some(PlMeta {
            beta: self.beta(),
            c: self.p,
            scope: PlScope::Global,
        })
    }

    fn lipschitz_meta(&self) -> Option<LipschitzMeta> {
        Some(self.lipschitz)
    }

    fn minima(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0]]
    }
}

/// f(x) = (x² − 1)², minima at ±1 and a stationary point at 0.
#[derive(Debug, Clone)]
pub struct DoubleWell {
    lipschitz: LipschitzMeta,
}

/// Radius of the neighbourhood of {±1} on which the shipped PL constant holds.
pub const DOUBLE_WELL_PL_RADIUS: f64 = 0.5;

impl DoubleWell {
    pub fn new() -> Self {
        Self {
            lipschitz: lipschitz_1d(|x| 4.0 * x * (x * x - 1.0)),
        }
    }
}

impl Default for DoubleWell {
    fn default() -> Self {
        Self::new()
    }
}

pub fn double_well() -> DoubleWell {
    DoubleWell::new()
}

impl Objective for DoubleWell {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        let t = x[0] * x[0] - 1.0;
        t * t
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0);
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn pl_meta(&self) -> Option<PlMeta> {
        // |f'|/√f = 4|x| ≥ 2 when |x ∓ 1| < 1/2
        Some(PlMeta {
            beta: 0.5,
            c: 4.0 * (1.0 - DOUBLE_WELL_PL_RADIUS),
            scope: PlScope::LocalInMinima,
        })
    }

    fn lipschitz_meta(&self) -> Option<LipschitzMeta> {
        Some(self.lipschitz)
    }

    fn minima(&self) -> Vec<Vec<f64>> {
        vec![vec![-1.0], vec![1.0]]
    }
}

/// f(x) = ‖x‖²/2 in `dim` dimensions.
#[derive(Debug, Clone)]
pub struct Quadratic {
    dim: usize,
}

impl Quadratic {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(Self { dim })
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn pl_meta(&self) -> Option<PlMeta> {
        Some(PlMeta {
            beta: 0.5,
            c: std::f64::consts::SQRT_2,
            scope: PlScope::Global,
        })
    }

    fn lipschitz_meta(&self) -> Option<LipschitzMeta> {
        Some(LipschitzMeta {
            l: 1.0,
            g: WORKING_BOX * (self.dim as f64).sqrt(),
        })
    }

    fn minima(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.dim]]
    }
}

/// f(x) = ‖x‖^p in `dim` dimensions.
#[derive(Debug, Clone)]
pub struct RadialMonomial {
    p: f64,
    dim: usize,
    lipschitz: LipschitzMeta,
}

impl RadialMonomial {
    pub fn new(p: f64, dim: usize) -> Result<Self> {
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::domain("p", p, "[2, inf)"));
        }
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        // radial profile; the box corner is at radius 4√d
        let rmax = WORKING_BOX * (dim as f64).sqrt();
        let g = p * rmax.powf(p - 1.0);
        // largest Hessian eigenvalue is the radial one, p(p−1)r^{p−2}
        let l = p * (p - 1.0) * rmax.powf(p - 2.0);
        Ok(Self {
            p,
            dim,
            lipschitz: LipschitzMeta { l, g },
        })
    }
}

impl Objective for RadialMonomial {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        norm(x).powf(self.p)
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let r = norm(x);
        if r == 0.0 {
            out.fill(0.0);
            return;
        }
        let scale = self.p * r.powf(self.p - 2.0);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = scale * xi;
        }
    }

    fn f_star(&self) -> f64 {
        0.0
    }

    fn pl_meta(&self) -> Option<PlMeta> {
        Some(PlMeta {
            beta: (self.p - 1.0) / self.p,
            c: self.p,
            scope: PlScope::Global,
        })
    }

    fn lipschitz_meta(&self) -> Option<LipschitzMeta> {
        Some(self.lipschitz)
    }

    fn minima(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.dim]]
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Tightest `c` with `‖∇f(x)‖ ≥ c·(f(x) − f*)^β` over `points`.
pub fn empirical_pl_constant(obj: &dyn Objective, beta: f64, points: &[Vec<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mut g = vec![0.0; obj.dim()];
    let mut c = f64::INFINITY;
    for x in points {
        check_dim(obj.dim(), x.len())?;
        let gap = obj.gap(x);
        if !(gap > 0.0) {
            return Err(Error::domain("f(x) - f*", gap, "(0, inf)"));
        }
        obj.gradient_into(x, &mut g);
        c = c.min(norm(&g) / gap.powf(beta));
    }
    Ok(c)
}

/// Central differences `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h`.
pub fn finite_diff_grad(obj: &dyn Objective, x: &[f64], h: f64) -> Result<Vec<f64>> {
    check_dim(obj.dim(), x.len())?;
    if !(h > 0.0) {
        return Err(Error::domain("h", h, "(0, inf)"));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = obj.value(&probe);
        probe[i] = x[i] - h;
        let down = obj.value(&probe);
        probe[i] = x[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}
