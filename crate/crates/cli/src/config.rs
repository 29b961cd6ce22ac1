//! Experiment configuration files.
//!
//! A config is a TOML document. Unknown keys anywhere are rejected, and every
//! value is range-checked in [`ExperimentConfig::validate`] so that a bad file
//! fails before any iteration runs.

use std::path::{Path, PathBuf};

use plsgd::objectives::{double_well, monomial, Objective, Quadratic, RadialMonomial};
use plsgd::optimizers::{CheckpointRule, Init, Method};
use plsgd::oracle::NoiseModel;
use plsgd::schedules::{optimal_theta, StepSchedule, THETA_CLAMP};
use plsgd::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GlobalSgd,
    GlobalShb,
    Envelope,
    Local,
    Rl,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::GlobalSgd => "global-sgd",
            ExperimentKind::GlobalShb => "global-shb",
            ExperimentKind::Envelope => "envelope",
            ExperimentKind::Local => "local",
            ExperimentKind::Rl => "rl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Monomial { p: f64 },
    DoubleWell,
    Quadratic { dim: usize },
    RadialMonomial { p: f64, dim: usize },
}

impl ObjectiveSpec {
    pub fn build(&self) -> Result<Box<dyn Objective>> {
        Ok(match *self {
            ObjectiveSpec::Monomial { p } => Box::new(monomial(p)?),
            ObjectiveSpec::DoubleWell => Box::new(double_well()),
            ObjectiveSpec::Quadratic { dim } => Box::new(Quadratic::new(dim)?),
            ObjectiveSpec::RadialMonomial { p, dim } => Box::new(RadialMonomial::new(p, dim)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaKeyword {
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta {
    Value(f64),
    Keyword(ThetaKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub gamma1: f64,
    pub theta: Theta,
}

impl ScheduleSpec {
    /// `beta` resolves `theta = "optimal"`; it comes from the objective.
    pub fn build(&self, beta: Option<f64>) -> Result<StepSchedule> {
        let theta = match self.theta {
            Theta::Value(t) => t,
            Theta::Keyword(ThetaKeyword::Optimal) => {
                let beta = beta.ok_or_else(|| {
                    Error::config("schedule.theta", "\"optimal\" needs an objective with a global PL exponent")
                })?;
                optimal_theta(beta)?.min(THETA_CLAMP)
            }
        };
        StepSchedule::new(self.gamma1, theta).map_err(|e| Error::config("schedule", e.to_string()))
    }
}

/// Trapping region for `kind = "local"`: a union of balls around `minima`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub radius: f64,
    pub delta: f64,
    #[serde(default)]
    pub level: f64,
    /// Defaults to the objective's minima.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minima: Option<Vec<Vec<f64>>>,
    /// Decay exponent used when no explicit schedule is given.
    #[serde(default = "default_local_theta")]
    pub theta: f64,
    pub x1: Vec<f64>,
}

fn default_local_theta() -> f64 {
    0.75
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub beta: f64,
    pub y1: f64,
    /// Weight exponent for the `--check` test. Defaults to the admissible
    /// lower bound plus 0.05.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlSpec {
    /// `builtin:bandit`, `builtin:chain3`, or a path to an MDP file,
    /// relative to the config file.
    pub mdp: String,
    pub lambda: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Replaces the radius from `local_radius`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default = "default_rl_delta")]
    pub delta: f64,
    #[serde(default = "default_rl_theta")]
    pub theta: f64,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_rl_delta() -> f64 {
    0.1
}

fn default_rl_theta() -> f64 {
    2.0 / 3.0
}

/// Thresholds applied by `--check`. Missing entries fall back to
/// per-kind defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(u64, u64)>,
    /// Only require the mean curve to be non-increasing over the last decade.
    #[serde(default)]
    pub monotone_final_decade: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n_max: u64,
    #[serde(default = "one")]
    pub n_runs: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Init>,
    #[serde(default)]
    pub checkpoints: CheckpointRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rl: Option<RlSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSpec>,
}

fn one() -> u64 {
    1
}

fn need<'a, T>(v: &'a Option<T>, path: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::config(path, "required for this experiment kind"))
}

fn forbid<T>(v: &Option<T>, path: &str, kind: ExperimentKind) -> Result<()> {
    if v.is_some() {
        Err(Error::config(path, format!("not used by kind = \"{}\"", kind.as_str())))
    } else {
        Ok(())
    }
}

fn positive(v: f64, path: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive and finite, got {v}")))
    }
}

fn unit_open(v: f64, path: &str) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(path, format!("must lie in (0, 1), got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let path = e.message().split('`').nth(1).unwrap_or("<document>").to_string();
            Error::config(path, e.to_string().trim().replace('\n', " "))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(rl) = cfg.rl.as_mut() {
            if !rl.mdp.starts_with("builtin:") && Path::new(&rl.mdp).is_relative() {
                if let Some(dir) = path.parent() {
                    rl.mdp = dir.join(&rl.mdp).to_string_lossy().into_owned();
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Canonical text with the output location removed, so the digest only
    /// depends on what determines the numbers.
    pub fn canonical_text(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        c.to_toml_string()
    }

    pub fn method(&self) -> Method {
        match self.kind {
            ExperimentKind::GlobalShb => Method::Shb { nu: self.nu.unwrap_or(0.0) },
            _ => Method::Sgd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind;
        if self.n_max < 1 {
            return Err(Error::config("n_max", "must be at least 1"));
        }
        if self.n_runs < 1 {
            return Err(Error::config("n_runs", "must be at least 1"));
        }
        if let NoiseModel::Gaussian { sigma } = self.noise {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::config("noise.sigma", format!("must be nonnegative, got {sigma}")));
            }
        }
        if let CheckpointRule::Geometric { per_decade: 0 } = self.checkpoints {
            return Err(Error::config("checkpoints.per_decade", "must be at least 1"));
        }
        if let CheckpointRule::Every { stride: 0 } = self.checkpoints {
            return Err(Error::config("checkpoints.stride", "must be at least 1"));
        }
        if let Some(s) = &self.schedule {
            positive(s.gamma1, "schedule.gamma1")?;
            if let Theta::Value(t) = s.theta {
                if !(t > 0.5 && t < 1.0) {
                    return Err(Error::config("schedule.theta", format!("must lie in (1/2, 1), got {t}")));
                }
            }
        }
        if kind == ExperimentKind::GlobalShb {
            let nu = *need(&self.nu, "nu")?;
            if !(0.0..1.0).contains(&nu) {
                return Err(Error::config("nu", format!("must lie in [0, 1), got {nu}")));
            }
        } else {
            forbid(&self.nu, "nu", kind)?;
        }
        match kind {
            ExperimentKind::GlobalSgd | ExperimentKind::GlobalShb => {
                let obj = need(&self.objective, "objective")?.build().map_err(|e| Error::config("objective", e.to_string()))?;
                need(&self.schedule, "schedule")?.build(obj.pl_meta().map(|m| m.beta))?;
                need(&self.init, "init")?
                    .validate(obj.dim())
                    .map_err(|e| Error::config("init", e.to_string()))?;
                forbid(&self.region, "region", kind)?;
                forbid(&self.envelope, "envelope", kind)?;
                forbid(&self.rl, "rl", kind)?;
            }
            ExperimentKind::Envelope => {
                let e = need(&self.envelope, "envelope")?;
                for (v, p) in [(e.c1, "envelope.c1"), (e.c2, "envelope.c2"), (e.c3, "envelope.c3")] {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::config(p, format!("must be nonnegative, got {v}")));
                    }
                }
                if !(e.beta >= 0.5 && e.beta <= 1.0) {
                    return Err(Error::config("envelope.beta", format!("must lie in [1/2, 1], got {}", e.beta)));
                }
                if !(e.y1 >= 0.0 && e.y1.is_finite()) {
                    return Err(Error::config("envelope.y1", "must be nonnegative"));
                }
                need(&self.schedule, "schedule")?.build(Some(e.beta))?;
                if self.n_runs != 1 {
                    return Err(Error::config("n_runs", "the envelope recursion is deterministic; use 1"));
                }
                forbid(&self.objective, "objective", kind)?;
                forbid(&self.init, "init", kind)?;
                forbid(&self.region, "region", kind)?;
                forbid(&self.rl, "rl", kind)?;
            }
            ExperimentKind::Local => {
                let obj = need(&self.objective, "objective")?.build().map_err(|e| Error::config("objective", e.to_string()))?;
                let r = need(&self.region, "region")?;
                positive(r.radius, "region.radius")?;
                unit_open(r.delta, "region.delta")?;
                if !(r.theta > 0.5 && r.theta < 1.0) {
                    return Err(Error::config("region.theta", format!("must lie in (1/2, 1), got {}", r.theta)));
                }
                if r.x1.len() != obj.dim() {
                    return Err(Error::config("region.x1", format!("expected {} coordinates", obj.dim())));
                }
                if let Some(s) = &self.schedule {
                    s.build(None)?;
                }
                forbid(&self.init, "init", kind)?;
                forbid(&self.envelope, "envelope", kind)?;
                forbid(&self.rl, "rl", kind)?;
            }
            ExperimentKind::Rl => {
                let rl = need(&self.rl, "rl")?;
                if !(rl.lambda >= 0.0 && rl.lambda.is_finite()) {
                    return Err(Error::config("rl.lambda", "must be nonnegative"));
                }
                unit_open(rl.alpha, "rl.alpha")?;
                unit_open(rl.delta, "rl.delta")?;
                if let Some(r) = rl.radius {
                    positive(r, "rl.radius")?;
                }
                if !(rl.theta > 0.5 && rl.theta < 1.0) {
                    return Err(Error::config("rl.theta", format!("must lie in (1/2, 1), got {}", rl.theta)));
                }
                if let Some(name) = rl.mdp.strip_prefix("builtin:") {
                    if !matches!(name, "bandit" | "chain3") {
                        return Err(Error::config("rl.mdp", format!("unknown builtin MDP {name:?}")));
                    }
                }
                if let Some(s) = &self.schedule {
                    s.build(None)?;
                }
                forbid(&self.objective, "objective", kind)?;
                forbid(&self.init, "init", kind)?;
                forbid(&self.region, "region", kind)?;
                forbid(&self.envelope, "envelope", kind)?;
            }
        }
        if let Some(c) = &self.check {
            if let Some((lo, hi)) = c.window {
                if !(lo >= 1 && lo < hi) {
                    return Err(Error::config("check.window", "need 1 <= lo < hi"));
                }
            }
            if let Some(t) = c.slope_tolerance {
                positive(t, "check.slope_tolerance")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SGD: &str = r#"
kind = "global-sgd"
n_max = 1000
n_runs = 4
base_seed = 7

[objective]
kind = "monomial"
p = 2

[noise]
kind = "gaussian"
sigma = 1.0

[schedule]
gamma1 = 0.2
theta = "optimal"

[init]
kind = "mixture-uniform"
intervals = [[1.5, 2.5], [-2.5, -1.5]]
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::from_toml_str(SGD).unwrap();
        assert_eq!(c.kind, ExperimentKind::GlobalSgd);
        assert_eq!(c.checkpoints, CheckpointRule::Geometric { per_decade: 32 });
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn optimal_theta_is_clamped_for_quadratic_growth() {
        let c = ExperimentConfig::from_toml_str(SGD).unwrap();
        let s = c.schedule.unwrap().build(Some(0.5)).unwrap();
        assert_eq!(s.theta(), plsgd::schedules::THETA_CLAMP);
    }

    #[test]
    fn unknown_key_is_rejected_with_its_name() {
        let err = ExperimentConfig::from_toml_str(&SGD.replace("base_seed = 7", "base_seed = 7\nbogus = 1")).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "bogus"),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::from_toml_str(&SGD.replace("sigma = 1.0", "sigma = 1.0\nmu = 2")).is_err());
    }

    #[test]
    fn range_errors_carry_field_paths() {
        let cases = [
            (SGD.replace("gamma1 = 0.2", "gamma1 = -0.2"), "schedule.gamma1"),
            (SGD.replace("theta = \"optimal\"", "theta = 0.4"), "schedule.theta"),
            (SGD.replace("n_runs = 4", "n_runs = 0"), "n_runs"),
            (SGD.replace("[1.5, 2.5]", "[2.5, 1.5]"), "init"),
            (SGD.replace("base_seed = 7", "base_seed = 7\nnu = 0.5"), "nu"),
        ];
        for (text, want) in cases {
            match ExperimentConfig::from_toml_str(&text).unwrap_err() {
                Error::Config { path, .. } => assert_eq!(path, want, "{text}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn shb_requires_nu() {
        let text = SGD.replace("global-sgd", "global-shb");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
        let c = ExperimentConfig::from_toml_str(&text.replace("base_seed = 7", "base_seed = 7\nnu = 0.5")).unwrap();
        assert_eq!(c.method(), Method::Shb { nu: 0.5 });
    }

    #[test]
    fn digest_text_ignores_output() {
        let mut a = ExperimentConfig::from_toml_str(SGD).unwrap();
        let b = a.clone();
        a.output = Some("elsewhere".into());
        assert_eq!(a.canonical_text(), b.canonical_text());
    }
}
