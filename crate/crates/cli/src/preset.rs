//! The four-objective SGD/SHB comparison on `|x|^p`.

use plsgd::optimizers::{CheckpointRule, Init};
use plsgd::oracle::NoiseModel;

use crate::config::{CheckSpec, ExperimentConfig, ExperimentKind, ObjectiveSpec, ScheduleSpec, Theta, ThetaKeyword};

/// `(p, γ₁)` per panel.
pub const FIGURE1_PANELS: [(f64, f64); 4] = [(2.0, 0.2), (3.0, 0.13), (6.0, 0.004), (12.0, 1e-6)];
pub const FIGURE1_NU: f64 = 0.5;
pub const FIGURE1_N_MAX: u64 = 100_000;
pub const FIGURE1_RUNS: u64 = 100;

pub fn figure1_preset() -> Vec<ExperimentConfig> {
    let mut out = Vec::with_capacity(8);
    for kind in [ExperimentKind::GlobalSgd, ExperimentKind::GlobalShb] {
        for (p, gamma1) in FIGURE1_PANELS {
            let method = if kind == ExperimentKind::GlobalSgd { "sgd" } else { "shb" };
            out.push(ExperimentConfig {
                kind,
                name: Some(format!("p{p}-{method}")),
                n_max: FIGURE1_N_MAX,
                n_runs: FIGURE1_RUNS,
                base_seed: 0,
                nu: (kind == ExperimentKind::GlobalShb).then_some(FIGURE1_NU),
                output: None,
                objective: Some(ObjectiveSpec::Monomial { p }),
                noise: NoiseModel::Gaussian { sigma: 1.0 },
                schedule: Some(ScheduleSpec {
                    gamma1,
                    theta: Theta::Keyword(ThetaKeyword::Optimal),
                }),
                init: Some(Init::MixtureUniform {
                    intervals: vec![(1.5, 2.5), (-2.5, -1.5)],
                }),
                checkpoints: CheckpointRule::default(),
                region: None,
                envelope: None,
                rl: None,
                check: Some(CheckSpec {
                    monotone_final_decade: p == 12.0,
                    ..CheckSpec::default()
                }),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use plsgd::rate::theoretical_rate;

    #[test]
    fn eight_valid_configs() {
        let cfgs = figure1_preset();
        assert_eq!(cfgs.len(), 8);
        for c in &cfgs {
            c.validate().unwrap();
            assert_eq!(c.n_runs, 100);
            assert_eq!(c.n_max, 100_000);
        }
        assert!(cfgs[4..].iter().all(|c| c.nu == Some(0.5)));
    }

    #[test]
    fn step_sizes_and_reference_rates() {
        let cfgs = figure1_preset();
        let want_gamma = [0.2, 0.13, 0.004, 1e-6];
        let want_rate = [1.0, 0.6, 3.0 / 7.0, 0.375];
        for (i, c) in cfgs[..4].iter().enumerate() {
            let obj = c.objective.as_ref().unwrap().build().unwrap();
            let beta = obj.pl_meta().unwrap().beta;
            let s = c.schedule.unwrap().build(Some(beta)).unwrap();
            assert_eq!(s.gamma1(), want_gamma[i]);
            assert!((theoretical_rate(beta).unwrap() - want_rate[i]).abs() < 1e-12);
        }
    }
}
