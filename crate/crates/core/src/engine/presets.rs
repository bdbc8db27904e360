//! Ready-made designs for the published simulation settings.
//!
//! Values the published settings leave open (outcome noise and the stage-1 adherence
//! interval of the logit designs, planned sizes for power steering) are module constants.

use crate::engine::design::{
    AdherenceScope, AdherenceSpec, CovariateSpec, DesignKind, DesignSpec, ErrorSpec, MostSpec,
    PowerSteering, Stage1Packages, StageSpec,
};
use crate::model::{ComponentBounds, CostFunction, CubicTerm, LinkFunction, ParameterVector};

/// Outcome noise for the logit designs.
pub const SIM1_SIGMA: f64 = 0.2;
/// Stage-1 multiplicative adherence interval for the logit designs.
pub const SIM1_ADHERENCE: (f64, f64) = (0.8, 1.2);
/// Per-arm size assumed by the stage-2/3 power projection of the identity-link comparison
/// (the per-arm size of each later stage). MOST projects with its RCT size instead.
pub const SIM4_PLANNED_N_PER_ARM: usize = 50;

fn bounds(lower: &[f64], upper: &[f64]) -> ComponentBounds {
    ComponentBounds {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    }
}

pub fn sim1_linear_cost() -> CostFunction {
    CostFunction::Linear {
        fixed_cost: 0.0,
        unit_costs: vec![8.0, 2.0],
    }
}

/// Economy of scale at low doses, prohibitive near the upper limits.
pub fn sim1_cubic_cost() -> CostFunction {
    CostFunction::Cubic {
        terms: vec![
            CubicTerm { a: 0.05, b: -1.19, c: 10.0, d: 10.0 },
            CubicTerm { a: 0.1, b: -0.7, c: 2.0, d: 0.0 },
        ],
    }
}

/// Two-stage c-LAGO, logit link without intercept, equal arms of `j` centers per stage.
pub fn sim1(beta1: [f64; 2], j: usize, n1: usize, n2: usize, cost: CostFunction) -> DesignSpec {
    sim1_unbalanced(beta1, (j, j), (n1, n2), cost)
}

/// As [`sim1`] with `j.0` centers per arm in stage 1 and `j.1` in stage 2.
pub fn sim1_unbalanced(
    beta1: [f64; 2],
    j: (usize, usize),
    n: (usize, usize),
    cost: CostFunction,
) -> DesignSpec {
    let stage = |j: usize, n: usize| StageSpec {
        intervention_centers: j,
        control_centers: j,
        center_size: n,
    };
    DesignSpec {
        kind: DesignKind::Clago,
        link: LinkFunction::Logit,
        intercept: false,
        true_beta: ParameterVector::new(0.0, beta1.to_vec(), vec![-0.2]),
        bounds: bounds(&[0.0, 0.0], &[2.0, 8.0]),
        cost,
        theta: 0.8,
        stages: vec![stage(j.0, n.0), stage(j.1, n.1)],
        stage1: Stage1Packages::Fixed {
            package: vec![1.0, 4.0],
        },
        covariates: CovariateSpec::StandardNormal { q: 1 },
        error: ErrorSpec::Normal { sigma: SIM1_SIGMA },
        adherence: AdherenceSpec::UniformFactor {
            lo: SIM1_ADHERENCE.0,
            hi: SIM1_ADHERENCE.1,
            scope: AdherenceScope::FirstStage,
        },
        tailor_to_centers: true,
        power_steering: None,
        most: None,
        recommend_increment: 0.01,
        set_increment: 0.1,
        eval_z: Some(vec![0.0]),
        alpha: 0.05,
        seed: 20_240_101,
        replications: 300,
    }
}

fn sim3_factorial_packages() -> Stage1Packages {
    Stage1Packages::Factorial {
        packages: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 4.0], vec![1.0, 4.0]],
    }
}

/// Small identity-link comparison; `null` sets both component effects to zero.
///
/// LAGO kinds run two stages of 8 centers of 10 (factorial first, then 4 control and
/// 4 recommended); the factorial kind runs one stage of 16 centers.
pub fn sim3(kind: DesignKind, null: bool) -> DesignSpec {
    let effects = if null { vec![0.0, 0.0] } else { vec![0.2, 0.3] };
    let (stages, adherence) = match kind {
        DesignKind::Factorial => (
            vec![StageSpec {
                intervention_centers: 16,
                control_centers: 0,
                center_size: 10,
            }],
            AdherenceSpec::Identity,
        ),
        _ => {
            let s1 = StageSpec {
                intervention_centers: 8,
                control_centers: 0,
                center_size: 10,
            };
            let s2 = StageSpec {
                intervention_centers: 4,
                control_centers: 4,
                center_size: 10,
            };
            let adherence = if kind == DesignKind::Uvlago {
                AdherenceSpec::UniformFactor {
                    lo: SIM1_ADHERENCE.0,
                    hi: SIM1_ADHERENCE.1,
                    scope: AdherenceScope::AllStages,
                }
            } else {
                AdherenceSpec::Identity
            };
            (vec![s1, s2], adherence)
        }
    };
    DesignSpec {
        kind,
        link: LinkFunction::Identity,
        intercept: true,
        true_beta: ParameterVector::new(0.1, effects, vec![-0.2]),
        bounds: bounds(&[0.0, 0.0], &[2.0, 8.0]),
        cost: sim1_linear_cost(),
        theta: 1.0,
        stages,
        stage1: sim3_factorial_packages(),
        covariates: CovariateSpec::StandardNormal { q: 1 },
        error: ErrorSpec::Normal { sigma: 1.5 },
        adherence,
        tailor_to_centers: true,
        power_steering: None,
        most: None,
        recommend_increment: 0.01,
        set_increment: 0.1,
        eval_z: Some(vec![0.0]),
        alpha: 0.05,
        seed: 20_240_103,
        replications: 500,
    }
}

/// Individual-level identity-link comparison of c-LAGO, factorial and MOST with 100
/// participants per stage over three stages.
pub fn sim4(kind: DesignKind) -> DesignSpec {
    let factorial_stage = StageSpec {
        intervention_centers: 100,
        control_centers: 0,
        center_size: 1,
    };
    let controlled = StageSpec {
        intervention_centers: 50,
        control_centers: 50,
        center_size: 1,
    };
    let stages = match kind {
        DesignKind::Clago | DesignKind::Uvlago => vec![factorial_stage, controlled, controlled],
        DesignKind::Factorial => vec![factorial_stage; 3],
        DesignKind::Most => vec![factorial_stage],
    };
    DesignSpec {
        kind,
        link: LinkFunction::Identity,
        intercept: true,
        true_beta: ParameterVector::new(0.1, vec![0.05, 0.12], vec![]),
        bounds: bounds(&[0.0, 0.0], &[2.0, 5.0]),
        cost: CostFunction::Linear {
            fixed_cost: 0.0,
            unit_costs: vec![1.0, 5.0],
        },
        theta: 0.8,
        stages,
        stage1: Stage1Packages::Factorial {
            packages: vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 5.0], vec![2.0, 5.0]],
        },
        covariates: CovariateSpec::None,
        error: ErrorSpec::Normal { sigma: 1.75 },
        adherence: AdherenceSpec::Identity,
        tailor_to_centers: false,
        power_steering: matches!(kind, DesignKind::Clago | DesignKind::Most).then_some(PowerSteering {
            power: 0.9,
            alpha: 0.05,
            planned_n_per_arm: SIM4_PLANNED_N_PER_ARM,
        }),
        most: (kind == DesignKind::Most).then(|| MostSpec {
            rct_n_per_arm: 100,
            bounds: Some(bounds(&[0.0, 0.0], &[100.0, 100.0])),
        }),
        recommend_increment: 0.01,
        set_increment: 0.1,
        eval_z: None,
        alpha: 0.05,
        seed: 20_240_104,
        replications: 500,
    }
}

/// Names accepted by [`by_name`].
pub const PRESET_NAMES: &[&str] = &[
    "sim1-linear",
    "sim1-cubic",
    "sim3-null",
    "sim3",
    "sim3-uvlago",
    "sim3-factorial",
    "sim4-clago",
    "sim4-factorial",
    "sim4-most",
];

/// Preset designs by name; `sim1-*` use the 20 centers per arm, 50 then 100 per center layout.
pub fn by_name(name: &str) -> Option<DesignSpec> {
    let sim1_beta = [0.1863, 0.15];
    Some(match name {
        "sim1-linear" => sim1(sim1_beta, 20, 50, 100, sim1_linear_cost()),
        "sim1-cubic" => sim1(sim1_beta, 20, 50, 100, sim1_cubic_cost()),
        "sim3-null" => sim3(DesignKind::Clago, true),
        "sim3" => sim3(DesignKind::Clago, false),
        "sim3-uvlago" => sim3(DesignKind::Uvlago, false),
        "sim3-factorial" => sim3(DesignKind::Factorial, false),
        "sim4-clago" => sim4(DesignKind::Clago),
        "sim4-factorial" => sim4(DesignKind::Factorial),
        "sim4-most" => sim4(DesignKind::Most),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_named_preset_validates() {
        for name in PRESET_NAMES {
            let spec = by_name(name).unwrap();
            spec.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(by_name("sim9").is_none());
    }
}
