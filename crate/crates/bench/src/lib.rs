//! Workloads shared by the benchmarks.

use lago_core::{Arm, CenterGroup, ComponentBounds, CostFunction, LinkFunction, ParameterVector, TrialDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three-stage logit trial shaped like a large field study: `centers` centers per stage,
/// two components, one center covariate, binary outcomes.
pub fn logit_trial(centers: usize, center_size: usize, seed: u64) -> TrialDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = ParameterVector::new(-0.14, vec![0.17, 0.034], vec![-0.2]);
    let mut groups = Vec::new();
    for stage in 1..=3u32 {
        for j in 0..centers {
            let control = j % 2 == 0;
            let a = if control {
                vec![0.0, 0.0]
            } else {
                vec![rng.random_range(1..=5) as f64, rng.random_range(1..=40) as f64]
            };
            let z = vec![rng.random_range(0.5..3.0)];
            let mu = LinkFunction::Logit.inverse(beta.eta_unchecked(&a, &z));
            let y = (0..center_size).map(|_| f64::from(u8::from(rng.random_bool(mu)))).collect();
            groups.push(CenterGroup {
                stage,
                center_id: format!("c{j}"),
                arm: if control { Arm::Control } else { Arm::Intervention },
                a,
                z,
                y,
            });
        }
    }
    TrialDataset::from_groups(2, 1, groups).expect("generated data is valid")
}

pub fn bounds() -> ComponentBounds {
    ComponentBounds::new(vec![1.0, 1.0], vec![5.0, 40.0]).expect("valid bounds")
}

pub fn linear_cost() -> CostFunction {
    CostFunction::linear(vec![800.0, 170.0]).expect("valid cost")
}

pub fn cubic_cost() -> CostFunction {
    "cubic:220,-950,1700,0/0.6,-24,380,0".parse().expect("valid cost")
}
