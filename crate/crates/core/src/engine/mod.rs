//! Monte Carlo trial engine: declarative designs, replication, aggregation.

pub mod design;
pub mod metrics;
pub mod presets;
pub mod simulate;

use rayon::prelude::*;

pub use design::{
    AdherenceScope, AdherenceSpec, CovariateSpec, DesignKind, DesignSpec, ErrorSpec, MostSpec,
    PowerSteering, Stage1Packages, StageSpec,
};
pub use metrics::{ReplicationSummary, StudyMetrics};
pub use simulate::{simulate, Replication};

use crate::error::{LagoError, Result};
use metrics::{aggregate, summarize, Truth};

/// Runs every replication and aggregates. Replications use independent RNG streams and
/// are reduced in index order, so the result does not depend on the thread count.
pub fn run_study(spec: &DesignSpec) -> Result<StudyMetrics> {
    spec.validate()?;
    let truth = Truth::new(spec)?;
    let outcomes: Vec<std::result::Result<ReplicationSummary, String>> = (0..spec.replications)
        .into_par_iter()
        .map(|r| {
            simulate(spec, r)
                .map(|rep| summarize(spec, &truth, &rep))
                .map_err(|e| format!("replication {r}: {e}"))
        })
        .collect();
    let mut summaries = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(s) => summaries.push(s),
            Err(m) => failures.push(m),
        }
    }
    Ok(aggregate(spec, &truth, &summaries, failures))
}

/// [`run_study`] on a dedicated pool; `None` uses the global pool.
pub fn run_study_with_threads(spec: &DesignSpec, threads: Option<usize>) -> Result<StudyMetrics> {
    match threads {
        None => run_study(spec),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| LagoError::InvalidInput(format!("thread pool: {e}")))?
            .install(|| run_study(spec)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Arm;

    fn small_sim1() -> DesignSpec {
        let mut s = presets::sim1([0.1863, 0.15], 6, 20, 30, presets::sim1_linear_cost());
        s.replications = 4;
        s
    }

    #[test]
    fn noiseless_data_recovers_truth_and_optimum() {
        let mut spec = small_sim1();
        spec.error = ErrorSpec::Normal { sigma: 0.0 };
        let truth = simulate::true_optimum(&spec).unwrap();
        for r in 0..3 {
            let rep = simulate(&spec, r).unwrap();
            let fit = rep.final_fit().unwrap();
            for (a, b) in fit.beta_hat.to_vec().iter().zip(spec.true_beta.to_vec()) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
            let x = &rep.final_recommendation().unwrap().package.0;
            for (a, b) in x.iter().zip(&truth.package.0) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn replication_layout_matches_design() {
        let spec = small_sim1();
        let rep = simulate(&spec, 0).unwrap();
        rep.dataset.validate().unwrap();
        assert_eq!(rep.dataset.num_stages(), 2);
        assert_eq!(rep.dataset.stage_sizes(), vec![12 * 20, 12 * 30]);
        assert_eq!(rep.dataset.arm_outcomes(Arm::Control).len(), 6 * 20 + 6 * 30);
        // stage-1 adherence keeps packages inside the bounds around (1, 4)
        for g in rep.dataset.groups().iter().filter(|g| g.stage == 1 && g.arm == Arm::Intervention) {
            assert!((0.8..=1.2).contains(&g.a[0]) && (3.2..=4.8).contains(&g.a[1]), "{:?}", g.a);
        }
        assert_eq!(rep.stage_fits.len(), 2);
    }

    #[test]
    fn replications_are_reproducible_and_distinct() {
        let spec = small_sim1();
        let a = simulate(&spec, 1).unwrap();
        let b = simulate(&spec, 1).unwrap();
        let c = simulate(&spec, 2).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn study_output_does_not_depend_on_thread_count() {
        let spec = small_sim1();
        let one = run_study_with_threads(&spec, Some(1)).unwrap();
        let four = run_study_with_threads(&spec, Some(4)).unwrap();
        assert_eq!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&four).unwrap()
        );
        assert_eq!(one.replications, 4);
        assert_eq!(one.stages.len(), 2);
    }

    #[test]
    fn factorial_and_most_run() {
        let mut f = presets::sim4(DesignKind::Factorial);
        f.replications = 3;
        let m = run_study(&f).unwrap();
        assert_eq!(m.failures, 0);
        assert_eq!(m.stages.len(), 3);
        assert!(m.power.two_sample_z.is_some());

        let mut most = presets::sim4(DesignKind::Most);
        most.replications = 3;
        let m = run_study(&most).unwrap();
        let mm = m.most.unwrap();
        assert!(mm.proceeded <= 3);
        // one component at most under near-unbounded linear ranking
        assert!(mm.component_included.iter().sum::<usize>() <= mm.proceeded);
    }

    #[test]
    fn design_spec_round_trips_through_json() {
        let spec = presets::sim4(DesignKind::Clago);
        let text = serde_json::to_string(&spec).unwrap();
        let back: DesignSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
