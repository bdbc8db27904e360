//! Data generation and per-replication analysis for each design kind.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Arm, CenterGroup, TrialDataset};
use crate::engine::design::{
    AdherenceSpec, CovariateSpec, DesignKind, DesignSpec, Stage1Packages, StageSpec,
};
use crate::error::{LagoError, Result};
use crate::estimation::{
    adjusted_group_test, fit_gee_with, two_sample_means_test, wald_component_test, FitOptions,
    FitResult, TestResult,
};
use crate::model::{CenterCovariates, ComponentBounds, InterventionPackage};
use crate::optimizer::{
    recommend_power_steered, recommend_with_increment, PowerTarget, Recommendation,
};
use crate::stats::z_two_sided;

/// Independent stream for replication `index`: identical whichever thread runs it.
pub fn replication_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct MostRecord {
    pub proceeded: bool,
    /// RCT package; `None` when the study stopped after the optimization phase.
    pub package: Option<Vec<f64>>,
    pub rct: Option<TrialDataset>,
    pub test: Option<TestResult>,
    /// Difference in RCT arm means and its Welch 95% interval.
    pub effect_estimate: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub index: usize,
    /// All generated data (for MOST, the optimization phase only).
    pub dataset: TrialDataset,
    /// Fit on stages `1..=k` at position `k - 1`; `None` when an interim fit failed in a
    /// design that does not need it.
    pub stage_fits: Vec<Option<FitResult>>,
    /// Recommendation at the evaluation covariates from `stage_fits[k - 1]`.
    pub stage_recommendations: Vec<Option<Recommendation>>,
    pub most: Option<MostRecord>,
}

impl Replication {
    pub fn final_fit(&self) -> Option<&FitResult> {
        self.stage_fits.last().and_then(Option::as_ref)
    }

    pub fn final_recommendation(&self) -> Option<&Recommendation> {
        self.stage_recommendations.last().and_then(Option::as_ref)
    }
}

struct Generator<'a> {
    spec: &'a DesignSpec,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn covariates(&mut self) -> Vec<f64> {
        match &self.spec.covariates {
            CovariateSpec::None => Vec::new(),
            CovariateSpec::StandardNormal { q } => {
                (0..*q).map(|_| StandardNormal.sample(&mut self.rng)).collect()
            }
            CovariateSpec::Empirical { values } => {
                values[self.rng.random_range(0..values.len())].clone()
            }
        }
    }

    fn adhere(&mut self, stage: u32, mut x: Vec<f64>) -> Vec<f64> {
        if let AdherenceSpec::UniformFactor { lo, hi, .. } = self.spec.adherence {
            if self.spec.adherence.applies_to(stage) {
                for v in &mut x {
                    *v *= if lo < hi { self.rng.random_range(lo..=hi) } else { lo };
                }
                self.spec.bounds.clamp(&mut x);
            }
        }
        x
    }

    fn outcomes(&mut self, a: &[f64], z: &[f64], n: usize) -> Vec<f64> {
        let mu = self.spec.link.inverse(self.spec.true_beta.eta_unchecked(a, z));
        let sigma = self.spec.error.sigma();
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut self.rng);
                mu + sigma * e
            })
            .collect()
    }

    fn center(&mut self, stage: u32, j: usize, arm: Arm, a: Vec<f64>, z: Vec<f64>, n: usize) -> CenterGroup {
        let y = self.outcomes(&a, &z, n);
        CenterGroup {
            stage,
            center_id: format!("s{stage}c{j}"),
            arm,
            a,
            z,
            y,
        }
    }

    /// A stage whose packages are drawn from the factorial list.
    fn factorial_stage(&mut self, stage: u32, s: &StageSpec, packages: &[Vec<f64>]) -> Vec<CenterGroup> {
        (0..s.centers())
            .map(|j| {
                let z = self.covariates();
                let pick = packages[self.rng.random_range(0..packages.len())].clone();
                let zero = pick.iter().all(|v| *v == 0.0);
                let (arm, a) = if zero {
                    (Arm::Control, pick)
                } else {
                    (Arm::Intervention, self.adhere(stage, pick))
                };
                self.center(stage, j, arm, a, z, s.center_size)
            })
            .collect()
    }

    /// A stage with a control arm and intervention packages from `package_for(z)`.
    fn controlled_stage(
        &mut self,
        stage: u32,
        s: &StageSpec,
        mut package_for: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<Vec<CenterGroup>> {
        let p = self.spec.p();
        let mut groups = Vec::with_capacity(s.centers());
        for j in 0..s.intervention_centers {
            let z = self.covariates();
            let rec = package_for(&z)?;
            let a = self.adhere(stage, rec);
            groups.push(self.center(stage, j, Arm::Intervention, a, z, s.center_size));
        }
        for j in 0..s.control_centers {
            let z = self.covariates();
            groups.push(self.center(stage, s.intervention_centers + j, Arm::Control, vec![0.0; p], z, s.center_size));
        }
        Ok(groups)
    }
}

fn fit_options(spec: &DesignSpec) -> FitOptions {
    FitOptions {
        intercept: spec.intercept,
        ..FitOptions::default()
    }
}

fn recommend_plain(spec: &DesignSpec, fit: &FitResult, z: &[f64], bounds: &ComponentBounds) -> Result<Recommendation> {
    recommend_with_increment(
        &fit.beta_hat,
        &CenterCovariates(z.to_vec()),
        bounds,
        &spec.cost,
        &spec.target(),
        fit.link,
        spec.recommend_increment,
    )
}

/// Package actually assigned to the next stage.
fn recommend_next(spec: &DesignSpec, fit: &FitResult, z: &[f64]) -> Result<Recommendation> {
    steered(spec, fit, z, &spec.bounds, spec.power_steering.map(|ps| ps.planned_n_per_arm))
}

fn steered(
    spec: &DesignSpec,
    fit: &FitResult,
    z: &[f64],
    bounds: &ComponentBounds,
    planned_n_per_arm: Option<usize>,
) -> Result<Recommendation> {
    match (&spec.power_steering, planned_n_per_arm) {
        (Some(ps), Some(planned_n_per_arm)) => recommend_power_steered(
            fit,
            &CenterCovariates(z.to_vec()),
            bounds,
            &spec.cost,
            &spec.target(),
            spec.recommend_increment,
            &PowerTarget {
                planned_n_per_arm,
                power: ps.power,
                alpha: ps.alpha,
            },
        ),
        _ => recommend_plain(spec, fit, z, bounds),
    }
}

fn with_stage<T>(stage: u32, r: Result<T>) -> Result<T> {
    r.map_err(|e| LagoError::InvalidInput(format!("stage {stage}: {e}")))
}

fn stage1_groups(g: &mut Generator<'_>, spec: &DesignSpec) -> Result<Vec<CenterGroup>> {
    let s = &spec.stages[0];
    match &spec.stage1 {
        Stage1Packages::Fixed { package } => g.controlled_stage(1, s, |_| Ok(package.clone())),
        Stage1Packages::Factorial { packages } => Ok(g.factorial_stage(1, s, packages)),
    }
}

fn build(spec: &DesignSpec, groups: Vec<CenterGroup>) -> Result<TrialDataset> {
    TrialDataset::from_groups(spec.p(), spec.q(), groups)
}

/// Multi-stage LAGO: every later stage is assigned the package recommended from all
/// earlier data.
pub fn simulate_lago(spec: &DesignSpec, index: usize) -> Result<Replication> {
    let mut g = Generator {
        spec,
        rng: replication_rng(spec.seed, index),
    };
    let opts = fit_options(spec);
    let eval_z = spec.eval_z();
    let mut groups = stage1_groups(&mut g, spec)?;
    let mut stage_fits = Vec::new();
    let mut stage_recs = Vec::new();
    for k in 1..=spec.stages.len() as u32 {
        let data = build(spec, groups.clone())?;
        let fit = with_stage(k, fit_gee_with(&data, spec.link, &opts))?;
        stage_recs.push(Some(with_stage(k, recommend_plain(spec, &fit, &eval_z, &spec.bounds))?));
        if (k as usize) < spec.stages.len() {
            let s = spec.stages[k as usize];
            let shared = if spec.tailor_to_centers {
                None
            } else {
                Some(with_stage(k + 1, recommend_next(spec, &fit, &eval_z))?.package.0)
            };
            let next = g.controlled_stage(k + 1, &s, |z| match &shared {
                Some(x) => Ok(x.clone()),
                None => with_stage(k + 1, recommend_next(spec, &fit, z)).map(|r| r.package.0),
            })?;
            groups.extend(next);
        }
        stage_fits.push(Some(fit));
    }
    Ok(Replication {
        index,
        dataset: build(spec, groups)?,
        stage_fits,
        stage_recommendations: stage_recs,
        most: None,
    })
}

/// Factorial assignment in every stage; interim fits are reported when estimable.
pub fn simulate_factorial(spec: &DesignSpec, index: usize) -> Result<Replication> {
    let packages = match &spec.stage1 {
        Stage1Packages::Factorial { packages } => packages.clone(),
        Stage1Packages::Fixed { package } => vec![vec![0.0; spec.p()], package.clone()],
    };
    let mut g = Generator {
        spec,
        rng: replication_rng(spec.seed, index),
    };
    let opts = fit_options(spec);
    let eval_z = spec.eval_z();
    let mut groups = Vec::new();
    let mut stage_fits = Vec::new();
    let mut stage_recs = Vec::new();
    let last = spec.stages.len() as u32;
    for (k, s) in (1..).zip(&spec.stages) {
        groups.extend(g.factorial_stage(k, s, &packages));
        let data = build(spec, groups.clone())?;
        match fit_gee_with(&data, spec.link, &opts) {
            Ok(fit) => {
                stage_recs.push(recommend_plain(spec, &fit, &eval_z, &spec.bounds).ok());
                stage_fits.push(Some(fit));
            }
            Err(e) if k == last => return Err(LagoError::InvalidInput(format!("final fit: {e}"))),
            Err(_) => {
                stage_fits.push(None);
                stage_recs.push(None);
            }
        }
    }
    Ok(Replication {
        index,
        dataset: build(spec, groups)?,
        stage_fits,
        stage_recommendations: stage_recs,
        most: None,
    })
}

/// Factorial optimization phase, then a 1:1 RCT of the recommended package restricted
/// to components with positive estimated effect. Stops after the first phase when no
/// component looks beneficial.
pub fn simulate_most(spec: &DesignSpec, index: usize) -> Result<Replication> {
    let most = spec
        .most
        .as_ref()
        .ok_or_else(|| LagoError::InvalidInput("most design requires a `most` section".into()))?;
    let mut g = Generator {
        spec,
        rng: replication_rng(spec.seed, index),
    };
    let groups = stage1_groups(&mut g, spec)?;
    let data = build(spec, groups)?;
    let fit = with_stage(1, fit_gee_with(&data, spec.link, &fit_options(spec)))?;
    let eval_z = spec.eval_z();
    let bounds = most.bounds.clone().unwrap_or_else(|| spec.bounds.clone());
    let stage_rec = recommend_plain(spec, &fit, &eval_z, &spec.bounds).ok();

    let positive: Vec<bool> = fit.beta_hat.effects.iter().map(|b| *b > 0.0).collect();
    let record = if positive.iter().any(|p| *p) {
        // Power steering, when configured, targets the RCT actually run.
        let rec = with_stage(2, steered(spec, &fit, &eval_z, &bounds, Some(most.rct_n_per_arm)))?;
        let package: Vec<f64> = rec
            .package
            .0
            .iter()
            .zip(&positive)
            .zip(&bounds.lower)
            .map(|((x, pos), lo)| if *pos { *x } else { *lo })
            .collect();
        let mut groups = Vec::with_capacity(2 * most.rct_n_per_arm);
        for j in 0..most.rct_n_per_arm {
            let z = g.covariates();
            groups.push(g.center(1, j, Arm::Intervention, package.clone(), z, 1));
        }
        for j in 0..most.rct_n_per_arm {
            let z = g.covariates();
            groups.push(g.center(1, most.rct_n_per_arm + j, Arm::Control, vec![0.0; spec.p()], z, 1));
        }
        let rct = build(spec, groups)?;
        let test = two_sample_means_test(&rct)?;
        let diff = crate::stats::mean(&rct.arm_outcomes(Arm::Intervention))
            - crate::stats::mean(&rct.arm_outcomes(Arm::Control));
        let half = if test.statistic == 0.0 {
            0.0
        } else {
            z_two_sided(0.05) * (diff / test.statistic).abs()
        };
        MostRecord {
            proceeded: true,
            package: Some(package),
            rct: Some(rct),
            test: Some(test),
            effect_estimate: Some((diff, diff - half, diff + half)),
        }
    } else {
        MostRecord {
            proceeded: false,
            package: None,
            rct: None,
            test: None,
            effect_estimate: None,
        }
    };
    Ok(Replication {
        index,
        dataset: data,
        stage_fits: vec![Some(fit)],
        stage_recommendations: vec![stage_rec],
        most: Some(record),
    })
}

/// Generates and analyses replication `index` of `spec`.
pub fn simulate(spec: &DesignSpec, index: usize) -> Result<Replication> {
    match spec.kind {
        DesignKind::Clago | DesignKind::Uvlago => simulate_lago(spec, index),
        DesignKind::Factorial => simulate_factorial(spec, index),
        DesignKind::Most => simulate_most(spec, index),
    }
}

/// Hypothesis tests on the final data; a test that cannot be formed is `None`.
pub struct FinalTests {
    pub wald: Option<TestResult>,
    pub two_sample: Option<TestResult>,
    pub adjusted: Option<TestResult>,
}

pub fn final_tests(spec: &DesignSpec, rep: &Replication) -> FinalTests {
    let components: Vec<usize> = (0..spec.p()).collect();
    FinalTests {
        wald: rep.final_fit().and_then(|f| wald_component_test(f, &components).ok()),
        two_sample: two_sample_means_test(&rep.dataset).ok(),
        adjusted: adjusted_group_test(&rep.dataset, spec.link).ok(),
    }
}

/// True mean at `x` under the generating model.
pub fn true_mean(spec: &DesignSpec, x: &[f64], z: &[f64]) -> f64 {
    spec.link.inverse(spec.true_beta.eta_unchecked(x, z))
}

/// The true-parameter recommendation at the evaluation covariates.
pub fn true_optimum(spec: &DesignSpec) -> Result<Recommendation> {
    recommend_with_increment(
        &spec.true_beta,
        &CenterCovariates(spec.eval_z()),
        &spec.bounds,
        &spec.cost,
        &spec.target(),
        spec.link,
        spec.recommend_increment,
    )
}

pub fn package(x: &[f64]) -> InterventionPackage {
    InterventionPackage(x.to_vec())
}
