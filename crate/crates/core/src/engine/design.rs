//! Declarative description of a simulated study.

use serde::{Deserialize, Serialize};

use crate::error::{LagoError, Result};
use crate::model::{ComponentBounds, CostFunction, LinkFunction, ParameterVector, TargetSpec};
use crate::optimizer::DEFAULT_RECOMMEND_INCREMENT;
use crate::inference::DEFAULT_SET_INCREMENT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    /// LAGO with a concurrent control arm.
    Clago,
    /// LAGO with unplanned variation in the implemented packages.
    Uvlago,
    /// Stage-1 factorial assignment repeated in every stage.
    Factorial,
    /// Factorial optimization phase followed by a standalone two-arm RCT.
    Most,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub intervention_centers: usize,
    #[serde(default)]
    pub control_centers: usize,
    pub center_size: usize,
}

impl StageSpec {
    pub fn centers(&self) -> usize {
        self.intervention_centers + self.control_centers
    }

    pub fn participants(&self) -> usize {
        self.centers() * self.center_size
    }
}

/// Packages implemented in the first stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Stage1Packages {
    /// Every intervention center receives `package`; control centers receive zero.
    Fixed { package: Vec<f64> },
    /// Every center draws one package uniformly; a zero draw makes it a control center.
    Factorial { packages: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSpec {
    #[default]
    None,
    /// `q` independent standard normal center characteristics.
    StandardNormal { q: usize },
    /// Rows drawn uniformly with replacement.
    Empirical { values: Vec<Vec<f64>> },
}

impl CovariateSpec {
    pub fn q(&self) -> usize {
        match self {
            CovariateSpec::None => 0,
            CovariateSpec::StandardNormal { q } => *q,
            CovariateSpec::Empirical { values } => values.first().map_or(0, Vec::len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorSpec {
    Normal { sigma: f64 },
}

impl ErrorSpec {
    pub fn sigma(&self) -> f64 {
        match self {
            ErrorSpec::Normal { sigma } => *sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdherenceScope {
    FirstStage,
    AllStages,
}

/// Map from the recommended to the implemented package.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdherenceSpec {
    #[default]
    Identity,
    /// Each component of each center multiplied by an independent `U(lo, hi)` factor,
    /// then clamped to the bounds.
    UniformFactor {
        lo: f64,
        hi: f64,
        scope: AdherenceScope,
    },
}

impl AdherenceSpec {
    pub fn applies_to(&self, stage: u32) -> bool {
        match self {
            AdherenceSpec::Identity => false,
            AdherenceSpec::UniformFactor { scope, .. } => {
                *scope == AdherenceScope::AllStages || stage == 1
            }
        }
    }
}

fn default_power() -> f64 {
    0.9
}

fn default_alpha() -> f64 {
    0.05
}

/// Escalate later-stage packages until the projected two-sample power reaches `power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSteering {
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub planned_n_per_arm: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MostSpec {
    pub rct_n_per_arm: usize,
    /// Bounds for the optimization-phase recommendation; the design bounds when absent.
    #[serde(default)]
    pub bounds: Option<ComponentBounds>,
}

fn default_true() -> bool {
    true
}

fn default_recommend_increment() -> f64 {
    DEFAULT_RECOMMEND_INCREMENT
}

fn default_set_increment() -> f64 {
    DEFAULT_SET_INCREMENT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub link: LinkFunction,
    #[serde(default = "default_true")]
    pub intercept: bool,
    pub true_beta: ParameterVector,
    pub bounds: ComponentBounds,
    pub cost: CostFunction,
    pub theta: f64,
    pub stages: Vec<StageSpec>,
    pub stage1: Stage1Packages,
    #[serde(default)]
    pub covariates: CovariateSpec,
    pub error: ErrorSpec,
    #[serde(default)]
    pub adherence: AdherenceSpec,
    /// Recommend per center from its own `z`; otherwise every center gets the `eval_z` package.
    #[serde(default = "default_true")]
    pub tailor_to_centers: bool,
    #[serde(default)]
    pub power_steering: Option<PowerSteering>,
    #[serde(default)]
    pub most: Option<MostSpec>,
    #[serde(default = "default_recommend_increment")]
    pub recommend_increment: f64,
    #[serde(default = "default_set_increment")]
    pub set_increment: f64,
    /// Covariates at which recommendations and sets are evaluated; zeros when absent.
    #[serde(default)]
    pub eval_z: Option<Vec<f64>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    pub replications: usize,
}

impl DesignSpec {
    pub fn p(&self) -> usize {
        self.true_beta.p()
    }

    pub fn q(&self) -> usize {
        self.true_beta.q()
    }

    pub fn eval_z(&self) -> Vec<f64> {
        self.eval_z.clone().unwrap_or_else(|| vec![0.0; self.q()])
    }

    pub fn target(&self) -> TargetSpec {
        TargetSpec { theta: self.theta }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LagoError::InvalidInput(m));
        let p = self.p();
        self.bounds.validate()?;
        self.cost.validate()?;
        if self.bounds.len() != p {
            return bad(format!("bounds has {} components, true_beta.effects has {p}", self.bounds.len()));
        }
        if self.cost.len() != p {
            return bad(format!("cost has {} components, true_beta.effects has {p}", self.cost.len()));
        }
        if self.covariates.q() != self.q() {
            return bad(format!(
                "covariates generate {} values, true_beta.covariate_effects has {}",
                self.covariates.q(),
                self.q()
            ));
        }
        if let CovariateSpec::Empirical { values } = &self.covariates {
            if values.is_empty() || values.iter().any(|r| r.len() != self.q()) {
                return bad("covariates.values must be non-empty rows of equal length".into());
            }
        }
        if self.eval_z().len() != self.q() {
            return bad(format!("eval_z must have {} entries", self.q()));
        }
        TargetSpec::new(self.theta, self.link)?;
        if self.stages.is_empty() {
            return bad("stages must not be empty".into());
        }
        for (k, s) in self.stages.iter().enumerate() {
            if s.center_size == 0 || s.centers() == 0 {
                return bad(format!("stages[{k}] needs at least one center of positive size"));
            }
        }
        let dim = self.true_beta.dim();
        let total: usize = self.stages.iter().map(StageSpec::participants).sum();
        if total <= dim {
            return bad(format!("{total} participants cannot identify {dim} coefficients"));
        }
        match &self.stage1 {
            Stage1Packages::Fixed { package } => {
                if package.len() != p {
                    return bad(format!("stage1.package must have {p} components"));
                }
                if !crate::model::InterventionPackage(package.clone()).is_within(&self.bounds) {
                    return bad("stage1.package lies outside bounds".into());
                }
            }
            Stage1Packages::Factorial { packages } => {
                if packages.is_empty() {
                    return bad("stage1.packages must not be empty".into());
                }
                for (i, pk) in packages.iter().enumerate() {
                    if pk.len() != p {
                        return bad(format!("stage1.packages[{i}] must have {p} components"));
                    }
                    let zero = pk.iter().all(|v| *v == 0.0);
                    if !zero && !crate::model::InterventionPackage(pk.clone()).is_within(&self.bounds) {
                        return bad(format!("stage1.packages[{i}] lies outside bounds"));
                    }
                }
            }
        }
        if let AdherenceSpec::UniformFactor { lo, hi, .. } = self.adherence {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad("adherence requires 0 < lo <= hi".into());
            }
        }
        if self.kind == DesignKind::Most {
            match &self.most {
                None => return bad("most design requires a `most` section".into()),
                Some(m) => {
                    if m.rct_n_per_arm < 2 {
                        return bad("most.rct_n_per_arm must be at least 2".into());
                    }
                    if let Some(b) = &m.bounds {
                        b.validate()?;
                        if b.len() != p {
                            return bad(format!("most.bounds must have {p} components"));
                        }
                    }
                }
            }
        }
        if let Some(ps) = &self.power_steering {
            if ps.planned_n_per_arm < 2 || !(ps.power > 0.0 && ps.power < 1.0) {
                return bad("power_steering needs planned_n_per_arm >= 2 and 0 < power < 1".into());
            }
        }
        if !(self.recommend_increment > 0.0) || !(self.set_increment > 0.0) {
            return bad("increments must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must be in (0, 1)".into());
        }
        if !(self.error.sigma() >= 0.0) {
            return bad("error sigma must be non-negative".into());
        }
        if self.replications < 2 {
            return bad("replications must be at least 2".into());
        }
        Ok(())
    }
}
