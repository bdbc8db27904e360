//! Cheapest package whose model mean reaches the target:
//! `min C(x)  s.t.  g^-1(b0 + b1'x + b2'z) >= theta,  L <= x <= U`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LagoError, Result};
use crate::estimation::FitResult;
use crate::grid::{Grid, DEFAULT_GRID_CAP};
use crate::model::{
    cost, mean_response, CenterCovariates, ComponentBounds, CostFunction, InterventionPackage,
    LinkFunction, ParameterVector, TargetSpec,
};
use crate::stats::two_sided_power;

pub const DEFAULT_RECOMMEND_INCREMENT: f64 = 0.01;
const LINEAR_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendMethod {
    LinearRanking,
    GridSearch,
    FallbackUpperBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub package: InterventionPackage,
    pub projected_mean: f64,
    pub cost: f64,
    pub feasible: bool,
    pub method: RecommendMethod,
}

fn check_problem(
    beta: &ParameterVector,
    z: &CenterCovariates,
    bounds: &ComponentBounds,
    cf: &CostFunction,
) -> Result<()> {
    bounds.validate()?;
    cf.validate()?;
    if bounds.len() != beta.p() {
        return Err(LagoError::DimensionMismatch {
            what: "bounds",
            expected: beta.p(),
            found: bounds.len(),
        });
    }
    if cf.len() != beta.p() {
        return Err(LagoError::DimensionMismatch {
            what: "cost function",
            expected: beta.p(),
            found: cf.len(),
        });
    }
    if z.len() != beta.q() {
        return Err(LagoError::DimensionMismatch {
            what: "center covariates",
            expected: beta.q(),
            found: z.len(),
        });
    }
    Ok(())
}

fn finish(
    link: LinkFunction,
    beta: &ParameterVector,
    z: &CenterCovariates,
    cf: &CostFunction,
    package: Vec<f64>,
    feasible: bool,
    method: RecommendMethod,
) -> Result<Recommendation> {
    let package = InterventionPackage(package);
    Ok(Recommendation {
        projected_mean: mean_response(link, beta, &package, z)?,
        cost: cost(cf, &package)?,
        package,
        feasible,
        method,
    })
}

fn fallback(
    link: LinkFunction,
    beta: &ParameterVector,
    z: &CenterCovariates,
    bounds: &ComponentBounds,
    cf: &CostFunction,
) -> Result<Recommendation> {
    finish(
        link,
        beta,
        z,
        cf,
        bounds.upper.clone(),
        false,
        RecommendMethod::FallbackUpperBounds,
    )
}

/// Components ordered by decreasing cost efficiency `b1p / c_p`, ties to the lower index.
/// Components with `b1p <= 0` are omitted.
pub fn efficiency_order(effects: &[f64], unit_costs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..effects.len()).filter(|&p| effects[p] > 0.0).collect();
    order.sort_by(|&i, &j| {
        let (ri, rj) = (effects[i] / unit_costs[i], effects[j] / unit_costs[j]);
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    order
}

/// Exact solution for linear cost by raising components in cost-efficiency order.
pub fn recommend_linear(
    beta: &ParameterVector,
    z: &CenterCovariates,
    bounds: &ComponentBounds,
    cf: &CostFunction,
    target: &TargetSpec,
    link: LinkFunction,
) -> Result<Recommendation> {
    check_problem(beta, z, bounds, cf)?;
    let unit_costs = match cf {
        CostFunction::Linear { unit_costs, .. } => unit_costs,
        CostFunction::Cubic { .. } => {
            return Err(LagoError::InvalidInput(
                "linear ranking requires a linear cost function".into(),
            ))
        }
    };
    let goal = target.eta(link);
    if !goal.is_finite() {
        return fallback(link, beta, z, bounds, cf);
    }
    let mut x = bounds.lower.clone();
    let mut eta = beta.eta_unchecked(&x, z.values());
    if eta >= goal {
        return finish(link, beta, z, cf, x, true, RecommendMethod::LinearRanking);
    }
    for p in efficiency_order(&beta.effects, unit_costs) {
        let b = beta.effects[p];
        let gain = b * (bounds.upper[p] - bounds.lower[p]);
        if eta + gain >= goal {
            x[p] = (bounds.lower[p] + (goal - eta) / b).clamp(bounds.lower[p], bounds.upper[p]);
            let rec = finish(link, beta, z, cf, x, true, RecommendMethod::LinearRanking)?;
            let feasible = rec.projected_mean >= target.theta - LINEAR_SLACK;
            return Ok(Recommendation { feasible, ..rec });
        }
        x[p] = bounds.upper[p];
        eta += gain;
    }
    fallback(link, beta, z, bounds, cf)
}

/// Exhaustive search over the grid `L + i * increment`.
pub fn recommend_grid(
    beta: &ParameterVector,
    z: &CenterCovariates,
    bounds: &ComponentBounds,
    cf: &CostFunction,
    target: &TargetSpec,
    link: LinkFunction,
    increment: f64,
) -> Result<Recommendation> {
    recommend_grid_with_cap(beta, z, bounds, cf, target, link, increment, DEFAULT_GRID_CAP)
}

#[derive(Clone, Copy)]
struct Best {
    cost: f64,
    flat: usize,
}

fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (Some(x), Some(y)) => {
            // flat index order is lexicographic order of packages
            if y.cost < x.cost || (y.cost == x.cost && y.flat < x.flat) {
                Some(y)
            } else {
                Some(x)
            }
        }
        (x, None) => x,
        (None, y) => y,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn recommend_grid_with_cap(
    beta: &ParameterVector,
    z: &CenterCovariates,
    bounds: &ComponentBounds,
    cf: &CostFunction,
    target: &TargetSpec,
    link: LinkFunction,
    increment: f64,
    cap: f64,
) -> Result<Recommendation> {
    check_problem(beta, z, bounds, cf)?;
    let grid = Grid::with_cap(bounds, increment, cap)?;
    let dims = grid.dims();
    let costs: Vec<Vec<f64>> = grid
        .axes
        .iter()
        .enumerate()
        .map(|(p, a)| a.iter().map(|v| cf.component(p, *v)).collect())
        .collect();
    let etas: Vec<Vec<f64>> = grid
        .axes
        .iter()
        .zip(&beta.effects)
        .map(|(a, b)| a.iter().map(|v| b * v).collect())
        .collect();
    let base = beta.baseline_eta(z.values());
    let fixed = cf.fixed_part();
    let theta = target.theta;
    let inner: usize = grid.axes[1..].iter().map(Vec::len).product();

    let best = (0..grid.axes[0].len())
        .into_par_iter()
        .map(|i0| {
            let mut best: Option<Best> = None;
            let mut idx = vec![0usize; dims];
            idx[0] = i0;
            for k in 0..inner {
                let mut rem = k;
                for p in (1..dims).rev() {
                    let len = grid.axes[p].len();
                    idx[p] = rem % len;
                    rem /= len;
                }
                let mut c = 0.0;
                for p in 0..dims {
                    c += costs[p][idx[p]];
                }
                let c = fixed + c;
                if best.is_some_and(|b| c > b.cost) {
                    continue;
                }
                let mut e = 0.0;
                for p in 0..dims {
                    e += etas[p][idx[p]];
                }
                if link.inverse(base + e) >= theta {
                    best = better(best, Some(Best {
                        cost: c,
                        flat: i0 * inner + k,
                    }));
                }
            }
            best
        })
        .reduce(|| None, better);

    match best {
        Some(b) => {
            let mut idx = vec![0usize; dims];
            grid.unravel(b.flat, &mut idx);
            finish(link, beta, z, cf, grid.point(&idx), true, RecommendMethod::GridSearch)
        }
        None => fallback(link, beta, z, bounds, cf),
    }
}

/// Linear ranking for linear costs, grid search at the default increment otherwise.
pub fn recommend(
    beta: &ParameterVector,
    z: &CenterCovariates,
    bounds: &ComponentBounds,
    cf: &CostFunction,
    target: &TargetSpec,
    link: LinkFunction,
) -> Result<Recommendation> {
    recommend_with_increment(beta, z, bounds, cf, target, link, DEFAULT_RECOMMEND_INCREMENT)
}

pub fn recommend_with_increment(
    beta: &ParameterVector,
    z: &CenterCovariates,
    bounds: &ComponentBounds,
    cf: &CostFunction,
    target: &TargetSpec,
    link: LinkFunction,
    increment: f64,
) -> Result<Recommendation> {
    if cf.is_linear() {
        recommend_linear(beta, z, bounds, cf, target, link)
    } else {
        recommend_grid(beta, z, bounds, cf, target, link, increment)
    }
}

/// Mean outcome of the control arm (zero package) under the fitted model.
pub fn control_mean(fit: &FitResult, z: &CenterCovariates) -> Result<f64> {
    mean_response(
        fit.link,
        &fit.beta_hat,
        &InterventionPackage::zeros(fit.p()),
        z,
    )
}

/// Power of a two-sided two-sample z test, `planned_n_per_arm` per arm, to detect
/// `projected_mean - control mean` with the fit's residual variance.
pub fn project_power(
    fit: &FitResult,
    candidate: &Recommendation,
    z: &CenterCovariates,
    planned_n_per_arm: usize,
    alpha: f64,
) -> Result<f64> {
    if planned_n_per_arm < 2 {
        return Err(LagoError::InvalidInput("planned_n_per_arm must be at least 2".into()));
    }
    let se = power_se(fit, planned_n_per_arm)?;
    let d = candidate.projected_mean - control_mean(fit, z)?;
    Ok(two_sided_power(d, se, alpha))
}

fn power_se(fit: &FitResult, n: usize) -> Result<f64> {
    let var = fit.residual_variance;
    if !(var > 0.0) || !var.is_finite() {
        return Err(LagoError::InvalidInput(format!(
            "residual variance {var} is not positive"
        )));
    }
    Ok((var * 2.0 / n as f64).sqrt())
}

/// Smallest mean difference whose two-sided power reaches `power`.
fn required_difference(se: f64, alpha: f64, power: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, se);
    while two_sided_power(hi, se, alpha) < power {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if two_sided_power(mid, se, alpha) < power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTarget {
    pub planned_n_per_arm: usize,
    pub power: f64,
    pub alpha: f64,
}

/// Recommendation escalated beyond the theta-minimal package until the projected
/// power reaches the target. The mean is raised to `control + d*`, where `d*` is the
/// smallest difference with the target power; with linear cost this walks the
/// cost-efficiency order. Falls back to the upper bounds when unattainable.
pub fn recommend_power_steered(
    fit: &FitResult,
    z: &CenterCovariates,
    bounds: &ComponentBounds,
    cf: &CostFunction,
    target: &TargetSpec,
    increment: f64,
    power: &PowerTarget,
) -> Result<Recommendation> {
    let link = fit.link;
    let rec = recommend_with_increment(&fit.beta_hat, z, bounds, cf, target, link, increment)?;
    if !rec.feasible {
        return Ok(rec);
    }
    if project_power(fit, &rec, z, power.planned_n_per_arm, power.alpha)? >= power.power {
        return Ok(rec);
    }
    let se = power_se(fit, power.planned_n_per_arm)?;
    let needed = control_mean(fit, z)? + required_difference(se, power.alpha, power.power);
    if !link.is_valid_mean(needed) {
        return fallback(link, &fit.beta_hat, z, bounds, cf);
    }
    let raised = TargetSpec {
        theta: needed.max(target.theta),
    };
    let steered = recommend_with_increment(&fit.beta_hat, z, bounds, cf, &raised, link, increment)?;
    if steered.feasible {
        Ok(steered)
    } else {
        fallback(link, &fit.beta_hat, z, bounds, cf)
    }
}
