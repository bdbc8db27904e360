//! Pointwise intervals for the mean response, the confidence set for the optimal
//! package, and Scheffe-type simultaneous bands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LagoError, Result};
use crate::estimation::FitResult;
use crate::grid::{Grid, DEFAULT_GRID_CAP};
use crate::model::{cost, CenterCovariates, ComponentBounds, CostFunction, InterventionPackage, TargetSpec};
use crate::stats::{chi_square_quantile, normal_quantile, quantile_sorted};

pub const DEFAULT_SET_INCREMENT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanInterval {
    pub x: InterventionPackage,
    pub mean_hat: f64,
    pub lower: f64,
    pub upper: f64,
    /// Standard error on the link scale.
    pub se_eta: f64,
}

fn check_dims(fit: &FitResult, x: &[f64], z: &CenterCovariates) -> Result<()> {
    if x.len() != fit.p() {
        return Err(LagoError::DimensionMismatch {
            what: "intervention package",
            expected: fit.p(),
            found: x.len(),
        });
    }
    if z.len() != fit.q() {
        return Err(LagoError::DimensionMismatch {
            what: "center covariates",
            expected: fit.q(),
            found: z.len(),
        });
    }
    Ok(())
}

/// `g^-1(eta_hat -/+ mult * se)` at one package.
fn interval_at(fit: &FitResult, x: &[f64], z: &[f64], mult: f64) -> Result<MeanInterval> {
    let link = fit.link;
    let eta = fit.beta_hat.eta_unchecked(x, z);
    let se = fit.eta_se(x, z)?;
    Ok(MeanInterval {
        x: InterventionPackage(x.to_vec()),
        mean_hat: link.inverse(eta),
        lower: link.inverse(eta - mult * se),
        upper: link.inverse(eta + mult * se),
        se_eta: se,
    })
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(LagoError::InvalidInput(format!("level {level} must be in (0, 1)")));
    }
    Ok(())
}

/// Wald interval on the link scale mapped through `g^-1`.
pub fn mean_ci(fit: &FitResult, x: &InterventionPackage, z: &CenterCovariates, level: f64) -> Result<MeanInterval> {
    check_level(level)?;
    check_dims(fit, x.doses(), z)?;
    interval_at(fit, x.doses(), z.values(), normal_quantile(0.5 + level / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub grid_increment: f64,
    pub members: Vec<InterventionPackage>,
    pub total_grid_points: usize,
}

impl ConfidenceSet {
    /// `|members| / total_grid_points`.
    pub fn set_percentage(&self) -> f64 {
        self.members.len() as f64 / self.total_grid_points as f64
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.members.iter().any(|m| m.doses() == x)
    }

    /// First, second and third quartiles of member cost.
    pub fn cost_quartiles(&self, cf: &CostFunction) -> Result<Option<[f64; 3]>> {
        if self.members.is_empty() {
            return Ok(None);
        }
        let mut costs = self
            .members
            .iter()
            .map(|m| cost(cf, m))
            .collect::<Result<Vec<_>>>()?;
        costs.sort_by(|a, b| a.total_cmp(b));
        Ok(Some([0.25, 0.5, 0.75].map(|p| quantile_sorted(&costs, p))))
    }
}

fn grid_intervals(
    fit: &FitResult,
    bounds: &ComponentBounds,
    z: &CenterCovariates,
    increment: f64,
    mult: f64,
) -> Result<(Grid, Vec<MeanInterval>)> {
    if bounds.len() != fit.p() {
        return Err(LagoError::DimensionMismatch {
            what: "bounds",
            expected: fit.p(),
            found: bounds.len(),
        });
    }
    check_dims(fit, &bounds.lower, z)?;
    let grid = Grid::with_cap(bounds, increment, DEFAULT_GRID_CAP)?;
    let intervals = (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![0usize; grid.dims()],
            |idx, f| {
                grid.unravel(f, idx);
                interval_at(fit, &grid.point(idx), z.values(), mult)
            },
        )
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, intervals))
}

/// Grid packages whose 95% interval for the mean contains `theta`.
pub fn confidence_set(
    fit: &FitResult,
    bounds: &ComponentBounds,
    z: &CenterCovariates,
    target: &TargetSpec,
    increment: f64,
) -> Result<ConfidenceSet> {
    confidence_set_at_level(fit, bounds, z, target, increment, 0.95)
}

pub fn confidence_set_at_level(
    fit: &FitResult,
    bounds: &ComponentBounds,
    z: &CenterCovariates,
    target: &TargetSpec,
    increment: f64,
    level: f64,
) -> Result<ConfidenceSet> {
    check_level(level)?;
    let mult = normal_quantile(0.5 + level / 2.0);
    let (grid, intervals) = grid_intervals(fit, bounds, z, increment, mult)?;
    let theta = target.theta;
    Ok(ConfidenceSet {
        grid_increment: increment,
        total_grid_points: grid.len(),
        members: intervals
            .into_iter()
            .filter(|iv| iv.lower <= theta && theta <= iv.upper)
            .map(|iv| iv.x)
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandEntry {
    pub x: InterventionPackage,
    pub mean_hat: f64,
    pub band_lower: f64,
    pub band_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBands {
    pub grid_increment: f64,
    /// `sqrt(chi^2_{level, d})` with `d` the number of estimated coefficients.
    pub multiplier: f64,
    pub entries: Vec<BandEntry>,
}

/// Scheffe multiplier for a fit with `d` estimated coefficients.
pub fn band_multiplier(d: usize, level: f64) -> f64 {
    chi_square_quantile(level, d as f64).sqrt()
}

pub fn confidence_bands(
    fit: &FitResult,
    bounds: &ComponentBounds,
    z: &CenterCovariates,
    increment: f64,
) -> Result<ConfidenceBands> {
    confidence_bands_at_level(fit, bounds, z, increment, 0.95)
}

pub fn confidence_bands_at_level(
    fit: &FitResult,
    bounds: &ComponentBounds,
    z: &CenterCovariates,
    increment: f64,
    level: f64,
) -> Result<ConfidenceBands> {
    check_level(level)?;
    let multiplier = band_multiplier(fit.n_params(), level);
    let (_, intervals) = grid_intervals(fit, bounds, z, increment, multiplier)?;
    Ok(ConfidenceBands {
        grid_increment: increment,
        multiplier,
        entries: intervals
            .into_iter()
            .map(|iv| BandEntry {
                x: iv.x,
                mean_hat: iv.mean_hat,
                band_lower: iv.lower,
                band_upper: iv.upper,
            })
            .collect(),
    })
}
