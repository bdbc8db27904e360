//! Shared glue between the command line, config runs and the HTTP API.

use lago_core::optimizer::recommend_with_increment;
use lago_core::{
    recommend_grid, CenterCovariates, ComponentBounds, CostFunction, FitResult, LagoError,
    Recommendation, Result, TargetSpec,
};

use crate::config::Search;

/// Default grid increment when a grid search is requested without one.
pub const GRID_INCREMENT: f64 = 0.01;

/// Cost-minimizing package for `fit` at target `theta`.
pub fn recommend_for(
    fit: &FitResult,
    z: &[f64],
    bounds: &ComponentBounds,
    cost: &CostFunction,
    theta: f64,
    increment: Option<f64>,
    search: Search,
) -> Result<Recommendation> {
    let target = TargetSpec::new(theta, fit.link)?;
    let z = covariates(fit, z)?;
    let inc = increment.unwrap_or(GRID_INCREMENT);
    match search {
        Search::Auto => recommend_with_increment(&fit.beta_hat, &z, bounds, cost, &target, fit.link, inc),
        Search::Grid => recommend_grid(&fit.beta_hat, &z, bounds, cost, &target, fit.link, inc),
    }
}

/// Covariates for a fit; an empty list means all zeros.
pub fn covariates(fit: &FitResult, z: &[f64]) -> Result<CenterCovariates> {
    if z.is_empty() {
        return Ok(CenterCovariates::zeros(fit.q()));
    }
    if z.len() != fit.q() {
        return Err(LagoError::DimensionMismatch {
            what: "z",
            expected: fit.q(),
            found: z.len(),
        });
    }
    CenterCovariates::new(z.to_vec())
}
