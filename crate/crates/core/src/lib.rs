//! Learn-As-you-GO (LAGO) adaptive trial analysis: the outcome model, GEE-type
//! estimation with sandwich covariance, cost-minimizing package recommendation,
//! confidence sets for the optimal package and a Monte Carlo trial engine.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod inference;
pub mod optimizer;
pub mod model;
pub mod stats;

pub use error::{LagoError, Result};
pub use model::{
    cost, mean_response, CenterCovariates, ComponentBounds, CostFunction, CubicTerm,
    InterventionPackage, LinkFunction, ParameterVector, TargetSpec,
};
pub use data::{Arm, CenterGroup, ObservationRow, TrialDataset};
pub use estimation::{
    adjusted_group_test, fit_gee, fit_gee_with, two_sample_means_test, wald_component_test,
    FitOptions, FitResult, TestKind, TestResult,
};
pub use grid::Grid;
pub use optimizer::{
    project_power, recommend, recommend_grid, recommend_linear, recommend_power_steered,
    PowerTarget, Recommendation, RecommendMethod,
};
pub use inference::{
    confidence_bands, confidence_set, mean_ci, BandEntry, ConfidenceBands, ConfidenceSet,
    MeanInterval,
};
pub use engine::{run_study, run_study_with_threads, DesignKind, DesignSpec, StudyMetrics};
