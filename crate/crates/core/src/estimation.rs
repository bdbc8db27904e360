//! Estimating equations under independence working correlation, the plug-in
//! sandwich covariance and the hypothesis tests built on top of them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{Arm, CenterGroup, TrialDataset};
use crate::error::{LagoError, Result};
use crate::model::{design_row, LinkFunction, ParameterVector};
use crate::stats::{chi_square_sf, normal_sf};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;
const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Estimate `b0`; when false it is fixed at zero.
    pub intercept: bool,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            intercept: true,
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl FitOptions {
    pub fn without_intercept() -> Self {
        Self {
            intercept: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub link: LinkFunction,
    pub intercept: bool,
    pub beta_hat: ParameterVector,
    /// `(p+q+1) x (p+q+1)`, row-major. The intercept row and column are zero when it is not estimated.
    pub covariance: Vec<Vec<f64>>,
    pub n_total: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual_norm: f64,
    /// Mean squared residual `(1/n) sum (y - mu)^2`.
    pub residual_variance: f64,
}

impl FitResult {
    pub fn p(&self) -> usize {
        self.beta_hat.p()
    }

    pub fn q(&self) -> usize {
        self.beta_hat.q()
    }

    /// Number of estimated coefficients.
    pub fn n_params(&self) -> usize {
        self.beta_hat.dim() - usize::from(!self.intercept)
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.covariance.len();
        DMatrix::from_fn(d, d, |i, j| self.covariance[i][j])
    }

    /// Standard error of the flattened coefficient `i` (0 is the intercept).
    pub fn se(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }

    /// Standard error of package effect `p` (zero-based).
    pub fn effect_se(&self, p: usize) -> f64 {
        self.se(1 + p)
    }

    /// `sqrt(x~' Sigma x~)` for the design row of `(x, z)`.
    pub fn eta_se(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        let row = design_row(x, z);
        let v = quad_form(&self.covariance, &row);
        if v < -1e-8 * trace(&self.covariance).max(f64::MIN_POSITIVE) {
            return Err(LagoError::NotPositiveSemidefinite(v));
        }
        Ok(v.max(0.0).sqrt())
    }
}

fn quad_form(m: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, mij) in row.iter().enumerate() {
            s += v[i] * mij * v[j];
        }
    }
    s
}

fn trace(m: &[Vec<f64>]) -> f64 {
    m.iter().enumerate().map(|(i, r)| r[i]).sum()
}

/// Column labels of the full design `(1, a, z)`.
pub fn column_names(p: usize, q: usize) -> Vec<String> {
    let mut names = vec!["intercept".to_string()];
    names.extend((1..=p).map(|i| format!("a_{i}")));
    names.extend((1..=q).map(|i| format!("z_{i}")));
    names
}

struct Center {
    x: DVector<f64>,
    n: f64,
    sum_y: f64,
}

struct Problem<'a> {
    link: LinkFunction,
    centers: Vec<Center>,
    groups: &'a [CenterGroup],
    n: f64,
    /// Indices into the full design row that are estimated.
    cols: Vec<usize>,
}

impl<'a> Problem<'a> {
    fn new(data: &'a TrialDataset, link: LinkFunction, intercept: bool) -> Self {
        let full = 1 + data.p() + data.q();
        let cols: Vec<usize> = (usize::from(!intercept)..full).collect();
        let centers = data
            .groups()
            .iter()
            .map(|g| {
                let row = design_row(&g.a, &g.z);
                Center {
                    x: DVector::from_iterator(cols.len(), cols.iter().map(|&c| row[c])),
                    n: g.n() as f64,
                    sum_y: g.y.iter().sum(),
                }
            })
            .collect();
        Self {
            link,
            centers,
            groups: data.groups(),
            n: data.n_total() as f64,
            cols,
        }
    }

    fn dim(&self) -> usize {
        self.cols.len()
    }

    /// Residual sum of squares up to the within-center constant; `U` is `-1/(2n)` times its
    /// gradient, so it serves as the line-search merit.
    fn objective(&self, beta: &DVector<f64>) -> f64 {
        self.centers
            .iter()
            .map(|c| {
                let d = self.link.inverse(c.x.dot(beta)) - c.sum_y / c.n;
                c.n * d * d
            })
            .sum()
    }

    fn score(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.dim());
        for c in &self.centers {
            let eta = c.x.dot(beta);
            let w = self.link.inverse_deriv(eta) * (c.sum_y - c.n * self.link.inverse(eta));
            u.axpy(w, &c.x, 1.0);
        }
        u / self.n
    }

    /// Returns `(U, full Jacobian, expected Jacobian)`.
    fn score_and_jacobians(&self, beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let d = self.dim();
        let mut u = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        let mut f = DMatrix::zeros(d, d);
        for c in &self.centers {
            let eta = c.x.dot(beta);
            let mu = self.link.inverse(eta);
            let d1 = self.link.inverse_deriv(eta);
            let d2 = self.link.inverse_second_deriv(eta);
            let resid_sum = c.sum_y - c.n * mu;
            u.axpy(d1 * resid_sum, &c.x, 1.0);
            let xx = &c.x * c.x.transpose();
            h += &xx * (d2 * resid_sum - c.n * d1 * d1);
            f -= &xx * (c.n * d1 * d1);
        }
        (u / self.n, h / self.n, f / self.n)
    }

    /// `J = sum_j (n_j/n) D_j D_j'`.
    fn j_hat(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut j = DMatrix::zeros(d, d);
        for c in &self.centers {
            let d1 = self.link.inverse_deriv(c.x.dot(beta));
            j += &c.x * c.x.transpose() * (c.n * d1 * d1);
        }
        j / self.n
    }

    /// `V = (1/n) sum_j D_j D_j' sum_i (y_ij - mu_j)^2`, plus the total squared residual.
    fn v_hat(&self, beta: &DVector<f64>) -> (DMatrix<f64>, f64) {
        let d = self.dim();
        let mut v = DMatrix::zeros(d, d);
        let mut total = 0.0;
        for (c, g) in self.centers.iter().zip(self.groups) {
            let eta = c.x.dot(beta);
            let mu = self.link.inverse(eta);
            let d1 = self.link.inverse_deriv(eta);
            let ss: f64 = g.y.iter().map(|y| (y - mu) * (y - mu)).sum();
            total += ss;
            v += &c.x * c.x.transpose() * (d1 * d1 * ss);
        }
        (v / self.n, total)
    }

    fn names(&self, p: usize, q: usize) -> Vec<String> {
        let all = column_names(p, q);
        self.cols.iter().map(|&c| all[c].clone()).collect()
    }
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Fails with the collinear column names when `m` is numerically singular.
fn check_rank(m: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let eig = SymmetricEigen::new(m.clone());
    let (mut imin, mut lmin, mut lmax) = (0, f64::INFINITY, 0.0f64);
    for (i, l) in eig.eigenvalues.iter().enumerate() {
        if *l < lmin {
            lmin = *l;
            imin = i;
        }
        lmax = lmax.max(l.abs());
    }
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if condition.is_finite() && condition < CONDITION_LIMIT {
        return Ok(());
    }
    let v = eig.eigenvectors.column(imin);
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let columns = v
        .iter()
        .enumerate()
        .filter(|(_, x)| x.abs() >= 0.05 * vmax)
        .map(|(i, _)| names[i].clone())
        .collect();
    Err(LagoError::RankDeficient { columns, condition })
}

/// Inverse of a symmetric positive definite matrix, retrying once with diagonal jitter.
fn spd_inverse(m: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.inverse());
    }
    let jitter = 1e-10 * m.trace().abs();
    let mut jm = m.clone();
    for i in 0..jm.nrows() {
        jm[(i, i)] += jitter;
    }
    match jm.cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => {
            check_rank(m, names)?;
            Err(LagoError::RankDeficient {
                columns: names.to_vec(),
                condition: f64::INFINITY,
            })
        }
    }
}

/// Fits the model with an intercept.
pub fn fit_gee(data: &TrialDataset, link: LinkFunction) -> Result<FitResult> {
    fit_gee_with(data, link, &FitOptions::default())
}

pub fn fit_gee_with(data: &TrialDataset, link: LinkFunction, opts: &FitOptions) -> Result<FitResult> {
    let prob = Problem::new(data, link, opts.intercept);
    let d = prob.dim();
    let (p, q) = (data.p(), data.q());
    if data.n_total() <= 1 + p + q {
        return Err(LagoError::InvalidInput(format!(
            "need more than {} observations to fit {} coefficients, found {}",
            1 + p + q,
            1 + p + q,
            data.n_total()
        )));
    }
    let names = prob.names(p, q);
    let beta0 = DVector::zeros(d);
    check_rank(&prob.j_hat(&beta0), &names)?;

    let mut beta = beta0;
    let mut iterations = 0;
    let mut u = prob.score(&beta);
    let mut converged = max_abs(&u) <= opts.tolerance;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let (_, h, f) = prob.score_and_jacobians(&beta);
        let merit = prob.objective(&beta);
        let mut stepped = false;
        let newton = h.lu().solve(&(-&u));
        let fisher = f.lu().solve(&(-&u));
        for dir in [newton, fisher].into_iter().flatten() {
            // `u` points downhill, so a usable direction has positive projection on it.
            if !dir.iter().all(|v| v.is_finite()) || dir.dot(&u) <= 0.0 {
                continue;
            }
            let mut t = 1.0;
            for _ in 0..=MAX_HALVINGS {
                let cand = &beta + &dir * t;
                let obj = prob.objective(&cand);
                if obj.is_finite() && obj < merit {
                    beta = cand;
                    u = prob.score(&beta);
                    stepped = true;
                    break;
                }
                t *= 0.5;
            }
            if stepped {
                break;
            }
        }
        converged = max_abs(&u) <= opts.tolerance;
        if !stepped {
            // No direction reduces the residual: accept if already at rounding level.
            converged = max_abs(&u) <= 1e2 * opts.tolerance;
            break;
        }
    }
    let residual_norm = max_abs(&u);
    if !converged {
        return Err(LagoError::NonConvergence {
            iterations,
            residual_norm,
            last_beta: beta.iter().copied().collect(),
        });
    }

    let j = prob.j_hat(&beta);
    check_rank(&j, &names)?;
    let j_inv = spd_inverse(&j, &names)?;
    let (v, ss) = prob.v_hat(&beta);
    let mut cov = &j_inv * v * &j_inv / prob.n;
    cov = (&cov + cov.transpose()) * 0.5;

    let full = 1 + p + q;
    let mut covariance = vec![vec![0.0; full]; full];
    for (a, &ca) in prob.cols.iter().enumerate() {
        for (b, &cb) in prob.cols.iter().enumerate() {
            covariance[ca][cb] = cov[(a, b)];
        }
    }
    let mut flat = vec![0.0; full];
    for (a, &ca) in prob.cols.iter().enumerate() {
        flat[ca] = beta[a];
    }
    Ok(FitResult {
        link,
        intercept: opts.intercept,
        beta_hat: ParameterVector::from_slice(&flat, p, q)?,
        covariance,
        n_total: data.n_total(),
        converged,
        iterations,
        final_residual_norm: residual_norm,
        residual_variance: ss / prob.n,
    })
}

/// `U(beta)` over the full coefficient vector (intercept included).
pub fn estimating_function(data: &TrialDataset, link: LinkFunction, beta: &ParameterVector) -> Vec<f64> {
    let prob = Problem::new(data, link, true);
    prob.score(&DVector::from_vec(beta.to_vec())).iter().copied().collect()
}

/// `max |U(beta_hat)|` over the estimated coefficients of `fit`.
pub fn residual_max_norm(data: &TrialDataset, fit: &FitResult) -> f64 {
    let prob = Problem::new(data, fit.link, fit.intercept);
    let flat = fit.beta_hat.to_vec();
    let beta = DVector::from_iterator(prob.dim(), prob.cols.iter().map(|&c| flat[c]));
    max_abs(&prob.score(&beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    WaldChisq,
    TwoSampleZ,
    AdjustedGamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub kind: TestKind,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Chi-squared test of `b1[indices] = 0` (zero-based component indices).
pub fn wald_component_test(fit: &FitResult, indices: &[usize]) -> Result<TestResult> {
    if indices.is_empty() {
        return Err(LagoError::InvalidInput("no components selected for the Wald test".into()));
    }
    let p = fit.p();
    if let Some(bad) = indices.iter().find(|&&i| i >= p) {
        return Err(LagoError::InvalidInput(format!(
            "component index {bad} out of range for {p} components"
        )));
    }
    let k = indices.len();
    let b = DVector::from_iterator(k, indices.iter().map(|&i| fit.beta_hat.effects[i]));
    let s = DMatrix::from_fn(k, k, |r, c| fit.covariance[1 + indices[r]][1 + indices[c]]);
    let chol = s.clone().cholesky().ok_or_else(|| {
        LagoError::SingularCovariance(format!("effect block for components {indices:?}"))
    })?;
    let statistic = if b.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        b.dot(&chol.solve(&b))
    };
    Ok(TestResult {
        statistic,
        df: k,
        p_value: chi_square_sf(statistic, k as f64).clamp(0.0, 1.0),
        kind: TestKind::WaldChisq,
    })
}

/// Welch z test comparing pooled intervention and control outcome means.
pub fn two_sample_means_test(data: &TrialDataset) -> Result<TestResult> {
    let yi = data.arm_outcomes(Arm::Intervention);
    let yc = data.arm_outcomes(Arm::Control);
    if yi.len() < 2 || yc.len() < 2 {
        return Err(LagoError::InvalidInput(
            "two-sample test needs at least two outcomes in each arm".into(),
        ));
    }
    let (mi, vi) = mean_var(&yi);
    let (mc, vc) = mean_var(&yc);
    let se = (vi / yi.len() as f64 + vc / yc.len() as f64).sqrt();
    let diff = mi - mc;
    let statistic = if diff == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY.copysign(diff)
    } else {
        diff / se
    };
    Ok(TestResult {
        statistic,
        df: 1,
        p_value: (2.0 * normal_sf(statistic.abs())).min(1.0),
        kind: TestKind::TwoSampleZ,
    })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, s)
}

/// Test of `gamma = 0` in `g(E[Y]) = b0 + b2'z + gamma R`, `R` the intervention indicator.
pub fn adjusted_group_test(data: &TrialDataset, link: LinkFunction) -> Result<TestResult> {
    let fit = fit_group_model(data, link)?;
    let w = wald_component_test(&fit, &[0])?;
    Ok(TestResult {
        kind: TestKind::AdjustedGamma,
        ..w
    })
}

/// Fit of the arm-indicator model used by [`adjusted_group_test`].
pub fn fit_group_model(data: &TrialDataset, link: LinkFunction) -> Result<FitResult> {
    let has = |arm| data.groups().iter().any(|g| g.arm == arm);
    if !has(Arm::Intervention) || !has(Arm::Control) {
        return Err(LagoError::InvalidInput(
            "adjusted group test needs both arms".into(),
        ));
    }
    let groups = data
        .groups()
        .iter()
        .map(|g| CenterGroup {
            a: vec![if g.arm == Arm::Intervention { 1.0 } else { 0.0 }],
            ..g.clone()
        })
        .collect();
    let recoded = TrialDataset::from_groups(1, data.q(), groups)?;
    fit_gee(&recoded, link)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObservationRow;

    fn single_center(ys: &[f64]) -> TrialDataset {
        TrialDataset::from_rows(
            0,
            0,
            ys.iter().map(|y| ObservationRow {
                stage: 1,
                center_id: "c".into(),
                arm: Arm::Control,
                y: *y,
                a: vec![],
                z: vec![],
            }),
        )
        .unwrap()
    }

    #[test]
    fn intercept_only_identity_is_the_sample_mean() {
        let fit = fit_gee(&single_center(&[1.0, 2.0, 3.0]), LinkFunction::Identity).unwrap();
        assert!((fit.beta_hat.intercept - 2.0).abs() < 1e-12);
        // sample variance 1, times (n-1)/n, over n
        assert!((fit.covariance[0][0] - 2.0 / 9.0).abs() < 1e-12);
        assert!(fit.converged);
        assert!((fit.residual_variance - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_logit_recovers_logit_of_mean() {
        let fit = fit_gee(&single_center(&[0.0, 1.0, 1.0, 1.0]), LinkFunction::Logit).unwrap();
        assert!((fit.beta_hat.intercept - 3f64.ln()).abs() < 1e-9);
    }

    fn two_center(a1: f64, a2: f64) -> TrialDataset {
        let mut rows = Vec::new();
        for (c, a, ys) in [("x", a1, [1.0, 2.0]), ("y", a2, [3.0, 5.0])] {
            for y in ys {
                rows.push(ObservationRow {
                    stage: 1,
                    center_id: c.into(),
                    arm: Arm::Intervention,
                    y,
                    a: vec![a, 2.0 * a],
                    z: vec![],
                });
            }
        }
        TrialDataset::from_rows(2, 0, rows).unwrap()
    }

    #[test]
    fn collinear_columns_are_named() {
        let err = fit_gee(&two_center(1.0, 2.0), LinkFunction::Identity).unwrap_err();
        match err {
            LagoError::RankDeficient { columns, .. } => {
                assert!(columns.contains(&"a_1".to_string()));
                assert!(columns.contains(&"a_2".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_observations() {
        assert!(fit_gee(&single_center(&[1.0]), LinkFunction::Identity).is_err());
    }

    #[test]
    fn wald_zero_effect_has_unit_p_value() {
        let fit = FitResult {
            link: LinkFunction::Identity,
            intercept: true,
            beta_hat: ParameterVector::new(1.0, vec![0.0, 0.0], vec![]),
            covariance: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 2.0, 0.5],
                vec![0.0, 0.5, 1.0],
            ],
            n_total: 10,
            converged: true,
            iterations: 1,
            final_residual_norm: 0.0,
            residual_variance: 1.0,
        };
        let t = wald_component_test(&fit, &[0, 1]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
        assert_eq!(t.df, 2);
    }

    #[test]
    fn scalar_wald_is_squared_z() {
        let fit = FitResult {
            link: LinkFunction::Identity,
            intercept: true,
            beta_hat: ParameterVector::new(0.0, vec![0.3], vec![]),
            covariance: vec![vec![1.0, 0.0], vec![0.0, 0.04]],
            n_total: 10,
            converged: true,
            iterations: 1,
            final_residual_norm: 0.0,
            residual_variance: 1.0,
        };
        let t = wald_component_test(&fit, &[0]).unwrap();
        assert!((t.statistic - 2.25).abs() < 1e-12);
        // two-sided normal p at z = 1.5
        assert!((t.p_value - 2.0 * normal_sf(1.5)).abs() < 1e-10);
    }

    #[test]
    fn singular_effect_block_is_an_error() {
        let fit = FitResult {
            link: LinkFunction::Identity,
            intercept: true,
            beta_hat: ParameterVector::new(0.0, vec![0.3], vec![]),
            covariance: vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            n_total: 10,
            converged: true,
            iterations: 1,
            final_residual_norm: 0.0,
            residual_variance: 1.0,
        };
        assert!(matches!(
            wald_component_test(&fit, &[0]),
            Err(LagoError::SingularCovariance(_))
        ));
    }
}
