mod common;

use common::{expanded, random_dataset, rng, robust_ols};
use lago_core::estimation::{fit_group_model, residual_max_norm};
use lago_core::{
    adjusted_group_test, fit_gee, fit_gee_with, wald_component_test, Arm, CenterGroup,
    FitOptions, LinkFunction, ParameterVector, TrialDataset,
};
use rand::Rng;

#[test]
fn identity_fit_matches_robust_ols_on_random_data() {
    let mut r = rng(11);
    for case in 0..50 {
        let p = r.random_range(1..=3);
        let q = r.random_range(0..=2);
        let beta = ParameterVector::new(
            r.random_range(-1.0..1.0),
            (0..p).map(|_| r.random_range(-0.5..0.5)).collect(),
            (0..q).map(|_| r.random_range(-0.5..0.5)).collect(),
        );
        let data = random_dataset(&mut r, p, q, &beta, LinkFunction::Identity, 1.0);
        let fit = fit_gee(&data, LinkFunction::Identity).unwrap();
        let (x, y) = expanded(&data, true);
        let (b, cov) = robust_ols(&x, &y);
        let est = fit.beta_hat.to_vec();
        for i in 0..b.len() {
            assert!((est[i] - b[i]).abs() < 1e-8, "case {case} coef {i}");
            for j in 0..b.len() {
                let d = (fit.covariance[i][j] - cov[(i, j)]).abs();
                assert!(d < 1e-8 * cov[(i, j)].abs().max(1.0), "case {case} cov ({i},{j}) off by {d}");
            }
        }
        assert!(residual_max_norm(&data, &fit) <= 1e-8);
    }
}

#[test]
fn no_intercept_fit_matches_robust_ols() {
    let mut r = rng(12);
    for _ in 0..10 {
        let beta = ParameterVector::new(0.0, vec![0.3, -0.2], vec![0.1]);
        let data = random_dataset(&mut r, 2, 1, &beta, LinkFunction::Identity, 0.5);
        let fit = fit_gee_with(&data, LinkFunction::Identity, &FitOptions::without_intercept()).unwrap();
        let (x, y) = expanded(&data, false);
        let (b, cov) = robust_ols(&x, &y);
        assert_eq!(fit.beta_hat.intercept, 0.0);
        assert!(fit.covariance[0].iter().all(|v| *v == 0.0));
        for i in 0..3 {
            assert!((fit.beta_hat.to_vec()[i + 1] - b[i]).abs() < 1e-8);
            for j in 0..3 {
                assert!((fit.covariance[i + 1][j + 1] - cov[(i, j)]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn nonlinear_links_solve_the_estimating_equations() {
    let mut r = rng(13);
    for (link, beta, sigma) in [
        (LinkFunction::Logit, ParameterVector::new(-0.5, vec![0.3, 0.2], vec![-0.2]), 0.2),
        (LinkFunction::Log, ParameterVector::new(0.2, vec![0.1, 0.15], vec![-0.1]), 0.3),
    ] {
        for _ in 0..20 {
            let data = random_dataset(&mut r, 2, 1, &beta, link, sigma);
            let fit = fit_gee(&data, link).unwrap();
            assert!(fit.converged);
            assert!(residual_max_norm(&data, &fit) <= 1e-8);
        }
    }
}

fn rescale_component(data: &TrialDataset, k: usize, c: f64) -> TrialDataset {
    let groups = data
        .groups()
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.a[k] *= c;
            g
        })
        .collect();
    TrialDataset::from_groups(data.p(), data.q(), groups).unwrap()
}

#[test]
fn wald_statistic_is_invariant_to_component_units() {
    let mut r = rng(14);
    let beta = ParameterVector::new(0.1, vec![0.2, 0.05], vec![0.3]);
    for link in [LinkFunction::Identity, LinkFunction::Logit] {
        let data = random_dataset(&mut r, 2, 1, &beta, link, 0.3);
        let scaled = rescale_component(&data, 1, 10.0);
        let f0 = fit_gee(&data, link).unwrap();
        let f1 = fit_gee(&scaled, link).unwrap();
        assert!((f0.beta_hat.effects[1] - 10.0 * f1.beta_hat.effects[1]).abs() < 1e-7);
        let w0 = wald_component_test(&f0, &[0, 1]).unwrap();
        let w1 = wald_component_test(&f1, &[0, 1]).unwrap();
        assert!((w0.statistic - w1.statistic).abs() < 1e-6 * w0.statistic.max(1.0));
    }
}

#[test]
fn stage_labels_do_not_change_the_pooled_fit() {
    let mut r = rng(15);
    let beta = ParameterVector::new(0.1, vec![0.2, 0.1], vec![-0.2]);
    let data = random_dataset(&mut r, 2, 1, &beta, LinkFunction::Logit, 0.2);
    let merged = data.only_stages(&[1, 2]);
    assert_eq!(merged.num_stages(), 1);
    let a = fit_gee(&data, LinkFunction::Logit).unwrap();
    let b = fit_gee(&merged, LinkFunction::Logit).unwrap();
    for (x, y) in a.beta_hat.to_vec().iter().zip(b.beta_hat.to_vec()) {
        assert!((x - y).abs() < 1e-10);
    }
    // a third stage of identical centers equals doubling every center
    let mut groups = data.groups().to_vec();
    groups.extend(data.groups().iter().filter(|g| g.stage == 2).map(|g| CenterGroup {
        stage: 3,
        ..g.clone()
    }));
    let three = TrialDataset::from_groups(2, 1, groups).unwrap();
    assert_eq!(three.num_stages(), 3);
    let c = fit_gee(&three, LinkFunction::Logit).unwrap();
    assert!(c.converged);
    assert!(residual_max_norm(&three, &c) <= 1e-8);
}

#[test]
fn adjusted_test_matches_ols_on_group_indicator() {
    let mut r = rng(16);
    let beta = ParameterVector::new(0.0, vec![0.2], vec![0.4]);
    let data = random_dataset(&mut r, 1, 1, &beta, LinkFunction::Identity, 1.0);
    let t = adjusted_group_test(&data, LinkFunction::Identity).unwrap();
    // independent: OLS of y on (1, R, z) with HC0
    let recoded = fit_group_model(&data, LinkFunction::Identity).unwrap();
    let groups = data
        .groups()
        .iter()
        .map(|g| CenterGroup {
            a: vec![f64::from(u8::from(g.arm == Arm::Intervention))],
            ..g.clone()
        })
        .collect();
    let (x, y) = expanded(&TrialDataset::from_groups(1, 1, groups).unwrap(), true);
    let (b, cov) = robust_ols(&x, &y);
    assert!((recoded.beta_hat.effects[0] - b[1]).abs() < 1e-9);
    let z2 = b[1] * b[1] / cov[(1, 1)];
    assert!((t.statistic - z2).abs() < 1e-7 * z2.max(1.0));
}

#[test]
fn perfect_arm_separation_is_detected() {
    let mut r = rng(17);
    let mut groups = Vec::new();
    for (j, arm) in [Arm::Control, Arm::Intervention].into_iter().enumerate() {
        let shift = if arm == Arm::Intervention { 1.0 } else { 0.0 };
        groups.push(CenterGroup {
            stage: 1,
            center_id: format!("c{j}"),
            arm,
            a: vec![shift],
            z: vec![],
            y: (0..200).map(|_| shift + 0.01 * r.random_range(-1.7..1.7)).collect(),
        });
    }
    let data = TrialDataset::from_groups(1, 0, groups).unwrap();
    let t = lago_core::two_sample_means_test(&data).unwrap();
    assert!(t.p_value < 1e-6);
}
