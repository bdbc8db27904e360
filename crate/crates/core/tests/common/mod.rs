#![allow(dead_code)]

use lago_core::{Arm, CenterGroup, LinkFunction, ParameterVector, TrialDataset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random two-stage dataset with `p` components and `q` covariates; roughly a third of
/// centers are controls.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    p: usize,
    q: usize,
    beta: &ParameterVector,
    link: LinkFunction,
    sigma: f64,
) -> TrialDataset {
    let mut groups = Vec::new();
    for stage in 1..=2u32 {
        let centers = rng.random_range(8..16);
        for j in 0..centers {
            let control = j % 3 == 0;
            let a: Vec<f64> = if control {
                vec![0.0; p]
            } else {
                (0..p).map(|_| rng.random_range(0.0..3.0)).collect()
            };
            let z: Vec<f64> = (0..q).map(|_| StandardNormal.sample(rng)).collect();
            let n = rng.random_range(3..25);
            let mu = link.inverse(beta.eta_unchecked(&a, &z));
            let y = (0..n)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(rng);
                    mu + sigma * e
                })
                .collect();
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
    TrialDataset::from_groups(p, q, groups).unwrap()
}

/// Row-expanded design and outcome vector, intercept first.
pub fn expanded(data: &TrialDataset, intercept: bool) -> (DMatrix<f64>, DVector<f64>) {
    let d = usize::from(intercept) + data.p() + data.q();
    let rows: Vec<(Vec<f64>, f64)> = data
        .groups()
        .iter()
        .flat_map(|g| {
            let mut x = Vec::with_capacity(d);
            if intercept {
                x.push(1.0);
            }
            x.extend(&g.a);
            x.extend(&g.z);
            g.y.iter().map(move |y| (x.clone(), *y))
        })
        .collect();
    let xm = DMatrix::from_fn(rows.len(), d, |i, j| rows[i].0[j]);
    let yv = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    (xm, yv)
}

/// OLS coefficients and the HC0 sandwich `(X'X)^-1 X' diag(e^2) X (X'X)^-1`.
pub fn robust_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let xtx = x.transpose() * x;
    let lu = xtx.clone().lu();
    let b = lu.solve(&(x.transpose() * y)).unwrap();
    let e = y - x * &b;
    let mut meat = DMatrix::zeros(x.ncols(), x.ncols());
    for i in 0..x.nrows() {
        let r = x.row(i);
        meat += r.transpose() * r * (e[i] * e[i]);
    }
    let inv = lu.try_inverse().unwrap();
    (b, &inv * meat * &inv)
}
