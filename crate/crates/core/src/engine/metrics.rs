//! Reduction of replications to study-level operating characteristics.

use serde::{Deserialize, Serialize};

use crate::engine::design::{DesignKind, DesignSpec};
use crate::engine::simulate::{final_tests, true_mean, Replication};
use crate::error::Result;
use crate::estimation::column_names;
use crate::grid::Grid;
use crate::inference::{confidence_bands, confidence_set};
use crate::model::{CenterCovariates, ComponentBounds};
use crate::optimizer::Recommendation;
use crate::stats::{mean, quantile, sample_sd};

/// What one replication contributes to the study metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub index: usize,
    /// Per stage: estimates and standard errors over all `1 + p + q` coefficients.
    pub estimates: Vec<Option<(Vec<f64>, Vec<f64>)>>,
    /// Per stage: recommended package at the evaluation covariates.
    pub packages: Vec<Option<Vec<f64>>>,
    /// Per stage: true mean at the recommended package.
    pub true_means: Vec<Option<f64>>,
    pub set_covers: Option<bool>,
    pub set_percentage: Option<f64>,
    pub bands_cover: Option<bool>,
    pub wald_p: Option<f64>,
    pub two_sample_p: Option<f64>,
    pub adjusted_p: Option<f64>,
    pub most: Option<MostSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MostSummary {
    pub proceeded: bool,
    pub package: Option<Vec<f64>>,
    pub p_value: Option<f64>,
    /// Estimated effect with its 95% interval and the true effect of the package.
    pub effect: Option<(f64, f64, f64)>,
    pub true_effect: Option<f64>,
    /// True mean under the RCT package.
    pub package_mean: Option<f64>,
}

/// Context shared by all replication summaries.
pub struct Truth {
    pub x_opt: Recommendation,
    pub eval_z: Vec<f64>,
    grid: Grid,
}

impl Truth {
    pub fn new(spec: &DesignSpec) -> Result<Self> {
        Ok(Truth {
            x_opt: crate::engine::simulate::true_optimum(spec)?,
            eval_z: spec.eval_z(),
            grid: Grid::new(&spec.bounds, spec.set_increment)?,
        })
    }

    /// Grid point closest to the true optimum.
    pub fn x_opt_on_grid(&self) -> Vec<f64> {
        self.grid.point(&self.grid.nearest(self.x_opt.package.doses()))
    }
}

fn rec_package(r: &Option<Recommendation>) -> Option<Vec<f64>> {
    r.as_ref().map(|r| r.package.0.clone())
}

pub fn summarize(spec: &DesignSpec, truth: &Truth, rep: &Replication) -> ReplicationSummary {
    let z = CenterCovariates(truth.eval_z.clone());
    let estimates = rep
        .stage_fits
        .iter()
        .map(|f| {
            f.as_ref().map(|f| {
                let b = f.beta_hat.to_vec();
                let se = (0..b.len()).map(|i| f.se(i)).collect();
                (b, se)
            })
        })
        .collect();
    let packages: Vec<Option<Vec<f64>>> = rep.stage_recommendations.iter().map(rec_package).collect();
    let true_means = packages
        .iter()
        .map(|x| x.as_ref().map(|x| true_mean(spec, x, &truth.eval_z)))
        .collect();

    let mut s = ReplicationSummary {
        index: rep.index,
        estimates,
        packages,
        true_means,
        set_covers: None,
        set_percentage: None,
        bands_cover: None,
        wald_p: None,
        two_sample_p: None,
        adjusted_p: None,
        most: None,
    };

    if spec.kind != DesignKind::Most {
        if let Some(fit) = rep.final_fit() {
            if let Ok(set) = confidence_set(fit, &spec.bounds, &z, &spec.target(), spec.set_increment) {
                s.set_covers = Some(set.contains(&truth.x_opt_on_grid()));
                s.set_percentage = Some(set.set_percentage());
            }
            if let Ok(bands) = confidence_bands(fit, &spec.bounds, &z, spec.set_increment) {
                s.bands_cover = Some(bands.entries.iter().all(|e| {
                    let m = true_mean(spec, e.x.doses(), &truth.eval_z);
                    e.band_lower <= m && m <= e.band_upper
                }));
            }
        }
        let t = final_tests(spec, rep);
        s.wald_p = t.wald.map(|t| t.p_value);
        s.two_sample_p = t.two_sample.map(|t| t.p_value);
        s.adjusted_p = t.adjusted.map(|t| t.p_value);
    }

    if let Some(m) = &rep.most {
        let zero = vec![0.0; spec.p()];
        s.two_sample_p = m.test.map(|t| t.p_value);
        s.most = Some(MostSummary {
            proceeded: m.proceeded,
            package: m.package.clone(),
            p_value: m.test.map(|t| t.p_value),
            effect: m.effect_estimate,
            true_effect: m
                .package
                .as_ref()
                .map(|x| true_mean(spec, x, &truth.eval_z) - true_mean(spec, &zero, &truth.eval_z)),
            package_mean: m.package.as_ref().map(|x| true_mean(spec, x, &truth.eval_z)),
        });
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMetrics {
    pub name: String,
    pub true_value: f64,
    pub mean_estimate: f64,
    /// `100 * (mean - truth) / truth`; absent for a zero true value.
    pub rel_bias_pct: Option<f64>,
    pub mean_se: f64,
    pub emp_sd: f64,
    pub se_over_emp_sd: f64,
    pub cp95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMetrics {
    /// Mean of `x_hat - x_opt`.
    pub bias: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub stage: u32,
    /// Replications with an estimate at this stage.
    pub available: usize,
    pub coefficients: Vec<CoefficientMetrics>,
    pub optimizer: Vec<ComponentMetrics>,
    /// `sqrt(mean ||x_hat - x_opt||^2)`.
    pub optimizer_rmse: Option<f64>,
    /// 2.5% and 97.5% quantiles of the true mean at the recommended package.
    pub mean_opt_q025: Option<f64>,
    pub mean_opt_q975: Option<f64>,
    pub mean_opt_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMetrics {
    pub wald_chisq: Option<f64>,
    pub two_sample_z: Option<f64>,
    pub adjusted_gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MostMetrics {
    pub proceeded: usize,
    /// How often each component was included in the RCT package.
    pub component_included: Vec<usize>,
    /// Rejections over all replications, a stopped study counting as no rejection.
    pub power: f64,
    /// Coverage of the true package effect by the 95% interval, among RCTs run.
    pub effect_cp95: Option<f64>,
    /// Median and quartiles of the true mean under the RCT package.
    pub package_mean_median: Option<f64>,
    pub package_mean_q25: Option<f64>,
    pub package_mean_q75: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMetrics {
    pub kind: DesignKind,
    pub replications: usize,
    pub failures: usize,
    /// First few failure messages, in replication order.
    pub failure_messages: Vec<String>,
    pub x_opt: Vec<f64>,
    pub x_opt_feasible: bool,
    pub stages: Vec<StageMetrics>,
    pub set_cp95: Option<f64>,
    pub set_perc: Option<f64>,
    pub bands_cp95: Option<f64>,
    pub power: PowerMetrics,
    pub most: Option<MostMetrics>,
}

fn rate(flags: impl Iterator<Item = bool>) -> Option<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for f in flags {
        n += 1;
        hit += usize::from(f);
    }
    (n > 0).then(|| hit as f64 / n as f64)
}

fn stage_metrics(
    spec: &DesignSpec,
    truth: &Truth,
    summaries: &[ReplicationSummary],
    k: usize,
) -> StageMetrics {
    let names = column_names(spec.p(), spec.q());
    let true_beta = spec.true_beta.to_vec();
    let z975 = crate::stats::z_two_sided(0.05);
    let est: Vec<&(Vec<f64>, Vec<f64>)> = summaries
        .iter()
        .filter_map(|s| s.estimates.get(k).and_then(Option::as_ref))
        .collect();
    let first = usize::from(!spec.intercept);
    let coefficients = if est.is_empty() {
        Vec::new()
    } else {
        (first..true_beta.len())
            .map(|i| {
                let b: Vec<f64> = est.iter().map(|e| e.0[i]).collect();
                let se: Vec<f64> = est.iter().map(|e| e.1[i]).collect();
                let truth_i = true_beta[i];
                let m = mean(&b);
                let emp_sd = if b.len() > 1 { sample_sd(&b) } else { f64::NAN };
                let mean_se = mean(&se);
                let covered = b
                    .iter()
                    .zip(&se)
                    .filter(|(b, s)| (*b - truth_i).abs() <= z975 * *s)
                    .count();
                CoefficientMetrics {
                    name: names[i].clone(),
                    true_value: truth_i,
                    mean_estimate: m,
                    rel_bias_pct: (truth_i != 0.0).then(|| 100.0 * (m - truth_i) / truth_i),
                    mean_se,
                    emp_sd,
                    se_over_emp_sd: mean_se / emp_sd,
                    cp95: covered as f64 / b.len() as f64,
                }
            })
            .collect()
    };

    let pk: Vec<&Vec<f64>> = summaries
        .iter()
        .filter_map(|s| s.packages.get(k).and_then(Option::as_ref))
        .collect();
    let x_opt = truth.x_opt.package.doses();
    let optimizer = if pk.is_empty() {
        Vec::new()
    } else {
        (0..spec.p())
            .map(|c| {
                let d: Vec<f64> = pk.iter().map(|x| x[c] - x_opt[c]).collect();
                ComponentMetrics {
                    bias: mean(&d),
                    rmse: (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt(),
                }
            })
            .collect()
    };

    let optimizer_rmse = (!pk.is_empty()).then(|| {
        let ss: f64 = pk
            .iter()
            .map(|x| x.iter().zip(x_opt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        (ss / pk.len() as f64).sqrt()
    });

    let tm: Vec<f64> = summaries
        .iter()
        .filter_map(|s| s.true_means.get(k).copied().flatten())
        .collect();
    let q = |p: f64| (!tm.is_empty()).then(|| quantile(&tm, p));
    StageMetrics {
        stage: k as u32 + 1,
        available: est.len(),
        coefficients,
        optimizer,
        optimizer_rmse,
        mean_opt_q025: q(0.025),
        mean_opt_q975: q(0.975),
        mean_opt_mean: (!tm.is_empty()).then(|| mean(&tm)),
    }
}

fn most_metrics(spec: &DesignSpec, summaries: &[ReplicationSummary]) -> Option<MostMetrics> {
    let ms: Vec<&MostSummary> = summaries.iter().filter_map(|s| s.most.as_ref()).collect();
    if ms.is_empty() {
        return None;
    }
    let bounds: &ComponentBounds = spec
        .most
        .as_ref()
        .and_then(|m| m.bounds.as_ref())
        .unwrap_or(&spec.bounds);
    let mut component_included = vec![0usize; spec.p()];
    for pkg in ms.iter().filter_map(|m| m.package.as_ref()) {
        for (c, (x, lo)) in pkg.iter().zip(&bounds.lower).enumerate() {
            if x > lo {
                component_included[c] += 1;
            }
        }
    }
    let means: Vec<f64> = ms.iter().filter_map(|m| m.package_mean).collect();
    let q = |p: f64| (!means.is_empty()).then(|| quantile(&means, p));
    Some(MostMetrics {
        proceeded: ms.iter().filter(|m| m.proceeded).count(),
        component_included,
        power: ms
            .iter()
            .filter(|m| m.p_value.is_some_and(|p| p < spec.alpha))
            .count() as f64
            / ms.len() as f64,
        effect_cp95: rate(ms.iter().filter_map(|m| {
            let (_, lo, hi) = m.effect?;
            let t = m.true_effect?;
            Some(lo <= t && t <= hi)
        })),
        package_mean_median: q(0.5),
        package_mean_q25: q(0.25),
        package_mean_q75: q(0.75),
    })
}

/// Aggregates summaries that are already in replication order.
pub fn aggregate(
    spec: &DesignSpec,
    truth: &Truth,
    summaries: &[ReplicationSummary],
    failure_messages: Vec<String>,
) -> StudyMetrics {
    let n_stages = summaries.iter().map(|s| s.estimates.len()).max().unwrap_or(0);
    let alpha = spec.alpha;
    let power_of = |f: fn(&ReplicationSummary) -> Option<f64>| {
        rate(summaries.iter().filter_map(f).map(|p| p < alpha))
    };
    let failures = failure_messages.len();
    StudyMetrics {
        kind: spec.kind,
        replications: summaries.len() + failures,
        failures,
        failure_messages: failure_messages.into_iter().take(5).collect(),
        x_opt: truth.x_opt.package.0.clone(),
        x_opt_feasible: truth.x_opt.feasible,
        stages: (0..n_stages)
            .map(|k| stage_metrics(spec, truth, summaries, k))
            .collect(),
        set_cp95: rate(summaries.iter().filter_map(|s| s.set_covers)),
        set_perc: {
            let v: Vec<f64> = summaries.iter().filter_map(|s| s.set_percentage).collect();
            (!v.is_empty()).then(|| mean(&v))
        },
        bands_cp95: rate(summaries.iter().filter_map(|s| s.bands_cover)),
        power: PowerMetrics {
            wald_chisq: power_of(|s| s.wald_p),
            two_sample_z: power_of(|s| s.two_sample_p),
            adjusted_gamma: power_of(|s| s.adjusted_p),
        },
        most: most_metrics(spec, summaries),
    }
}
