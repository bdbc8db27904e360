//! The work behind each subcommand, separated from argument parsing so that
//! config runs and flag runs share one path.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lago_core::estimation::column_names;
use lago_core::inference::{confidence_bands_at_level, confidence_set_at_level, ConfidenceBands};
use lago_core::stats::normal_sf;
use lago_core::{
    fit_gee_with, run_study_with_threads, ComponentBounds, CostFunction, DesignSpec, FitOptions,
    FitResult, LinkFunction, Recommendation, StudyMetrics, TargetSpec,
};
use serde::{Deserialize, Serialize};

use crate::analysis::{covariates, recommend_for};
use crate::config::{Command, ConfsetSection, FitSection, RecommendSection, RunConfig, Search};
use crate::csvio::load_trial_csv;

/// An error with the process exit code it maps to: 2 for bad input, 1 otherwise.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl fmt::Display) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl fmt::Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        Self::usage(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub stages: u32,
    pub stage_sizes: Vec<usize>,
    pub centers: usize,
    pub n_total: usize,
    pub coefficients: Vec<Coefficient>,
    pub fit: FitResult,
}

pub fn fit_csv(section: &FitSection) -> CliResult<FitReport> {
    let data = load_trial_csv(&section.csv)
        .map_err(|e| CliError::usage(format!("{}: {e}", section.csv.display())))?;
    let opts = FitOptions {
        intercept: section.intercept,
        ..FitOptions::default()
    };
    let fit = fit_gee_with(&data, section.link, &opts).map_err(CliError::runtime)?;
    let flat = fit.beta_hat.to_vec();
    let coefficients = column_names(fit.p(), fit.q())
        .into_iter()
        .enumerate()
        .filter(|(i, _)| *i > 0 || fit.intercept)
        .map(|(i, name)| {
            let se = fit.se(i);
            let z = flat[i] / se;
            Coefficient {
                name,
                estimate: flat[i],
                se,
                z,
                p_value: 2.0 * normal_sf(z.abs()),
            }
        })
        .collect();
    Ok(FitReport {
        stages: data.num_stages(),
        stage_sizes: data.stage_sizes(),
        centers: data.num_centers(),
        n_total: data.n_total(),
        coefficients,
        fit,
    })
}

/// Reads a fit written by `lago fit` (the full report or a bare fit).
pub fn load_fit(path: &Path) -> CliResult<FitResult> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if let Some(inner) = v.get_mut("fit").filter(|f| f.is_object()) {
        v = inner.take();
    }
    serde_path_to_error::deserialize(v).map_err(|e| {
        CliError::usage(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner()))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendReport {
    pub theta: f64,
    pub z: Vec<f64>,
    pub bounds: ComponentBounds,
    pub cost: CostFunction,
    pub search: Search,
    pub increment: Option<f64>,
    pub recommendation: Recommendation,
}

pub fn recommend(section: &RecommendSection) -> CliResult<RecommendReport> {
    let fit = load_fit(&section.fit)?;
    let rec = recommend_for(
        &fit,
        &section.z,
        &section.bounds,
        &section.cost,
        section.theta,
        section.increment,
        section.search,
    )
    .map_err(CliError::usage)?;
    Ok(RecommendReport {
        theta: section.theta,
        z: covariates(&fit, &section.z).map_err(CliError::usage)?.0,
        bounds: section.bounds.clone(),
        cost: section.cost.clone(),
        search: section.search,
        increment: section.increment,
        recommendation: rec,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfsetReport {
    pub theta: f64,
    pub z: Vec<f64>,
    pub level: f64,
    pub grid_increment: f64,
    pub total_grid_points: usize,
    pub set_percentage: f64,
    pub cost_quartiles: Option<[f64; 3]>,
    pub members: Vec<Vec<f64>>,
    pub bands: Option<ConfidenceBands>,
}

pub fn confset(section: &ConfsetSection) -> CliResult<ConfsetReport> {
    let fit = load_fit(&section.fit)?;
    let z = covariates(&fit, &section.z).map_err(CliError::usage)?;
    let target = TargetSpec::new(section.theta, fit.link).map_err(CliError::usage)?;
    let level = section.level.unwrap_or(0.95);
    let inc = section.increment.unwrap_or(lago_core::inference::DEFAULT_SET_INCREMENT);
    let set = confidence_set_at_level(&fit, &section.bounds, &z, &target, inc, level).map_err(CliError::usage)?;
    let cost_quartiles = match &section.cost {
        Some(c) => set.cost_quartiles(c).map_err(CliError::usage)?,
        None => None,
    };
    let bands = if section.bands {
        Some(confidence_bands_at_level(&fit, &section.bounds, &z, inc, level).map_err(CliError::usage)?)
    } else {
        None
    };
    Ok(ConfsetReport {
        theta: section.theta,
        z: z.0,
        level,
        grid_increment: inc,
        total_grid_points: set.total_grid_points,
        set_percentage: set.set_percentage(),
        cost_quartiles,
        members: set.members.into_iter().map(|m| m.0).collect(),
        bands,
    })
}

pub fn simulate(spec: &DesignSpec, threads: Option<usize>) -> CliResult<StudyMetrics> {
    spec.validate().map_err(CliError::usage)?;
    run_study_with_threads(spec, threads).map_err(CliError::runtime)
}

/// Output of any command, ready for stdout and the output directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    Simulate(StudyMetrics),
    Fit(FitReport),
    Recommend(RecommendReport),
    Confset(ConfsetReport),
}

impl Report {
    pub fn name(&self) -> &'static str {
        match self {
            Report::Simulate(_) => "simulate",
            Report::Fit(_) => "fit",
            Report::Recommend(_) => "recommend",
            Report::Confset(_) => "confset",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Writes `<name>.json` and, where the report has a table, `<name>.csv`.
    pub fn write_to(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        let json_path = dir.join(format!("{}.json", self.name()));
        fs::write(&json_path, self.to_json() + "\n")
            .map_err(|e| CliError::runtime(format!("{}: {e}", json_path.display())))?;
        let mut written = vec![json_path];
        let csv_path = dir.join(format!("{}.csv", self.name()));
        let wrote_csv = self
            .write_csv(&csv_path)
            .map_err(|e| CliError::runtime(format!("{}: {e}", csv_path.display())))?;
        if wrote_csv {
            written.push(csv_path);
        }
        Ok(written)
    }

    fn write_csv(&self, path: &Path) -> Result<bool, Box<dyn std::error::Error>> {
        let mut w = match self {
            Report::Recommend(_) => return Ok(false),
            _ => csv::Writer::from_path(path)?,
        };
        match self {
            Report::Simulate(m) => {
                w.write_record([
                    "stage", "name", "true_value", "mean_estimate", "rel_bias_pct", "mean_se", "emp_sd",
                    "se_over_emp_sd", "cp95",
                ])?;
                for s in &m.stages {
                    for c in &s.coefficients {
                        w.write_record([
                            s.stage.to_string(),
                            c.name.clone(),
                            c.true_value.to_string(),
                            c.mean_estimate.to_string(),
                            c.rel_bias_pct.map_or(String::new(), |v| v.to_string()),
                            c.mean_se.to_string(),
                            c.emp_sd.to_string(),
                            c.se_over_emp_sd.to_string(),
                            c.cp95.to_string(),
                        ])?;
                    }
                }
            }
            Report::Fit(f) => {
                for c in &f.coefficients {
                    w.serialize(c)?;
                }
            }
            Report::Confset(c) => {
                let p = c.members.first().map_or(0, Vec::len);
                w.write_record((1..=p).map(|i| format!("a_{i}")))?;
                for m in &c.members {
                    w.write_record(m.iter().map(f64::to_string))?;
                }
            }
            Report::Recommend(_) => unreachable!(),
        }
        w.flush()?;
        Ok(true)
    }

    /// Human-readable summary for stderr.
    pub fn table(&self) -> String {
        let mut s = String::new();
        match self {
            Report::Simulate(m) => {
                s += &format!(
                    "{:?}: {} replications, {} failed; x_opt {:?}\n",
                    m.kind, m.replications, m.failures, m.x_opt
                );
                for st in &m.stages {
                    s += &format!("stage {} ({} available)\n", st.stage, st.available);
                    s += &format!(
                        "  {:<10} {:>9} {:>9} {:>9} {:>8} {:>8} {:>6}\n",
                        "coef", "true", "mean", "relbias%", "se", "emp_sd", "cp95"
                    );
                    for c in &st.coefficients {
                        s += &format!(
                            "  {:<10} {:>9.4} {:>9.4} {:>9} {:>8.4} {:>8.4} {:>6.3}\n",
                            c.name,
                            c.true_value,
                            c.mean_estimate,
                            c.rel_bias_pct.map_or("-".into(), |v| format!("{v:.2}")),
                            c.mean_se,
                            c.emp_sd,
                            c.cp95
                        );
                    }
                    if let Some(r) = st.optimizer_rmse {
                        s += &format!("  optimizer rmse {r:.4}\n");
                    }
                }
                let opt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.3}"));
                s += &format!(
                    "set cp95 {}  set% {}  bands cp95 {}\n",
                    opt(m.set_cp95),
                    opt(m.set_perc),
                    opt(m.bands_cp95)
                );
                s += &format!(
                    "power: wald {}  two-sample {}  adjusted {}\n",
                    opt(m.power.wald_chisq),
                    opt(m.power.two_sample_z),
                    opt(m.power.adjusted_gamma)
                );
                if let Some(most) = &m.most {
                    s += &format!("most: proceeded {}  power {:.3}\n", most.proceeded, most.power);
                }
            }
            Report::Fit(f) => {
                s += &format!(
                    "{} stages {:?}, {} centers, n = {}; {} link\n",
                    f.stages, f.stage_sizes, f.centers, f.n_total, f.fit.link
                );
                s += &format!("  {:<10} {:>11} {:>10} {:>8} {:>9}\n", "coef", "estimate", "se", "z", "p");
                for c in &f.coefficients {
                    s += &format!(
                        "  {:<10} {:>11.6} {:>10.6} {:>8.3} {:>9.4}\n",
                        c.name, c.estimate, c.se, c.z, c.p_value
                    );
                }
            }
            Report::Recommend(r) => {
                let rec = &r.recommendation;
                s += &format!(
                    "package {:?}  cost {:.2}  projected mean {:.4}  feasible {}  ({:?})\n",
                    rec.package.0, rec.cost, rec.projected_mean, rec.feasible, rec.method
                );
            }
            Report::Confset(c) => {
                s += &format!(
                    "{} of {} grid points ({:.1}%) at level {}\n",
                    c.members.len(),
                    c.total_grid_points,
                    100.0 * c.set_percentage,
                    c.level
                );
                if let Some(q) = c.cost_quartiles {
                    s += &format!("member cost quartiles {:.2} / {:.2} / {:.2}\n", q[0], q[1], q[2]);
                }
            }
        }
        s
    }
}

/// Executes a config file.
pub fn run_config(cfg: &RunConfig) -> CliResult<Report> {
    // check() guarantees the section for the command is present
    Ok(match cfg.command {
        Command::Simulate => Report::Simulate(simulate(cfg.design.as_ref().expect("checked"), cfg.threads)?),
        Command::Fit => Report::Fit(fit_csv(cfg.fit.as_ref().expect("checked"))?),
        Command::Recommend => Report::Recommend(recommend(cfg.recommend.as_ref().expect("checked"))?),
        Command::Confset => Report::Confset(confset(cfg.confset.as_ref().expect("checked"))?),
    })
}

/// Prints JSON to stdout, the table to stderr and writes artifacts to `out`.
pub fn emit(report: &Report, out: Option<&Path>, quiet: bool) -> CliResult<()> {
    if !quiet {
        eprint!("{}", report.table());
    }
    if let Some(dir) = out {
        for p in report.write_to(dir)? {
            if !quiet {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", report.to_json()).map_err(CliError::runtime)
}

pub fn parse_link(s: &str) -> Result<LinkFunction, String> {
    s.parse::<LinkFunction>().map_err(|e| e.to_string())
}
