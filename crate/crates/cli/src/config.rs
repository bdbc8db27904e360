//! Declarative run files: one `command` plus the section it needs.

use std::fmt;
use std::path::{Path, PathBuf};

use lago_core::{ComponentBounds, CostFunction, DesignSpec, LinkFunction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Fit,
    Recommend,
    Confset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Search {
    /// Linear ranking for linear costs, grid otherwise.
    #[default]
    Auto,
    /// Grid search at `increment` for either cost kind.
    Grid,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub csv: PathBuf,
    pub link: LinkFunction,
    #[serde(default = "default_true")]
    pub intercept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendSection {
    /// A fit written by `lago fit`.
    pub fit: PathBuf,
    #[serde(default)]
    pub z: Vec<f64>,
    pub bounds: ComponentBounds,
    pub cost: CostFunction,
    pub theta: f64,
    #[serde(default)]
    pub increment: Option<f64>,
    #[serde(default)]
    pub search: Search,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfsetSection {
    pub fit: PathBuf,
    #[serde(default)]
    pub z: Vec<f64>,
    pub bounds: ComponentBounds,
    pub theta: f64,
    #[serde(default)]
    pub increment: Option<f64>,
    #[serde(default)]
    pub level: Option<f64>,
    /// Also compute simultaneous bands.
    #[serde(default)]
    pub bands: bool,
    /// Cost used for member cost quartiles.
    #[serde(default)]
    pub cost: Option<CostFunction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Where JSON and CSV artifacts go; relative to the config file.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub design: Option<DesignSpec>,
    #[serde(default)]
    pub fit: Option<FitSection>,
    #[serde(default)]
    pub recommend: Option<RecommendSection>,
    #[serde(default)]
    pub confset: Option<ConfsetSection>,
}

/// A config that does not match the schema; `path` points into the document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config at `{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn schema_error(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.to_owned(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| schema_error("", e.message().to_owned()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            schema_error(&path, inner.message().to_owned())
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| schema_error("", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// The section named by `command` must be present and internally consistent.
    fn check(&self) -> Result<(), ConfigError> {
        let missing = |s: &str| schema_error(s, format!("missing section `{s}` required by command"));
        match self.command {
            Command::Simulate => {
                let d = self.design.as_ref().ok_or_else(|| missing("design"))?;
                d.validate().map_err(|e| schema_error("design", e.to_string()))
            }
            Command::Fit => self.fit.as_ref().map(|_| ()).ok_or_else(|| missing("fit")),
            Command::Recommend => {
                let r = self.recommend.as_ref().ok_or_else(|| missing("recommend"))?;
                r.bounds
                    .validate()
                    .map_err(|e| schema_error("recommend.bounds", e.to_string()))?;
                r.cost
                    .validate()
                    .map_err(|e| schema_error("recommend.cost", e.to_string()))
            }
            Command::Confset => {
                let c = self.confset.as_ref().ok_or_else(|| missing("confset"))?;
                c.bounds
                    .validate()
                    .map_err(|e| schema_error("confset.bounds", e.to_string()))
            }
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(o) = self.output_dir.as_mut() {
            fix(o);
        }
        if let Some(f) = self.fit.as_mut() {
            fix(&mut f.csv);
        }
        if let Some(r) = self.recommend.as_mut() {
            fix(&mut r.fit);
        }
        if let Some(c) = self.confset.as_mut() {
            fix(&mut c.fit);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RECOMMEND: &str = r#"
command = "recommend"

[recommend]
fit = "fit.json"
z = [1.75]
theta = 0.8
bounds = { lower = [1, 1], upper = [5, 40] }
cost = { kind = "linear", unit_costs = [800, 170] }
"#;

    #[test]
    fn recommend_section_parses() {
        let c = RunConfig::parse(RECOMMEND).unwrap();
        assert_eq!(c.command, Command::Recommend);
        let r = c.recommend.unwrap();
        assert_eq!(r.search, Search::Auto);
        assert_eq!(r.bounds.upper, vec![5.0, 40.0]);
    }

    #[test]
    fn missing_bounds_is_cited() {
        let text = RECOMMEND.replace("bounds = { lower = [1, 1], upper = [5, 40] }\n", "");
        let e = RunConfig::parse(&text).unwrap_err();
        assert!(e.to_string().contains("bounds"), "{e}");
    }

    #[test]
    fn nested_errors_carry_a_path() {
        let text = RECOMMEND.replace("unit_costs = [800, 170]", "unit_costs = [800, \"x\"]");
        let e = RunConfig::parse(&text).unwrap_err();
        assert!(e.path.starts_with("recommend.cost"), "{e:?}");
        let e = RunConfig::parse("command = \"fit\"\n").unwrap_err();
        assert_eq!(e.path, "fit");
        let e = RunConfig::parse("command = \"plot\"\n").unwrap_err();
        assert_eq!(e.path, "command");
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut c = RunConfig::parse(RECOMMEND).unwrap();
        c.resolve_paths(Path::new("/data/run"));
        assert_eq!(c.recommend.unwrap().fit, PathBuf::from("/data/run/fit.json"));
    }
}
