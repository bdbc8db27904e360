//! Append-only trial store. Each trial is a JSON-lines file of events that is
//! replayed on open, so a restarted server sees exactly the state it left.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use lago_core::{
    fit_gee_with, Arm, ComponentBounds, CostFunction, FitOptions, FitResult, LagoError,
    LinkFunction, ObservationRow, Recommendation, TrialDataset,
};
use serde::{Deserialize, Serialize};

use crate::analysis::recommend_for;
use crate::config::Search;

#[derive(Debug)]
pub enum StoreError {
    NotFound(u64),
    /// The request is well formed but clashes with the trial's lock state.
    Conflict(String),
    /// A request value is unusable; `field` is its path in the request.
    Invalid { field: String, message: String },
    /// The model could not be fitted or optimized on the stored data.
    Model(LagoError),
    Io(String),
}

impl fmt::Display for StoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreError::NotFound(id) => write!(f, "trial {id} not found"),
            StoreError::Conflict(m) => f.write_str(m),
            StoreError::Invalid { field, message } => write!(f, "{field}: {message}"),
            StoreError::Model(e) => write!(f, "{e}"),
            StoreError::Io(m) => write!(f, "store i/o: {m}"),
        }
    }
}

impl std::error::Error for StoreError {}

pub type StoreResult<T> = std::result::Result<T, StoreError>;

fn invalid(field: &str, message: impl Into<String>) -> StoreError {
    StoreError::Invalid {
        field: field.to_owned(),
        message: message.into(),
    }
}

/// Analysis settings a trial falls back on when a request leaves them out.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialDefaults {
    #[serde(default)]
    pub bounds: Option<ComponentBounds>,
    #[serde(default)]
    pub cost: Option<CostFunction>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub z: Option<Vec<f64>>,
    #[serde(default)]
    pub increment: Option<f64>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateTrial {
    pub name: String,
    pub link: LinkFunction,
    #[serde(default = "default_true")]
    pub intercept: bool,
    /// Number of package components.
    pub p: usize,
    /// Number of center covariates.
    #[serde(default)]
    pub q: usize,
    #[serde(default)]
    pub defaults: TrialDefaults,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub id: u64,
    pub name: String,
    pub link: LinkFunction,
    pub intercept: bool,
    pub p: usize,
    pub q: usize,
    pub defaults: TrialDefaults,
    pub created_at: u64,
}

/// One participant posted to a stage; the stage comes from the URL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowInput {
    pub center_id: String,
    pub arm: Arm,
    pub y: f64,
    pub a: Vec<f64>,
    #[serde(default)]
    pub z: Vec<f64>,
}

/// Overrides for a recommendation; unset fields come from the trial defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendParams {
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub cost: Option<CostFunction>,
    #[serde(default)]
    pub bounds: Option<ComponentBounds>,
    #[serde(default)]
    pub z: Option<Vec<f64>>,
    #[serde(default)]
    pub increment: Option<f64>,
    #[serde(default)]
    pub search: Option<Search>,
}

/// Frozen analysis of a stage at the moment it was locked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSnapshot {
    pub stage: u32,
    pub n_total: usize,
    /// Absent when the data so far cannot identify the model (e.g. controls only).
    pub fit: Option<FitResult>,
    #[serde(default)]
    pub fit_error: Option<String>,
    /// Package for the next stage, when the lock request carried enough settings and a fit exists.
    pub recommendation: Option<Recommendation>,
    pub theta: Option<f64>,
    pub z: Option<Vec<f64>>,
    pub locked_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created { trial: TrialMeta },
    RowsAppended { stage: u32, rows: Vec<ObservationRow> },
    StageLocked { snapshot: StageSnapshot },
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub meta: TrialMeta,
    pub rows: Vec<ObservationRow>,
    pub locked: Vec<StageSnapshot>,
    path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: u32,
    pub participants: usize,
    pub centers: usize,
    pub locked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    #[serde(flatten)]
    pub meta: TrialMeta,
    pub n_total: usize,
    pub stages: Vec<StageStatus>,
    pub snapshots: Vec<StageSnapshot>,
}

impl Trial {
    fn new(meta: TrialMeta, path: PathBuf) -> Self {
        Self {
            meta,
            rows: Vec::new(),
            locked: Vec::new(),
            path,
        }
    }

    /// The one stage that accepts rows: the first not yet locked.
    pub fn open_stage(&self) -> u32 {
        self.locked.len() as u32 + 1
    }

    pub fn dataset(&self) -> StoreResult<TrialDataset> {
        TrialDataset::from_rows(self.meta.p, self.meta.q, self.rows.iter().cloned()).map_err(StoreError::Model)
    }

    pub fn fit(&self) -> StoreResult<FitResult> {
        if self.rows.is_empty() {
            return Err(StoreError::Conflict(format!("trial {} has no rows yet", self.meta.id)));
        }
        let opts = FitOptions {
            intercept: self.meta.intercept,
            ..FitOptions::default()
        };
        fit_gee_with(&self.dataset()?, self.meta.link, &opts).map_err(StoreError::Model)
    }

    /// Resolves overrides against the defaults; `theta`, `cost` and `bounds` are required.
    pub fn recommend(&self, fit: &FitResult, params: &RecommendParams) -> StoreResult<(Recommendation, f64, Vec<f64>)> {
        let d = &self.meta.defaults;
        let theta = params.theta.or(d.theta).ok_or_else(|| invalid("theta", "required"))?;
        let cost = params.cost.as_ref().or(d.cost.as_ref()).ok_or_else(|| invalid("cost", "required"))?;
        let bounds = self.bounds(params.bounds.as_ref())?;
        let z = self.z(params.z.as_ref())?;
        let rec = recommend_for(
            fit,
            &z,
            bounds,
            cost,
            theta,
            params.increment.or(d.increment),
            params.search.unwrap_or_default(),
        )
        .map_err(|e| match e {
            LagoError::InvalidInput(m) => invalid("theta", m),
            LagoError::DimensionMismatch { what, .. } => invalid(what, e.to_string()),
            other => StoreError::Model(other),
        })?;
        Ok((rec, theta, z))
    }

    pub fn bounds<'a>(&'a self, over: Option<&'a ComponentBounds>) -> StoreResult<&'a ComponentBounds> {
        let b = over
            .or(self.meta.defaults.bounds.as_ref())
            .ok_or_else(|| invalid("bounds", "required"))?;
        if b.len() != self.meta.p {
            return Err(invalid("bounds", format!("expected {} components, found {}", self.meta.p, b.len())));
        }
        Ok(b)
    }

    pub fn z(&self, over: Option<&Vec<f64>>) -> StoreResult<Vec<f64>> {
        let z = over
            .or(self.meta.defaults.z.as_ref())
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.meta.q]);
        if z.len() != self.meta.q {
            return Err(invalid("z", format!("expected {} covariates, found {}", self.meta.q, z.len())));
        }
        Ok(z)
    }

    pub fn summary(&self) -> TrialSummary {
        let k = self.rows.iter().map(|r| r.stage).max().unwrap_or(0).max(self.locked.len() as u32);
        let stages = (1..=k)
            .map(|s| {
                let rows: Vec<&ObservationRow> = self.rows.iter().filter(|r| r.stage == s).collect();
                let mut centers: Vec<&str> = rows.iter().map(|r| r.center_id.as_str()).collect();
                centers.sort_unstable();
                centers.dedup();
                StageStatus {
                    stage: s,
                    participants: rows.len(),
                    centers: centers.len(),
                    locked: (s as usize) <= self.locked.len(),
                }
            })
            .collect();
        TrialSummary {
            meta: self.meta.clone(),
            n_total: self.rows.len(),
            stages,
            snapshots: self.locked.clone(),
        }
    }

    fn check_stage_open(&self, stage: u32, action: &str) -> StoreResult<()> {
        if stage == 0 {
            return Err(invalid("stage", "stages are numbered from 1"));
        }
        if (stage as usize) <= self.locked.len() {
            return Err(StoreError::Conflict(format!("stage {stage} is locked; cannot {action}")));
        }
        let open = self.open_stage();
        if stage > open {
            return Err(StoreError::Conflict(format!(
                "cannot {action} stage {stage} while stage {open} is unlocked"
            )));
        }
        Ok(())
    }

    fn prepare_rows(&self, stage: u32, input: Vec<RowInput>) -> StoreResult<Vec<ObservationRow>> {
        self.check_stage_open(stage, "add rows to")?;
        if input.is_empty() {
            return Err(invalid("rows", "must not be empty"));
        }
        let rows: Vec<ObservationRow> = input
            .into_iter()
            .map(|r| ObservationRow {
                stage,
                center_id: r.center_id,
                arm: r.arm,
                y: r.y,
                a: r.a,
                z: r.z,
            })
            .collect();
        let base = self.rows.len();
        let all = self.rows.iter().cloned().chain(rows.iter().cloned());
        TrialDataset::from_rows(self.meta.p, self.meta.q, all).map_err(|e| match e {
            LagoError::InvalidData { row, message } if row >= base => invalid(&format!("rows[{}]", row - base), message),
            other => invalid("rows", other.to_string()),
        })?;
        Ok(rows)
    }

    fn prepare_lock(&self, stage: u32, params: &RecommendParams) -> StoreResult<StageSnapshot> {
        self.check_stage_open(stage, "lock")?;
        if !self.rows.iter().any(|r| r.stage == stage) {
            return Err(StoreError::Conflict(format!("stage {stage} has no rows to lock")));
        }
        let (fit, fit_error) = match self.fit() {
            Ok(f) => (Some(f), None),
            Err(StoreError::Model(e)) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        // A recommendation is attached only when the settings allow one.
        let wants = params.theta.or(self.meta.defaults.theta).is_some()
            && (params.cost.is_some() || self.meta.defaults.cost.is_some())
            && (params.bounds.is_some() || self.meta.defaults.bounds.is_some());
        let (recommendation, theta, z) = match &fit {
            Some(f) if wants => {
                let (rec, theta, z) = self.recommend(f, params)?;
                (Some(rec), Some(theta), Some(z))
            }
            _ => (None, None, None),
        };
        Ok(StageSnapshot {
            stage,
            n_total: self.rows.len(),
            fit,
            fit_error,
            recommendation,
            theta,
            z,
            locked_at: now(),
        })
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::Created { trial } => self.meta = trial,
            Event::RowsAppended { rows, .. } => self.rows.extend(rows),
            Event::StageLocked { snapshot } => self.locked.push(snapshot),
        }
    }

    fn persist(&self, event: &Event) -> StoreResult<()> {
        let mut line = serde_json::to_string(event).map_err(|e| StoreError::Io(e.to_string()))?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| StoreError::Io(format!("{}: {e}", self.path.display())))?;
        f.write_all(line.as_bytes())
            .and_then(|_| f.sync_data())
            .map_err(|e| StoreError::Io(format!("{}: {e}", self.path.display())))
    }

    /// Write-ahead: the event reaches disk before memory changes.
    fn commit(&mut self, event: Event) -> StoreResult<()> {
        self.persist(&event)?;
        self.apply(event);
        Ok(())
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub struct Store {
    dir: PathBuf,
    trials: RwLock<BTreeMap<u64, Arc<Mutex<Trial>>>>,
}

fn trial_file(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("trial-{id}.jsonl"))
}

impl Store {
    /// Opens `dir`, creating it if needed, and replays every trial file in it.
    pub fn open(dir: impl Into<PathBuf>) -> StoreResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| StoreError::Io(format!("{}: {e}", dir.display())))?;
        let mut trials = BTreeMap::new();
        let entries = fs::read_dir(&dir).map_err(|e| StoreError::Io(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| StoreError::Io(e.to_string()))?.path();
            let is_trial = path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trial-") && n.ends_with(".jsonl"));
            if is_trial {
                let trial = replay(&path)?;
                trials.insert(trial.meta.id, Arc::new(Mutex::new(trial)));
            }
        }
        Ok(Self {
            dir,
            trials: RwLock::new(trials),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn create(&self, req: CreateTrial) -> StoreResult<TrialSummary> {
        if req.p == 0 {
            return Err(invalid("p", "must be at least 1"));
        }
        if req.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        let d = &req.defaults;
        if let Some(b) = &d.bounds {
            b.validate().map_err(|e| invalid("defaults.bounds", e.to_string()))?;
            if b.len() != req.p {
                return Err(invalid("defaults.bounds", format!("expected {} components", req.p)));
            }
        }
        if let Some(c) = &d.cost {
            c.validate().map_err(|e| invalid("defaults.cost", e.to_string()))?;
            if c.len() != req.p {
                return Err(invalid("defaults.cost", format!("expected {} components", req.p)));
            }
        }
        if let Some(t) = d.theta {
            if !req.link.is_valid_mean(t) {
                return Err(invalid("defaults.theta", format!("{t} is outside the range of the {} link", req.link)));
            }
        }
        if d.z.as_ref().is_some_and(|z| z.len() != req.q) {
            return Err(invalid("defaults.z", format!("expected {} covariates", req.q)));
        }
        let mut trials = self.trials.write().expect("store lock poisoned");
        let id = trials.keys().next_back().map_or(1, |k| k + 1);
        let meta = TrialMeta {
            id,
            name: req.name,
            link: req.link,
            intercept: req.intercept,
            p: req.p,
            q: req.q,
            defaults: req.defaults,
            created_at: now(),
        };
        let mut trial = Trial::new(meta.clone(), trial_file(&self.dir, id));
        trial.commit(Event::Created { trial: meta })?;
        let summary = trial.summary();
        trials.insert(id, Arc::new(Mutex::new(trial)));
        Ok(summary)
    }

    fn get(&self, id: u64) -> StoreResult<Arc<Mutex<Trial>>> {
        self.trials
            .read()
            .expect("store lock poisoned")
            .get(&id)
            .cloned()
            .ok_or(StoreError::NotFound(id))
    }

    /// Runs `f` with the trial locked; read-only callers never touch the file.
    pub fn with_trial<T>(&self, id: u64, f: impl FnOnce(&Trial) -> StoreResult<T>) -> StoreResult<T> {
        let t = self.get(id)?;
        let guard = t.lock().expect("trial lock poisoned");
        f(&guard)
    }

    pub fn list(&self) -> Vec<TrialSummary> {
        let trials: Vec<_> = self.trials.read().expect("store lock poisoned").values().cloned().collect();
        trials.iter().map(|t| t.lock().expect("trial lock poisoned").summary()).collect()
    }

    pub fn append_rows(&self, id: u64, stage: u32, rows: Vec<RowInput>) -> StoreResult<TrialSummary> {
        let t = self.get(id)?;
        let mut trial = t.lock().expect("trial lock poisoned");
        let rows = trial.prepare_rows(stage, rows)?;
        trial.commit(Event::RowsAppended { stage, rows })?;
        Ok(trial.summary())
    }

    pub fn lock_stage(&self, id: u64, stage: u32, params: &RecommendParams) -> StoreResult<StageSnapshot> {
        let t = self.get(id)?;
        let mut trial = t.lock().expect("trial lock poisoned");
        let snapshot = trial.prepare_lock(stage, params)?;
        trial.commit(Event::StageLocked {
            snapshot: snapshot.clone(),
        })?;
        Ok(snapshot)
    }
}

fn replay(path: &Path) -> StoreResult<Trial> {
    let f = fs::File::open(path).map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))?;
    let mut trial: Option<Trial> = None;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line)
            .map_err(|e| StoreError::Io(format!("{} line {}: {e}", path.display(), i + 1)))?;
        match (&mut trial, event) {
            (None, Event::Created { trial: meta }) => trial = Some(Trial::new(meta, path.to_owned())),
            (Some(t), ev @ (Event::RowsAppended { .. } | Event::StageLocked { .. })) => t.apply(ev),
            _ => {
                return Err(StoreError::Io(format!(
                    "{} line {}: event out of order",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    trial.ok_or_else(|| StoreError::Io(format!("{}: empty trial file", path.display())))
}
