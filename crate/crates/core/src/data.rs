//! Stage/center/arm structured trial data.
//!
//! Rows are stored grouped by `(stage, center)` so that the package and covariates
//! are held once per center, which is how they enter the estimating equations.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LagoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Intervention,
    Control,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Intervention => "intervention",
            Arm::Control => "control",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = LagoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intervention" => Ok(Arm::Intervention),
            "control" => Ok(Arm::Control),
            other => Err(LagoError::InvalidInput(format!(
                "arm `{other}` must be `intervention` or `control`"
            ))),
        }
    }
}

/// A single participant outcome with its center-level attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRow {
    pub stage: u32,
    pub center_id: String,
    pub arm: Arm,
    pub y: f64,
    pub a: Vec<f64>,
    pub z: Vec<f64>,
}

/// All outcomes from one center in one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterGroup {
    pub stage: u32,
    pub center_id: String,
    pub arm: Arm,
    pub a: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl CenterGroup {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    p: usize,
    q: usize,
    groups: Vec<CenterGroup>,
}

impl TrialDataset {
    /// Builds a dataset from pre-grouped centers, validating every invariant.
    pub fn from_groups(p: usize, q: usize, groups: Vec<CenterGroup>) -> Result<Self> {
        let ds = Self { p, q, groups };
        ds.validate()?;
        Ok(ds)
    }

    /// Groups rows by `(stage, center_id)`, keeping first-appearance order.
    /// Errors cite the zero-based index of the first offending row.
    pub fn from_rows(p: usize, q: usize, rows: impl IntoIterator<Item = ObservationRow>) -> Result<Self> {
        let mut groups: Vec<CenterGroup> = Vec::new();
        let mut index: HashMap<(u32, String), usize> = HashMap::new();
        for (i, row) in rows.into_iter().enumerate() {
            check_row(p, q, i, &row)?;
            let key = (row.stage, row.center_id.clone());
            match index.get(&key) {
                Some(&g) => {
                    let grp = &mut groups[g];
                    if grp.arm != row.arm || grp.a != row.a || grp.z != row.z {
                        return Err(LagoError::InvalidData {
                            row: i,
                            message: format!(
                                "center `{}` in stage {} has inconsistent arm, package or covariates across rows",
                                row.center_id, row.stage
                            ),
                        });
                    }
                    grp.y.push(row.y);
                }
                None => {
                    index.insert(key, groups.len());
                    groups.push(CenterGroup {
                        stage: row.stage,
                        center_id: row.center_id,
                        arm: row.arm,
                        a: row.a,
                        z: row.z,
                        y: vec![row.y],
                    });
                }
            }
        }
        let ds = Self { p, q, groups };
        ds.validate_stages()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen: HashMap<(u32, &str), usize> = HashMap::new();
        for (g, grp) in self.groups.iter().enumerate() {
            if grp.y.is_empty() {
                return Err(LagoError::InvalidData {
                    row: g,
                    message: format!("center `{}` has no outcomes", grp.center_id),
                });
            }
            for y in &grp.y {
                let row = ObservationRow {
                    stage: grp.stage,
                    center_id: grp.center_id.clone(),
                    arm: grp.arm,
                    y: *y,
                    a: grp.a.clone(),
                    z: grp.z.clone(),
                };
                check_row(self.p, self.q, g, &row)?;
            }
            if seen.insert((grp.stage, grp.center_id.as_str()), g).is_some() {
                return Err(LagoError::InvalidData {
                    row: g,
                    message: format!(
                        "center `{}` appears twice in stage {}",
                        grp.center_id, grp.stage
                    ),
                });
            }
        }
        self.validate_stages()
    }

    fn validate_stages(&self) -> Result<()> {
        let k = self.num_stages();
        let mut present = vec![false; k as usize];
        for grp in &self.groups {
            present[(grp.stage - 1) as usize] = true;
        }
        if let Some(missing) = present.iter().position(|p| !p) {
            return Err(LagoError::InvalidInput(format!(
                "stages must be contiguous from 1; stage {} has no rows",
                missing + 1
            )));
        }
        Ok(())
    }

    pub fn empty(p: usize, q: usize) -> Self {
        Self {
            p,
            q,
            groups: Vec::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn groups(&self) -> &[CenterGroup] {
        &self.groups
    }

    /// Appends a center, re-checking all invariants.
    pub fn push_group(&mut self, group: CenterGroup) -> Result<()> {
        self.groups.push(group);
        if let Err(e) = self.validate() {
            self.groups.pop();
            return Err(e);
        }
        Ok(())
    }

    pub fn n_total(&self) -> usize {
        self.groups.iter().map(CenterGroup::n).sum()
    }

    pub fn num_centers(&self) -> usize {
        self.groups.len()
    }

    /// `K`, the largest stage label (0 for an empty dataset).
    pub fn num_stages(&self) -> u32 {
        self.groups.iter().map(|g| g.stage).max().unwrap_or(0)
    }

    /// Participants per stage, indexed from stage 1.
    pub fn stage_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_stages() as usize];
        for grp in &self.groups {
            sizes[(grp.stage - 1) as usize] += grp.n();
        }
        sizes
    }

    pub fn arm_outcomes(&self, arm: Arm) -> Vec<f64> {
        self.groups
            .iter()
            .filter(|g| g.arm == arm)
            .flat_map(|g| g.y.iter().copied())
            .collect()
    }

    /// The subset of centers from stages `1..=k`.
    pub fn through_stage(&self, k: u32) -> Self {
        Self {
            p: self.p,
            q: self.q,
            groups: self.groups.iter().filter(|g| g.stage <= k).cloned().collect(),
        }
    }

    /// Centers from the given stages only, relabelled as a single stage 1.
    pub fn only_stages(&self, stages: &[u32]) -> Self {
        Self {
            p: self.p,
            q: self.q,
            groups: self
                .groups
                .iter()
                .filter(|g| stages.contains(&g.stage))
                .map(|g| CenterGroup {
                    stage: 1,
                    center_id: format!("s{}-{}", g.stage, g.center_id),
                    ..g.clone()
                })
                .collect(),
        }
    }

    /// Flattens back to one row per participant, in group order.
    pub fn rows(&self) -> impl Iterator<Item = ObservationRow> + '_ {
        self.groups.iter().flat_map(|g| {
            g.y.iter().map(move |y| ObservationRow {
                stage: g.stage,
                center_id: g.center_id.clone(),
                arm: g.arm,
                y: *y,
                a: g.a.clone(),
                z: g.z.clone(),
            })
        })
    }
}

fn check_row(p: usize, q: usize, i: usize, row: &ObservationRow) -> Result<()> {
    let bad = |message: String| Err(LagoError::InvalidData { row: i, message });
    if row.stage < 1 {
        return bad("stage must be at least 1".into());
    }
    if row.center_id.is_empty() {
        return bad("center_id is empty".into());
    }
    if row.a.len() != p {
        return bad(format!("expected {p} package columns, found {}", row.a.len()));
    }
    if row.z.len() != q {
        return bad(format!("expected {q} covariate columns, found {}", row.z.len()));
    }
    if !row.y.is_finite() {
        return bad("y is not finite".into());
    }
    if let Some(c) = row.a.iter().position(|v| !v.is_finite()) {
        return bad(format!("a_{} is not finite", c + 1));
    }
    if let Some(c) = row.z.iter().position(|v| !v.is_finite()) {
        return bad(format!("z_{} is not finite", c + 1));
    }
    if row.arm == Arm::Control && row.a.iter().any(|v| *v != 0.0) {
        return bad(format!(
            "control center `{}` must carry the zero package",
            row.center_id
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(stage: u32, center: &str, arm: Arm, y: f64, a: &[f64]) -> ObservationRow {
        ObservationRow {
            stage,
            center_id: center.into(),
            arm,
            y,
            a: a.to_vec(),
            z: vec![],
        }
    }

    #[test]
    fn minimal_three_rows_form_one_center() {
        let ds = TrialDataset::from_rows(
            1,
            0,
            (1..=3).map(|i| row(1, "c1", Arm::Intervention, i as f64, &[1.0])),
        )
        .unwrap();
        assert_eq!(ds.num_stages(), 1);
        assert_eq!(ds.num_centers(), 1);
        assert_eq!(ds.n_total(), 3);
        assert_eq!(ds.rows().count(), 3);
    }

    #[test]
    fn inconsistent_package_names_the_center() {
        let err = TrialDataset::from_rows(
            1,
            0,
            vec![
                row(1, "north", Arm::Intervention, 1.0, &[1.0]),
                row(1, "north", Arm::Intervention, 1.0, &[2.0]),
            ],
        )
        .unwrap_err();
        assert!(err.to_string().contains("north"), "{err}");
        assert!(matches!(err, LagoError::InvalidData { row: 1, .. }));
    }

    #[test]
    fn stage_gaps_are_rejected() {
        let err = TrialDataset::from_rows(
            1,
            0,
            vec![
                row(1, "a", Arm::Intervention, 1.0, &[1.0]),
                row(3, "b", Arm::Intervention, 1.0, &[1.0]),
            ],
        )
        .unwrap_err();
        assert!(err.to_string().contains("stage 2"));
    }

    #[test]
    fn control_requires_zero_package() {
        let err = TrialDataset::from_rows(1, 0, vec![row(1, "a", Arm::Control, 1.0, &[1.0])]).unwrap_err();
        assert!(err.to_string().contains("zero package"));
    }

    #[test]
    fn stage_filters() {
        let ds = TrialDataset::from_rows(
            1,
            0,
            vec![
                row(1, "a", Arm::Intervention, 1.0, &[1.0]),
                row(2, "a", Arm::Control, 2.0, &[0.0]),
                row(2, "b", Arm::Intervention, 3.0, &[2.0]),
            ],
        )
        .unwrap();
        assert_eq!(ds.stage_sizes(), vec![1, 2]);
        assert_eq!(ds.through_stage(1).n_total(), 1);
        let s2 = ds.only_stages(&[2]);
        assert_eq!(s2.num_stages(), 1);
        assert_eq!(s2.arm_outcomes(Arm::Intervention), vec![3.0]);
    }
}
