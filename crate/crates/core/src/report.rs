//! Serialized forms: complex matrices as nested `[re, im]` arrays (row-major)
//! and the run report emitted by the command-line tool.

use serde::{Deserialize, Serialize};

use crate::solver::{DestabilizerReport, SolverStatus, StepRecord};
use crate::stability::StabilityReport;
use crate::{CMat, C64};

/// Rows of `[re, im]` pairs.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn cmat_to_json(m: &CMat) -> MatrixJson {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

/// Parses a rectangular matrix; `None` if rows are ragged or empty.
pub fn cmat_from_json(rows: &MatrixJson) -> Option<CMat> {
    let nr = rows.len();
    let nc = rows.first()?.len();
    if nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return None;
    }
    Some(CMat::from_fn(nr, nc, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

/// `#[serde(with = "cmat_serde")]` adapter.
pub mod cmat_serde {
    use super::*;
    use serde::{de::Error as _, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        cmat_to_json(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        let rows = MatrixJson::deserialize(d)?;
        if rows.is_empty() {
            return Ok(CMat::zeros(0, 0));
        }
        cmat_from_json(&rows).ok_or_else(|| D::Error::custom("ragged matrix"))
    }
}

/// Diagnostics from `validate`.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct ValidationReport {
    pub passed: bool,
    pub failures: Vec<String>,
    pub volume: Option<f64>,
    pub gauduchon_defect: Option<f64>,
    pub astheno_defect: Option<f64>,
    pub family_curvature_defect: Vec<(f64, f64)>,
}

/// Summary of a continuity-method run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: SolverStatus,
    pub gamma: f64,
    pub final_residual: f64,
    pub steps: Vec<StepRecord>,
    pub m_history: Vec<f64>,
    pub destabilizer: Option<DestabilizerReport>,
    pub slope_defects: Vec<SubbundleDefect>,
    pub stall_reason: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubbundleDefect {
    #[serde(with = "cmat_serde")]
    pub basis: CMat,
    pub defect: crate::stability::SlopeDefect,
}

/// Everything one CLI invocation reports. `wall_time_s` is kept apart from
/// the deterministic payload so reports can be compared across runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: serde_json::Value,
    pub command: String,
    pub validation: Option<ValidationReport>,
    pub gamma: Option<f64>,
    pub degree: Option<f64>,
    pub slope: Option<f64>,
    pub stability: Option<StabilityReport>,
    pub is_simple: Option<bool>,
    pub solve: Option<SolveSummary>,
    pub bogomolov: Option<f64>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(command: &str, scenario: serde_json::Value) -> Self {
        RunReport {
            scenario,
            command: command.to_string(),
            validation: None,
            gamma: None,
            degree: None,
            slope: None,
            stability: None,
            is_simple: None,
            solve: None,
            bogomolov: None,
            wall_time_s: 0.0,
        }
    }

    /// The report without its timing field.
    pub fn comparable(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("wall_time_s");
        }
        v
    }

    /// Whether every number in the payload is finite.
    pub fn all_finite(&self) -> bool {
        fn walk(v: &serde_json::Value) -> bool {
            match v {
                serde_json::Value::Number(n) => n.as_f64().map_or(true, f64::is_finite),
                serde_json::Value::Array(a) => a.iter().all(walk),
                serde_json::Value::Object(o) => o.values().all(walk),
                _ => true,
            }
        }
        walk(&serde_json::to_value(self).expect("report serializes"))
    }
}
