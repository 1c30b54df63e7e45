//! Lossless JSON export/import of grid-backend trajectories. Numbers pass
//! through serde_json's shortest round-trip encoding, so export → import →
//! export is byte-stable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{MetricField, ScalarField, SymTensorField, ThreeFormField};
use crate::flow::{FlowState, Trajectory};
use crate::grid::{GridSpec, MAX_DIM};

#[derive(Debug, Error)]
pub enum TrajectoryIoError {
    #[error("trajectory parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] crate::errors::GeometryError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    t: f64,
    metric: Vec<f64>,
    #[serde(default)]
    h: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryDoc {
    grid: GridSpec,
    horizon: f64,
    step_sizes: Vec<f64>,
    snapshots: Vec<SnapshotDoc>,
}

pub fn export_json(traj: &Trajectory) -> String {
    let doc = TrajectoryDoc {
        grid: traj.states[0].grid().clone(),
        horizon: traj.horizon,
        step_sizes: traj.step_sizes.clone(),
        snapshots: traj
            .states
            .iter()
            .map(|s| SnapshotDoc {
                t: s.t,
                metric: s.g.base.values.clone(),
                h: s.h.as_ref().map(|h| h.coeff.values.clone()),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("trajectory serializes")
}

pub fn import_json(text: &str) -> Result<Trajectory, TrajectoryIoError> {
    let doc: TrajectoryDoc = serde_json::from_str(text)?;
    if doc.grid.dim > MAX_DIM {
        return Err(TrajectoryIoError::Invalid(format!(
            "unsupported grid dimension {}",
            doc.grid.dim
        )));
    }
    // re-validate the grid through its constructor
    let grid = GridSpec::new(
        doc.grid.dim,
        &doc.grid.points[..doc.grid.dim],
        &doc.grid.lengths[..doc.grid.dim],
    )?;
    if doc.snapshots.is_empty() {
        return Err(TrajectoryIoError::Invalid("no snapshots".into()));
    }
    let nc = doc.grid.dim * (doc.grid.dim + 1) / 2;
    let mut states = Vec::with_capacity(doc.snapshots.len());
    let mut prev_t = f64::NEG_INFINITY;
    for (k, snap) in doc.snapshots.into_iter().enumerate() {
        if snap.t <= prev_t {
            return Err(TrajectoryIoError::Invalid(format!(
                "snapshot times must increase, broken at index {k}"
            )));
        }
        prev_t = snap.t;
        if snap.metric.len() != grid.len() * nc {
            return Err(TrajectoryIoError::Invalid(format!(
                "snapshot {k}: metric has {} values, expected {}",
                snap.metric.len(),
                grid.len() * nc
            )));
        }
        if snap.metric.iter().any(|v| !v.is_finite()) {
            return Err(TrajectoryIoError::Invalid(format!(
                "snapshot {k}: non-finite metric entry"
            )));
        }
        let g = MetricField::new(SymTensorField { grid: grid.clone(), values: snap.metric })?;
        let h = match snap.h {
            None => None,
            Some(v) => {
                if v.len() != grid.len() {
                    return Err(TrajectoryIoError::Invalid(format!(
                        "snapshot {k}: three-form has {} values, expected {}",
                        v.len(),
                        grid.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(TrajectoryIoError::Invalid(format!(
                        "snapshot {k}: non-finite three-form entry"
                    )));
                }
                Some(ThreeFormField::new(ScalarField { grid: grid.clone(), values: v })?)
            }
        };
        states.push(FlowState { g, h, t: snap.t });
    }
    if !doc.horizon.is_finite() || doc.horizon < states.last().unwrap().t {
        return Err(TrajectoryIoError::Invalid(format!(
            "horizon {} precedes the last snapshot",
            doc.horizon
        )));
    }
    if doc.step_sizes.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(TrajectoryIoError::Invalid("non-positive step size".into()));
    }
    Ok(Trajectory { states, step_sizes: doc.step_sizes, horizon: doc.horizon })
}
