//! Trajectory datasets: one JSON record per line, sketches as PNG sidecars.
//!
//! Record layout (`schema_version` 1):
//!
//! ```json
//! {"schema_version": 1, "id": "...", "provenance": "synthesized",
//!  "reflection_count": 0, "task": {..., "initial": "x_images/<id>/initial.png"},
//!  "steps": [{"thought": "...", "action": {...}, "observation":
//!             {"type": "sketch", "path": "x_images/<id>/step_00.png"}, "masked": false},
//!            {"thought": "...", "answer": "270", "masked": false}],
//!  "rejected_turn": null}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Observation, Provenance, RejectedTurn, Step, StepAction, Trajectory};
use crate::dataset::{self, file_safe, DatasetError, JsonlWriter, Sidecar, SCHEMA_VERSION};
use crate::taskgen::TaskRecord;
use crate::tools::{ToolCall, ToolError, ToolErrorCode};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ObservationRecord {
    Sketch { path: String },
    Error { code: ToolErrorCode, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRecord {
    thought: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    action: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observation: Option<ObservationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer: Option<String>,
    masked: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRecord {
    schema_version: u32,
    id: String,
    provenance: Provenance,
    reflection_count: u32,
    task: TaskRecord,
    steps: Vec<StepRecord>,
    rejected_turn: Option<RejectedTurn>,
}

fn to_record(t: &Trajectory, sidecar: &Sidecar) -> Result<TrajectoryRecord, DatasetError> {
    let dir = file_safe(&t.id);
    let task = TaskRecord::store_as(&t.task, sidecar, &format!("{dir}/initial.png"))?;
    let mut steps = Vec::with_capacity(t.steps.len());
    for (i, s) in t.steps.iter().enumerate() {
        let (action, observation, answer) = match &s.action {
            StepAction::Tool { call, observation } => {
                let obs = match observation {
                    Observation::Sketch(sk) => ObservationRecord::Sketch {
                        path: sidecar.save(&format!("{dir}/step_{i:02}.png"), sk)?,
                    },
                    Observation::Error(e) => ObservationRecord::Error {
                        code: e.code,
                        message: e.message.clone(),
                    },
                };
                (Some(call.clone()), Some(obs), None)
            }
            StepAction::Answer(a) => (None, None, Some(a.clone())),
        };
        steps.push(StepRecord {
            thought: s.thought.clone(),
            action,
            observation,
            answer,
            masked: s.masked,
        });
    }
    Ok(TrajectoryRecord {
        schema_version: SCHEMA_VERSION,
        id: t.id.clone(),
        provenance: t.provenance,
        reflection_count: t.reflection_count,
        task,
        steps,
        rejected_turn: t.rejected_turn.clone(),
    })
}

fn from_record(
    rec: TrajectoryRecord,
    sidecar: &Sidecar,
    path: &Path,
    line: usize,
) -> Result<Trajectory, DatasetError> {
    let bad = |m: String| dataset::line_error(path, line, m);
    if rec.schema_version != SCHEMA_VERSION {
        return Err(bad(format!("unsupported schema_version {}", rec.schema_version)));
    }
    let mut steps = Vec::with_capacity(rec.steps.len());
    for (i, s) in rec.steps.into_iter().enumerate() {
        let action = match (s.action, s.observation, s.answer) {
            (Some(call), Some(obs), None) => StepAction::Tool {
                call,
                observation: match obs {
                    ObservationRecord::Sketch { path } => Observation::Sketch(sidecar.load(&path)?),
                    ObservationRecord::Error { code, message } => Observation::Error(ToolError::new(code, message)),
                },
            },
            (None, None, Some(answer)) => StepAction::Answer(answer),
            _ => {
                return Err(bad(format!(
                    "step {i} must have either an action with an observation or an answer"
                )))
            }
        };
        steps.push(Step {
            thought: s.thought,
            action,
            masked: s.masked,
        });
    }
    let t = Trajectory {
        id: rec.id,
        task: rec.task.load(sidecar)?,
        steps,
        provenance: rec.provenance,
        reflection_count: rec.reflection_count,
        rejected_turn: rec.rejected_turn,
    };
    t.validate().map_err(|e| bad(e.to_string()))?;
    Ok(t)
}

fn write_all(out: &mut JsonlWriter, path: &Path, trajectories: &[Trajectory]) -> Result<(), DatasetError> {
    let sidecar = Sidecar::for_jsonl(path);
    for t in trajectories {
        out.write(&to_record(t, &sidecar)?)?;
    }
    Ok(())
}

pub fn write_jsonl(path: &Path, trajectories: &[Trajectory]) -> Result<(), DatasetError> {
    let mut out = JsonlWriter::create(path)?;
    write_all(&mut out, path, trajectories)?;
    out.finish()
}

pub fn append_jsonl(path: &Path, trajectories: &[Trajectory]) -> Result<(), DatasetError> {
    let mut out = JsonlWriter::append(path)?;
    write_all(&mut out, path, trajectories)?;
    out.finish()
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Trajectory>, DatasetError> {
    let sidecar = Sidecar::for_jsonl(path);
    dataset::read_records::<TrajectoryRecord>(path)?
        .into_iter()
        .map(|(line, rec)| from_record(rec, &sidecar, path, line))
        .collect()
}

/// Appends one record to an open writer, saving sketches next to `path`.
pub(crate) fn write_one(out: &mut JsonlWriter, path: &Path, t: &Trajectory) -> Result<(), DatasetError> {
    out.write(&to_record(t, &Sidecar::for_jsonl(path))?)
}
