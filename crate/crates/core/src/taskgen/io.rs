use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{GroundTruth, TaskInstance, TaskKind};
use crate::dataset::{self, file_safe, DatasetError, JsonlWriter, Sidecar, SCHEMA_VERSION};
use crate::tools::ToolCall;

/// Persisted form of a [`TaskInstance`]: the initial sketch is replaced by
/// a PNG path relative to the JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: String,
    pub kind: TaskKind,
    pub question: String,
    pub truth: GroundTruth,
    pub plan: Vec<ToolCall>,
    pub meta: Map<String, Value>,
    pub seed: u64,
    pub initial: String,
}

impl TaskRecord {
    pub fn store(instance: &TaskInstance, sidecar: &Sidecar) -> Result<Self, DatasetError> {
        Self::store_as(instance, sidecar, &format!("{}/initial.png", file_safe(&instance.id)))
    }

    /// Like [`TaskRecord::store`] with an explicit sidecar file name.
    pub fn store_as(instance: &TaskInstance, sidecar: &Sidecar, name: &str) -> Result<Self, DatasetError> {
        let initial = sidecar.save(name, &instance.initial)?;
        Ok(Self {
            id: instance.id.clone(),
            kind: instance.kind,
            question: instance.question.clone(),
            truth: instance.truth.clone(),
            plan: instance.plan.clone(),
            meta: instance.meta.clone(),
            seed: instance.seed,
            initial,
        })
    }

    pub fn load(self, sidecar: &Sidecar) -> Result<TaskInstance, DatasetError> {
        let initial = sidecar.load(&self.initial)?;
        Ok(TaskInstance {
            id: self.id,
            kind: self.kind,
            initial,
            question: self.question,
            truth: self.truth,
            plan: self.plan,
            meta: self.meta,
            seed: self.seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TaskLine {
    schema_version: u32,
    #[serde(flatten)]
    task: TaskRecord,
}

pub fn write_tasks_jsonl(path: &Path, tasks: &[TaskInstance]) -> Result<(), DatasetError> {
    let sidecar = Sidecar::for_jsonl(path);
    let mut out = JsonlWriter::create(path)?;
    for t in tasks {
        out.write(&TaskLine {
            schema_version: SCHEMA_VERSION,
            task: TaskRecord::store(t, &sidecar)?,
        })?;
    }
    out.finish()
}

pub fn read_tasks_jsonl(path: &Path) -> Result<Vec<TaskInstance>, DatasetError> {
    let sidecar = Sidecar::for_jsonl(path);
    dataset::read_records::<TaskLine>(path)?
        .into_iter()
        .map(|(line, rec)| {
            if rec.schema_version != SCHEMA_VERSION {
                return Err(dataset::line_error(
                    path,
                    line,
                    format!("unsupported schema_version {}", rec.schema_version),
                ));
            }
            rec.task.load(&sidecar)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{generate, GenParams};

    #[test]
    fn tasks_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.jsonl");
        let params = GenParams { resolution: 128, ..GenParams::default() };
        let tasks: Vec<_> = TaskKind::ALL
            .iter()
            .map(|&k| generate(k, &params, 21).unwrap())
            .collect();
        write_tasks_jsonl(&path, &tasks).unwrap();
        assert_eq!(read_tasks_jsonl(&path).unwrap(), tasks);
        assert!(dir.path().join("tasks_images").is_dir());
    }

    #[test]
    fn empty_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("none.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_tasks_jsonl(&path).unwrap().is_empty());
    }
}
