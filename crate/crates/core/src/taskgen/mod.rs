//! Procedural task generation: the initial image, question, ground truth and
//! a planner-produced action sequence for each supported task family.
//!
//! Every generator is a pure function of its parameters and seed.

mod clock;
mod io;
mod jigsaw;
mod maze;
mod rotation;
mod scene;
mod search;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::raster::{RasterError, Sketch};
use crate::tools::{self, ToolCall, ToolError};

pub use clock::gen_numeric;
pub use io::{read_tasks_jsonl, write_tasks_jsonl, TaskRecord};
pub use jigsaw::{gen_jigsaw, invert_permutation, permutation_cycles};
pub use maze::{bfs_shortest_path, gen_maze, maze_grid, moves_between, MazeGrid};
pub use rotation::gen_rotation;
pub use scene::procedural_base;
pub use search::gen_visual_search;

#[derive(Debug, Error)]
pub enum TaskGenError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("planned action {index} failed: {source}")]
    PlanFailed { index: usize, source: ToolError },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Maze,
    Jigsaw,
    Rotation,
    VisualSearch,
    NumericEstimate,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Maze,
        TaskKind::Jigsaw,
        TaskKind::Rotation,
        TaskKind::VisualSearch,
        TaskKind::NumericEstimate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Maze => "maze",
            TaskKind::Jigsaw => "jigsaw",
            TaskKind::Rotation => "rotation",
            TaskKind::VisualSearch => "visual_search",
            TaskKind::NumericEstimate => "numeric_estimate",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = TaskGenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "maze" => Ok(TaskKind::Maze),
            "jigsaw" => Ok(TaskKind::Jigsaw),
            "rotation" => Ok(TaskKind::Rotation),
            "visual_search" | "search" => Ok(TaskKind::VisualSearch),
            "numeric_estimate" | "numeric" | "clock" => Ok(TaskKind::NumericEstimate),
            other => Err(TaskGenError::InvalidParameter(format!(
                "unknown task kind '{other}'"
            ))),
        }
    }
}

/// The expected answer `y*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum GroundTruth {
    TextAnswer { text: String },
    /// Moves over `U`, `D`, `L`, `R`.
    MoveSequence { moves: String },
    Permutation { order: Vec<usize> },
    Numeric { value: f64, unit: String },
    ChoiceLabel { label: String },
}

impl GroundTruth {
    pub fn moves(moves: impl Into<String>) -> Result<Self, TaskGenError> {
        let moves = moves.into();
        if let Some(bad) = moves.chars().find(|c| !"UDLR".contains(*c)) {
            return Err(TaskGenError::InvalidParameter(format!(
                "move sequence contains '{bad}'; only U, D, L, R are allowed"
            )));
        }
        Ok(GroundTruth::MoveSequence { moves })
    }

    /// The answer as the policy is expected to write it.
    pub fn answer_text(&self) -> String {
        match self {
            GroundTruth::TextAnswer { text } => text.clone(),
            GroundTruth::MoveSequence { moves } => moves.clone(),
            GroundTruth::Permutation { order } => {
                let items: Vec<String> = order.iter().map(|i| i.to_string()).collect();
                format!("[{}]", items.join(", "))
            }
            GroundTruth::Numeric { value, .. } => tools::num(*value).to_string(),
            GroundTruth::ChoiceLabel { label } => label.clone(),
        }
    }
}

/// Knobs shared by all generators. Parameter ranges are configuration, not
/// fixed constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub resolution: u32,
    pub maze_n: usize,
    pub jigsaw_rows: usize,
    pub jigsaw_cols: usize,
    pub search_grid: usize,
    /// Upper bound on planned tool calls, leaving one turn for the answer
    /// inside the 15-turn episode cap.
    pub max_plan_len: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            resolution: 512,
            maze_n: 5,
            jigsaw_rows: 3,
            jigsaw_cols: 3,
            search_grid: 4,
            max_plan_len: 14,
        }
    }
}

/// A generated task triplet `(I_0, Q, y*)` plus its ground-truth plan.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub id: String,
    pub kind: TaskKind,
    pub initial: Sketch,
    pub question: String,
    pub truth: GroundTruth,
    pub plan: Vec<ToolCall>,
    pub meta: Map<String, Value>,
    pub seed: u64,
}

impl TaskInstance {
    pub fn meta_i64(&self, key: &str) -> Option<i64> {
        self.meta.get(key).and_then(Value::as_i64)
    }
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 step, used to derive independent child seeds from a master.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates one instance of `kind`. Jigsaw and rotation tasks draw their
/// base picture from [`procedural_base`] with the same seed.
pub fn generate(kind: TaskKind, params: &GenParams, seed: u64) -> Result<TaskInstance, TaskGenError> {
    let res = params.resolution;
    if res < 16 {
        return Err(TaskGenError::InvalidParameter(format!(
            "resolution must be >= 16, got {res}"
        )));
    }
    match kind {
        TaskKind::Maze => gen_maze(params.maze_n, seed, params),
        TaskKind::Jigsaw => {
            let (r, c) = (params.jigsaw_rows as u32, params.jigsaw_cols as u32);
            if r == 0 || c == 0 {
                return Err(TaskGenError::InvalidParameter(
                    "jigsaw rows and cols must be >= 1".into(),
                ));
            }
            let base = procedural_base(res / c * c, res / r * r, seed)?;
            gen_jigsaw(&base, params.jigsaw_rows, params.jigsaw_cols, seed, params)
        }
        TaskKind::Rotation => {
            let base = procedural_base(res, res * 3 / 4, seed)?;
            gen_rotation(&base, seed)
        }
        TaskKind::VisualSearch => gen_visual_search(seed, params),
        TaskKind::NumericEstimate => gen_numeric(seed, params),
    }
}

/// The stored ground-truth plan.
pub fn plan_solution(instance: &TaskInstance) -> Vec<ToolCall> {
    instance.plan.clone()
}

/// Executes the plan from `I_0`, returning `I_1..I_T`.
pub fn replay_plan(instance: &TaskInstance) -> Result<Vec<Sketch>, TaskGenError> {
    let mut current = instance.initial.clone();
    let mut out = Vec::with_capacity(instance.plan.len());
    for (index, call) in instance.plan.iter().enumerate() {
        current = tools::dispatch(call, &current)
            .map_err(|source| TaskGenError::PlanFailed { index, source })?;
        out.push(current.clone());
    }
    Ok(out)
}

/// Kind-specific check that a final sketch solves the task.
pub fn check_success(instance: &TaskInstance, final_sketch: &Sketch) -> bool {
    match instance.kind {
        TaskKind::Maze => maze::route_covers_truth(instance, final_sketch),
        TaskKind::Jigsaw => jigsaw::is_restored(instance, final_sketch),
        TaskKind::Rotation => rotation::is_upright(instance, final_sketch),
        TaskKind::VisualSearch => search::final_crop_isolates_target(instance),
        TaskKind::NumericEstimate => clock::crop_contains_dial(instance),
    }
}

pub(crate) fn meta_pair(v: (i64, i64)) -> Value {
    Value::Array(vec![v.0.into(), v.1.into()])
}

pub(crate) fn read_pair(meta: &Map<String, Value>, key: &str) -> Option<(i64, i64)> {
    let arr = meta.get(key)?.as_array()?;
    Some((arr.first()?.as_i64()?, arr.get(1)?.as_i64()?))
}
