//! Rollout episodes for external policies, plus persistence, scoring and
//! rendering of their transcripts.

mod http;
mod policy;
mod render;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Sketch;
use crate::reward::{check_turn, total_reward, ConstantEvaluator, FormatViolation, RewardBreakdown, RewardWeights, StepEvaluator};
use crate::synthesis::StubProvider;
use crate::taskgen::{self, read_tasks_jsonl, GenParams, TaskInstance, TaskKind};
use crate::tools::{self, ToolCall, ToolSpec};
use crate::trajectory::{
    self, default_system_prompt, Observation, Provenance, RejectedTurn, Step, StepAction, Trajectory, TurnAction,
};

pub use http::{router, serve, spawn_server, ServerHandle};
pub use policy::{run_episode, ChatPolicy, ChatPolicyRunner, PlanPolicy, Policy, PolicyError};
pub use render::{render_html, render_strip, render_trajectory, DEFAULT_PANEL};

/// Version of the request and response bodies.
pub const API_VERSION: u32 = 1;

/// Default per-turn character cap.
pub const DEFAULT_MAX_TURN_CHARS: usize = 32_768;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("episode {0} not found")]
    NotFound(String),
    #[error("{0}")]
    State(String),
    #[error("bad request: {0}")]
    Request(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error("scoring: {0}")]
    Scoring(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not-found",
            ServiceError::State(_) => "state",
            ServiceError::Request(_) => "request",
            ServiceError::Storage(_) => "storage",
            ServiceError::Scoring(_) => "scoring",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeStatus {
    Active,
    Answered,
    TerminatedFormat,
    TerminatedLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLimits {
    pub max_turns: usize,
    pub max_turn_chars: usize,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self {
            max_turns: trajectory::MAX_TURNS,
            max_turn_chars: DEFAULT_MAX_TURN_CHARS,
        }
    }
}

pub fn png_base64(sketch: &Sketch) -> String {
    let png = sketch.encode_png().expect("in-memory sketches always encode");
    base64::engine::general_purpose::STANDARD.encode(png)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TurnOutcome {
    ToolObservation {
        image_png: String,
        width: u32,
        height: u32,
        message: String,
    },
    ToolError {
        code: tools::ToolErrorCode,
        message: String,
    },
    Answered {
        answer: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reward: Option<RewardBreakdown>,
    },
    RejectedFormat {
        kind: String,
        position: Option<usize>,
        message: String,
    },
    RejectedLimit {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResponse {
    pub outcome: TurnOutcome,
    pub turns_remaining: usize,
    pub status: EpisodeStatus,
}

/// One policy interaction. All state changes go through [`Episode::submit`].
#[derive(Debug, Clone)]
pub struct Episode {
    pub id: String,
    pub current: Sketch,
    pub turns_used: usize,
    pub status: EpisodeStatus,
    pub transcript: Trajectory,
    pub limits: EpisodeLimits,
    persisted: u64,
}

impl Episode {
    pub fn new(id: impl Into<String>, task: TaskInstance, limits: EpisodeLimits) -> Self {
        let id = id.into();
        Self {
            current: task.initial.clone(),
            transcript: Trajectory::new(id.clone(), task, Provenance::RolledOut),
            id,
            turns_used: 0,
            status: EpisodeStatus::Active,
            limits,
            persisted: 0,
        }
    }

    pub fn task(&self) -> &TaskInstance {
        &self.transcript.task
    }

    pub fn turns_remaining(&self) -> usize {
        self.limits.max_turns.saturating_sub(self.turns_used)
    }

    fn respond(&self, outcome: TurnOutcome) -> TurnResponse {
        TurnResponse {
            outcome,
            turns_remaining: self.turns_remaining(),
            status: self.status,
        }
    }

    fn reject(&mut self, raw: &str, status: EpisodeStatus, error: String) {
        self.status = status;
        self.transcript.rejected_turn = Some(RejectedTurn {
            raw: raw.to_string(),
            error,
        });
    }

    /// Applies one raw assistant turn.
    pub fn submit(&mut self, raw: &str) -> Result<TurnResponse, ServiceError> {
        if self.status != EpisodeStatus::Active {
            return Err(ServiceError::State(format!(
                "episode {} is {:?}; no more turns accepted",
                self.id, self.status
            )));
        }
        if self.turns_used >= self.limits.max_turns {
            let message = format!("turn limit of {} reached", self.limits.max_turns);
            self.status = EpisodeStatus::TerminatedLimit;
            return Ok(self.respond(TurnOutcome::RejectedLimit { message }));
        }
        let chars = raw.chars().count();
        if chars > self.limits.max_turn_chars {
            let message = format!("turn has {chars} characters; the limit is {}", self.limits.max_turn_chars);
            self.reject(raw, EpisodeStatus::TerminatedLimit, message.clone());
            return Ok(self.respond(TurnOutcome::RejectedLimit { message }));
        }
        let action = match check_turn(self.transcript.turns(), raw) {
            Ok(a) => a,
            Err(v) => {
                let (kind, position, message) = match &v {
                    FormatViolation::Grammar { error, .. } => {
                        (error.kind.as_str().to_string(), Some(error.position), error.message.clone())
                    }
                    FormatViolation::Schema { error, .. } => (error.code.as_str().to_string(), None, error.message.clone()),
                };
                self.reject(raw, EpisodeStatus::TerminatedFormat, format!("{kind}: {message}"));
                return Ok(self.respond(TurnOutcome::RejectedFormat { kind, position, message }));
            }
        };
        let thought = trajectory::parse_assistant_turn(raw)
            .map(|p| p.thought)
            .unwrap_or_default();
        self.turns_used += 1;
        let outcome = match action {
            TurnAction::Tool(call) => self.run_tool(thought, call),
            TurnAction::Answer(answer) => {
                self.transcript.steps.push(Step::answer(thought, answer.clone()));
                self.status = EpisodeStatus::Answered;
                TurnOutcome::Answered { answer, reward: None }
            }
        };
        Ok(self.respond(outcome))
    }

    fn run_tool(&mut self, thought: String, call: ToolCall) -> TurnOutcome {
        match tools::dispatch(&call, &self.current) {
            Ok(next) => {
                let outcome = TurnOutcome::ToolObservation {
                    image_png: png_base64(&next),
                    width: next.width(),
                    height: next.height(),
                    message: format!("{} succeeded; the image is now {}x{}", call.name, next.width(), next.height()),
                };
                self.current = next.clone();
                self.transcript.steps.push(Step::tool(thought, call, Observation::Sketch(next)));
                outcome
            }
            Err(e) => {
                let outcome = TurnOutcome::ToolError {
                    code: e.code,
                    message: e.message.clone(),
                };
                self.transcript.steps.push(Step::tool(thought, call, Observation::Error(e)));
                outcome
            }
        }
    }

    pub fn score(&self, weights: RewardWeights, evaluator: &dyn StepEvaluator) -> Result<RewardBreakdown, ServiceError> {
        if self.status == EpisodeStatus::Active {
            return Err(ServiceError::State(format!("episode {} is still active", self.id)));
        }
        total_reward(&self.transcript, weights, evaluator).map_err(|e| ServiceError::Scoring(e.to_string()))
    }

    /// Appends the transcript to `path` under a fresh record id.
    pub fn persist(&mut self, path: &Path) -> Result<Trajectory, ServiceError> {
        if self.status == EpisodeStatus::Active {
            return Err(ServiceError::State(format!("episode {} is still active", self.id)));
        }
        self.persisted += 1;
        let mut record = self.transcript.clone();
        record.id = format!("{}-r{}", self.id, self.persisted);
        trajectory::append_jsonl(path, std::slice::from_ref(&record)).map_err(|e| ServiceError::Storage(e.to_string()))?;
        Ok(record)
    }
}

/// What an episode should be built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskSpec {
    Generate {
        kind: String,
        #[serde(default)]
        seed: u64,
        /// Size shorthand: maze side, search grid side or jigsaw side.
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        params: Option<GenParams>,
    },
    Dataset {
        dataset: PathBuf,
        #[serde(default)]
        index: usize,
    },
}

impl TaskSpec {
    pub fn generate(kind: TaskKind, seed: u64) -> Self {
        TaskSpec::Generate {
            kind: kind.as_str().into(),
            seed,
            n: None,
            params: None,
        }
    }

    pub fn resolve(&self, defaults: &GenParams) -> Result<TaskInstance, ServiceError> {
        match self {
            TaskSpec::Generate { kind, seed, n, params } => {
                let kind: TaskKind = kind.parse().map_err(|e: taskgen::TaskGenError| ServiceError::Request(e.to_string()))?;
                let mut p = params.clone().unwrap_or_else(|| defaults.clone());
                if let Some(n) = *n {
                    match kind {
                        TaskKind::Maze => p.maze_n = n,
                        TaskKind::VisualSearch => p.search_grid = n,
                        TaskKind::Jigsaw => (p.jigsaw_rows, p.jigsaw_cols) = (n, n),
                        TaskKind::Rotation | TaskKind::NumericEstimate => {}
                    }
                }
                taskgen::generate(kind, &p, *seed).map_err(|e| ServiceError::Request(e.to_string()))
            }
            TaskSpec::Dataset { dataset, index } => {
                let mut tasks = read_tasks_jsonl(dataset).map_err(|e| ServiceError::Request(e.to_string()))?;
                if *index >= tasks.len() {
                    return Err(ServiceError::Request(format!(
                        "index {index} out of range; {} has {} tasks",
                        dataset.display(),
                        tasks.len()
                    )));
                }
                Ok(tasks.swap_remove(*index))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCreated {
    pub api_version: u32,
    pub episode_id: String,
    pub kind: TaskKind,
    pub question: String,
    pub image_png: String,
    pub width: u32,
    pub height: u32,
    pub system_prompt: String,
    pub tool_schema: Vec<ToolSpec>,
    pub max_turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub thought: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<ToolCall>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeView {
    pub api_version: u32,
    pub episode_id: String,
    pub kind: TaskKind,
    pub status: EpisodeStatus,
    pub turns_used: usize,
    pub turns_remaining: usize,
    pub question: String,
    pub steps: Vec<StepView>,
    pub image_png: String,
}

impl From<&Episode> for EpisodeView {
    fn from(ep: &Episode) -> Self {
        EpisodeView {
            api_version: API_VERSION,
            episode_id: ep.id.clone(),
            kind: ep.task().kind,
            status: ep.status,
            turns_used: ep.turns_used,
            turns_remaining: ep.turns_remaining(),
            question: ep.task().question.clone(),
            steps: ep
                .transcript
                .steps
                .iter()
                .map(|s| StepView {
                    thought: s.thought.clone(),
                    action: s.call().cloned(),
                    error: s.observation().and_then(Observation::error).map(|e| e.to_string()),
                    answer: match &s.action {
                        StepAction::Answer(a) => Some(a.clone()),
                        StepAction::Tool { .. } => None,
                    },
                })
                .collect(),
            image_png: png_base64(&ep.current),
        }
    }
}

/// How non-quantifiable steps get judged when scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EvaluatorChoice {
    Stub,
    Constant { value: f64 },
    /// The provider the service was configured with.
    Provider,
}

pub struct ServiceConfig {
    pub limits: EpisodeLimits,
    pub weights: RewardWeights,
    pub defaults: GenParams,
    /// Directory for persisted episodes; `None` disables persistence.
    pub output_dir: Option<PathBuf>,
    /// Judge used for [`EvaluatorChoice::Provider`].
    pub provider: Option<Arc<dyn StepEvaluator + Send + Sync>>,
    /// Attach a reward breakdown to answered outcomes.
    pub score_on_answer: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            limits: EpisodeLimits::default(),
            weights: RewardWeights::default(),
            defaults: GenParams::default(),
            output_dir: None,
            provider: None,
            score_on_answer: true,
        }
    }
}

/// Episodes by id; each episode has its own lock.
pub struct EpisodeStore {
    config: ServiceConfig,
    episodes: RwLock<HashMap<String, Arc<Mutex<Episode>>>>,
    counter: AtomicU64,
    nonce: u32,
}

impl EpisodeStore {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config,
            episodes: RwLock::new(HashMap::new()),
            counter: AtomicU64::new(0),
            nonce: rand::random(),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Episode>>, ServiceError> {
        self.episodes
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    fn with<T>(&self, id: &str, f: impl FnOnce(&mut Episode) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let ep = self.get(id)?;
        let mut guard = ep.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    }

    pub fn create_episode(&self, spec: &TaskSpec) -> Result<EpisodeCreated, ServiceError> {
        let task = spec.resolve(&self.config.defaults)?;
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let id = format!("ep-{:08x}-{n:06}", self.nonce);
        let created = EpisodeCreated {
            api_version: API_VERSION,
            episode_id: id.clone(),
            kind: task.kind,
            question: task.question.clone(),
            image_png: png_base64(&task.initial),
            width: task.initial.width(),
            height: task.initial.height(),
            system_prompt: default_system_prompt(),
            tool_schema: tools::tool_schema(),
            max_turns: self.config.limits.max_turns,
        };
        let ep = Episode::new(id.clone(), task, self.config.limits);
        self.episodes
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, Arc::new(Mutex::new(ep)));
        Ok(created)
    }

    pub fn submit_turn(&self, id: &str, raw: &str) -> Result<TurnResponse, ServiceError> {
        self.with(id, |ep| {
            let mut resp = ep.submit(raw)?;
            if let TurnOutcome::Answered { reward, .. } = &mut resp.outcome {
                if self.config.score_on_answer {
                    *reward = Some(ep.score(self.config.weights, &StubProvider)?);
                }
            }
            Ok(resp)
        })
    }

    pub fn view(&self, id: &str) -> Result<EpisodeView, ServiceError> {
        self.with(id, |ep| Ok(EpisodeView::from(&*ep)))
    }

    pub fn evaluator(&self, choice: EvaluatorChoice) -> Result<Arc<dyn StepEvaluator + Send + Sync>, ServiceError> {
        match choice {
            EvaluatorChoice::Stub => Ok(Arc::new(StubProvider)),
            EvaluatorChoice::Constant { value } if (0.0..=1.0).contains(&value) => Ok(Arc::new(ConstantEvaluator(value))),
            EvaluatorChoice::Constant { value } => Err(ServiceError::Request(format!("constant {value} outside [0, 1]"))),
            EvaluatorChoice::Provider => self
                .config
                .provider
                .clone()
                .ok_or_else(|| ServiceError::Request("no evaluation provider configured".into())),
        }
    }

    pub fn score_episode(
        &self,
        id: &str,
        weights: Option<RewardWeights>,
        choice: EvaluatorChoice,
    ) -> Result<RewardBreakdown, ServiceError> {
        let evaluator = self.evaluator(choice)?;
        let weights = weights.unwrap_or(self.config.weights);
        self.with(id, |ep| ep.score(weights, evaluator.as_ref()))
    }

    /// Persists under the configured output directory; `file` must be a
    /// plain file name.
    pub fn persist_episode(&self, id: &str, file: &str) -> Result<PersistResult, ServiceError> {
        let dir = self
            .config
            .output_dir
            .as_ref()
            .ok_or_else(|| ServiceError::Request("persistence is disabled (no output directory)".into()))?;
        let name = Path::new(file);
        if name.components().count() != 1 || name.file_name().is_none() {
            return Err(ServiceError::Request(format!("'{file}' is not a plain file name")));
        }
        let path = dir.join(name);
        let record = self.with(id, |ep| ep.persist(&path))?;
        Ok(PersistResult {
            record_id: record.id,
            path: path.display().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistResult {
    pub record_id: String,
    pub path: String,
}
