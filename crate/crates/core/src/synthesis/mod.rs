//! Cold-start trajectory synthesis and the RL difficulty filter.

mod chat;
pub mod prompts;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::mpsc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::{DatasetError, JsonlWriter};
use crate::raster::Sketch;
use crate::reward::{answer_accuracy, quantifiable_score, EvalError, StepEvaluator};
use crate::taskgen::{self, derive_seed, rng_for, GenParams, GroundTruth, TaskGenError, TaskInstance, TaskKind};
use crate::tools::{self, ToolCall};
use crate::trajectory::{
    self, inject_reflection, CorruptionKind, History, Observation, Provenance, Step, Trajectory, TrajectoryError,
};

pub use chat::{
    evaluate_step_via_prompt, sketch_data_url, ChatConfig, ChatMessage, ChatReply, ChatRequest, ChatTransport,
    ContentPart, HttpChatProvider, HttpTransport, ImageUrl, RecordingTransport, ReplayTransport, TokenLogprob,
    TransportError, AFFIRMATIVE,
};

/// Accuracy at or above this counts as a successful rollout.
pub const SUCCESS_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("provider unreachable after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("unexpected reply ({message}): {raw:?}")]
    Protocol { message: String, raw: String },
    #[error("provider configuration: {0}")]
    Config(String),
}

impl From<ProviderError> for EvalError {
    fn from(e: ProviderError) -> Self {
        EvalError(e.to_string())
    }
}

/// Everything a thought generator sees for one planned step.
#[derive(Debug, Clone, Copy)]
pub struct ThoughtRequest<'a> {
    pub task: &'a TaskInstance,
    /// Index of the call in the plan.
    pub index: usize,
    pub prev: &'a Sketch,
    pub next: &'a Sketch,
    pub call: &'a ToolCall,
}

pub trait ThoughtProvider: StepEvaluator + Send + Sync {
    fn generate_thought(&self, request: &ThoughtRequest<'_>) -> Result<String, ProviderError>;

    /// Thought for the final answer turn.
    fn answer_thought(&self, task: &TaskInstance) -> Result<String, ProviderError> {
        Ok(default_answer_thought(task))
    }
}

pub(crate) fn pair(v: &Value) -> Option<(i64, i64)> {
    Some((v.get(0)?.as_i64()?, v.get(1)?.as_i64()?))
}

pub(crate) fn fmt_pair((r, c): (i64, i64)) -> String {
    format!("({r}, {c})")
}

fn points_of(call: &ToolCall) -> Vec<(i64, i64)> {
    call.arguments
        .get("points")
        .and_then(Value::as_array)
        .map(|ps| ps.iter().filter_map(pair).collect())
        .unwrap_or_default()
}

/// Where a route segment starts and ends, and the path cells still ahead.
pub(crate) struct MazeStepContext {
    pub current: (i64, i64),
    pub next: (i64, i64),
    pub future: Vec<(i64, i64)>,
}

pub(crate) fn maze_context(request: &ThoughtRequest<'_>) -> Option<MazeStepContext> {
    let task = request.task;
    let start = taskgen::read_pair(&task.meta, "start")?;
    let path: Vec<(i64, i64)> = task.meta.get("path")?.as_array()?.iter().filter_map(pair).collect();
    let next = *points_of(request.call).last()?;
    let current = request
        .index
        .checked_sub(1)
        .and_then(|i| task.plan.get(i))
        .and_then(|c| points_of(c).last().copied())
        .unwrap_or(start);
    let at = path.iter().position(|&p| p == next)?;
    Some(MazeStepContext {
        current,
        next,
        future: path[at + 1..].to_vec(),
    })
}

fn list(v: &Value) -> String {
    v.as_array()
        .map(|a| a.iter().map(Value::to_string).collect::<Vec<_>>().join(", "))
        .map(|s| format!("[{s}]"))
        .unwrap_or_default()
}

fn meta_str<'a>(task: &'a TaskInstance, key: &str) -> &'a str {
    task.meta.get(key).and_then(Value::as_str).unwrap_or("")
}

/// Deterministic template thoughts; no network.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubProvider;

impl StubProvider {
    fn thought(request: &ThoughtRequest<'_>) -> String {
        let task = request.task;
        let call = request.call;
        let arg = |k: &str| call.arguments.get(k).cloned().unwrap_or(Value::Null);
        match (task.kind, call.name.as_str()) {
            (TaskKind::Maze, tools::ROUTE_DRAWER) => match maze_context(request) {
                Some(ctx) if ctx.future.is_empty() => format!(
                    "From {} the corridor runs straight on to {}, which is the green goal, so the route is complete.",
                    fmt_pair(ctx.current),
                    fmt_pair(ctx.next)
                ),
                Some(ctx) => format!(
                    "I am at {}. The open corridor leads to {} without hitting a wall, and from there the \
                     route continues through {} toward the goal. I extend the red line to {}.",
                    fmt_pair(ctx.current),
                    fmt_pair(ctx.next),
                    fmt_pair(ctx.future[0]),
                    fmt_pair(ctx.next)
                ),
                None => "I extend the route along the open corridor.".into(),
            },
            (TaskKind::Jigsaw, tools::REARRANGE_TILES) => format!(
                "The picture has broken edges between several tiles; the current arrangement is {}. \
                 Moving the tiles to {} joins the split shapes and straightens the horizon at those seams.",
                list(&arg("current")),
                list(&arg("target"))
            ),
            (TaskKind::Rotation, tools::ROTATE_IMAGE) => format!(
                "The ground is not at the bottom of the picture, so the image is turned. Rotating by {} \
                 degrees clockwise puts the sky on top and the buildings upright.",
                arg("theta")
            ),
            (TaskKind::VisualSearch, tools::CROP_IMAGE) => format!(
                "I am looking for the {} {} among many shapes. It lies inside the region {}, so I zoom in \
                 there and drop the distractors outside it.",
                meta_str(task, "target_color"),
                meta_str(task, "target_shape"),
                list(&arg("bbox"))
            ),
            (TaskKind::VisualSearch, tools::DRAW_BBOX) => format!(
                "Only the {} {} is left in view. I mark it with a box to confirm the cell.",
                meta_str(task, "target_color"),
                meta_str(task, "target_shape")
            ),
            (TaskKind::NumericEstimate, tools::CROP_IMAGE) => format!(
                "The clock is small in the full picture and its hands are hard to read. Cropping {} \
                 enlarges the dial.",
                list(&arg("bbox"))
            ),
            _ => format!("Applying {} moves the image closer to what the question needs.", call.name),
        }
    }
}

pub fn default_answer_thought(task: &TaskInstance) -> String {
    match task.kind {
        TaskKind::Maze => "The red route now connects the start with the goal, so I read off its moves.".into(),
        TaskKind::Jigsaw => "Every seam now lines up, so the arrangement that restores the picture is known.".into(),
        TaskKind::Rotation => "The picture is upright now, so the needed rotation is the one I applied.".into(),
        TaskKind::VisualSearch => "The marked object sits in a single grid cell, which gives the label.".into(),
        TaskKind::NumericEstimate => {
            "With the dial enlarged I can read both hands and convert the time to minutes.".into()
        }
    }
}

impl StepEvaluator for StubProvider {
    fn evaluate_step(&self, history: &History<'_>, truth: &GroundTruth) -> Result<f64, EvalError> {
        Ok(history
            .steps
            .last()
            .and_then(|s| s.call())
            .and_then(|c| quantifiable_score(c, truth))
            .unwrap_or(0.5))
    }
}

impl ThoughtProvider for StubProvider {
    fn generate_thought(&self, request: &ThoughtRequest<'_>) -> Result<String, ProviderError> {
        Ok(Self::thought(request))
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("planned action failed: {0}")]
    Plan(#[from] TaskGenError),
    #[error("provider failed at step {step}: {source}")]
    Provider { step: usize, source: ProviderError },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("synthesized trajectory is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid synthesis config: {0}")]
    Config(String),
}

/// Reflection settings for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    /// Probability of injecting one reflection.
    pub rate: f64,
    /// Share of injections that use a wrong-but-valid call instead of a
    /// corrupted parameter.
    pub reasoning_path_share: f64,
}

impl Default for Injection {
    fn default() -> Self {
        Self {
            rate: 0.25,
            reasoning_path_share: 0.0,
        }
    }
}

/// Runs the plan, asks the provider for one thought per step, appends the
/// answer turn and possibly injects one reflection.
pub fn synthesize_trajectory(
    instance: &TaskInstance,
    provider: &dyn ThoughtProvider,
    seed: u64,
    injection: Injection,
) -> Result<Trajectory, SynthesisError> {
    let sketches = taskgen::replay_plan(instance)?;
    let mut traj = Trajectory::new(format!("traj-{}", instance.id), instance.clone(), Provenance::Synthesized);
    let mut prev = &instance.initial;
    for (index, (call, next)) in instance.plan.iter().zip(&sketches).enumerate() {
        let request = ThoughtRequest {
            task: instance,
            index,
            prev,
            next,
            call,
        };
        let thought = provider
            .generate_thought(&request)
            .map_err(|source| SynthesisError::Provider { step: index, source })?;
        traj.steps
            .push(Step::tool(clean_thought(&thought), call.clone(), Observation::Sketch(next.clone())));
        prev = next;
    }
    let thought = provider.answer_thought(instance).map_err(|source| SynthesisError::Provider {
        step: instance.plan.len(),
        source,
    })?;
    traj.steps
        .push(Step::answer(clean_thought(&thought), instance.truth.answer_text()));

    let mut rng = rng_for(seed);
    if !instance.plan.is_empty() && rng.gen_bool(injection.rate.clamp(0.0, 1.0)) {
        let at = rng.gen_range(0..instance.plan.len());
        let kind = if rng.gen_bool(injection.reasoning_path_share.clamp(0.0, 1.0)) {
            CorruptionKind::ReasoningPath
        } else {
            CorruptionKind::Parameter
        };
        traj = inject_reflection(&traj, at, kind, rng.gen())?;
    }

    traj.validate()?;
    let acc = answer_accuracy(traj.answer().unwrap_or_default(), &instance.truth);
    if acc != 1.0 {
        return Err(SynthesisError::Inconsistent(format!("answer scores {acc}, not 1")));
    }
    Ok(traj)
}

/// Provider text can contain anything; the turn grammar cannot.
fn clean_thought(text: &str) -> String {
    let mut s = text.trim().to_string();
    for tag in ["<think>", "</think>", "<tool_call>", "</tool_call>", "<answer>", "</answer>"] {
        s = s.replace(tag, "");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub counts: BTreeMap<TaskKind, usize>,
    pub injection: Injection,
    pub master_seed: u64,
    pub params: GenParams,
    pub output: PathBuf,
    pub workers: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            counts: BTreeMap::new(),
            injection: Injection::default(),
            master_seed: 0,
            params: GenParams::default(),
            output: PathBuf::from("sft.jsonl"),
            workers: 4,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.injection.rate) || !in_unit(self.injection.reasoning_path_share) {
            return Err(SynthesisError::Config("injection rates must lie in [0, 1]".into()));
        }
        if self.workers == 0 {
            return Err(SynthesisError::Config("workers must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisFailure {
    pub kind: TaskKind,
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub records: usize,
    pub per_kind: BTreeMap<TaskKind, usize>,
    pub reflections: usize,
    pub mean_steps: f64,
    pub failures: Vec<SynthesisFailure>,
}

struct Job {
    kind: TaskKind,
    index: usize,
    seed: u64,
}

/// Generates and synthesizes every configured instance. Workers run in
/// parallel; records are written in job order by a single writer.
pub fn synthesize_dataset(
    config: &SynthesisConfig,
    provider: &dyn ThoughtProvider,
) -> Result<SynthesisSummary, SynthesisError> {
    config.validate()?;
    let mut jobs = Vec::new();
    for kind in TaskKind::ALL {
        for index in 0..config.counts.get(&kind).copied().unwrap_or(0) {
            let seed = derive_seed(config.master_seed, jobs.len() as u64);
            jobs.push(Job { kind, index, seed });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| SynthesisError::Config(e.to_string()))?;
    let run = |job: &Job| -> Result<Trajectory, String> {
        let instance = taskgen::generate(job.kind, &config.params, job.seed).map_err(|e| e.to_string())?;
        synthesize_trajectory(&instance, provider, derive_seed(job.seed, 1), config.injection).map_err(|e| e.to_string())
    };

    let mut out = JsonlWriter::create(&config.output)?;
    let mut summary = SynthesisSummary::default();
    let mut total_steps = 0usize;
    let (tx, rx) = mpsc::sync_channel::<(usize, Result<Trajectory, String>)>(config.workers * 4);
    let write_result = std::thread::scope(|scope| {
        let jobs = &jobs;
        scope.spawn(move || {
            pool.install(|| {
                jobs.par_iter().enumerate().for_each_with(tx, |tx, (i, job)| {
                    let _ = tx.send((i, run(job)));
                })
            })
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, result) in rx {
            pending.insert(i, result);
            while let Some(result) = pending.remove(&next) {
                let job = &jobs[next];
                match result {
                    Ok(t) => {
                        trajectory::write_one(&mut out, &config.output, &t)?;
                        summary.records += 1;
                        *summary.per_kind.entry(job.kind).or_default() += 1;
                        summary.reflections += t.reflection_count as usize;
                        total_steps += t.steps.len();
                    }
                    Err(error) => {
                        tracing::warn!(kind = %job.kind, index = job.index, %error, "synthesis failed");
                        summary.failures.push(SynthesisFailure {
                            kind: job.kind,
                            index: job.index,
                            seed: job.seed,
                            error,
                        });
                    }
                }
                next += 1;
            }
        }
        Ok::<(), DatasetError>(())
    });
    write_result?;
    out.finish()?;
    if summary.records > 0 {
        summary.mean_steps = total_steps as f64 / summary.records as f64;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct RunnerError(pub String);

/// Produces the accuracy of one rollout on an instance.
pub trait RolloutRunner: Sync {
    fn run(&self, instance: &TaskInstance, rollout: usize) -> Result<f64, RunnerError>;
}

/// Succeeds on the first `successes[id]` rollouts of each instance.
#[derive(Debug, Clone, Default)]
pub struct ScriptedRunner {
    pub successes: BTreeMap<String, usize>,
}

impl RolloutRunner for ScriptedRunner {
    fn run(&self, instance: &TaskInstance, rollout: usize) -> Result<f64, RunnerError> {
        let wins = self
            .successes
            .get(&instance.id)
            .ok_or_else(|| RunnerError(format!("no script for {}", instance.id)))?;
        Ok(if rollout < *wins { 1.0 } else { 0.0 })
    }
}

/// Replays the plan and answers correctly with probability `p_correct`,
/// otherwise with a perturbed answer.
#[derive(Debug, Clone, Copy)]
pub struct NoisyOracleRunner {
    pub p_correct: f64,
    pub seed: u64,
}

impl RolloutRunner for NoisyOracleRunner {
    fn run(&self, instance: &TaskInstance, rollout: usize) -> Result<f64, RunnerError> {
        taskgen::replay_plan(instance).map_err(|e| RunnerError(e.to_string()))?;
        let mut rng = rng_for(derive_seed(self.seed ^ instance.seed, rollout as u64));
        let answer = if rng.gen_bool(self.p_correct.clamp(0.0, 1.0)) {
            instance.truth.answer_text()
        } else {
            perturb_answer(&instance.truth)
        };
        Ok(answer_accuracy(&answer, &instance.truth))
    }
}

fn perturb_answer(truth: &GroundTruth) -> String {
    match truth {
        GroundTruth::MoveSequence { moves } => moves.chars().rev().collect::<String>() + "U",
        GroundTruth::Permutation { order } => {
            GroundTruth::Permutation { order: order.iter().rev().copied().collect() }.answer_text() + ", 0"
        }
        GroundTruth::Numeric { value, .. } => tools::num(value + 90.0).to_string(),
        GroundTruth::ChoiceLabel { label } => format!("{label}0"),
        GroundTruth::TextAnswer { text } => format!("not {text}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub k: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            k: 8,
            lo: 1.0 / 8.0,
            hi: 7.0 / 8.0,
        }
    }
}

impl FilterConfig {
    /// Inclusive range of success counts that keep an instance.
    pub fn band(&self) -> (usize, usize) {
        let k = self.k as f64;
        ((self.lo * k - 1e-9).ceil().max(0.0) as usize, (self.hi * k + 1e-9).floor() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub id: String,
    pub successes: usize,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub kept: Vec<TaskInstance>,
    pub outcomes: Vec<FilterOutcome>,
    pub skipped: Vec<(String, String)>,
}

/// Keeps instances whose success count over `k` rollouts is neither too
/// low nor too high.
pub fn filter_rl_pool(
    instances: &[TaskInstance],
    runner: &dyn RolloutRunner,
    config: FilterConfig,
) -> Result<FilterReport, SynthesisError> {
    if config.k < 2 {
        return Err(SynthesisError::Config(format!("k must be >= 2, got {}", config.k)));
    }
    if !(0.0..=1.0).contains(&config.lo) || !(0.0..=1.0).contains(&config.hi) || config.lo > config.hi {
        return Err(SynthesisError::Config(format!("bad success band [{}, {}]", config.lo, config.hi)));
    }
    let (min, max) = config.band();
    let results: Vec<Result<usize, RunnerError>> = instances
        .par_iter()
        .map(|inst| {
            (0..config.k).try_fold(0usize, |wins, r| {
                runner.run(inst, r).map(|acc| wins + usize::from(acc >= SUCCESS_THRESHOLD))
            })
        })
        .collect();
    let mut report = FilterReport {
        kept: Vec::new(),
        outcomes: Vec::new(),
        skipped: Vec::new(),
    };
    for (inst, result) in instances.iter().zip(results) {
        match result {
            Ok(successes) => {
                let kept = (min..=max).contains(&successes);
                if kept {
                    report.kept.push(inst.clone());
                }
                report.outcomes.push(FilterOutcome {
                    id: inst.id.clone(),
                    successes,
                    kept,
                });
            }
            Err(e) => {
                tracing::warn!(id = %inst.id, error = %e, "rollout failed; instance skipped");
                report.skipped.push((inst.id.clone(), e.0));
            }
        }
    }
    Ok(report)
}
