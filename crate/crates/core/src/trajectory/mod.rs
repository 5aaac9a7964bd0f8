//! Interleaved thought / tool-call / sketch trajectories.

mod grammar;
mod io;
mod reflect;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Sketch;
use crate::taskgen::TaskInstance;
use crate::tools::{self, ToolCall, ToolError};

pub use grammar::{parse_assistant_turn, render_turn, ParseError, ParseErrorKind, ParsedTurn, TurnAction};
pub use io::{append_jsonl, read_jsonl, write_jsonl};
pub(crate) use io::write_one;
pub use reflect::{
    corrupt_parameters, inject_reflection, loss_mask_spans, wrong_but_valid, CorruptionKind, MaskSpan,
    SpanRole, REFLECTION_PREFIX,
};

/// Maximum assistant turns per episode.
pub const MAX_TURNS: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Sketch(Sketch),
    Error(ToolError),
}

impl Observation {
    pub fn sketch(&self) -> Option<&Sketch> {
        match self {
            Observation::Sketch(s) => Some(s),
            Observation::Error(_) => None,
        }
    }

    pub fn error(&self) -> Option<&ToolError> {
        match self {
            Observation::Sketch(_) => None,
            Observation::Error(e) => Some(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepAction {
    Tool { call: ToolCall, observation: Observation },
    Answer(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub thought: String,
    pub action: StepAction,
    /// Excluded from imitation targets.
    pub masked: bool,
}

impl Step {
    pub fn tool(thought: impl Into<String>, call: ToolCall, observation: Observation) -> Self {
        Self {
            thought: thought.into(),
            action: StepAction::Tool { call, observation },
            masked: false,
        }
    }

    pub fn answer(thought: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            thought: thought.into(),
            action: StepAction::Answer(answer.into()),
            masked: false,
        }
    }

    pub fn call(&self) -> Option<&ToolCall> {
        match &self.action {
            StepAction::Tool { call, .. } => Some(call),
            StepAction::Answer(_) => None,
        }
    }

    pub fn observation(&self) -> Option<&Observation> {
        match &self.action {
            StepAction::Tool { observation, .. } => Some(observation),
            StepAction::Answer(_) => None,
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self.observation(), Some(Observation::Error(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Synthesized,
    RolledOut,
}

/// Raw text of a turn that failed the grammar or schema check, which ends
/// the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedTurn {
    pub raw: String,
    pub error: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error("step {step}: {message}")]
    Replay { step: usize, message: String },
    #[error("cannot inject at step {step}: {message}")]
    Injection { step: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub task: TaskInstance,
    pub steps: Vec<Step>,
    pub provenance: Provenance,
    pub reflection_count: u32,
    pub rejected_turn: Option<RejectedTurn>,
}

/// `h_t`: the task plus every step up to and including the current one.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    pub task: &'a TaskInstance,
    pub steps: &'a [Step],
}

impl History<'_> {
    /// Visual state after the last step in the history.
    pub fn current(&self) -> &Sketch {
        current_state(&self.task.initial, self.steps)
    }

    /// Every sketch the policy has seen, starting with `I_0`.
    pub fn sketches(&self) -> Vec<&Sketch> {
        std::iter::once(&self.task.initial)
            .chain(
                self.steps
                    .iter()
                    .filter_map(|s| s.observation().and_then(Observation::sketch)),
            )
            .collect()
    }
}

fn current_state<'a>(initial: &'a Sketch, steps: &'a [Step]) -> &'a Sketch {
    steps
        .iter()
        .rev()
        .filter(|s| !s.masked)
        .find_map(|s| s.observation().and_then(Observation::sketch))
        .unwrap_or(initial)
}

impl Trajectory {
    pub fn new(id: impl Into<String>, task: TaskInstance, provenance: Provenance) -> Self {
        Self {
            id: id.into(),
            task,
            steps: Vec::new(),
            provenance,
            reflection_count: 0,
            rejected_turn: None,
        }
    }

    /// The final answer text, if the last step is an answer.
    pub fn answer(&self) -> Option<&str> {
        match self.steps.last().map(|s| &s.action) {
            Some(StepAction::Answer(a)) => Some(a),
            _ => None,
        }
    }

    pub fn tool_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.call().is_some()).count()
    }

    /// Steps that count against the turn cap.
    pub fn turns(&self) -> usize {
        self.steps.iter().filter(|s| !s.masked).count()
    }

    pub fn history(&self, t: usize) -> History<'_> {
        History {
            task: &self.task,
            steps: &self.steps[..(t + 1).min(self.steps.len())],
        }
    }

    /// Visual state in effect before step `at` runs. Masked steps and
    /// failed calls leave it unchanged.
    pub fn state_before(&self, at: usize) -> &Sketch {
        current_state(&self.task.initial, &self.steps[..at.min(self.steps.len())])
    }

    pub fn final_sketch(&self) -> &Sketch {
        self.state_before(self.steps.len())
    }

    /// Text of every turn that counts for the format check: each unmasked
    /// step rendered, then the rejected raw turn if there is one.
    pub fn turn_texts(&self) -> Vec<String> {
        self.steps
            .iter()
            .filter(|s| !s.masked)
            .map(render_turn)
            .chain(self.rejected_turn.iter().map(|r| r.raw.clone()))
            .collect()
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let invalid = |m: String| Err(TrajectoryError::Invalid(m));
        for (i, step) in self.steps.iter().enumerate() {
            if matches!(step.action, StepAction::Answer(_)) {
                if i + 1 != self.steps.len() {
                    return invalid(format!("answer at step {i} is not the last step"));
                }
                if step.masked {
                    return invalid(format!("answer step {i} is masked"));
                }
            }
            if step.masked {
                let corrected = self.steps[i + 1..]
                    .iter()
                    .find(|s| !s.masked)
                    .is_some_and(|s| s.call().is_some());
                if !corrected {
                    return invalid(format!("masked step {i} has no corrective tool step"));
                }
            }
        }
        if self.turns() > MAX_TURNS {
            return invalid(format!("{} turns exceed the cap of {MAX_TURNS}", self.turns()));
        }
        let masked = self.steps.iter().filter(|s| s.masked).count();
        if masked != self.reflection_count as usize {
            return invalid(format!(
                "reflection_count {} but {masked} masked steps",
                self.reflection_count
            ));
        }
        Ok(())
    }

    /// Re-executes every unmasked call from `I_0` and checks each stored
    /// observation, successes pixel-exactly and failures by error code.
    pub fn replay(&self) -> Result<Sketch, TrajectoryError> {
        let mut current = self.task.initial.clone();
        for (step, s) in self.steps.iter().enumerate() {
            let StepAction::Tool { call, observation } = &s.action else {
                continue;
            };
            if s.masked {
                continue;
            }
            let mismatch = |message: String| TrajectoryError::Replay { step, message };
            match (tools::dispatch(call, &current), observation) {
                (Ok(next), Observation::Sketch(stored)) => {
                    if &next != stored {
                        return Err(mismatch("replayed sketch differs from the stored one".into()));
                    }
                    current = next;
                }
                (Err(e), Observation::Error(stored)) => {
                    if e.code != stored.code {
                        return Err(mismatch(format!("expected {} but replay gave {}", stored.code, e.code)));
                    }
                }
                (Ok(_), Observation::Error(e)) => {
                    return Err(mismatch(format!("stored error {} but replay succeeded", e.code)))
                }
                (Err(e), Observation::Sketch(_)) => return Err(mismatch(format!("replay failed: {e}"))),
            }
        }
        Ok(current)
    }
}

/// Default system prompt for policies talking to the rollout service: the
/// turn grammar and the tool schema.
pub fn default_system_prompt() -> String {
    format!(
        "You solve visual tasks by thinking step by step and calling image tools.\n\
         Every reply must start with your reasoning inside <think>...</think>, followed by \
         exactly one of:\n\
         - <tool_call>{{\"name\": ..., \"arguments\": {{...}}}}</tool_call> to run a tool on \
         the current image, or\n\
         - <answer>...</answer> to give the final answer.\n\
         Coordinates are normalized to [0, 1000] relative to the current image. A failed tool \
         call leaves the image unchanged. At most {MAX_TURNS} replies are allowed.\n\n\
         Available tools:\n{}",
        tools::tool_schema_json()
    )
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::taskgen::{generate, replay_plan, GenParams, TaskKind};
    use crate::tools::ToolErrorCode;

    pub(crate) fn planned(kind: TaskKind, seed: u64) -> Trajectory {
        let params = GenParams { resolution: 128, ..GenParams::default() };
        let task = generate(kind, &params, seed).unwrap();
        let sketches = replay_plan(&task).unwrap();
        let mut t = Trajectory::new(format!("t-{kind}-{seed}"), task.clone(), Provenance::Synthesized);
        for (i, (call, s)) in task.plan.iter().zip(sketches).enumerate() {
            t.steps.push(Step::tool(format!("step {i}"), call.clone(), Observation::Sketch(s)));
        }
        t.steps.push(Step::answer("done", task.truth.answer_text()));
        t
    }

    #[test]
    fn planned_trajectories_replay() {
        for kind in TaskKind::ALL {
            let t = planned(kind, 3);
            t.validate().unwrap();
            assert_eq!(&t.replay().unwrap(), t.final_sketch());
            assert_eq!(t.answer(), Some(t.task.truth.answer_text().as_str()));
        }
    }

    #[test]
    fn errors_keep_state() {
        let mut t = planned(TaskKind::Rotation, 1);
        let err = ToolError::new(ToolErrorCode::OutOfBounds, "x");
        t.steps.insert(0, Step::tool("bad", ToolCall::crop_image([0.0, 0.0, 1200.0, 1000.0]), Observation::Error(err)));
        assert_eq!(t.state_before(1), &t.task.initial);
        t.replay().unwrap();
        assert!(t.history(0).current() == &t.task.initial);
        assert_eq!(t.history(1).sketches().len(), 2);
    }

    #[test]
    fn validate_catches_misplaced_answer() {
        let mut t = planned(TaskKind::Rotation, 1);
        t.steps.swap(0, 1);
        assert!(t.validate().is_err());
        let mut t = planned(TaskKind::Rotation, 1);
        t.steps[0].masked = true;
        assert!(t.validate().is_err());
    }

    #[test]
    fn system_prompt_lists_tools() {
        let p = default_system_prompt();
        for name in tools::TOOL_NAMES {
            assert!(p.contains(name));
        }
    }
}
