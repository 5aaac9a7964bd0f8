//! Format, accuracy and stepwise rewards, their composite, and the RL
//! helpers built on top.

mod metrics;
mod rl;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::taskgen::{moves_between, GroundTruth};
use crate::tools::{self, ToolCall, ToolError};
use crate::trajectory::{parse_assistant_turn, History, ParseError, StepAction, Trajectory, TurnAction};

pub use metrics::{
    array_similarity, exact_match, levenshtein, levenshtein_norm, normalize_tokens, soft_numeric, soft_numeric_tol,
    token_f1, SoftMode, SOFT_STEEPNESS, TIME_SCALE_MINUTES,
};
pub use rl::{clipped_surrogate, group_advantages, ClipConfig, GroupAdvantages, STD_FLOOR};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("group needs at least 2 rewards, got {0}")]
    GroupSize(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scoring step {step}: {message}")]
    Evaluator { step: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct EvalError(pub String);

/// Judges a non-quantifiable step: the probability that the history so far
/// is enough to reach `truth`.
pub trait StepEvaluator {
    fn evaluate_step(&self, history: &History<'_>, truth: &GroundTruth) -> Result<f64, EvalError>;
}

/// Returns the same score for every step.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEvaluator(pub f64);

impl StepEvaluator for ConstantEvaluator {
    fn evaluate_step(&self, _: &History<'_>, _: &GroundTruth) -> Result<f64, EvalError> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatViolation {
    #[error("turn {turn}: {error}")]
    Grammar { turn: usize, error: ParseError },
    #[error("turn {turn}: {error}")]
    Schema { turn: usize, error: ToolError },
}

impl FormatViolation {
    pub fn turn(&self) -> usize {
        match self {
            FormatViolation::Grammar { turn, .. } | FormatViolation::Schema { turn, .. } => *turn,
        }
    }
}

/// Grammar and schema check of one turn.
pub fn check_turn(turn: usize, raw: &str) -> Result<TurnAction, FormatViolation> {
    let parsed = parse_assistant_turn(raw).map_err(|error| FormatViolation::Grammar { turn, error })?;
    if let TurnAction::Tool(call) = &parsed.action {
        tools::validate_call(call).map_err(|error| FormatViolation::Schema { turn, error })?;
    }
    Ok(parsed.action)
}

pub fn check_format<S: AsRef<str>>(turns: &[S]) -> Result<(), FormatViolation> {
    turns
        .iter()
        .enumerate()
        .try_for_each(|(i, t)| check_turn(i, t.as_ref()).map(|_| ()))
}

/// 1 when every turn parses and every tool call passes schema validation.
pub fn format_reward<S: AsRef<str>>(turns: &[S]) -> f64 {
    if check_format(turns).is_ok() {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyScore {
    pub value: f64,
    pub no_answer: bool,
}

fn integers(s: &str) -> Vec<i64> {
    s.split(|c: char| !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse().ok())
        .collect()
}

fn first_number(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let neg = bytes[i] == b'-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit);
        if bytes[i].is_ascii_digit() || neg {
            let start = i;
            i += usize::from(neg);
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            return s[start..i].trim_end_matches('.').parse().ok();
        }
        i += 1;
    }
    None
}

/// `H:MM` on a 12-hour dial, as minutes past twelve.
fn clock_minutes(s: &str) -> Option<f64> {
    let (h, m) = s.trim().split_once(':')?;
    let h: u32 = h.trim().parse().ok()?;
    let m: u32 = m.trim().get(..2)?.parse().ok()?;
    (h <= 24 && m < 60).then(|| f64::from((h % 12) * 60 + m))
}

fn move_symbols(s: &str) -> Vec<char> {
    s.chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_uppercase())
        .collect()
}

/// Scores one answer string against the ground truth.
pub fn answer_accuracy(answer: &str, truth: &GroundTruth) -> f64 {
    match truth {
        GroundTruth::ChoiceLabel { label } => exact_match(answer, label),
        GroundTruth::TextAnswer { text } => token_f1(answer, text),
        GroundTruth::Permutation { order } => {
            let order: Vec<i64> = order.iter().map(|&i| i as i64).collect();
            array_similarity(&integers(answer), &order)
        }
        GroundTruth::MoveSequence { moves } => array_similarity(&move_symbols(answer), &move_symbols(moves)),
        GroundTruth::Numeric { value, unit } => {
            let mode = if unit == "minutes" { SoftMode::Time } else { SoftMode::General };
            let pred = match mode {
                SoftMode::Time => clock_minutes(answer).or_else(|| first_number(answer)),
                SoftMode::General => first_number(answer),
            };
            pred.and_then(|p| soft_numeric(p, *value, mode).ok()).unwrap_or(0.0)
        }
    }
}

pub fn accuracy_reward(traj: &Trajectory) -> AccuracyScore {
    match traj.answer() {
        Some(a) => AccuracyScore {
            value: answer_accuracy(a, &traj.task.truth),
            no_answer: false,
        },
        None => AccuracyScore {
            value: 0.0,
            no_answer: true,
        },
    }
}

fn route_points(call: &ToolCall) -> Option<Vec<(i64, i64)>> {
    call.arguments
        .get("points")?
        .as_array()?
        .iter()
        .map(|p| Some((p.get(0)?.as_i64()?, p.get(1)?.as_i64()?)))
        .collect()
}

/// `D(a_t, y*)` for actions that can be compared with the truth directly.
pub fn quantifiable_score(call: &ToolCall, truth: &GroundTruth) -> Option<f64> {
    match (call.name.as_str(), truth) {
        (tools::ROUTE_DRAWER, GroundTruth::MoveSequence { moves }) => {
            Some(levenshtein_norm(&moves_between(&route_points(call)?), moves))
        }
        (tools::REARRANGE_TILES, GroundTruth::Permutation { order }) => {
            let target: Vec<i64> = call.arguments.get("target")?.as_array()?.iter().map(Value::as_i64).collect::<Option<_>>()?;
            let order: Vec<i64> = order.iter().map(|&i| i as i64).collect();
            Some(array_similarity(&target, &order))
        }
        _ => None,
    }
}

/// `s_0 ..= s_T`, one score per tool step after the initial zero.
pub fn stepwise_scores(traj: &Trajectory, evaluator: &dyn StepEvaluator) -> Result<Vec<f64>, RewardError> {
    let mut scores = vec![0.0];
    for (i, step) in traj.steps.iter().enumerate() {
        let StepAction::Tool { call, .. } = &step.action else {
            continue;
        };
        let prev = *scores.last().expect("scores start non-empty");
        let s = if step.masked || step.is_error() {
            prev
        } else if let Some(d) = quantifiable_score(call, &traj.task.truth) {
            d
        } else {
            let v = evaluator
                .evaluate_step(&traj.history(i), &traj.task.truth)
                .map_err(|e| RewardError::Evaluator { step: i, message: e.0 })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(RewardError::Evaluator {
                    step: i,
                    message: format!("evaluator returned {v}, outside [0, 1]"),
                });
            }
            v
        };
        scores.push(s);
    }
    Ok(scores)
}

/// Mean relative improvement between consecutive scores; `0/0` terms are 0.
pub fn stepwise_reward(scores: &[f64]) -> f64 {
    if scores.len() < 2 {
        return 0.0;
    }
    let sum: f64 = scores
        .windows(2)
        .map(|w| {
            let den = w[1] + w[0];
            if den == 0.0 {
                0.0
            } else {
                (w[1] - w[0]) / den
            }
        })
        .sum();
    sum / (scores.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { alpha: 0.7, beta: 0.3 }
    }
}

impl RewardWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, RewardError> {
        if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(RewardError::InvalidConfig(format!(
                "weights must be finite and non-negative, got alpha={alpha} beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn combine(&self, fmt: f64, acc: f64, step: f64) -> f64 {
        fmt + self.alpha * acc + self.beta * step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub fmt: f64,
    pub acc: f64,
    pub step: f64,
    pub stepwise_scores: Vec<f64>,
    pub total: f64,
    /// Format failure ended the episode.
    pub terminated: bool,
    pub no_answer: bool,
}

pub fn total_reward(
    traj: &Trajectory,
    weights: RewardWeights,
    evaluator: &dyn StepEvaluator,
) -> Result<RewardBreakdown, RewardError> {
    let fmt = format_reward(&traj.turn_texts());
    let acc = accuracy_reward(traj);
    let scores = stepwise_scores(traj, evaluator)?;
    let step = stepwise_reward(&scores);
    Ok(RewardBreakdown {
        fmt,
        acc: acc.value,
        step,
        stepwise_scores: scores,
        total: weights.combine(fmt, acc.value, step),
        terminated: fmt == 0.0,
        no_answer: acc.no_answer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Color, Sketch};
    use crate::taskgen::{generate, GenParams, TaskKind};
    use crate::trajectory::{Observation, Provenance, RejectedTurn, Step};
    use proptest::prelude::*;

    fn traj(kind: TaskKind) -> Trajectory {
        let task = generate(kind, &GenParams { resolution: 96, ..GenParams::default() }, 1).unwrap();
        Trajectory::new("r", task, Provenance::RolledOut)
    }

    fn blank() -> Observation {
        Observation::Sketch(Sketch::new_blank(4, 4, Color::WHITE).unwrap())
    }

    #[test]
    fn format_examples() {
        let call = ToolCall::crop_image([0.0, 0.0, 500.0, 500.0]).to_json();
        let ok = format!("<think>a</think><tool_call>{call}</tool_call>");
        assert_eq!(format_reward(&[ok.as_str(), ok.as_str(), "<think>b</think><answer>1</answer>"]), 1.0);
        assert_eq!(format_reward(&[ok.as_str(), "<think>b<answer>1</answer>"]), 0.0);
        assert_eq!(format_reward(&["<think>b</think><answer>1</answer>"]), 1.0);
        let schema_bad = "<think>a</think><tool_call>{\"name\":\"zoom\",\"arguments\":{}}</tool_call>";
        assert!(matches!(check_format(&[schema_bad]), Err(FormatViolation::Schema { turn: 0, .. })));
    }

    #[test]
    fn accuracy_routing() {
        let mut t = traj(TaskKind::Rotation);
        assert_eq!(accuracy_reward(&t), AccuracyScore { value: 0.0, no_answer: true });
        let truth = t.task.truth.answer_text();
        t.steps.push(Step::answer("x", truth));
        assert_eq!(accuracy_reward(&t).value, 1.0);
        let moves = GroundTruth::MoveSequence { moves: "UDR".into() };
        assert!((answer_accuracy("UDL", &moves) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(answer_accuracy("u d r", &moves), 1.0);
        let perm = GroundTruth::Permutation { order: vec![2, 0, 1] };
        assert_eq!(answer_accuracy("[2, 0, 1]", &perm), 1.0);
        assert_eq!(answer_accuracy("[2, 1, 0]", &perm), 1.0 / 3.0);
        let clock = GroundTruth::Numeric { value: 195.0, unit: "minutes".into() };
        assert_eq!(answer_accuracy("3:15", &clock), 1.0);
        assert_eq!(answer_accuracy("195 minutes", &clock), 1.0);
        assert_eq!(answer_accuracy("225", &clock), 1.0 / 11.0);
        assert_eq!(answer_accuracy("no idea", &clock), 0.0);
        let label = GroundTruth::ChoiceLabel { label: "B3".into() };
        assert_eq!(answer_accuracy("b3.", &label), 1.0);
        assert_eq!(first_number("theta = -90.5."), Some(-90.5));
    }

    #[test]
    fn stepwise_examples() {
        assert!((stepwise_reward(&[0.0, 0.5, 1.0]) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(stepwise_reward(&[0.0, 0.3]), 1.0);
        assert_eq!(stepwise_reward(&[0.0, 0.0]), 0.0);
        assert_eq!(stepwise_reward(&[0.0]), 0.0);

        let mut t = traj(TaskKind::Maze);
        let GroundTruth::MoveSequence { moves } = t.task.truth.clone() else { panic!() };
        let path: Vec<(i64, i64)> = t.task.meta["path"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| (p[0].as_i64().unwrap(), p[1].as_i64().unwrap()))
            .collect();
        let n = t.task.meta_i64("n").unwrap();
        let k = 2.min(moves.len());
        t.steps.push(Step::tool("", ToolCall::route_drawer(n, &path[..=k]), blank()));
        let s = stepwise_scores(&t, &ConstantEvaluator(0.5)).unwrap();
        assert!((s[1] - levenshtein_norm(&moves[..k], &moves)).abs() < 1e-15);

        let mut t = traj(TaskKind::NumericEstimate);
        t.steps.push(Step::tool("", ToolCall::crop_image([0.0, 0.0, 500.0, 500.0]), blank()));
        let err = ToolError::new(tools::ToolErrorCode::OutOfBounds, "x");
        t.steps.push(Step::tool("", ToolCall::crop_image([0.0, 0.0, 1500.0, 500.0]), Observation::Error(err)));
        assert_eq!(stepwise_scores(&t, &ConstantEvaluator(0.5)).unwrap(), vec![0.0, 0.5, 0.5]);
        assert!(stepwise_scores(&t, &ConstantEvaluator(1.5)).is_err());
    }

    #[test]
    fn jigsaw_target_equal_to_truth_scores_one() {
        let t = traj(TaskKind::Jigsaw);
        let GroundTruth::Permutation { order } = &t.task.truth else { panic!() };
        let target: Vec<i64> = order.iter().map(|&i| i as i64).collect();
        let id: Vec<i64> = (0..target.len() as i64).collect();
        assert_eq!(quantifiable_score(&ToolCall::rearrange_tiles(3, 3, &id, &target), &t.task.truth), Some(1.0));
    }

    #[test]
    fn totals() {
        let w = RewardWeights::default();
        assert_eq!(w.combine(1.0, 1.0, 1.0), 2.0);
        assert_eq!(w.combine(1.0, 0.0, 0.0), 1.0);
        assert_eq!(w.combine(0.0, 1.0, 1.0), 1.0);

        let mut t = traj(TaskKind::Rotation);
        t.steps.push(Step::answer("a", t.task.truth.answer_text()));
        let b = total_reward(&t, w, &ConstantEvaluator(0.5)).unwrap();
        assert_eq!((b.fmt, b.acc, b.step, b.total, b.terminated), (1.0, 1.0, 0.0, 1.7, false));

        t.steps.clear();
        t.rejected_turn = Some(RejectedTurn { raw: "oops".into(), error: "missing-think".into() });
        let b = total_reward(&t, w, &ConstantEvaluator(0.5)).unwrap();
        assert!(b.terminated && b.no_answer && b.fmt == 0.0);
        assert!(RewardWeights::new(-1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn increasing_scores_reward_positive(mut v in proptest::collection::vec(0.001f64..1.0, 1..20)) {
            v.sort_by(f64::total_cmp);
            v.dedup();
            let mut s = vec![0.0];
            s.extend(v);
            let r = stepwise_reward(&s);
            prop_assert!(r > 0.0 && r <= 1.0);
        }

        #[test]
        fn reward_bounded(v in proptest::collection::vec(0.0f64..=1.0, 0..20)) {
            let mut s = vec![0.0];
            s.extend(v);
            let r = stepwise_reward(&s);
            prop_assert!((-1.0..=1.0).contains(&r));
        }

        #[test]
        fn total_is_linear(f in 0.0f64..=1.0, a in 0.0f64..=1.0, s in -1.0f64..=1.0, al in 0.0f64..2.0, be in 0.0f64..2.0) {
            let w = RewardWeights::new(al, be).unwrap();
            prop_assert!((w.combine(f, a, s) - (f + al * a + be * s)).abs() < 1e-12);
        }
    }
}
