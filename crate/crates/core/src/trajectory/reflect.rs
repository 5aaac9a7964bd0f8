//! Reflection injection and loss masks.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Observation, Step, StepAction, Trajectory, TrajectoryError};
use crate::raster::Sketch;
use crate::taskgen::rng_for;
use crate::tools::{self, num, ToolCall};

/// Start of the corrective thought after a failed call. The error message
/// follows in quotes, then the original thought.
pub const REFLECTION_PREFIX: &str = "The previous tool call returned an error: ";
const REVISION_PREFIX: &str =
    "That last step did not bring me closer to the answer, so I go back to the previous image. ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionKind {
    /// One argument pushed out of its valid range; the tool rejects it.
    Parameter,
    /// A different valid call whose result is discarded.
    ReasoningPath,
}

fn with_arg(call: &ToolCall, key: &str, value: Value) -> ToolCall {
    let mut out = call.clone();
    out.arguments.insert(key.into(), value);
    out
}

fn numbers(call: &ToolCall, key: &str) -> Option<Vec<f64>> {
    call.arguments.get(key)?.as_array()?.iter().map(Value::as_f64).collect()
}

fn ints(call: &ToolCall, key: &str) -> Option<Vec<i64>> {
    call.arguments.get(key)?.as_array()?.iter().map(Value::as_i64).collect()
}

fn num_list(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

/// Copy of `call` with one argument out of range: a coordinate above 1000,
/// a grid point at or past `grid_n`, a repeated tile index, a non-finite
/// angle or a non-positive brightness factor. `None` when the tool or its
/// arguments give nothing to corrupt.
pub fn corrupt_parameters(call: &ToolCall, rng: &mut impl Rng) -> Option<ToolCall> {
    match call.name.as_str() {
        tools::CROP_IMAGE | tools::DRAW_BBOX | tools::DRAW_LINE => {
            let key = if call.name == tools::DRAW_LINE { "coords" } else { "bbox" };
            let mut v = numbers(call, key)?;
            let i = rng.gen_range(0..v.len());
            v[i] = 1000.0 + f64::from(rng.gen_range(1..=500));
            Some(with_arg(call, key, num_list(&v)))
        }
        tools::ROTATE_IMAGE => Some(with_arg(call, "theta", num(f64::NAN))),
        tools::BRIGHTEN_IMAGE => {
            let alpha = call.arguments.get("alpha")?.as_f64()?;
            Some(with_arg(call, "alpha", num(-alpha.abs())))
        }
        tools::ROUTE_DRAWER => {
            let n = call.arguments.get("grid_n")?.as_i64()?;
            let mut points: Vec<Vec<Value>> = call
                .arguments
                .get("points")?
                .as_array()?
                .iter()
                .map(|p| p.as_array().cloned())
                .collect::<Option<_>>()?;
            let point = points.choose_mut(rng)?;
            let k = rng.gen_range(0..point.len().max(1));
            *point.get_mut(k)? = (n + rng.gen_range(0..3)).into();
            let points = Value::Array(points.into_iter().map(Value::Array).collect());
            Some(with_arg(call, "points", points))
        }
        tools::REARRANGE_TILES => {
            let mut target = ints(call, "target")?;
            if target.len() < 2 {
                return None;
            }
            let i = rng.gen_range(0..target.len());
            let j = (i + rng.gen_range(1..target.len())) % target.len();
            target[j] = target[i];
            let target = Value::Array(target.into_iter().map(Value::from).collect());
            Some(with_arg(call, "target", target))
        }
        _ => None,
    }
}

fn candidates(call: &ToolCall) -> Vec<ToolCall> {
    let quadrants = [
        [0.0, 0.0, 500.0, 500.0],
        [500.0, 0.0, 1000.0, 500.0],
        [0.0, 500.0, 500.0, 1000.0],
        [500.0, 500.0, 1000.0, 1000.0],
    ];
    match call.name.as_str() {
        tools::CROP_IMAGE | tools::DRAW_BBOX => {
            let mut out: Vec<ToolCall> = quadrants
                .iter()
                .map(|q| with_arg(call, "bbox", num_list(q)))
                .collect();
            if let Some(b) = numbers(call, "bbox").filter(|b| b.len() == 4) {
                let mirrored = [1000.0 - b[2], 1000.0 - b[3], 1000.0 - b[0], 1000.0 - b[1]];
                out.push(with_arg(call, "bbox", num_list(&mirrored)));
            }
            out
        }
        tools::DRAW_LINE => numbers(call, "coords")
            .filter(|c| c.len() == 4)
            .map(|c| {
                vec![
                    with_arg(call, "coords", num_list(&[c[0], c[3], c[2], c[1]])),
                    with_arg(call, "coords", num_list(&[1000.0 - c[0], c[1], 1000.0 - c[2], c[3]])),
                ]
            })
            .unwrap_or_default(),
        tools::ROTATE_IMAGE => call
            .arguments
            .get("theta")
            .and_then(Value::as_f64)
            .map(|t| {
                [90.0, 180.0, 270.0]
                    .iter()
                    .map(|d| with_arg(call, "theta", num((t + d).rem_euclid(360.0))))
                    .collect()
            })
            .unwrap_or_default(),
        tools::BRIGHTEN_IMAGE => call
            .arguments
            .get("alpha")
            .and_then(Value::as_f64)
            .map(|a| vec![with_arg(call, "alpha", num(a * 0.5)), with_arg(call, "alpha", num(a * 2.0))])
            .unwrap_or_default(),
        tools::ROUTE_DRAWER => {
            let Some(points) = call.arguments.get("points").and_then(Value::as_array) else {
                return Vec::new();
            };
            (1..points.len())
                .map(|k| with_arg(call, "points", Value::Array(points[..k].to_vec())))
                .collect()
        }
        tools::REARRANGE_TILES => {
            let Some(target) = ints(call, "target") else {
                return Vec::new();
            };
            let mut out = Vec::new();
            for i in 0..target.len() {
                for j in i + 1..target.len() {
                    let mut t = target.clone();
                    t.swap(i, j);
                    out.push(with_arg(call, "target", Value::Array(t.into_iter().map(Value::from).collect())));
                }
            }
            out
        }
        _ => Vec::new(),
    }
}

/// A valid call of the same tool whose result differs from what `call`
/// produces on `state`.
pub fn wrong_but_valid(call: &ToolCall, state: &Sketch, rng: &mut impl Rng) -> Option<(ToolCall, Sketch)> {
    let right = tools::dispatch(call, state).ok()?;
    let mut options = candidates(call);
    options.shuffle(rng);
    options.into_iter().find_map(|c| match tools::dispatch(&c, state) {
        Ok(s) if s != right => Some((c, s)),
        _ => None,
    })
}

/// Inserts an erroneous, masked step before step `at` and turns step `at`
/// into its correction.
pub fn inject_reflection(
    traj: &Trajectory,
    at: usize,
    kind: CorruptionKind,
    seed: u64,
) -> Result<Trajectory, TrajectoryError> {
    let fail = |message: &str| TrajectoryError::Injection {
        step: at,
        message: message.into(),
    };
    let original = traj.steps.get(at).ok_or_else(|| fail("no such step"))?;
    let StepAction::Tool { call, observation } = &original.action else {
        return Err(fail("step has no tool call"));
    };
    if original.masked || observation.sketch().is_none() {
        return Err(fail("step is not a successful unmasked tool call"));
    }
    let state = traj.state_before(at);
    let mut rng = rng_for(seed);
    let (erroneous, corrective_thought) = match kind {
        CorruptionKind::Parameter => {
            let bad = corrupt_parameters(call, &mut rng).ok_or_else(|| fail("tool has no corruptible parameter"))?;
            let err = tools::dispatch(&bad, state)
                .err()
                .ok_or_else(|| fail("corrupted call did not fail"))?;
            let thought = format!("{REFLECTION_PREFIX}\"{}\". {}", err.message, original.thought);
            (Step::tool(original.thought.clone(), bad, Observation::Error(err)), thought)
        }
        CorruptionKind::ReasoningPath => {
            let (wrong, sketch) =
                wrong_but_valid(call, state, &mut rng).ok_or_else(|| fail("no distinct valid alternative"))?;
            let thought = format!("{REVISION_PREFIX}{}", original.thought);
            (Step::tool(original.thought.clone(), wrong, Observation::Sketch(sketch)), thought)
        }
    };
    let mut out = traj.clone();
    out.steps[at].thought = corrective_thought;
    out.steps.insert(at, Step { masked: true, ..erroneous });
    out.reflection_count += 1;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanRole {
    Prompt,
    Assistant,
    Observation,
}

/// One segment of the serialized conversation. Only unmasked assistant
/// segments are imitation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpan {
    pub role: SpanRole,
    pub step: Option<usize>,
    pub masked: bool,
    pub target: bool,
}

pub fn loss_mask_spans(traj: &Trajectory) -> Vec<MaskSpan> {
    let mut spans = vec![MaskSpan {
        role: SpanRole::Prompt,
        step: None,
        masked: false,
        target: false,
    }];
    for (i, step) in traj.steps.iter().enumerate() {
        spans.push(MaskSpan {
            role: SpanRole::Assistant,
            step: Some(i),
            masked: step.masked,
            target: !step.masked,
        });
        if step.call().is_some() {
            spans.push(MaskSpan {
                role: SpanRole::Observation,
                step: Some(i),
                masked: step.masked,
                target: false,
            });
        }
    }
    spans
}
