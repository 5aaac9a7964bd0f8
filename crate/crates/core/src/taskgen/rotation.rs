use rand::Rng;
use serde_json::Map;

use super::{rng_for, GroundTruth, TaskGenError, TaskInstance, TaskKind};
use crate::raster::Sketch;
use crate::tools::{self, ToolCall};

/// Rotates `base` clockwise by a seeded right angle; the answer is the
/// clockwise angle that undoes it.
pub fn gen_rotation(base: &Sketch, seed: u64) -> Result<TaskInstance, TaskGenError> {
    let mut rng = rng_for(seed);
    let applied = [90.0, 180.0, 270.0][rng.gen_range(0..3)];
    gen_rotation_by(base, applied, seed)
}

pub(crate) fn gen_rotation_by(base: &Sketch, applied: f64, seed: u64) -> Result<TaskInstance, TaskGenError> {
    let initial = tools::rotate_image(base, applied)
        .map_err(|source| TaskGenError::PlanFailed { index: 0, source })?;
    let answer = (360.0 - applied).rem_euclid(360.0);
    let mut meta = Map::new();
    meta.insert("applied_rotation".into(), tools::num(applied));
    let instance = TaskInstance {
        id: format!("rotation-{seed:016x}"),
        kind: TaskKind::Rotation,
        initial,
        question: "This picture has been rotated away from its upright orientation. By how many \
                   degrees must it be rotated clockwise to make it upright again? Answer with \
                   one of 0, 90, 180 or 270."
            .into(),
        truth: GroundTruth::Numeric {
            value: answer,
            unit: "degrees".into(),
        },
        plan: vec![ToolCall::rotate_image(answer)],
        meta,
        seed,
    };
    super::replay_plan(&instance)?;
    Ok(instance)
}

/// Undoing the final sketch's correction must reproduce `I_0`.
pub(super) fn is_upright(instance: &TaskInstance, final_sketch: &Sketch) -> bool {
    let Some(applied) = instance.meta.get("applied_rotation").and_then(|v| v.as_f64()) else {
        return false;
    };
    tools::rotate_image(final_sketch, applied).is_ok_and(|s| s == instance.initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{procedural_base, replay_plan};

    fn truth_value(inst: &TaskInstance) -> f64 {
        match inst.truth {
            GroundTruth::Numeric { value, .. } => value,
            _ => panic!("rotation truth is numeric"),
        }
    }

    #[test]
    fn answers_invert_the_applied_angle() {
        let base = procedural_base(30, 20, 3).unwrap();
        for (applied, expect) in [(180.0, 180.0), (90.0, 270.0), (270.0, 90.0)] {
            let inst = gen_rotation_by(&base, applied, 0).unwrap();
            assert_eq!(truth_value(&inst), expect);
            assert_eq!(inst.plan.len(), 1);
            let out = replay_plan(&inst).unwrap();
            assert_eq!(out[0], base);
        }
    }

    #[test]
    fn seeded_angles_are_right_angles() {
        let base = procedural_base(16, 12, 0).unwrap();
        for seed in 0..20 {
            let inst = gen_rotation(&base, seed).unwrap();
            assert!([90.0, 180.0, 270.0].contains(&truth_value(&inst)));
        }
    }
}
