//! Tile-shuffle puzzles.
//!
//! Tiles are labeled by the slot they occupy in the shuffled image the
//! policy sees. Slot `j` of the initial image shows original tile
//! `shuffle[j]`; the answer is `shuffle⁻¹`, i.e. entry `j` names the
//! shuffled-image tile that belongs in slot `j`. Feeding that answer to
//! `rearrange_tiles` as the target (with the identity as current) restores
//! the original picture.

use rand::seq::SliceRandom;
use serde_json::{Map, Value};

use super::{rng_for, GenParams, GroundTruth, TaskGenError, TaskInstance, TaskKind};
use crate::raster::Sketch;
use crate::tools::{self, ToolCall};

pub fn invert_permutation(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &k) in p.iter().enumerate() {
        inv[k] = i;
    }
    inv
}

/// Non-trivial cycles of `p`, each listed from its smallest element, ordered
/// by that element.
pub fn permutation_cycles(p: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; p.len()];
    let mut cycles = Vec::new();
    for start in 0..p.len() {
        if seen[start] || p[start] == start {
            seen[start] = true;
            continue;
        }
        let mut cycle = Vec::new();
        let mut at = start;
        while !seen[at] {
            seen[at] = true;
            cycle.push(at);
            at = p[at];
        }
        cycles.push(cycle);
    }
    cycles
}

fn to_i64(p: &[usize]) -> Vec<i64> {
    p.iter().map(|&i| i as i64).collect()
}

pub fn gen_jigsaw(
    base: &Sketch,
    rows: usize,
    cols: usize,
    seed: u64,
    params: &GenParams,
) -> Result<TaskInstance, TaskGenError> {
    let n = rows * cols;
    if n < 2 {
        return Err(TaskGenError::InvalidParameter(format!(
            "a {rows}x{cols} grid has no non-identity shuffle"
        )));
    }
    if base.width() as usize % cols != 0 || base.height() as usize % rows != 0 {
        return Err(TaskGenError::InvalidParameter(format!(
            "image {}x{} is not divisible into {rows} rows x {cols} cols",
            base.width(),
            base.height()
        )));
    }
    if params.max_plan_len == 0 {
        return Err(TaskGenError::InvalidParameter("max_plan_len must be >= 1".into()));
    }
    let identity: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed);
    let mut shuffle = identity.clone();
    while shuffle == identity {
        shuffle.shuffle(&mut rng);
    }
    let (r, c) = (rows as i64, cols as i64);
    let initial = tools::rearrange_tiles(base, r, c, &to_i64(&identity), &to_i64(&shuffle))
        .map_err(|source| TaskGenError::PlanFailed { index: 0, source })?;
    let answer = invert_permutation(&shuffle);

    let mut cycles = permutation_cycles(&answer);
    if cycles.len() > params.max_plan_len {
        let tail: Vec<usize> = cycles.drain(params.max_plan_len - 1..).flatten().collect();
        cycles.push(tail);
    }
    let mut arrangement = identity.clone();
    let mut plan = Vec::with_capacity(cycles.len());
    for cycle in &cycles {
        let mut next = arrangement.clone();
        for &slot in cycle {
            next[slot] = answer[slot];
        }
        plan.push(ToolCall::rearrange_tiles(r, c, &to_i64(&arrangement), &to_i64(&next)));
        arrangement = next;
    }

    let question = format!(
        "This image was cut into a {rows}x{cols} grid of tiles and the tiles were shuffled. \
         Number the tiles 0 to {} in row-major order by where they appear now. Give the \
         arrangement that restores the original image as a list whose i-th entry is the number \
         of the tile that belongs in position i, for example [{}].",
        n - 1,
        (0..n).rev().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
    );
    let mut meta = Map::new();
    meta.insert("rows".into(), rows.into());
    meta.insert("cols".into(), cols.into());
    meta.insert(
        "shuffle".into(),
        Value::Array(shuffle.iter().map(|&i| i.into()).collect()),
    );
    let instance = TaskInstance {
        id: format!("jigsaw-{rows}x{cols}-{seed:016x}"),
        kind: TaskKind::Jigsaw,
        initial,
        question,
        truth: GroundTruth::Permutation { order: answer },
        plan,
        meta,
        seed,
    };
    super::replay_plan(&instance)?;
    Ok(instance)
}

fn shuffle_of(instance: &TaskInstance) -> Option<Vec<i64>> {
    instance
        .meta
        .get("shuffle")?
        .as_array()?
        .iter()
        .map(Value::as_i64)
        .collect()
}

/// Re-shuffling the final sketch must reproduce `I_0`, which holds exactly
/// when the final sketch is the unshuffled picture.
pub(super) fn is_restored(instance: &TaskInstance, final_sketch: &Sketch) -> bool {
    let (Some(rows), Some(cols), Some(shuffle)) = (
        instance.meta_i64("rows"),
        instance.meta_i64("cols"),
        shuffle_of(instance),
    ) else {
        return false;
    };
    let identity: Vec<i64> = (0..rows * cols).collect();
    tools::rearrange_tiles(final_sketch, rows, cols, &identity, &shuffle)
        .is_ok_and(|reshuffled| reshuffled == instance.initial)
}
