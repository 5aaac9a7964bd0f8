use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{Map, Value};

use super::scene::{draw_glyph, Shape, PALETTE};
use super::{meta_pair, read_pair, rng_for, GenParams, GroundTruth, TaskGenError, TaskInstance, TaskKind};
use crate::raster::{norm_coord_to_edge, Color, PixelBox, Sketch};
use crate::tools::{ToolCall, CROP_IMAGE};

const BACKGROUND: Color = Color::rgb(232, 232, 232);
const GRID_LINE: Color = Color::rgb(200, 200, 200);

pub fn cell_label(row: usize, col: usize) -> String {
    format!("{}{}", (b'A' + col as u8) as char, row + 1)
}

/// A grid scene with one uniquely colored-and-shaped target among
/// distractors. The plan zooms in by repeated crops that each keep the
/// target's cell, ending on that cell alone, then boxes the target.
pub fn gen_visual_search(seed: u64, params: &GenParams) -> Result<TaskInstance, TaskGenError> {
    let g = params.search_grid;
    if !(2..=26).contains(&g) {
        return Err(TaskGenError::InvalidParameter(format!(
            "search grid must be in [2, 26], got {g}"
        )));
    }
    let cell = params.resolution / g as u32;
    if cell < 12 {
        return Err(TaskGenError::InvalidParameter(format!(
            "resolution {} too small for a {g}x{g} search grid",
            params.resolution
        )));
    }
    let side = cell * g as u32;
    let mut rng = rng_for(seed);
    let mut img = Sketch::new_blank(i64::from(side), i64::from(side), BACKGROUND)?;
    for k in 1..g as u32 {
        img.fill_rect(&PixelBox { x1: k * cell, y1: 0, x2: k * cell + 1, y2: side }, GRID_LINE);
        img.fill_rect(&PixelBox { x1: 0, y1: k * cell, x2: side, y2: k * cell + 1 }, GRID_LINE);
    }

    let target_shape = Shape::ALL[rng.gen_range(0..Shape::ALL.len())];
    let target_color = rng.gen_range(0..PALETTE.len());
    let mut cells: Vec<(usize, usize)> = (0..g).flat_map(|r| (0..g).map(move |c| (r, c))).collect();
    cells.shuffle(&mut rng);
    let target_cell = cells[0];
    let n_distractors = rng.gen_range(g * g / 2..g * g);

    let cellf = f64::from(cell);
    let place = |(r, c): (usize, usize), rng: &mut rand_chacha::ChaCha8Rng| {
        let jitter = 0.12 * cellf;
        let cx = (c as f64 + 0.5) * cellf + rng.gen_range(-jitter..=jitter);
        let cy = (r as f64 + 0.5) * cellf + rng.gen_range(-jitter..=jitter);
        (cx, cy)
    };
    let radius = 0.22 * cellf;
    let mut distractor_centers = Vec::with_capacity(n_distractors);
    for &cell_rc in &cells[1..=n_distractors] {
        let (shape, color) = loop {
            let s = Shape::ALL[rng.gen_range(0..Shape::ALL.len())];
            let c = rng.gen_range(0..PALETTE.len());
            if (s, c) != (target_shape, target_color) {
                break (s, c);
            }
        };
        let (cx, cy) = place(cell_rc, &mut rng);
        draw_glyph(&mut img, shape, PALETTE[color].1, cx, cy, radius);
        distractor_centers.push((cx.round() as i64, cy.round() as i64));
    }
    let (tx, ty) = place(target_cell, &mut rng);
    draw_glyph(&mut img, target_shape, PALETTE[target_color].1, tx, ty, radius);

    let mut plan = Vec::new();
    let (tr, tc) = target_cell;
    let (mut r0, mut c0, mut k) = (0usize, 0usize, g);
    while k > 1 {
        let half = k.div_ceil(2);
        let start_c = if tc - c0 < half { c0 } else { c0 + k - half };
        let start_r = if tr - r0 < half { r0 } else { r0 + k - half };
        let norm = |i: usize| (i as f64 * 1000.0 / k as f64 * 1e6).round() / 1e6;
        plan.push(ToolCall::crop_image([
            norm(start_c - c0),
            norm(start_r - r0),
            norm(start_c - c0 + half),
            norm(start_r - r0 + half),
        ]));
        (r0, c0, k) = (start_r, start_c, half);
    }
    plan.push(ToolCall::draw_bbox([100.0, 100.0, 900.0, 900.0]));

    let label = cell_label(tr, tc);
    let (shape_name, color_name) = (target_shape.name(), PALETTE[target_color].0);
    let last_col = (b'A' + g as u8 - 1) as char;
    let question = format!(
        "The image is divided into a {g}x{g} grid. Columns are labeled A to {last_col} from left \
         to right and rows 1 to {g} from top to bottom. Which cell contains the {color_name} \
         {shape_name}? Answer with the cell label, for example B3."
    );
    let mut meta = Map::new();
    meta.insert("grid".into(), g.into());
    meta.insert("cell_px".into(), cell.into());
    meta.insert("target_cell".into(), meta_pair((tr as i64, tc as i64)));
    meta.insert("target_center".into(), meta_pair((tx.round() as i64, ty.round() as i64)));
    meta.insert("target_shape".into(), shape_name.into());
    meta.insert("target_color".into(), color_name.into());
    meta.insert(
        "distractor_centers".into(),
        Value::Array(distractor_centers.into_iter().map(meta_pair).collect()),
    );
    let instance = TaskInstance {
        id: format!("visual_search-g{g}-{seed:016x}"),
        kind: TaskKind::VisualSearch,
        initial: img,
        question,
        truth: GroundTruth::ChoiceLabel { label },
        plan,
        meta,
        seed,
    };
    super::replay_plan(&instance)?;
    Ok(instance)
}

/// Regions (in `I_0` pixel coordinates) selected by each planned crop.
pub(crate) fn crop_chain(instance: &TaskInstance) -> Vec<PixelBox> {
    let mut region = PixelBox {
        x1: 0,
        y1: 0,
        x2: instance.initial.width(),
        y2: instance.initial.height(),
    };
    let mut out = Vec::new();
    for call in instance.plan.iter().filter(|c| c.name == CROP_IMAGE) {
        let Some(b) = call.arguments.get("bbox").and_then(Value::as_array) else {
            break;
        };
        let v: Vec<f64> = b.iter().filter_map(Value::as_f64).collect();
        if v.len() != 4 {
            break;
        }
        let (w, h) = (region.width(), region.height());
        region = PixelBox {
            x1: region.x1 + norm_coord_to_edge(v[0], w),
            y1: region.y1 + norm_coord_to_edge(v[1], h),
            x2: region.x1 + norm_coord_to_edge(v[2], w),
            y2: region.y1 + norm_coord_to_edge(v[3], h),
        };
        out.push(region);
    }
    out
}

pub(super) fn final_crop_isolates_target(instance: &TaskInstance) -> bool {
    let Some(last) = crop_chain(instance).last().copied() else {
        return false;
    };
    let inside = |(x, y): (i64, i64)| x >= 0 && y >= 0 && last.contains(x as u32, y as u32);
    let Some(target) = read_pair(&instance.meta, "target_center") else {
        return false;
    };
    let distractors = instance
        .meta
        .get("distractor_centers")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    inside(target)
        && distractors.iter().all(|d| {
            let p = (d[0].as_i64().unwrap_or(-1), d[1].as_i64().unwrap_or(-1));
            !inside(p)
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crops_shrink_and_isolate_target() {
        for g in [2, 3, 4, 5, 6] {
            let params = GenParams { search_grid: g, resolution: 360, ..GenParams::default() };
            for seed in 0..10 {
                let inst = gen_visual_search(seed, &params).unwrap();
                let chain = crop_chain(&inst);
                assert!(!chain.is_empty());
                let full = u64::from(inst.initial.width()) * u64::from(inst.initial.height());
                let mut prev = full;
                for b in &chain {
                    assert!(b.area() < prev);
                    prev = b.area();
                }
                assert!(final_crop_isolates_target(&inst), "g={g} seed={seed}");
            }
        }
    }

    #[test]
    fn scene_is_seeded() {
        let p = GenParams::default();
        assert_eq!(gen_visual_search(3, &p).unwrap(), gen_visual_search(3, &p).unwrap());
        assert_ne!(gen_visual_search(3, &p).unwrap().initial, gen_visual_search(4, &p).unwrap().initial);
    }

    #[test]
    fn label_matches_target_cell() {
        let inst = gen_visual_search(11, &GenParams::default()).unwrap();
        let (r, c) = read_pair(&inst.meta, "target_cell").unwrap();
        assert_eq!(inst.truth, GroundTruth::ChoiceLabel { label: cell_label(r as usize, c as usize) });
        assert_eq!(cell_label(0, 0), "A1");
        assert_eq!(cell_label(2, 1), "B3");
    }
}
