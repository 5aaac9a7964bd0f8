use rand::Rng;
use serde_json::{Map, Value};

use super::{meta_pair, rng_for, GenParams, GroundTruth, TaskGenError, TaskInstance, TaskKind};
use crate::raster::{norm_coord_to_edge, Color, Point, Sketch};
use crate::tools::ToolCall;

pub(crate) const HOUR_HAND: Color = Color::rgb(20, 20, 20);
pub(crate) const MINUTE_HAND: Color = Color::rgb(25, 60, 190);

/// Endpoint of a hand of `length` at `degrees` clockwise from twelve.
fn hand_end(cx: f64, cy: f64, length: f64, degrees: f64) -> Point {
    let (s, c) = degrees.to_radians().sin_cos();
    Point::new((cx + length * s).round() as i64, (cy - length * c).round() as i64)
}

/// An analog clock somewhere on the canvas. The answer is the displayed time
/// in minutes past 12:00; the plan zooms onto the dial.
pub fn gen_numeric(seed: u64, params: &GenParams) -> Result<TaskInstance, TaskGenError> {
    let res = params.resolution;
    if res < 64 {
        return Err(TaskGenError::InvalidParameter(format!(
            "clock tasks need resolution >= 64, got {res}"
        )));
    }
    let mut rng = rng_for(seed);
    let resf = f64::from(res);
    let radius = 0.3 * resf;
    let margin = 0.05 * resf;
    let cx = rng.gen_range(radius + margin..=resf - radius - margin).round();
    let cy = rng.gen_range(radius + margin..=resf - radius - margin).round();
    let minutes: u32 = rng.gen_range(0..720);

    let mut img = Sketch::new_blank(i64::from(res), i64::from(res), Color::rgb(226, 216, 196))?;
    img.fill_circle(cx, cy, radius, Color::BLACK);
    img.fill_circle(cx, cy, radius - (radius * 0.03).max(2.0), Color::WHITE);
    let center = Point::new(cx as i64, cy as i64);
    for h in 0..12 {
        let angle = f64::from(h) * 30.0;
        let inner = if h % 3 == 0 { 0.78 } else { 0.86 };
        let a = hand_end(cx, cy, radius * inner, angle);
        let b = hand_end(cx, cy, radius * 0.93, angle);
        img.stroke(a, b, Color::BLACK, if h % 3 == 0 { 4 } else { 2 }, false);
    }
    let hour_angle = f64::from(minutes) * 0.5;
    let minute_angle = f64::from(minutes % 60) * 6.0;
    let hour_end = hand_end(cx, cy, radius * 0.5, hour_angle);
    let minute_end = hand_end(cx, cy, radius * 0.78, minute_angle);
    img.stroke(center, hour_end, HOUR_HAND, 6, false);
    img.stroke(center, minute_end, MINUTE_HAND, 3, false);
    img.fill_circle(cx, cy, (radius * 0.04).max(2.0), Color::RED);

    let pad = radius * 1.08;
    let norm = |v: f64, round_up: bool| {
        let n = v / resf * 1000.0;
        (if round_up { n.ceil() } else { n.floor() }).clamp(0.0, 1000.0)
    };
    let bbox = [
        norm(cx - pad, false),
        norm(cy - pad, false),
        norm(cx + pad, true),
        norm(cy + pad, true),
    ];

    let mut meta = Map::new();
    meta.insert("minutes".into(), minutes.into());
    meta.insert("hour".into(), (if minutes / 60 == 0 { 12 } else { minutes / 60 }).into());
    meta.insert("minute".into(), (minutes % 60).into());
    meta.insert("center".into(), meta_pair((center.x, center.y)));
    meta.insert("radius".into(), radius.into());
    meta.insert("hour_hand_end".into(), meta_pair((hour_end.x, hour_end.y)));
    meta.insert("minute_hand_end".into(), meta_pair((minute_end.x, minute_end.y)));

    let instance = TaskInstance {
        id: format!("numeric_estimate-{seed:016x}"),
        kind: TaskKind::NumericEstimate,
        initial: img,
        question: "What time does the clock show? Answer with the number of minutes past 12:00, \
                   a value from 0 to 719; for example 3:15 is 195."
            .into(),
        truth: GroundTruth::Numeric {
            value: f64::from(minutes),
            unit: "minutes".into(),
        },
        plan: vec![ToolCall::crop_image(bbox)],
        meta,
        seed,
    };
    super::replay_plan(&instance)?;
    Ok(instance)
}

pub(super) fn crop_contains_dial(instance: &TaskInstance) -> bool {
    let (Some(first), Some((cx, cy)), Some(radius)) = (
        instance.plan.first(),
        super::read_pair(&instance.meta, "center"),
        instance.meta.get("radius").and_then(Value::as_f64),
    ) else {
        return false;
    };
    let Some(b) = first.arguments.get("bbox").and_then(Value::as_array) else {
        return false;
    };
    let v: Vec<f64> = b.iter().filter_map(Value::as_f64).collect();
    let (w, h) = (instance.initial.width(), instance.initial.height());
    let x1 = f64::from(norm_coord_to_edge(v[0], w));
    let y1 = f64::from(norm_coord_to_edge(v[1], h));
    let x2 = f64::from(norm_coord_to_edge(v[2], w));
    let y2 = f64::from(norm_coord_to_edge(v[3], h));
    let (cx, cy) = (cx as f64, cy as f64);
    x1 <= cx - radius && y1 <= cy - radius && x2 >= cx + radius && y2 >= cy + radius
}
