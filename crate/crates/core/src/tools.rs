//! The seven deterministic image tools and the registry that dispatches
//! structured calls to them.
//!
//! A call goes through two stages. [`Action::from_call`] checks the call
//! against the tool schema (name, required arguments, JSON types) and
//! [`Action::apply`] validates values and does the pixel work. Both stages
//! report failures as a [`ToolError`]; the input sketch is never touched, so
//! an error leaves the caller's visual state exactly where it was.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::raster::{
    line_points, norm_coord_to_index, Color, NormBox, PixelBox, Point, RasterError, Sketch,
    DEFAULT_THICKNESS,
};

pub const CROP_IMAGE: &str = "crop_image";
pub const ROTATE_IMAGE: &str = "rotate_image";
pub const BRIGHTEN_IMAGE: &str = "brighten_image";
pub const DRAW_BBOX: &str = "draw_bbox";
pub const DRAW_LINE: &str = "draw_line";
pub const ROUTE_DRAWER: &str = "route_drawer";
pub const REARRANGE_TILES: &str = "rearrange_tiles";

pub const TOOL_NAMES: [&str; 7] = [
    CROP_IMAGE,
    ROTATE_IMAGE,
    BRIGHTEN_IMAGE,
    DRAW_BBOX,
    DRAW_LINE,
    ROUTE_DRAWER,
    REARRANGE_TILES,
];

/// A named tool invocation, serialized as `{"name": ..., "arguments": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolCall {
    pub name: String,
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, arguments: Map<String, Value>) -> Self {
        Self {
            name: name.into(),
            arguments,
        }
    }

    pub fn crop_image(bbox: [f64; 4]) -> Self {
        Self::new(CROP_IMAGE, args([("bbox", num_array(&bbox))]))
    }

    pub fn rotate_image(theta: f64) -> Self {
        Self::new(ROTATE_IMAGE, args([("theta", num(theta))]))
    }

    pub fn brighten_image(alpha: f64) -> Self {
        Self::new(BRIGHTEN_IMAGE, args([("alpha", num(alpha))]))
    }

    pub fn draw_bbox(bbox: [f64; 4]) -> Self {
        Self::new(DRAW_BBOX, args([("bbox", num_array(&bbox))]))
    }

    pub fn draw_line(coords: [f64; 4], extend: bool) -> Self {
        Self::new(
            DRAW_LINE,
            args([("coords", num_array(&coords)), ("extend", Value::Bool(extend))]),
        )
    }

    pub fn route_drawer(grid_n: i64, points: &[(i64, i64)]) -> Self {
        let pts = points
            .iter()
            .map(|&(r, c)| Value::Array(vec![r.into(), c.into()]))
            .collect();
        Self::new(
            ROUTE_DRAWER,
            args([("grid_n", grid_n.into()), ("points", Value::Array(pts))]),
        )
    }

    pub fn rearrange_tiles(rows: i64, cols: i64, current: &[i64], target: &[i64]) -> Self {
        let list = |v: &[i64]| Value::Array(v.iter().map(|&i| i.into()).collect());
        Self::new(
            REARRANGE_TILES,
            args([
                ("rows", rows.into()),
                ("cols", cols.into()),
                ("current", list(current)),
                ("target", list(target)),
            ]),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tool call serializes")
    }
}

fn args<const N: usize>(pairs: [(&str, Value); N]) -> Map<String, Value> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// JSON number for `x`, written as an integer when it is one. Non-finite
/// values have no JSON form and become `null`.
pub fn num(x: f64) -> Value {
    if x.is_finite() && x.fract() == 0.0 && x.abs() < 9.0e15 {
        Value::from(x as i64)
    } else {
        serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
    }
}

fn num_array(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToolErrorCode {
    UnknownTool,
    MissingArg,
    BadType,
    OutOfBounds,
    DegenerateRegion,
    BadPermutation,
    BadGrid,
}

impl ToolErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::UnknownTool => "unknown-tool",
            Self::MissingArg => "missing-arg",
            Self::BadType => "bad-type",
            Self::OutOfBounds => "out-of-bounds",
            Self::DegenerateRegion => "degenerate-region",
            Self::BadPermutation => "bad-permutation",
            Self::BadGrid => "bad-grid",
        }
    }
}

impl fmt::Display for ToolErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Error signal returned to the policy. The message is what the policy reads,
/// so it always names the offending parameter and its bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ToolError {
    pub code: ToolErrorCode,
    pub message: String,
}

impl ToolError {
    pub fn new(code: ToolErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn bad_type(message: impl Into<String>) -> Self {
        Self::new(ToolErrorCode::BadType, message)
    }

    fn bad_grid(message: impl Into<String>) -> Self {
        Self::new(ToolErrorCode::BadGrid, message)
    }

    fn bad_permutation(message: impl Into<String>) -> Self {
        Self::new(ToolErrorCode::BadPermutation, message)
    }

    fn from_raster(param: &str, e: RasterError) -> Self {
        match e {
            RasterError::OutOfBounds { name, value } => Self::new(
                ToolErrorCode::OutOfBounds,
                format!("{param}: coordinate {name}={value} exceeds the valid range [0, 1000]"),
            ),
            RasterError::DegenerateRegion { x1, y1, x2, y2 } => Self::new(
                ToolErrorCode::DegenerateRegion,
                format!(
                    "{param}: region [{x1}, {y1}, {x2}, {y2}] has zero area on this image; \
                     require x1 < x2 and y1 < y2"
                ),
            ),
            other => Self::bad_type(format!("{param}: {other}")),
        }
    }
}

/// Outcome of one tool execution: a new sketch or an error signal.
pub type ToolResult = Result<Sketch, ToolError>;

/// A schema-checked tool call with typed arguments.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Crop { bbox: [f64; 4] },
    Rotate { theta: f64 },
    Brighten { alpha: f64 },
    DrawBBox { bbox: [f64; 4] },
    DrawLine { coords: [f64; 4], extend: bool },
    Route { grid_n: i64, points: Vec<(i64, i64)> },
    Rearrange {
        rows: i64,
        cols: i64,
        current: Vec<i64>,
        target: Vec<i64>,
    },
}

impl Action {
    /// Schema validation: registered name, known keys, required keys present,
    /// JSON types correct. Value ranges are checked later by [`Action::apply`].
    pub fn from_call(call: &ToolCall) -> Result<Self, ToolError> {
        let spec = tool_schema()
            .into_iter()
            .find(|s| s.name == call.name)
            .ok_or_else(|| {
                ToolError::new(
                    ToolErrorCode::UnknownTool,
                    format!(
                        "unknown tool '{}'; available tools: {}",
                        call.name,
                        TOOL_NAMES.join(", ")
                    ),
                )
            })?;
        for key in call.arguments.keys() {
            if !spec.parameters.iter().any(|p| &p.name == key) {
                return Err(ToolError::bad_type(format!(
                    "{}: unexpected argument '{key}'",
                    call.name
                )));
            }
        }
        let a = Args { call };
        Ok(match call.name.as_str() {
            CROP_IMAGE => Action::Crop { bbox: a.quad("bbox")? },
            ROTATE_IMAGE => Action::Rotate { theta: a.number("theta")? },
            BRIGHTEN_IMAGE => Action::Brighten { alpha: a.number("alpha")? },
            DRAW_BBOX => Action::DrawBBox { bbox: a.quad("bbox")? },
            DRAW_LINE => Action::DrawLine {
                coords: a.quad("coords")?,
                extend: a.opt_bool("extend")?.unwrap_or(false),
            },
            ROUTE_DRAWER => Action::Route {
                grid_n: a.integer("grid_n")?,
                points: a.points("points")?,
            },
            REARRANGE_TILES => Action::Rearrange {
                rows: a.integer("rows")?,
                cols: a.integer("cols")?,
                current: a.int_list("current")?,
                target: a.int_list("target")?,
            },
            _ => unreachable!("schema and dispatch table disagree"),
        })
    }

    pub fn apply(&self, sketch: &Sketch) -> ToolResult {
        match self {
            Action::Crop { bbox } => crop_image(sketch, *bbox),
            Action::Rotate { theta } => rotate_image(sketch, *theta),
            Action::Brighten { alpha } => brighten_image(sketch, *alpha),
            Action::DrawBBox { bbox } => draw_bbox(sketch, *bbox),
            Action::DrawLine { coords, extend } => draw_line(sketch, *coords, *extend),
            Action::Route { grid_n, points } => route_drawer(sketch, *grid_n, points),
            Action::Rearrange {
                rows,
                cols,
                current,
                target,
            } => rearrange_tiles(sketch, *rows, *cols, current, target),
        }
    }

    pub fn to_call(&self) -> ToolCall {
        match self {
            Action::Crop { bbox } => ToolCall::crop_image(*bbox),
            Action::Rotate { theta } => ToolCall::rotate_image(*theta),
            Action::Brighten { alpha } => ToolCall::brighten_image(*alpha),
            Action::DrawBBox { bbox } => ToolCall::draw_bbox(*bbox),
            Action::DrawLine { coords, extend } => ToolCall::draw_line(*coords, *extend),
            Action::Route { grid_n, points } => ToolCall::route_drawer(*grid_n, points),
            Action::Rearrange {
                rows,
                cols,
                current,
                target,
            } => ToolCall::rearrange_tiles(*rows, *cols, current, target),
        }
    }
}

struct Args<'a> {
    call: &'a ToolCall,
}

impl Args<'_> {
    fn get(&self, key: &str) -> Result<&Value, ToolError> {
        self.call.arguments.get(key).ok_or_else(|| {
            ToolError::new(
                ToolErrorCode::MissingArg,
                format!("{}: missing required argument '{key}'", self.call.name),
            )
        })
    }

    fn type_err(&self, key: &str, want: &str, got: &Value) -> ToolError {
        ToolError::bad_type(format!(
            "{}: argument '{key}' must be {want}, got {got}",
            self.call.name
        ))
    }

    fn number(&self, key: &str) -> Result<f64, ToolError> {
        let v = self.get(key)?;
        v.as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.type_err(key, "a finite number", v))
    }

    fn integer(&self, key: &str) -> Result<i64, ToolError> {
        let v = self.get(key)?;
        as_integer(v).ok_or_else(|| self.type_err(key, "an integer", v))
    }

    fn opt_bool(&self, key: &str) -> Result<Option<bool>, ToolError> {
        match self.call.arguments.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_bool()
                .map(Some)
                .ok_or_else(|| self.type_err(key, "a boolean", v)),
        }
    }

    fn quad(&self, key: &str) -> Result<[f64; 4], ToolError> {
        let v = self.get(key)?;
        let want = "an array of 4 numbers [x1, y1, x2, y2]";
        let arr = v.as_array().filter(|a| a.len() == 4);
        let arr = arr.ok_or_else(|| self.type_err(key, want, v))?;
        let mut out = [0.0; 4];
        for (slot, item) in out.iter_mut().zip(arr) {
            *slot = item
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| self.type_err(key, want, v))?;
        }
        Ok(out)
    }

    fn int_list(&self, key: &str) -> Result<Vec<i64>, ToolError> {
        let v = self.get(key)?;
        let want = "an array of integers";
        v.as_array()
            .ok_or_else(|| self.type_err(key, want, v))?
            .iter()
            .map(|item| as_integer(item).ok_or_else(|| self.type_err(key, want, v)))
            .collect()
    }

    fn points(&self, key: &str) -> Result<Vec<(i64, i64)>, ToolError> {
        let v = self.get(key)?;
        let want = "an array of [row, col] integer pairs";
        v.as_array()
            .ok_or_else(|| self.type_err(key, want, v))?
            .iter()
            .map(|item| {
                let pair = item.as_array().filter(|p| p.len() == 2);
                match pair.map(|p| (as_integer(&p[0]), as_integer(&p[1]))) {
                    Some((Some(r), Some(c))) => Ok((r, c)),
                    _ => Err(self.type_err(key, want, v)),
                }
            })
            .collect()
    }
}

fn as_integer(v: &Value) -> Option<i64> {
    if let Some(i) = v.as_i64() {
        return Some(i);
    }
    let x = v.as_f64()?;
    (x.is_finite() && x.fract() == 0.0 && x.abs() < 9.0e15).then_some(x as i64)
}

/// Schema check plus execution. Never panics and never raises: every
/// failure comes back as the `Err` side of the result.
pub fn dispatch(call: &ToolCall, sketch: &Sketch) -> ToolResult {
    Action::from_call(call)?.apply(sketch)
}

/// Schema-only validation of a call (no pixel work).
pub fn validate_call(call: &ToolCall) -> Result<(), ToolError> {
    Action::from_call(call).map(|_| ())
}

pub fn crop_image(sketch: &Sketch, bbox: [f64; 4]) -> ToolResult {
    let pixel_box = to_pixel_box(sketch, bbox, "bbox")?;
    Ok(sketch.region(&pixel_box))
}

fn to_pixel_box(sketch: &Sketch, bbox: [f64; 4], param: &str) -> Result<PixelBox, ToolError> {
    let norm = NormBox::from_array(bbox).map_err(|e| ToolError::from_raster(param, e))?;
    sketch
        .norm_to_pixel(&norm)
        .map_err(|e| ToolError::from_raster(param, e))
}

/// Rotates clockwise by `theta` degrees. Right angles are exact index
/// permutations; other angles expand the canvas to the rotated bounding box
/// and sample nearest-neighbor with white fill.
pub fn rotate_image(sketch: &Sketch, theta: f64) -> ToolResult {
    if !theta.is_finite() {
        return Err(ToolError::bad_type(format!(
            "rotate_image: argument 'theta' must be a finite number of degrees, got {theta}"
        )));
    }
    let t = theta.rem_euclid(360.0);
    let (w, h) = (sketch.width(), sketch.height());
    let quarter = |out_w: u32, out_h: u32, map: &dyn Fn(u32, u32) -> (u32, u32)| {
        let mut out = Sketch::new_blank(i64::from(out_w), i64::from(out_h), Color::WHITE)
            .expect("rotated dimensions are positive");
        for y in 0..h {
            for x in 0..w {
                let (ox, oy) = map(x, y);
                out.put(ox, oy, sketch.pixel(x, y));
            }
        }
        out
    };
    let out = if t == 0.0 {
        sketch.clone()
    } else if t == 90.0 {
        quarter(h, w, &|x, y| (h - 1 - y, x))
    } else if t == 180.0 {
        quarter(w, h, &|x, y| (w - 1 - x, h - 1 - y))
    } else if t == 270.0 {
        quarter(h, w, &|x, y| (y, w - 1 - x))
    } else {
        rotate_arbitrary(sketch, t)
    };
    Ok(out)
}

fn rotate_arbitrary(sketch: &Sketch, degrees: f64) -> Sketch {
    let (w, h) = (f64::from(sketch.width()), f64::from(sketch.height()));
    let (sin, cos) = degrees.to_radians().sin_cos();
    let out_w = (w * cos.abs() + h * sin.abs()).round().max(1.0);
    let out_h = (w * sin.abs() + h * cos.abs()).round().max(1.0);
    let mut out = Sketch::new_blank(out_w as i64, out_h as i64, Color::WHITE)
        .expect("rotated dimensions are positive");
    for oy in 0..out.height() {
        for ox in 0..out.width() {
            let dx = f64::from(ox) + 0.5 - out_w / 2.0;
            let dy = f64::from(oy) + 0.5 - out_h / 2.0;
            let sx = (dx * cos + dy * sin + w / 2.0).floor();
            let sy = (-dx * sin + dy * cos + h / 2.0).floor();
            if sx >= 0.0 && sy >= 0.0 && sx < w && sy < h {
                out.put(ox, oy, sketch.pixel(sx as u32, sy as u32));
            }
        }
    }
    out
}

pub fn brighten_image(sketch: &Sketch, alpha: f64) -> ToolResult {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(ToolError::bad_type(format!(
            "brighten_image: argument 'alpha' must be a finite number > 0, got {alpha}"
        )));
    }
    let data = sketch
        .as_rgb()
        .iter()
        .map(|&c| (f64::from(c) * alpha).round().clamp(0.0, 255.0) as u8)
        .collect();
    Ok(Sketch::from_rgb(sketch.width(), sketch.height(), data).expect("same dimensions"))
}

/// Red outline, `DEFAULT_THICKNESS` pixels wide, drawn inside the box edges.
pub fn draw_bbox(sketch: &Sketch, bbox: [f64; 4]) -> ToolResult {
    let b = to_pixel_box(sketch, bbox, "bbox")?;
    let t = DEFAULT_THICKNESS;
    let band_w = t.min(b.width());
    let band_h = t.min(b.height());
    let mut out = sketch.clone();
    for band in [
        PixelBox { y2: b.y1 + band_h, ..b },
        PixelBox { y1: b.y2 - band_h, ..b },
        PixelBox { x2: b.x1 + band_w, ..b },
        PixelBox { x1: b.x2 - band_w, ..b },
    ] {
        out.fill_rect(&band, Color::RED);
    }
    Ok(out)
}

fn norm_point(sketch: &Sketch, x: f64, y: f64) -> Point {
    Point::new(
        norm_coord_to_index(x, sketch.width()),
        norm_coord_to_index(y, sketch.height()),
    )
}

/// Solid red segment between two normalized points. With `extend`, dashed
/// continuations run from each canvas border back to the nearer endpoint.
pub fn draw_line(sketch: &Sketch, coords: [f64; 4], extend: bool) -> ToolResult {
    for (name, value) in ["x1", "y1", "x2", "y2"].iter().zip(coords) {
        if !(0.0..=1000.0).contains(&value) {
            return Err(ToolError::new(
                ToolErrorCode::OutOfBounds,
                format!("draw_line: coords {name}={value} exceeds the valid range [0, 1000]"),
            ));
        }
    }
    let p0 = norm_point(sketch, coords[0], coords[1]);
    let p1 = norm_point(sketch, coords[2], coords[3]);
    let mut out = sketch.clone();
    if extend && p0 != p1 {
        let forward = border_point(sketch, p1, p1.x - p0.x, p1.y - p0.y);
        let backward = border_point(sketch, p0, p0.x - p1.x, p0.y - p1.y);
        out.stroke(forward, p1, Color::RED, DEFAULT_THICKNESS, true);
        out.stroke(backward, p0, Color::RED, DEFAULT_THICKNESS, true);
    }
    out.stroke(p0, p1, Color::RED, DEFAULT_THICKNESS, false);
    Ok(out)
}

/// Where the ray from `from` along `(dx, dy)` leaves the canvas.
fn border_point(sketch: &Sketch, from: Point, dx: i64, dy: i64) -> Point {
    let max_x = f64::from(sketch.width() - 1);
    let max_y = f64::from(sketch.height() - 1);
    let (fx, fy, fdx, fdy) = (from.x as f64, from.y as f64, dx as f64, dy as f64);
    let mut t = f64::INFINITY;
    if dx != 0 {
        let bound = if dx > 0 { max_x } else { 0.0 };
        t = t.min((bound - fx) / fdx);
    }
    if dy != 0 {
        let bound = if dy > 0 { max_y } else { 0.0 };
        t = t.min((bound - fy) / fdy);
    }
    let x = (fx + t * fdx).round().clamp(0.0, max_x);
    let y = (fy + t * fdy).round().clamp(0.0, max_y);
    Point::new(x as i64, y as i64)
}

/// Center pixel of grid cell `(row, col)` under an `n x n` overlay.
pub fn cell_center(sketch: &Sketch, n: i64, row: i64, col: i64) -> Point {
    let w = f64::from(sketch.width());
    let h = f64::from(sketch.height());
    let nf = n as f64;
    let x = ((2 * col + 1) as f64 * w / (2.0 * nf)).round().min(w - 1.0);
    let y = ((2 * row + 1) as f64 * h / (2.0 * nf)).round().min(h - 1.0);
    Point::new(x as i64, y as i64)
}

pub fn route_drawer(sketch: &Sketch, grid_n: i64, points: &[(i64, i64)]) -> ToolResult {
    if grid_n < 1 {
        return Err(ToolError::bad_grid(format!(
            "route_drawer: grid_n must be >= 1, got {grid_n}"
        )));
    }
    if points.is_empty() {
        return Err(ToolError::bad_grid(
            "route_drawer: points must contain at least one [row, col] pair",
        ));
    }
    for (i, &(r, c)) in points.iter().enumerate() {
        if !(0..grid_n).contains(&r) || !(0..grid_n).contains(&c) {
            return Err(ToolError::bad_grid(format!(
                "route_drawer: points[{i}] = ({r}, {c}) is outside the grid; \
                 row and col must lie in [0, {}]",
                grid_n - 1
            )));
        }
    }
    let centers: Vec<Point> = points
        .iter()
        .map(|&(r, c)| cell_center(sketch, grid_n, r, c))
        .collect();
    let mut out = sketch.clone();
    if centers.len() == 1 {
        out.stamp(centers[0], Color::RED, DEFAULT_THICKNESS);
    }
    for pair in centers.windows(2) {
        out.stroke(pair[0], pair[1], Color::RED, DEFAULT_THICKNESS, false);
    }
    Ok(out)
}

fn check_permutation(name: &str, perm: &[i64], len: usize) -> Result<(), ToolError> {
    if perm.len() != len {
        return Err(ToolError::bad_permutation(format!(
            "rearrange_tiles: '{name}' has {} entries, expected {len} (rows * cols)",
            perm.len()
        )));
    }
    let mut seen = vec![false; len];
    for (i, &k) in perm.iter().enumerate() {
        if k < 0 || k as usize >= len {
            return Err(ToolError::bad_permutation(format!(
                "rearrange_tiles: '{name}'[{i}] = {k} is outside [0, {}]",
                len - 1
            )));
        }
        if std::mem::replace(&mut seen[k as usize], true) {
            return Err(ToolError::bad_permutation(format!(
                "rearrange_tiles: '{name}' repeats tile index {k}; it must be a permutation of 0..{}",
                len - 1
            )));
        }
    }
    Ok(())
}

/// `current[i] = k` means grid slot `i` currently shows tile `k`. The output
/// shows tile `target[j]` in slot `j` for every `j`.
pub fn rearrange_tiles(
    sketch: &Sketch,
    rows: i64,
    cols: i64,
    current: &[i64],
    target: &[i64],
) -> ToolResult {
    if rows < 1 || cols < 1 {
        return Err(ToolError::bad_grid(format!(
            "rearrange_tiles: rows and cols must be >= 1, got rows={rows}, cols={cols}"
        )));
    }
    let (w, h) = (i64::from(sketch.width()), i64::from(sketch.height()));
    if w % cols != 0 || h % rows != 0 {
        return Err(ToolError::bad_grid(format!(
            "rearrange_tiles: image {w}x{h} is not divisible into {rows} rows x {cols} cols"
        )));
    }
    let n = (rows * cols) as usize;
    check_permutation("current", current, n)?;
    check_permutation("target", target, n)?;

    let mut slot_of = vec![0usize; n];
    for (slot, &tile) in current.iter().enumerate() {
        slot_of[tile as usize] = slot;
    }
    let (tw, th) = ((w / cols) as u32, (h / rows) as u32);
    let cols = cols as usize;
    let slot_box = |slot: usize| {
        let (r, c) = ((slot / cols) as u32, (slot % cols) as u32);
        PixelBox {
            x1: c * tw,
            y1: r * th,
            x2: (c + 1) * tw,
            y2: (r + 1) * th,
        }
    };
    let mut out = sketch.clone();
    for (slot, &tile) in target.iter().enumerate() {
        let src = sketch.region(&slot_box(slot_of[tile as usize]));
        let dst = slot_box(slot);
        out.blit_in_place(&src, dst.x1, dst.y1);
    }
    Ok(out)
}

/// Pixels a route draws through, for callers that need the raster path.
pub fn route_pixels(sketch: &Sketch, grid_n: i64, points: &[(i64, i64)]) -> Vec<Point> {
    let centers: Vec<Point> = points
        .iter()
        .map(|&(r, c)| cell_center(sketch, grid_n, r, c))
        .collect();
    if centers.len() == 1 {
        return centers;
    }
    centers
        .windows(2)
        .flat_map(|p| line_points(p[0], p[1]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Number,
    Integer,
    Boolean,
    /// `[x1, y1, x2, y2]` in the normalized frame.
    NormBox,
    /// `[[row, col], ...]`.
    GridPoints,
    IntegerList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub minimum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub maximum: Option<f64>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ParamSpec>,
}

fn param(
    name: &str,
    kind: ParamKind,
    required: bool,
    bounds: (Option<f64>, Option<f64>),
    description: &str,
) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        kind,
        required,
        minimum: bounds.0,
        maximum: bounds.1,
        description: description.into(),
    }
}

pub fn tool_schema() -> Vec<ToolSpec> {
    use ParamKind::*;
    let norm = (Some(0.0), Some(1000.0));
    let free = (None, None);
    let tool = |name: &str, description: &str, parameters| ToolSpec {
        name: name.into(),
        description: description.into(),
        parameters,
    };
    vec![
        tool(
            CROP_IMAGE,
            "Crop the current image to a region and return the zoomed-in sub-image.",
            vec![param("bbox", NormBox, true, norm, "Region [x1, y1, x2, y2], coordinates in [0, 1000].")],
        ),
        tool(
            ROTATE_IMAGE,
            "Rotate the current image by theta degrees; positive values rotate clockwise.",
            vec![param("theta", Number, true, free, "Rotation angle in degrees.")],
        ),
        tool(
            BRIGHTEN_IMAGE,
            "Scale pixel intensities by alpha; alpha > 1 brightens, 0 < alpha < 1 darkens.",
            vec![param("alpha", Number, true, (Some(0.0), None), "Positive intensity scale factor.")],
        ),
        tool(
            DRAW_BBOX,
            "Overlay a red bounding box on the current image.",
            vec![param("bbox", NormBox, true, norm, "Box [x1, y1, x2, y2], coordinates in [0, 1000].")],
        ),
        tool(
            DRAW_LINE,
            "Draw a red line between two points; optionally extend it to the image border as a dashed line.",
            vec![
                param("coords", NormBox, true, norm, "Endpoints [x1, y1, x2, y2], coordinates in [0, 1000]."),
                param("extend", Boolean, false, free, "Extend the line to the image border (default false)."),
            ],
        ),
        tool(
            ROUTE_DRAWER,
            "Draw a red route connecting grid cells in order under an N x N grid overlay.",
            vec![
                param("grid_n", Integer, true, (Some(1.0), None), "Grid size N."),
                param("points", GridPoints, true, free, "Route waypoints as [row, col] pairs, each in [0, N-1]."),
            ],
        ),
        tool(
            REARRANGE_TILES,
            "Rearrange the tiles of an R x C grid from the current arrangement to the target arrangement.",
            vec![
                param("rows", Integer, true, (Some(1.0), None), "Grid rows R."),
                param("cols", Integer, true, (Some(1.0), None), "Grid columns C."),
                param("current", IntegerList, true, free, "current[i] = tile shown in slot i now (row-major)."),
                param("target", IntegerList, true, free, "target[i] = tile to show in slot i."),
            ],
        ),
    ]
}

/// The schema as a stable, pretty-printed JSON document.
pub fn tool_schema_json() -> String {
    serde_json::to_string_pretty(&tool_schema()).expect("schema serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn gradient(w: u32, h: u32) -> Sketch {
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(&[(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x + y) % 256) as u8]);
            }
        }
        Sketch::from_rgb(w, h, data).unwrap()
    }

    fn call(v: Value) -> ToolCall {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn crop_examples() {
        let s = gradient(100, 100);
        assert_eq!(crop_image(&s, [0.0, 0.0, 1000.0, 1000.0]).unwrap(), s);

        let err = crop_image(&s, [0.0, 0.0, 1200.0, 1000.0]).unwrap_err();
        assert_eq!(err.code, ToolErrorCode::OutOfBounds);
        assert!(err.message.contains("x2") && err.message.contains("1000"));

        let q = crop_image(&s, [0.0, 0.0, 500.0, 500.0]).unwrap();
        assert_eq!((q.width(), q.height()), (50, 50));
        for y in 0..50 {
            for x in 0..50 {
                assert_eq!(q.pixel(x, y), s.pixel(x, y));
            }
        }
    }

    #[test]
    fn crop_then_full_frame_is_single_crop() {
        let s = gradient(64, 40);
        let a = crop_image(&s, [125.0, 250.0, 875.0, 600.0]).unwrap();
        assert_eq!(crop_image(&a, [0.0, 0.0, 1000.0, 1000.0]).unwrap(), a);
    }

    #[test]
    fn rotate_quarter_turn_index_map() {
        let s = gradient(3, 2);
        let r = rotate_image(&s, 90.0).unwrap();
        assert_eq!((r.width(), r.height()), (2, 3));
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(r.pixel(2 - 1 - y, x), s.pixel(x, y));
            }
        }
    }

    #[test]
    fn rotate_group_laws() {
        let s = gradient(7, 5);
        assert_eq!(rotate_image(&s, 0.0).unwrap(), s);
        assert_eq!(rotate_image(&s, 360.0).unwrap(), s);
        let mut r = s.clone();
        for _ in 0..4 {
            r = rotate_image(&r, 90.0).unwrap();
        }
        assert_eq!(r, s);
        let half = rotate_image(&s, 180.0).unwrap();
        assert_eq!(rotate_image(&half, 180.0).unwrap(), s);
        assert_eq!(rotate_image(&s, -90.0).unwrap(), rotate_image(&s, 270.0).unwrap());
    }

    #[test]
    fn rotate_arbitrary_expands_canvas() {
        let s = Sketch::new_blank(40, 20, Color::BLACK).unwrap();
        let r = rotate_image(&s, 45.0).unwrap();
        let expect = ((40.0 + 20.0) * std::f64::consts::FRAC_1_SQRT_2).round() as u32;
        assert_eq!((r.width(), r.height()), (expect, expect));
        assert_eq!(r.pixel(0, 0), Color::WHITE);
        assert_eq!(r.pixel(expect / 2, expect / 2), Color::BLACK);
        assert_eq!(rotate_image(&s, f64::NAN).unwrap_err().code, ToolErrorCode::BadType);
    }

    #[test]
    fn brighten_examples() {
        let s = gradient(5, 5);
        assert_eq!(brighten_image(&s, 1.0).unwrap(), s);
        let p = Sketch::new_blank(1, 1, Color::rgb(100, 100, 100)).unwrap();
        assert_eq!(brighten_image(&p, 2.0).unwrap().pixel(0, 0), Color::rgb(200, 200, 200));
        let p = Sketch::new_blank(1, 1, Color::rgb(100, 0, 30)).unwrap();
        assert_eq!(brighten_image(&p, 10.0).unwrap().pixel(0, 0), Color::rgb(255, 0, 255));
        assert_eq!(brighten_image(&p, 0.0).unwrap_err().code, ToolErrorCode::BadType);
        assert_eq!(brighten_image(&p, -1.0).unwrap_err().code, ToolErrorCode::BadType);
    }

    #[test]
    fn bbox_changes_only_the_perimeter_band() {
        let s = Sketch::new_blank(100, 100, Color::WHITE).unwrap();
        let out = draw_bbox(&s, [200.0, 300.0, 600.0, 800.0]).unwrap();
        // box in pixels: [20, 30) .. [60, 80)
        for y in 0..100u32 {
            for x in 0..100u32 {
                let inside = (20..60).contains(&x) && (30..80).contains(&y);
                let interior = (22..58).contains(&x) && (32..78).contains(&y);
                let expect = if inside && !interior { Color::RED } else { Color::WHITE };
                assert_eq!(out.pixel(x, y), expect, "({x}, {y})");
            }
        }
        let full = draw_bbox(&s, [0.0, 0.0, 1000.0, 1000.0]).unwrap();
        assert_eq!(full.pixel(0, 0), Color::RED);
        assert_eq!(full.pixel(99, 99), Color::RED);
        assert_eq!(full.pixel(2, 2), Color::WHITE);
        let err = draw_bbox(&s, [10.0, 0.0, 10.0, 100.0]).unwrap_err();
        assert_eq!(err.code, ToolErrorCode::DegenerateRegion);
    }

    #[test]
    fn line_examples() {
        let s = Sketch::new_blank(100, 100, Color::WHITE).unwrap();
        let dot = draw_line(&s, [500.0, 500.0, 500.0, 500.0], false).unwrap();
        let changed = s.pixels().zip(dot.pixels()).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 4); // one 2x2 brush stamp

        let ext = draw_line(&s, [300.0, 500.0, 700.0, 500.0], true).unwrap();
        assert_eq!(ext.pixel(0, 50), Color::RED);
        assert_eq!(ext.pixel(99, 50), Color::RED);
        // dashed: some gap pixel exists between border and segment
        assert!((1..29).any(|x| ext.pixel(x, 50) == Color::WHITE));
        // solid between the endpoints
        assert!((30..=70).all(|x| ext.pixel(x, 50) == Color::RED));

        let plain = draw_line(&s, [300.0, 500.0, 700.0, 500.0], false).unwrap();
        assert_eq!(plain.pixel(0, 50), Color::WHITE);

        let err = draw_line(&s, [0.0, 0.0, 1001.0, 0.0], false).unwrap_err();
        assert_eq!(err.code, ToolErrorCode::OutOfBounds);
    }

    #[test]
    fn route_examples() {
        let s = Sketch::new_blank(400, 400, Color::WHITE).unwrap();
        let single = route_drawer(&s, 4, &[(1, 2)]).unwrap();
        let diff: Vec<_> = (0..400u32)
            .flat_map(|y| (0..400u32).map(move |x| (x, y)))
            .filter(|&(x, y)| single.pixel(x, y) != Color::WHITE)
            .collect();
        assert_eq!(diff.len(), 4);
        assert!(diff.contains(&(250, 150)));

        assert_eq!(cell_center(&s, 4, 0, 0), Point::new(50, 50));
        assert_eq!(cell_center(&s, 4, 0, 1), Point::new(150, 50));
        let seg = route_drawer(&s, 4, &[(0, 0), (0, 1)]).unwrap();
        assert!((50..=150).all(|x| seg.pixel(x, 50) == Color::RED));
        assert_eq!(seg.pixel(151, 50), Color::WHITE);
        assert_eq!(seg.pixel(49, 50), Color::RED); // brush spans x-1..x
        assert_eq!(seg.pixel(48, 50), Color::WHITE);

        assert_eq!(route_drawer(&s, 4, &[(4, 0)]).unwrap_err().code, ToolErrorCode::BadGrid);
        assert_eq!(route_drawer(&s, 0, &[(0, 0)]).unwrap_err().code, ToolErrorCode::BadGrid);
        assert_eq!(route_drawer(&s, 4, &[]).unwrap_err().code, ToolErrorCode::BadGrid);
    }

    #[test]
    fn rearrange_examples() {
        let s = gradient(8, 4);
        assert_eq!(rearrange_tiles(&s, 2, 2, &[2, 0, 3, 1], &[2, 0, 3, 1]).unwrap(), s);

        let swapped = rearrange_tiles(&s, 1, 2, &[1, 0], &[0, 1]).unwrap();
        let left = s.region(&PixelBox { x1: 0, y1: 0, x2: 4, y2: 4 });
        let right = s.region(&PixelBox { x1: 4, y1: 0, x2: 8, y2: 4 });
        let oracle = s
            .blit(&right, Point::new(0, 0))
            .unwrap()
            .blit(&left, Point::new(4, 0))
            .unwrap();
        assert_eq!(swapped, oracle);

        assert_eq!(
            rearrange_tiles(&s, 1, 2, &[0, 1], &[0, 0]).unwrap_err().code,
            ToolErrorCode::BadPermutation
        );
        assert_eq!(
            rearrange_tiles(&s, 3, 2, &[0, 1, 2, 3, 4, 5], &[0, 1, 2, 3, 4, 5]).unwrap_err().code,
            ToolErrorCode::BadGrid
        );
    }

    #[test]
    fn rearrange_forward_then_back_restores() {
        let s = gradient(9, 6);
        let cur = [4, 0, 5, 2, 1, 3];
        let tgt = [1, 2, 3, 0, 5, 4];
        let fwd = rearrange_tiles(&s, 2, 3, &cur, &tgt).unwrap();
        assert_eq!(rearrange_tiles(&fwd, 2, 3, &tgt, &cur).unwrap(), s);
    }

    #[test]
    fn dispatch_routes_and_reports() {
        let s = gradient(20, 20);
        let ok = dispatch(&ToolCall::crop_image([0.0, 0.0, 1000.0, 1000.0]), &s).unwrap();
        assert_eq!(ok, s);

        let unknown = dispatch(&call(json!({"name": "zoom", "arguments": {}})), &s).unwrap_err();
        assert_eq!(unknown.code, ToolErrorCode::UnknownTool);

        let missing = dispatch(&call(json!({"name": "rotate_image", "arguments": {}})), &s).unwrap_err();
        assert_eq!(missing.code, ToolErrorCode::MissingArg);
        assert!(missing.message.contains("theta"));

        let bad = dispatch(
            &call(json!({"name": "rotate_image", "arguments": {"theta": "ninety"}})),
            &s,
        )
        .unwrap_err();
        assert_eq!(bad.code, ToolErrorCode::BadType);

        let null_theta = dispatch(&ToolCall::rotate_image(f64::INFINITY), &s).unwrap_err();
        assert_eq!(null_theta.code, ToolErrorCode::BadType);

        let extra = dispatch(
            &call(json!({"name": "crop_image", "arguments": {"bbox": [0, 0, 10, 10], "zoom": 2}})),
            &s,
        )
        .unwrap_err();
        assert_eq!(extra.code, ToolErrorCode::BadType);
    }

    #[test]
    fn schema_is_stable_and_complete() {
        let schema = tool_schema();
        assert_eq!(schema.len(), 7);
        let names: Vec<_> = schema.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, TOOL_NAMES);
        assert_eq!(tool_schema_json(), tool_schema_json());
        let back: Vec<ToolSpec> = serde_json::from_str(&tool_schema_json()).unwrap();
        assert_eq!(back, schema);
    }

    #[test]
    fn action_round_trips_through_call() {
        let calls = [
            ToolCall::crop_image([1.0, 2.5, 300.0, 400.0]),
            ToolCall::rotate_image(-12.5),
            ToolCall::brighten_image(1.5),
            ToolCall::draw_bbox([0.0, 0.0, 10.0, 10.0]),
            ToolCall::draw_line([0.0, 0.0, 10.0, 10.0], true),
            ToolCall::route_drawer(5, &[(0, 0), (0, 1)]),
            ToolCall::rearrange_tiles(1, 2, &[1, 0], &[0, 1]),
        ];
        for c in calls {
            assert_eq!(Action::from_call(&c).unwrap().to_call(), c);
        }
    }

    #[test]
    fn integral_numbers_serialize_as_integers() {
        assert_eq!(
            ToolCall::crop_image([0.0, 0.0, 500.0, 500.0]).to_json(),
            r#"{"name":"crop_image","arguments":{"bbox":[0,0,500,500]}}"#
        );
    }
}
