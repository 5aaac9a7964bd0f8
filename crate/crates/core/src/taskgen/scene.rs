//! Procedural pictures and glyphs used as task content.

use rand::Rng;

use super::{rng_for, TaskGenError};
use crate::raster::{Color, PixelBox, Sketch};

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (f64::from(a) + (f64::from(b) - f64::from(a)) * t).round() as u8
}

/// A landscape-like picture: sky gradient over ground, a sun, and seeded
/// blocks and discs. The sky/ground split gives the picture a clear "up".
pub fn procedural_base(width: u32, height: u32, seed: u64) -> Result<Sketch, TaskGenError> {
    let mut rng = rng_for(seed ^ 0x5CE1_E000);
    let mut img = Sketch::new_blank(i64::from(width), i64::from(height), Color::WHITE)?;
    let horizon = (f64::from(height) * rng.gen_range(0.55..0.7)) as u32;
    for y in 0..height {
        let color = if y < horizon {
            let t = f64::from(y) / f64::from(horizon.max(1));
            Color::rgb(lerp(70, 190, t), lerp(130, 220, t), lerp(220, 250, t))
        } else {
            let t = f64::from(y - horizon) / f64::from((height - horizon).max(1));
            Color::rgb(lerp(90, 40, t), lerp(160, 90, t), lerp(70, 40, t))
        };
        img.fill_rect(&PixelBox { x1: 0, y1: y, x2: width, y2: y + 1 }, color);
    }
    let (w, h) = (f64::from(width), f64::from(height));
    img.fill_circle(
        w * rng.gen_range(0.1..0.9),
        h * rng.gen_range(0.08..0.25),
        w.min(h) * 0.08,
        Color::rgb(250, 210, 60),
    );
    for _ in 0..rng.gen_range(4..9) {
        let color = Color::rgb(rng.gen(), rng.gen(), rng.gen());
        let cx = w * rng.gen_range(0.05..0.95);
        let size = w.min(h) * rng.gen_range(0.05..0.14);
        if rng.gen_bool(0.5) {
            // a building standing on the horizon
            let x1 = (cx - size / 2.0).max(0.0) as u32;
            let x2 = ((cx + size / 2.0) as u32).clamp(x1 + 1, width);
            let top = (f64::from(horizon) - size * rng.gen_range(1.0..2.5)).max(0.0) as u32;
            img.fill_rect(&PixelBox { x1, y1: top, x2, y2: horizon.max(top + 1) }, color);
            img.fill_triangle(
                (f64::from(x1), f64::from(top)),
                (f64::from(x2), f64::from(top)),
                (cx, f64::from(top) - size * 0.6),
                Color::rgb(150, 40, 30),
            );
        } else {
            let cy = f64::from(horizon) + (h - f64::from(horizon)) * rng.gen_range(0.2..0.9);
            img.fill_circle(cx, cy, size / 2.0, color);
        }
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(super) enum Shape {
    Circle,
    Square,
    Triangle,
    Cross,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Circle, Shape::Square, Shape::Triangle, Shape::Cross];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
            Shape::Cross => "cross",
        }
    }
}

pub(super) const PALETTE: [(&str, Color); 5] = [
    ("red", Color::rgb(220, 30, 30)),
    ("green", Color::rgb(30, 160, 50)),
    ("blue", Color::rgb(40, 70, 220)),
    ("orange", Color::rgb(245, 140, 20)),
    ("purple", Color::rgb(140, 50, 170)),
];

/// Draws a glyph fitting inside a square of half-side `r` around `(cx, cy)`.
pub(super) fn draw_glyph(img: &mut Sketch, shape: Shape, color: Color, cx: f64, cy: f64, r: f64) {
    let px = |v: f64| v.max(0.0) as u32;
    match shape {
        Shape::Circle => img.fill_circle(cx, cy, r, color),
        Shape::Square => {
            let s = r * 0.85;
            img.fill_rect(
                &PixelBox { x1: px(cx - s), y1: px(cy - s), x2: px(cx + s), y2: px(cy + s) },
                color,
            );
        }
        Shape::Triangle => img.fill_triangle((cx, cy - r), (cx - r, cy + r), (cx + r, cy + r), color),
        Shape::Cross => {
            let t = r * 0.3;
            img.fill_rect(&PixelBox { x1: px(cx - r), y1: px(cy - t), x2: px(cx + r), y2: px(cy + t) }, color);
            img.fill_rect(&PixelBox { x1: px(cx - t), y1: px(cy - r), x2: px(cx + t), y2: px(cy + r) }, color);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_is_seeded() {
        assert_eq!(procedural_base(64, 48, 5).unwrap(), procedural_base(64, 48, 5).unwrap());
        assert_ne!(procedural_base(64, 48, 5).unwrap(), procedural_base(64, 48, 6).unwrap());
    }

    #[test]
    fn base_is_not_rotation_symmetric() {
        let b = procedural_base(40, 40, 1).unwrap();
        let r = crate::tools::rotate_image(&b, 180.0).unwrap();
        assert_ne!(b, r);
    }
}
