//! Pixel-exact RGB8 images and the integer drawing primitives every tool is
//! built on.
//!
//! Everything here is pure: operations take a `&Sketch` and hand back a new
//! one, so a sketch can be shared freely between threads and episodes.

use std::fmt;
use std::io::Cursor;

use thiserror::Error;

/// Upper bound of the normalized coordinate frame used by tool arguments.
pub const NORM_MAX: f64 = 1000.0;

/// Default stroke thickness for annotations (bbox, line, route).
pub const DEFAULT_THICKNESS: u32 = 2;

/// Dash pattern along the major axis: pixels on, then pixels off.
pub const DASH_ON: u32 = 6;
pub const DASH_OFF: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("invalid dimensions {width}x{height}: both must be at least 1")]
    Dimension { width: i64, height: i64 },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("coordinate {name}={value} outside [0, 1000]")]
    OutOfBounds { name: &'static str, value: f64 },
    #[error("degenerate region [{x1}, {y1}, {x2}, {y2}]: needs x1 < x2 and y1 < y2")]
    DegenerateRegion { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("placing {src_w}x{src_h} at ({x}, {y}) exceeds {dst_w}x{dst_h} canvas")]
    Placement {
        x: i64,
        y: i64,
        src_w: u32,
        src_h: u32,
        dst_w: u32,
        dst_h: u32,
    },
    #[error("png decode failed: {0}")]
    Decode(String),
    #[error("png encode failed: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Color {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Color {
    pub const WHITE: Color = Color::rgb(255, 255, 255);
    pub const BLACK: Color = Color::rgb(0, 0, 0);
    pub const RED: Color = Color::rgb(255, 0, 0);
    pub const GREEN: Color = Color::rgb(0, 170, 0);
    pub const BLUE: Color = Color::rgb(0, 0, 255);
    pub const GRAY: Color = Color::rgb(128, 128, 128);

    pub const fn rgb(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }
}

/// Integer pixel position. Signed so that callers can express points that
/// fall off the canvas; drawing clips them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }
}

/// A box in the `[0, 1000]` normalized frame shared by every tool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl NormBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, RasterError> {
        for (name, value) in [("x1", x1), ("y1", y1), ("x2", x2), ("y2", y2)] {
            if !value.is_finite() || !(0.0..=NORM_MAX).contains(&value) {
                return Err(RasterError::OutOfBounds { name, value });
            }
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(RasterError::DegenerateRegion { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_array(coords: [f64; 4]) -> Result<Self, RasterError> {
        Self::new(coords[0], coords[1], coords[2], coords[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

/// Pixel rectangle, right and bottom edges exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl PixelBox {
    pub fn width(&self) -> u32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> u32 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x1 && x < self.x2 && y >= self.y1 && y < self.y2
    }
}

/// Maps one normalized coordinate onto `[0, dimension]`, rounding half away
/// from zero.
pub fn norm_coord_to_edge(coord: f64, dimension: u32) -> u32 {
    let scaled = (coord * f64::from(dimension) / NORM_MAX).round();
    scaled.clamp(0.0, f64::from(dimension)) as u32
}

/// Maps a normalized coordinate onto a pixel index in `[0, dimension - 1]`.
/// Used for point arguments, which must land on the canvas.
pub fn norm_coord_to_index(coord: f64, dimension: u32) -> i64 {
    i64::from(norm_coord_to_edge(coord, dimension).min(dimension - 1))
}

/// An immutable RGB8 raster, stored row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Sketch {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl fmt::Debug for Sketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sketch")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Sketch {
    pub fn new_blank(width: i64, height: i64, fill: Color) -> Result<Self, RasterError> {
        if width < 1 || height < 1 || width > i64::from(u32::MAX) || height > i64::from(u32::MAX) {
            return Err(RasterError::Dimension { width, height });
        }
        let (w, h) = (width as u32, height as u32);
        let mut data = Vec::with_capacity(w as usize * h as usize * 3);
        for _ in 0..(w as usize * h as usize) {
            data.extend_from_slice(&[fill.r, fill.g, fill.b]);
        }
        Ok(Self { width: w, height: h, data })
    }

    /// Builds a sketch from a flat `[r, g, b, r, g, b, ...]` buffer.
    pub fn from_rgb(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Dimension {
                width: i64::from(width),
                height: i64::from(height),
            });
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(RasterError::BufferSize {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_rgb(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> Color {
        let i = self.offset(x, y);
        Color::rgb(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn pixels(&self) -> impl Iterator<Item = Color> + '_ {
        self.data.chunks_exact(3).map(|p| Color::rgb(p[0], p[1], p[2]))
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub(crate) fn put(&mut self, x: u32, y: u32, c: Color) {
        let i = self.offset(x, y);
        self.data[i] = c.r;
        self.data[i + 1] = c.g;
        self.data[i + 2] = c.b;
    }

    /// Writes a pixel if it falls on the canvas.
    pub(crate) fn put_clipped(&mut self, x: i64, y: i64, c: Color) {
        if x >= 0 && y >= 0 && x < i64::from(self.width) && y < i64::from(self.height) {
            self.put(x as u32, y as u32, c);
        }
    }

    /// Converts a normalized box into the pixel frame of this sketch.
    pub fn norm_to_pixel(&self, b: &NormBox) -> Result<PixelBox, RasterError> {
        let px = PixelBox {
            x1: norm_coord_to_edge(b.x1, self.width),
            y1: norm_coord_to_edge(b.y1, self.height),
            x2: norm_coord_to_edge(b.x2, self.width),
            y2: norm_coord_to_edge(b.y2, self.height),
        };
        if px.x1 >= px.x2 || px.y1 >= px.y2 {
            return Err(RasterError::DegenerateRegion {
                x1: b.x1,
                y1: b.y1,
                x2: b.x2,
                y2: b.y2,
            });
        }
        Ok(px)
    }

    /// Copies out a pixel rectangle. The box must lie on the canvas.
    pub fn region(&self, b: &PixelBox) -> Sketch {
        assert!(b.x1 < b.x2 && b.y1 < b.y2 && b.x2 <= self.width && b.y2 <= self.height);
        let row_bytes = b.width() as usize * 3;
        let mut data = Vec::with_capacity(row_bytes * b.height() as usize);
        for y in b.y1..b.y2 {
            let start = self.offset(b.x1, y);
            data.extend_from_slice(&self.data[start..start + row_bytes]);
        }
        Sketch {
            width: b.width(),
            height: b.height(),
            data,
        }
    }

    /// Pastes `src` with its top-left corner at `at`.
    pub fn blit(&self, src: &Sketch, at: Point) -> Result<Sketch, RasterError> {
        let fits = at.x >= 0
            && at.y >= 0
            && at.x + i64::from(src.width) <= i64::from(self.width)
            && at.y + i64::from(src.height) <= i64::from(self.height);
        if !fits {
            return Err(RasterError::Placement {
                x: at.x,
                y: at.y,
                src_w: src.width,
                src_h: src.height,
                dst_w: self.width,
                dst_h: self.height,
            });
        }
        let mut out = self.clone();
        out.blit_in_place(src, at.x as u32, at.y as u32);
        Ok(out)
    }

    pub(crate) fn blit_in_place(&mut self, src: &Sketch, x: u32, y: u32) {
        let row_bytes = src.width as usize * 3;
        for row in 0..src.height {
            let s = src.offset(0, row);
            let d = self.offset(x, y + row);
            self.data[d..d + row_bytes].copy_from_slice(&src.data[s..s + row_bytes]);
        }
    }

    /// Draws a segment with a square brush of side `thickness`. When
    /// `dashed`, the brush is stamped only on the "on" part of the
    /// 6-on/4-off pattern counted along the major axis from `p0`.
    pub fn draw_segment(
        &self,
        p0: Point,
        p1: Point,
        color: Color,
        thickness: u32,
        dashed: bool,
    ) -> Sketch {
        let mut out = self.clone();
        out.stroke(p0, p1, color, thickness, dashed);
        out
    }

    pub(crate) fn stroke(&mut self, p0: Point, p1: Point, color: Color, thickness: u32, dashed: bool) {
        let thickness = thickness.max(1);
        for (i, p) in line_points(p0, p1).into_iter().enumerate() {
            if dashed && (i as u32) % (DASH_ON + DASH_OFF) >= DASH_ON {
                continue;
            }
            self.stamp(p, color, thickness);
        }
    }

    pub(crate) fn stamp(&mut self, p: Point, color: Color, thickness: u32) {
        let lo = -(i64::from(thickness) / 2);
        let hi = lo + i64::from(thickness) - 1;
        for dy in lo..=hi {
            for dx in lo..=hi {
                self.put_clipped(p.x + dx, p.y + dy, color);
            }
        }
    }

    pub(crate) fn fill_rect(&mut self, b: &PixelBox, color: Color) {
        for y in b.y1..b.y2.min(self.height) {
            for x in b.x1..b.x2.min(self.width) {
                self.put(x, y, color);
            }
        }
    }

    /// Fills every pixel whose center lies within `radius` of `(cx, cy)`.
    pub(crate) fn fill_circle(&mut self, cx: f64, cy: f64, radius: f64, color: Color) {
        let r2 = radius * radius;
        let y_lo = (cy - radius).floor().max(0.0) as i64;
        let y_hi = ((cy + radius).ceil() as i64).min(i64::from(self.height) - 1);
        let x_lo = (cx - radius).floor().max(0.0) as i64;
        let x_hi = ((cx + radius).ceil() as i64).min(i64::from(self.width) - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                if dx * dx + dy * dy <= r2 {
                    self.put(x as u32, y as u32, color);
                }
            }
        }
    }

    /// Fills pixels whose centers fall inside the triangle `(a, b, c)`.
    pub(crate) fn fill_triangle(&mut self, a: (f64, f64), b: (f64, f64), c: (f64, f64), color: Color) {
        let edge = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
            (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
        };
        let x_lo = a.0.min(b.0).min(c.0).floor().max(0.0) as i64;
        let x_hi = (a.0.max(b.0).max(c.0).ceil() as i64).min(i64::from(self.width) - 1);
        let y_lo = a.1.min(b.1).min(c.1).floor().max(0.0) as i64;
        let y_hi = (a.1.max(b.1).max(c.1).ceil() as i64).min(i64::from(self.height) - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let p = (x as f64 + 0.5, y as f64 + 0.5);
                let (d1, d2, d3) = (edge(a, b, p), edge(b, c, p), edge(c, a, p));
                let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
                let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
                if !(has_neg && has_pos) {
                    self.put(x as u32, y as u32, color);
                }
            }
        }
    }

    /// Nearest-neighbor resize, used for thumbnails in rendered strips.
    pub fn resize_nearest(&self, width: u32, height: u32) -> Result<Sketch, RasterError> {
        let mut out = Sketch::new_blank(i64::from(width), i64::from(height), Color::WHITE)?;
        for y in 0..height {
            let sy = (u64::from(y) * u64::from(self.height) / u64::from(height)) as u32;
            for x in 0..width {
                let sx = (u64::from(x) * u64::from(self.width) / u64::from(width)) as u32;
                out.put(x, y, self.pixel(sx, sy));
            }
        }
        Ok(out)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut bytes = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut bytes, self.width, self.height);
            encoder.set_color(png::ColorType::Rgb);
            encoder.set_depth(png::BitDepth::Eight);
            encoder.set_compression(png::Compression::Fast);
            let mut writer = encoder
                .write_header()
                .map_err(|e| RasterError::Encode(e.to_string()))?;
            writer
                .write_image_data(&self.data)
                .map_err(|e| RasterError::Encode(e.to_string()))?;
            writer.finish().map_err(|e| RasterError::Encode(e.to_string()))?;
        }
        Ok(bytes)
    }

    /// Decodes a PNG stream. Gray, gray-alpha and RGBA inputs are accepted
    /// and flattened to RGB8 (alpha is dropped).
    pub fn decode_png(bytes: &[u8]) -> Result<Sketch, RasterError> {
        let decode_err = |e: png::DecodingError| RasterError::Decode(e.to_string());
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = decoder.read_info().map_err(decode_err)?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| RasterError::Decode("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(decode_err)?;
        buf.truncate(info.buffer_size());
        let channels = match info.color_type {
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Indexed => {
                return Err(RasterError::Decode("unexpanded palette image".into()))
            }
        };
        let mut data = Vec::with_capacity(info.width as usize * info.height as usize * 3);
        for row in buf.chunks_exact(info.line_size) {
            for px in row[..info.width as usize * channels].chunks_exact(channels) {
                match channels {
                    1 | 2 => data.extend_from_slice(&[px[0], px[0], px[0]]),
                    _ => data.extend_from_slice(&px[..3]),
                }
            }
        }
        Sketch::from_rgb(info.width, info.height, data)
    }
}

/// Integer Bresenham rasterization, one point per step along the major axis.
pub fn line_points(p0: Point, p1: Point) -> Vec<Point> {
    let dx = (p1.x - p0.x).abs();
    let dy = -(p1.y - p0.y).abs();
    let sx = if p0.x < p1.x { 1 } else { -1 };
    let sy = if p0.y < p1.y { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (p0.x, p0.y);
    let mut points = Vec::with_capacity(dx.max(-dy) as usize + 1);
    loop {
        points.push(Point::new(x, y));
        if x == p1.x && y == p1.y {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    points
}
