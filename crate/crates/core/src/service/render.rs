//! Static renderings of a transcript: a PNG strip of the sketch sequence and
//! a standalone HTML page.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use crate::dataset::{file_safe, DatasetError};
use crate::raster::{Color, Point, RasterError, Sketch};
use crate::synthesis::sketch_data_url;
use crate::trajectory::{Observation, StepAction, Trajectory};

pub const DEFAULT_PANEL: u32 = 256;

fn fit(s: &Sketch, panel: u32) -> Result<Sketch, RasterError> {
    let scale = f64::from(panel) / f64::from(s.width().max(s.height()));
    let w = ((f64::from(s.width()) * scale).round() as u32).clamp(1, panel);
    let h = ((f64::from(s.height()) * scale).round() as u32).clamp(1, panel);
    let thumb = s.resize_nearest(w, h)?;
    Sketch::new_blank(i64::from(panel), i64::from(panel), Color::WHITE)?
        .blit(&thumb, Point::new(i64::from((panel - w) / 2), i64::from((panel - h) / 2)))
}

/// `I_0` followed by every unmasked sketch observation, each letterboxed
/// into a `panel`-pixel square.
pub fn render_strip(traj: &Trajectory, panel: u32) -> Result<Sketch, RasterError> {
    let mut frames = vec![&traj.task.initial];
    frames.extend(
        traj.steps
            .iter()
            .filter(|s| !s.masked)
            .filter_map(|s| s.observation().and_then(Observation::sketch)),
    );
    let mut strip = Sketch::new_blank(i64::from(panel) * frames.len() as i64, i64::from(panel), Color::WHITE)?;
    for (i, f) in frames.into_iter().enumerate() {
        strip = strip.blit(&fit(f, panel)?, Point::new(i as i64 * i64::from(panel), 0))?;
    }
    Ok(strip)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Self-contained page; images are inlined as data URLs.
pub fn render_html(traj: &Trajectory) -> String {
    let mut h = String::new();
    let task = &traj.task;
    let _ = write!(
        h,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{id}</title>\
         <style>body{{font-family:sans-serif;max-width:960px;margin:auto}}\
         .step{{border-left:3px solid #888;padding-left:8px;margin:12px 0}}\
         .masked{{opacity:.55;border-color:#c33}}img{{max-width:320px}}pre{{white-space:pre-wrap}}</style>\
         </head><body>\n<h1>{id}</h1>\n<p><b>{kind}</b> ({prov:?})</p>\n<p>{q}</p>\n<img src=\"{img}\" alt=\"initial\">\n",
        id = esc(&traj.id),
        kind = task.kind,
        prov = traj.provenance,
        q = esc(&task.question),
        img = sketch_data_url(&task.initial),
    );
    for (i, step) in traj.steps.iter().enumerate() {
        let class = if step.masked { "step masked" } else { "step" };
        let _ = write!(h, "<div class=\"{class}\">\n<h3>Step {}{}</h3>\n<p>{}</p>\n", i + 1,
            if step.masked { " (masked)" } else { "" }, esc(&step.thought));
        match &step.action {
            StepAction::Tool { call, observation } => {
                let _ = writeln!(h, "<pre>{}</pre>", esc(&call.to_json()));
                match observation {
                    Observation::Sketch(s) => {
                        let _ = writeln!(h, "<img src=\"{}\" alt=\"step {}\">", sketch_data_url(s), i + 1);
                    }
                    Observation::Error(e) => {
                        let _ = writeln!(h, "<p><b>error</b> {}</p>", esc(&e.to_string()));
                    }
                }
            }
            StepAction::Answer(a) => {
                let _ = writeln!(h, "<p><b>answer</b> {}</p>", esc(a));
            }
        }
        h.push_str("</div>\n");
    }
    if let Some(r) = &traj.rejected_turn {
        let _ = writeln!(h, "<div class=\"step masked\"><h3>Rejected turn</h3><p>{}</p><pre>{}</pre></div>", esc(&r.error), esc(&r.raw));
    }
    let _ = writeln!(h, "<p><b>expected</b> {}</p>\n</body></html>", esc(&task.truth.answer_text()));
    h
}

/// Writes `<id>_strip.png` and `<id>.html` into `dir`.
pub fn render_trajectory(traj: &Trajectory, dir: &Path, panel: u32) -> Result<(PathBuf, PathBuf), DatasetError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let stem = file_safe(&traj.id);
    let png = dir.join(format!("{stem}_strip.png"));
    let strip = render_strip(traj, panel)
        .and_then(|s| s.encode_png())
        .map_err(|source| DatasetError::Image { path: png.clone(), source })?;
    std::fs::write(&png, strip).map_err(io(&png))?;
    let html = dir.join(format!("{stem}.html"));
    std::fs::write(&html, render_html(traj)).map_err(io(&html))?;
    Ok((png, html))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::TaskKind;
    use crate::trajectory::tests::planned;

    #[test]
    fn strip_has_one_panel_per_sketch() {
        let t = planned(TaskKind::Maze, 3);
        let n = t.steps.iter().filter(|s| s.observation().and_then(Observation::sketch).is_some()).count();
        let strip = render_strip(&t, 64).unwrap();
        assert_eq!((strip.width(), strip.height()), (64 * (n as u32 + 1), 64));
    }

    #[test]
    fn letterboxing_keeps_aspect() {
        let wide = Sketch::new_blank(200, 100, Color::BLACK).unwrap();
        let p = fit(&wide, 100).unwrap();
        assert_eq!(p.pixel(50, 10), Color::WHITE);
        assert_eq!(p.pixel(50, 50), Color::BLACK);
    }

    #[test]
    fn html_escapes_and_files_land() {
        let mut t = planned(TaskKind::Rotation, 1);
        t.steps[0].thought = "a <b> & c".into();
        let html = render_html(&t);
        assert!(html.contains("a &lt;b&gt; &amp; c"));
        let dir = tempfile::tempdir().unwrap();
        let (png, page) = render_trajectory(&t, dir.path(), 32).unwrap();
        assert!(png.exists() && page.exists());
    }
}
