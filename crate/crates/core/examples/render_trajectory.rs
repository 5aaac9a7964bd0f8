//! Renders a synthesized trajectory as a PNG strip and an HTML page.
//!
//! cargo run --example render_trajectory -- [out_dir]

use vtcot::service::{render_trajectory, DEFAULT_PANEL};
use vtcot::synthesis::{synthesize_trajectory, Injection, StubProvider};
use vtcot::taskgen::{self, GenParams, TaskKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "target/example_render".into());
    let params = GenParams { resolution: 256, ..GenParams::default() };
    for kind in [TaskKind::Jigsaw, TaskKind::VisualSearch] {
        let task = taskgen::generate(kind, &params, 3)?;
        let t = synthesize_trajectory(&task, &StubProvider, 1, Injection { rate: 1.0, ..Injection::default() })?;
        let (png, html) = render_trajectory(&t, dir.as_ref(), DEFAULT_PANEL)?;
        println!("{} -> {} , {}", t.id, png.display(), html.display());
    }
    Ok(())
}
