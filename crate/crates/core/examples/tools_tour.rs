//! Runs every tool once on a generated picture and shows that a failing
//! call leaves the image untouched.

use vtcot::raster::{Color, Sketch};
use vtcot::taskgen::procedural_base;
use vtcot::tools::{self, ToolCall};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = procedural_base(240, 240, 7)?;
    let calls = [
        ToolCall::crop_image([250.0, 250.0, 750.0, 750.0]),
        ToolCall::rotate_image(90.0),
        ToolCall::brighten_image(1.4),
        ToolCall::draw_bbox([100.0, 100.0, 600.0, 500.0]),
        ToolCall::draw_line([0.0, 500.0, 500.0, 500.0], true),
        ToolCall::route_drawer(4, &[(0, 0), (0, 1), (1, 1), (1, 2)]),
        ToolCall::rearrange_tiles(2, 2, &[0, 1, 2, 3], &[3, 2, 1, 0]),
    ];
    for call in &calls {
        let out = tools::dispatch(call, &base)?;
        let changed = out.pixels().zip(base.pixels()).filter(|(a, b)| a != b).count();
        println!("{:<16} -> {}x{}, {changed} pixels differ from the input", call.name, out.width(), out.height());
    }

    let bad = ToolCall::crop_image([0.0, 0.0, 1200.0, 400.0]);
    let err = tools::dispatch(&bad, &base).unwrap_err();
    println!("\n{} rejected: {err}", bad.to_json());

    let blank = Sketch::new_blank(4, 4, Color::WHITE)?;
    let spun = (0..4).try_fold(blank.clone(), |s, _| tools::rotate_image(&s, 90.0))?;
    println!("four quarter turns give back the input: {}", spun == blank);
    println!("\nschema:\n{}", tools::tool_schema_json());
    Ok(())
}
