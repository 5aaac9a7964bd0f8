//! Injects an erroneous step into a synthesized maze trajectory and prints
//! the resulting turns with their loss-mask flags.

use vtcot::synthesis::{synthesize_trajectory, Injection, StubProvider};
use vtcot::taskgen::{self, GenParams, TaskKind};
use vtcot::trajectory::{inject_reflection, loss_mask_spans, render_turn, CorruptionKind, Observation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = GenParams { resolution: 256, ..GenParams::default() };
    let task = taskgen::generate(TaskKind::Maze, &params, 11)?;
    let clean = synthesize_trajectory(&task, &StubProvider, 1, Injection { rate: 0.0, ..Injection::default() })?;

    for kind in [CorruptionKind::Parameter, CorruptionKind::ReasoningPath] {
        let t = inject_reflection(&clean, 0, kind, 5)?;
        t.validate()?;
        t.replay()?;
        println!("== {kind:?}: {} steps, {} reflection", t.steps.len(), t.reflection_count);
        for (i, step) in t.steps.iter().enumerate() {
            let obs = match step.observation() {
                Some(Observation::Error(e)) => format!("  -> error {}", e.code),
                Some(Observation::Sketch(s)) => format!("  -> sketch {}x{}", s.width(), s.height()),
                None => String::new(),
            };
            let flag = if step.masked { "masked" } else { "target" };
            println!("[{i}] {flag:<6} {}{obs}", render_turn(step));
        }
        let targets = loss_mask_spans(&t).iter().filter(|s| s.target).count();
        println!("imitation targets: {targets}\n");
    }
    Ok(())
}
