//! Generates one task per kind, replays its plan, and writes the tasks to
//! a JSONL file with PNG sidecars.
//!
//! cargo run --example generate_tasks -- [out.jsonl]

use vtcot::taskgen::{self, check_success, replay_plan, write_tasks_jsonl, GenParams, TaskKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example_tasks.jsonl".into());
    let params = GenParams { resolution: 256, ..GenParams::default() };
    let mut tasks = Vec::new();
    for (i, kind) in TaskKind::ALL.into_iter().enumerate() {
        let task = taskgen::generate(kind, &params, 100 + i as u64)?;
        let sketches = replay_plan(&task)?;
        println!("{}", task.id);
        println!("  Q: {}", task.question);
        println!("  answer: {}", task.truth.answer_text());
        for call in &task.plan {
            println!("  plan: {}", call.to_json());
        }
        println!("  plan solves it: {}", check_success(&task, sketches.last().unwrap_or(&task.initial)));
        tasks.push(task);
    }
    write_tasks_jsonl(out.as_ref(), &tasks)?;
    println!("wrote {} tasks to {out}", tasks.len());
    Ok(())
}
