//! Starts the rollout service on a local port and plays one episode over
//! HTTP: a bad crop, a correction, then the answer.
//!
//! Pass `--serve` to keep the server running on 127.0.0.1:8080 instead.

use std::sync::Arc;

use serde_json::{json, Value};
use vtcot::service::{spawn_server, EpisodeStore, ServiceConfig};
use vtcot::taskgen::{self, GenParams, TaskKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = GenParams { resolution: 256, ..GenParams::default() };
    let store = Arc::new(EpisodeStore::new(ServiceConfig {
        defaults: params.clone(),
        output_dir: Some(std::env::temp_dir()),
        ..ServiceConfig::default()
    }));
    if std::env::args().any(|a| a == "--serve") {
        let server = spawn_server("127.0.0.1:8080".parse()?, store)?;
        println!("listening on {}; press enter to stop", server.url());
        std::io::stdin().read_line(&mut String::new())?;
        return Ok(server.stop()?);
    }

    let server = spawn_server("127.0.0.1:0".parse()?, store)?;
    let base = server.url();
    let http = reqwest::blocking::Client::new();
    let post = |path: &str, body: Value| -> Result<Value, reqwest::Error> {
        http.post(format!("{base}{path}")).json(&body).send()?.json()
    };

    let created = post("/episodes", json!({"kind": "numeric_estimate", "seed": 5}))?;
    let id = created["episode_id"].as_str().unwrap_or_default().to_string();
    println!("episode {id}: {}", created["question"]);

    // The service is stateless about plans; the client looks up the task.
    let task = taskgen::generate(TaskKind::NumericEstimate, &params, 5)?;
    let turns = [
        r#"<think>Zoom on the dial.</think><tool_call>{"name":"crop_image","arguments":{"bbox":[0,0,1100,900]}}</tool_call>"#.to_string(),
        format!("<think>That box was too wide; use the dial.</think><tool_call>{}</tool_call>", task.plan[0].to_json()),
        format!("<think>Read the hands.</think><answer>{}</answer>", task.truth.answer_text()),
    ];
    for text in turns {
        let r = post(&format!("/episodes/{id}/turns"), json!({ "text": text }))?;
        let outcome = &r["outcome"];
        println!("{} (turns left {}) {}", outcome["type"], r["turns_remaining"], outcome["message"].as_str().unwrap_or(""));
    }
    let score = post(&format!("/episodes/{id}/score"), json!({"evaluator": {"type": "stub"}}))?;
    println!("score {score}");
    let saved = post(&format!("/episodes/{id}/persist"), json!({"file": "vtcot_rollouts.jsonl"}))?;
    println!("persisted {saved}");
    Ok(server.stop()?)
}
