use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use vtcot::raster::Sketch;
use vtcot::taskgen::{self, read_tasks_jsonl, GenParams, TaskKind};
use vtcot::tools::{self, ToolCall};
use vtcot::trajectory::{write_jsonl, Observation, Provenance, Step, Trajectory};

fn vtcot(args: &[&str], extra: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtcot")).args(args).args(extra).output().unwrap()
}

fn stdout_lines(o: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn gen_tasks_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a/t.jsonl"), dir.path().join("b/t.jsonl"));
    std::fs::create_dir_all(a.parent().unwrap()).unwrap();
    std::fs::create_dir_all(b.parent().unwrap()).unwrap();
    let args = ["gen-tasks", "--kind", "maze", "--n", "5", "--count", "3", "--seed", "1", "--resolution", "128", "--out"];
    assert!(vtcot(&args, &[&a]).status.success());
    assert!(vtcot(&args, &[&b]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let tasks = read_tasks_jsonl(&a).unwrap();
    assert_eq!(tasks.len(), 3);
    assert!(tasks.iter().all(|t| t.kind == TaskKind::Maze && t.meta["n"] == 5));
}

#[test]
fn score_synthesized_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sft.jsonl");
    let synth = vtcot(&["synth-sft", "--counts", "maze=2,rotation=2,visual_search=1", "--resolution", "128", "--out"], &[&out]);
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));
    let summary = &stdout_lines(&synth)[0];
    assert_eq!(summary["records"], 5);

    let scored = vtcot(&["score", "--input"], &[&out]);
    assert!(scored.status.success());
    let lines = stdout_lines(&scored);
    assert_eq!(lines.len(), 6);
    for l in &lines[..5] {
        assert_eq!(l["acc"], 1.0, "{l}");
        assert_eq!(l["fmt"], 1.0);
    }
    assert_eq!(lines[5]["aggregate"]["count"], 5);
    assert_eq!(lines[5]["aggregate"]["acc"], 1.0);

    let constant = vtcot(&["score", "--evaluator", "constant:1", "--input"], &[&out]);
    assert!(constant.status.success());
}

#[test]
fn render_three_step_strip() {
    let params = GenParams { resolution: 96, ..GenParams::default() };
    let task = taskgen::generate(TaskKind::Rotation, &params, 2).unwrap();
    let mut t = Trajectory::new("three", task.clone(), Provenance::Synthesized);
    let mut state = task.initial.clone();
    for call in [ToolCall::brighten_image(1.2), ToolCall::rotate_image(90.0), ToolCall::crop_image([0.0, 0.0, 500.0, 500.0])] {
        state = tools::dispatch(&call, &state).unwrap();
        t.steps.push(Step::tool("look", call, Observation::Sketch(state.clone())));
    }
    t.steps.push(Step::answer("done", "90"));
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("t.jsonl");
    write_jsonl(&data, &[t]).unwrap();
    let out = dir.path().join("render");
    let r = vtcot(&["render", "--panel", "64", "--input"], &[&data]);
    assert_eq!(r.status.code(), Some(2), "--out is required");
    let r = Command::new(env!("CARGO_BIN_EXE_vtcot"))
        .args(["render", "--panel", "64", "--input"])
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let strip = Sketch::decode_png(&std::fs::read(out.join("three_strip.png")).unwrap()).unwrap();
    assert_eq!((strip.width(), strip.height()), (4 * 64, 64));
    let html = std::fs::read_to_string(out.join("three.html")).unwrap();
    assert!(html.contains(&task.question) && html.contains("rotate_image"));
}

#[test]
fn filter_rl_writes_kept_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = dir.path().join("tasks.jsonl");
    let kept = dir.path().join("kept.jsonl");
    assert!(vtcot(&["gen-tasks", "--kind", "all", "--count", "2", "--resolution", "96", "--out"], &[&tasks]).status.success());
    let r = Command::new(env!("CARGO_BIN_EXE_vtcot"))
        .args(["filter-rl", "--p-correct", "0.5", "--tasks"])
        .arg(&tasks)
        .arg("--out")
        .arg(&kept)
        .output()
        .unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let lines = stdout_lines(&r);
    let summary = lines.last().unwrap();
    assert_eq!(summary["total"], 10);
    let n = lines.iter().filter(|l| l["kept"] == true).count();
    assert_eq!(read_tasks_jsonl(&kept).unwrap().len(), n);
}

#[test]
fn usage_and_failure_exit_codes() {
    assert_eq!(vtcot(&["frobnicate"], &[]).status.code(), Some(2));
    assert_eq!(vtcot(&["gen-tasks", "--bogus"], &[]).status.code(), Some(2));
    let r = vtcot(&["score", "--input", "/nonexistent/x.jsonl"], &[]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("error"));
    let r = vtcot(&["gen-tasks", "--kind", "sudoku", "--out", "/tmp/unused.jsonl"], &[]);
    assert_eq!(r.status.code(), Some(1));
}
