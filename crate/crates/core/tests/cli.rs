use std::path::Path;
use std::process::{Command, Output};

use sketchplan::io::{plan_from_json, plan_to_json, rows_from_csv, task_from_json};
use sketchplan::search::Plan;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchplan")).args(args).current_dir(dir).output().unwrap()
}

fn gen(dir: &Path) {
    let out = run(
        &["gen", "--family", "sorting", "--tables", "3", "--goals", "2", "--clutter", "low", "--seed", "4", "-o", "t.json"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solve_replay_render_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    let out = run(&["solve", "t.json", "--report", "r.csv"], d);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("t.plan.json").exists() && d.join("t.metrics.json").exists());
    let rows = rows_from_csv(&std::fs::read_to_string(d.join("r.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].subplans, 4.0);

    assert_eq!(run(&["replay", "t.json", "t.plan.json"], d).status.code(), Some(0));
    assert_eq!(run(&["render", "t.json", "--plan", "t.plan.json", "-o", "t.svg"], d).status.code(), Some(0));
    let plan = plan_from_json(&std::fs::read_to_string(d.join("t.plan.json")).unwrap()).unwrap();
    let svg = std::fs::read_to_string(d.join("t.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="frame""#).count(), plan.len() + 1);
}

#[test]
fn invalid_task_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), "{\"format\": \"sketchplan-task/1\",\n \"arena\": 3 }").unwrap();
    let out = run(&["solve", "bad.json", "--report", "r.csv"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert!(!d.join("r.csv").exists());
    assert!(!d.join("bad.metrics.json").exists());
}

#[test]
fn planner_failure_exit_two_still_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    std::fs::write(d.join("c.cfg"), "# too few subplans\nmax_subplans = 1\n").unwrap();
    let out = run(&["solve", "t.json", "--config", "c.cfg"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(d.join("t.metrics.json").exists());
    assert!(!d.join("t.plan.json").exists());
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    std::fs::write(d.join("c.cfg"), "planner = siwr-full\n").unwrap();
    let out = run(&["solve", "t.json", "--config", "c.cfg", "--planner", "lazy-siiwr"], d);
    assert_eq!(out.status.code(), Some(0));
    let m = std::fs::read_to_string(d.join("t.metrics.json")).unwrap();
    assert!(m.contains("\"planner\": \"lazy-siiwr\""));
}

#[test]
fn replay_violation_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    let task = task_from_json(&std::fs::read_to_string(d.join("t.json")).unwrap()).unwrap();
    std::fs::write(d.join("empty.json"), plan_to_json(&Plan::empty(0, task.start))).unwrap();
    let out = run(&["replay", "t.json", "empty.json"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("terminal state not goal"));
}

#[test]
fn bench_rows_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let suite = r#"[{"spec": {"family": "sorting", "n_tables": 3, "n_goal_objects": 2, "n_obstacle_objects": 0,
                    "clutter": "low", "seed": 0}, "repetitions": 3}]"#;
    std::fs::write(d.join("s.json"), suite).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sketchplan"))
        .args(["bench", "--suite", "s.json", "-o", "b.csv"])
        .env("SKETCHPLAN_THREADS", "2")
        .current_dir(d)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows_from_csv(&std::fs::read_to_string(d.join("b.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().filter(|r| r.kind == "run").count(), 3);
    let agg = &rows[3];
    assert_eq!(agg.kind, "aggregate");
    assert!((0.0..=1.0).contains(&agg.success_ratio));
    assert_eq!(agg.expanded_nodes, rows[..3].iter().map(|r| r.expanded_nodes).sum::<f64>() / 3.0);
}
