//! File formats: versioned task and plan JSON, metrics JSON and CSV rows,
//! and the flat key-value planner config.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::{Plan, PlannerConfig, RunMetrics};
use crate::world::{Task, WorldError};

pub const TASK_FORMAT: &str = "sketchplan-task/1";
pub const PLAN_FORMAT: &str = "sketchplan-plan/1";
pub const METRICS_FORMAT: &str = "sketchplan-metrics/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("unsupported format `{found}` (expected `{expected}`)")]
    Format { found: String, expected: &'static str },
    #[error("invalid task: {0}")]
    Task(#[from] WorldError),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Parse { line: e.line(), column: e.column(), msg: e.to_string() }
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

#[derive(Serialize)]
struct Versioned<'a, T> {
    format: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
}

fn check_format(text: &str, expected: &'static str) -> Result<(), IoError> {
    let h: Header = serde_json::from_str(text)?;
    match h.format {
        Some(f) if f == expected => Ok(()),
        found => Err(IoError::Format { found: found.unwrap_or_default(), expected }),
    }
}

fn to_json<T: Serialize>(format: &str, body: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Versioned { format, body }).expect("serializable");
    s.push('\n');
    s
}

pub fn task_to_json(task: &Task) -> String {
    to_json(TASK_FORMAT, task)
}

/// Parses and validates a task document.
pub fn task_from_json(text: &str) -> Result<Task, IoError> {
    check_format(text, TASK_FORMAT)?;
    let task: Task = serde_json::from_str(text)?;
    task.validate()?;
    Ok(task)
}

pub fn plan_to_json(plan: &Plan) -> String {
    to_json(PLAN_FORMAT, plan)
}

pub fn plan_from_json(text: &str) -> Result<Plan, IoError> {
    check_format(text, PLAN_FORMAT)?;
    let plan: Plan = serde_json::from_str(text)?;
    if plan.states.len() != plan.steps.len() + 1 {
        return Err(IoError::Parse { line: 0, column: 0, msg: "plan needs one more state than steps".into() });
    }
    Ok(plan)
}

pub fn metrics_to_json(m: &RunMetrics) -> String {
    to_json(METRICS_FORMAT, m)
}

pub fn metrics_from_json(text: &str) -> Result<RunMetrics, IoError> {
    check_format(text, METRICS_FORMAT)?;
    Ok(serde_json::from_str(text)?)
}

/// One CSV line of a metrics report. Run rows carry one run; aggregate rows
/// carry means over the runs of one spec. Column order is part of format
/// version 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: String,
    pub label: String,
    pub planner: String,
    pub seed: String,
    pub runs: usize,
    pub success: String,
    pub success_ratio: f64,
    pub planning_units: f64,
    pub expanded_nodes: f64,
    pub generated_nodes: f64,
    pub subplans: f64,
    pub plan_actions: f64,
    pub plan_cost: f64,
    pub escalations: f64,
    pub max_k: f64,
    pub rejected_edges: f64,
    pub stage1_calls: f64,
    pub stage1_passes: f64,
    pub stage2_calls: f64,
    pub stage2_passes: f64,
    pub stage3_calls: f64,
    pub stage3_passes: f64,
    pub base_move_calls: f64,
    pub elapsed_ms: f64,
    pub failure: String,
}

pub const CSV_COLUMNS: [&str; 25] = [
    "kind",
    "label",
    "planner",
    "seed",
    "runs",
    "success",
    "success_ratio",
    "planning_units",
    "expanded_nodes",
    "generated_nodes",
    "subplans",
    "plan_actions",
    "plan_cost",
    "escalations",
    "max_k",
    "rejected_edges",
    "stage1_calls",
    "stage1_passes",
    "stage2_calls",
    "stage2_passes",
    "stage3_calls",
    "stage3_passes",
    "base_move_calls",
    "elapsed_ms",
    "failure",
];

/// Validation calls over all stages, the hardware-independent effort measure.
pub fn planning_units(m: &RunMetrics) -> u64 {
    m.stats.stages.iter().map(|s| s.calls).sum::<u64>() + m.stats.base_moves.calls
}

impl ReportRow {
    pub fn run(label: &str, m: &RunMetrics, elapsed_ms: f64) -> ReportRow {
        let st = &m.stats.stages;
        ReportRow {
            kind: "run".into(),
            label: label.into(),
            planner: m.planner.clone(),
            seed: m.seed.to_string(),
            runs: 1,
            success: m.success.to_string(),
            success_ratio: if m.success { 1.0 } else { 0.0 },
            planning_units: planning_units(m) as f64,
            expanded_nodes: m.expanded_nodes as f64,
            generated_nodes: m.generated_nodes as f64,
            subplans: m.subplans as f64,
            plan_actions: m.plan_actions as f64,
            plan_cost: m.plan_cost,
            escalations: m.escalations as f64,
            max_k: m.max_k as f64,
            rejected_edges: m.rejected_edges as f64,
            stage1_calls: st[0].calls as f64,
            stage1_passes: st[0].passes as f64,
            stage2_calls: st[1].calls as f64,
            stage2_passes: st[1].passes as f64,
            stage3_calls: st[2].calls as f64,
            stage3_passes: st[2].passes as f64,
            base_move_calls: m.stats.base_moves.calls as f64,
            elapsed_ms,
            failure: m.failure.clone().unwrap_or_default(),
        }
    }

    /// Column means over `rows`, which share a label and planner.
    pub fn aggregate(rows: &[ReportRow]) -> ReportRow {
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&ReportRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let first = rows.first();
        ReportRow {
            kind: "aggregate".into(),
            label: first.map(|r| r.label.clone()).unwrap_or_default(),
            planner: first.map(|r| r.planner.clone()).unwrap_or_default(),
            seed: String::new(),
            runs: rows.len(),
            success: String::new(),
            success_ratio: mean(|r| r.success_ratio),
            planning_units: mean(|r| r.planning_units),
            expanded_nodes: mean(|r| r.expanded_nodes),
            generated_nodes: mean(|r| r.generated_nodes),
            subplans: mean(|r| r.subplans),
            plan_actions: mean(|r| r.plan_actions),
            plan_cost: mean(|r| r.plan_cost),
            escalations: mean(|r| r.escalations),
            max_k: mean(|r| r.max_k),
            rejected_edges: mean(|r| r.rejected_edges),
            stage1_calls: mean(|r| r.stage1_calls),
            stage1_passes: mean(|r| r.stage1_passes),
            stage2_calls: mean(|r| r.stage2_calls),
            stage2_passes: mean(|r| r.stage2_passes),
            stage3_calls: mean(|r| r.stage3_calls),
            stage3_passes: mean(|r| r.stage3_passes),
            base_move_calls: mean(|r| r.base_move_calls),
            elapsed_ms: mean(|r| r.elapsed_ms),
            failure: String::new(),
        }
    }
}

/// Appends rows to a CSV report, writing the header when the file is new
/// or empty.
pub fn append_rows(path: &Path, rows: &[ReportRow]) -> Result<(), IoError> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| IoError::File { path: path.display().to_string(), source })?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| IoError::File { path: path.display().to_string(), source })?;
    Ok(())
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ReportRow>, IoError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
}

/// `key = value` lines; `#` starts a comment. Returns `(line, key, value)`.
pub fn parse_config(text: &str) -> Result<Vec<(usize, String, String)>, IoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(IoError::Config { line: i + 1, msg: format!("expected `key = value`, got `{line}`") });
        };
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn positive(key: &str, v: &str) -> Result<usize, String> {
    match v.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("`{key}` must be a positive integer, got `{v}`")),
    }
}

/// Sets one config key on `cfg`.
pub fn apply_setting(cfg: &mut PlannerConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "planner" => cfg.planner = value.parse()?,
        "seed" => cfg.seed = value.parse().map_err(|_| format!("bad seed `{value}`"))?,
        "bases" => cfg.density.n_bases = positive(key, value)?,
        "placements_per_table" => cfg.density.n_placements_per_table = positive(key, value)?,
        "grasps" => cfg.density.n_grasps = positive(key, value)?,
        "escalation_max" => {
            cfg.escalation_max = value.parse().map_err(|_| format!("bad escalation_max `{value}`"))?
        }
        "ik_budget" => cfg.exec.ik_budget = positive(key, value)?,
        "rrt_cap" => cfg.exec.rrt_iter_cap = positive(key, value)?,
        "max_expansions" => cfg.max_expansions = positive(key, value)?,
        "max_subplans" => cfg.max_subplans = positive(key, value)?,
        "k_max" => cfg.k_max = Some(positive(key, value)?),
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

/// Config file settings applied over `cfg`.
pub fn apply_config(cfg: &mut PlannerConfig, text: &str) -> Result<(), IoError> {
    for (line, k, v) in parse_config(text)? {
        apply_setting(cfg, &k, &v).map_err(|msg| IoError::Config { line, msg })?;
    }
    Ok(())
}
