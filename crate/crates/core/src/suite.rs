//! Benchmark suites: `(spec, repetitions)` entries run over consecutive
//! seeds, each run isolated, optionally on several worker threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bench::{generate, BenchSpec, Clutter};
use crate::io::{IoError, ReportRow};
use crate::replay::replay;
use crate::search::{solve, Plan, PlannerConfig, RunMetrics};
use crate::sketch::Sketch;
use crate::world::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub spec: BenchSpec,
    pub repetitions: usize,
}

/// The five desk-scale instances, ten seeds each.
pub fn default_suite() -> Vec<SuiteEntry> {
    [
        BenchSpec::sorting(1, 8, 2, Clutter::High, 0),
        BenchSpec::sorting(3, 2, 2, Clutter::Low, 0),
        BenchSpec::sorting(4, 12, 6, Clutter::Medium, 0),
        BenchSpec::nonmonotonic(0),
        BenchSpec::words("TAMP", 0),
    ]
    .into_iter()
    .map(|spec| SuiteEntry { spec, repetitions: 10 })
    .collect()
}

pub fn parse_suite(text: &str) -> Result<Vec<SuiteEntry>, IoError> {
    Ok(serde_json::from_str(text)?)
}

/// Result of one (spec, seed) run. `success` requires a plan that replays.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub label: String,
    pub task: Option<Task>,
    pub plan: Option<Plan>,
    pub metrics: RunMetrics,
    pub replay: Result<(), String>,
    pub elapsed_ms: f64,
}

impl RunRecord {
    pub fn row(&self) -> ReportRow {
        ReportRow::run(&self.label, &self.metrics, self.elapsed_ms)
    }
}

pub fn run_one(spec: &BenchSpec, sketch: &Sketch, cfg: &PlannerConfig) -> RunRecord {
    let label = spec.label();
    let cfg = PlannerConfig { seed: spec.seed, ..cfg.clone() };
    let task = match generate(spec) {
        Ok(t) => t,
        Err(e) => {
            let metrics = RunMetrics {
                planner: cfg.planner.name().into(),
                seed: spec.seed,
                failure: Some(format!("generation: {e}")),
                ..Default::default()
            };
            return RunRecord { label, task: None, plan: None, metrics, replay: Err(e.to_string()), elapsed_ms: 0.0 };
        }
    };
    let t0 = Instant::now();
    let out = solve(&task, sketch, &cfg);
    let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;
    let mut metrics = out.metrics;
    let replay = match &out.plan {
        Some(p) => replay(&task, p, &cfg.exec).map_err(|v| v.to_string()),
        None => Err("no plan".into()),
    };
    if metrics.success {
        if let Err(e) = &replay {
            metrics.success = false;
            metrics.failure = Some(format!("replay: {e}"));
        }
    }
    RunRecord { label, task: Some(task), plan: out.plan, metrics, replay, elapsed_ms }
}

/// Worker count from `SKETCHPLAN_THREADS`, else the available parallelism.
pub fn threads_from_env() -> usize {
    std::env::var("SKETCHPLAN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// All runs of `entries`, in entry then seed order regardless of `threads`.
pub fn run_suite(entries: &[SuiteEntry], sketch: &Sketch, cfg: &PlannerConfig, threads: usize) -> Vec<RunRecord> {
    let jobs: Vec<BenchSpec> = entries
        .iter()
        .flat_map(|e| (0..e.repetitions as u64).map(move |k| BenchSpec { seed: e.spec.seed + k, ..e.spec.clone() }))
        .collect();
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<Option<RunRecord>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = jobs.get(i) else { break };
                let rec = run_one(spec, sketch, cfg);
                done.lock().unwrap()[i] = Some(rec);
            });
        }
    });
    done.into_inner().unwrap().into_iter().map(|r| r.expect("every job ran")).collect()
}

/// Run rows followed by one aggregate row per entry.
pub fn report_rows(entries: &[SuiteEntry], records: &[RunRecord]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    let mut at = 0;
    for e in entries {
        let runs: Vec<ReportRow> = records[at..at + e.repetitions].iter().map(RunRecord::row).collect();
        at += e.repetitions;
        let agg = ReportRow::aggregate(&runs);
        rows.extend(runs);
        rows.push(agg);
    }
    rows
}
