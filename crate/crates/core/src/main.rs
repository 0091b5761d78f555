use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use sketchplan::bench::{generate, BenchSpec, Clutter};
use sketchplan::io::{self, IoError, ReportRow};
use sketchplan::render::render_svg;
use sketchplan::replay::replay;
use sketchplan::search::{solve, Planner, PlannerConfig};
use sketchplan::sketch::Sketch;
use sketchplan::suite::{default_suite, parse_suite, report_rows, run_suite, threads_from_env};
use sketchplan::world::Family;

#[derive(Parser)]
#[command(name = "sketchplan", version, about = "Sketch-decomposed width-based pick-and-place planner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a benchmark task.
    Gen(GenArgs),
    /// Plan for a task.
    Solve(SolveArgs),
    /// Check a plan against its task.
    Replay { task: PathBuf, plan: PathBuf },
    /// Draw plan keyframes as SVG.
    Render {
        task: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run a suite of specs over several seeds.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    #[arg(long, default_value_t = 1)]
    tables: usize,
    #[arg(long, default_value_t = 2)]
    goals: usize,
    #[arg(long, default_value_t = 0)]
    obstacles: usize,
    #[arg(long, default_value = "medium")]
    clutter: Clutter,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    word: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Planner settings; flags override the config file.
#[derive(Args)]
struct PlanFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sketch file replacing the built-in rules.
    #[arg(long)]
    sketch: Option<PathBuf>,
    #[arg(long)]
    planner: Option<Planner>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bases: Option<usize>,
    #[arg(long)]
    placements_per_table: Option<usize>,
    #[arg(long)]
    grasps: Option<usize>,
    #[arg(long)]
    escalation_max: Option<usize>,
    #[arg(long)]
    ik_budget: Option<usize>,
    #[arg(long)]
    rrt_cap: Option<usize>,
    #[arg(long)]
    max_expansions: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    task: PathBuf,
    #[command(flatten)]
    flags: PlanFlags,
    /// Plan output; defaults to `<task>.plan.json`.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Metrics output; defaults to `<task>.metrics.json`.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// CSV report to append a row to.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON list of `{spec, repetitions}`; the built-in suite when absent.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[command(flatten)]
    flags: PlanFlags,
    /// CSV output; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn parse_family(s: &str) -> Result<Family, String> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "sorting" => Ok(Family::Sorting),
        "nonmonotonic" | "non_monotonic" => Ok(Family::NonMonotonic),
        "words" => Ok(Family::Words),
        _ => Err(format!("unknown family `{s}`")),
    }
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!("{stem}{suffix}"))
}

fn planner_setup(f: &PlanFlags) -> Result<(PlannerConfig, Sketch), String> {
    let mut cfg = PlannerConfig::default();
    if let Some(path) = &f.config {
        let text = io::read_text(path).map_err(|e| e.to_string())?;
        io::apply_config(&mut cfg, &text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let set = |cfg: &mut PlannerConfig, key: &str, v: Option<String>| match v {
        Some(v) => io::apply_setting(cfg, key, &v).map_err(|e| format!("--{}: {e}", key.replace('_', "-"))),
        None => Ok(()),
    };
    if let Some(p) = f.planner {
        cfg.planner = p;
    }
    set(&mut cfg, "seed", f.seed.map(|v| v.to_string()))?;
    set(&mut cfg, "bases", f.bases.map(|v| v.to_string()))?;
    set(&mut cfg, "placements_per_table", f.placements_per_table.map(|v| v.to_string()))?;
    set(&mut cfg, "grasps", f.grasps.map(|v| v.to_string()))?;
    set(&mut cfg, "escalation_max", f.escalation_max.map(|v| v.to_string()))?;
    set(&mut cfg, "ik_budget", f.ik_budget.map(|v| v.to_string()))?;
    set(&mut cfg, "rrt_cap", f.rrt_cap.map(|v| v.to_string()))?;
    set(&mut cfg, "max_expansions", f.max_expansions.map(|v| v.to_string()))?;
    let sketch = match &f.sketch {
        Some(path) => {
            let text = io::read_text(path).map_err(|e| e.to_string())?;
            Sketch::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => Sketch::default(),
    };
    Ok((cfg, sketch))
}

fn input_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn cmd_gen(a: GenArgs) -> ExitCode {
    let spec = BenchSpec {
        family: a.family,
        n_tables: a.tables,
        n_goal_objects: a.goals,
        n_obstacle_objects: a.obstacles,
        clutter: a.clutter,
        seed: a.seed,
        word: a.word,
    };
    let spec = match spec.family {
        Family::NonMonotonic => BenchSpec::nonmonotonic(spec.seed),
        Family::Words => match &spec.word {
            Some(w) => BenchSpec::words(w, spec.seed),
            None => return input_error("--word is required for words"),
        },
        Family::Sorting => spec,
    };
    let task = match generate(&spec) {
        Ok(t) => t,
        Err(e) => return input_error(e),
    };
    let text = io::task_to_json(&task);
    match a.out {
        Some(p) => match io::write_text(&p, &text) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => input_error(e),
        },
        None => {
            print!("{text}");
            ExitCode::SUCCESS
        }
    }
}

fn cmd_solve(a: SolveArgs) -> ExitCode {
    let task = match io::read_text(&a.task).and_then(|t| io::task_from_json(&t)) {
        Ok(t) => t,
        Err(e) => return input_error(format!("{}: {e}", a.task.display())),
    };
    let (cfg, sketch) = match planner_setup(&a.flags) {
        Ok(x) => x,
        Err(e) => return input_error(e),
    };
    let t0 = Instant::now();
    let out = solve(&task, &sketch, &cfg);
    let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;
    let metrics_path = a.metrics.unwrap_or_else(|| with_suffix(&a.task, ".metrics.json"));
    let mut writes: Vec<Result<(), IoError>> = vec![io::write_text(&metrics_path, &io::metrics_to_json(&out.metrics))];
    if let Some(plan) = &out.plan {
        let plan_path = a.plan.unwrap_or_else(|| with_suffix(&a.task, ".plan.json"));
        writes.push(io::write_text(&plan_path, &io::plan_to_json(plan)));
    }
    if let Some(r) = &a.report {
        let label = a.task.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        writes.push(io::append_rows(r, &[ReportRow::run(&label, &out.metrics, elapsed_ms)]));
    }
    if let Some(e) = writes.into_iter().find_map(Result::err) {
        return input_error(e);
    }
    let m = &out.metrics;
    match &out.error {
        None => {
            println!(
                "solved: {} actions, {} subplans, {} expanded nodes, {:.0} ms",
                m.plan_actions, m.subplans, m.expanded_nodes, elapsed_ms
            );
            ExitCode::SUCCESS
        }
        Some(e) => {
            eprintln!("planner failed: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_replay(task: &Path, plan: &Path) -> ExitCode {
    let task = match io::read_text(task).and_then(|t| io::task_from_json(&t)) {
        Ok(t) => t,
        Err(e) => return input_error(format!("{}: {e}", task.display())),
    };
    let plan = match io::read_text(plan).and_then(|t| io::plan_from_json(&t)) {
        Ok(p) => p,
        Err(e) => return input_error(format!("{}: {e}", plan.display())),
    };
    match replay(&task, &plan, &Default::default()) {
        Ok(()) => {
            println!("ok: {} actions replayed, goal reached", plan.len());
            ExitCode::SUCCESS
        }
        Err(v) => {
            println!("violation: {v}");
            ExitCode::from(3)
        }
    }
}

fn cmd_render(task: &Path, plan: Option<&Path>, out: &Path) -> ExitCode {
    let task = match io::read_text(task).and_then(|t| io::task_from_json(&t)) {
        Ok(t) => t,
        Err(e) => return input_error(format!("{}: {e}", task.display())),
    };
    let plan = match plan.map(|p| io::read_text(p).and_then(|t| io::plan_from_json(&t))).transpose() {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    match io::write_text(out, &render_svg(&task, plan.as_ref())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => input_error(e),
    }
}

fn cmd_bench(a: BenchArgs) -> ExitCode {
    let entries = match &a.suite {
        Some(p) => match io::read_text(p).and_then(|t| parse_suite(&t)) {
            Ok(e) => e,
            Err(e) => return input_error(format!("{}: {e}", p.display())),
        },
        None => default_suite(),
    };
    let (cfg, sketch) = match planner_setup(&a.flags) {
        Ok(x) => x,
        Err(e) => return input_error(e),
    };
    let records = run_suite(&entries, &sketch, &cfg, threads_from_env());
    let rows = report_rows(&entries, &records);
    let text = match io::rows_to_csv(&rows) {
        Ok(t) => t,
        Err(e) => return input_error(e),
    };
    match a.out {
        Some(p) => {
            if let Err(e) = io::write_text(&p, &text) {
                return input_error(e);
            }
            for r in rows.iter().filter(|r| r.kind == "aggregate") {
                println!(
                    "{:<28} success {:.2}  subplans {:.1}  expanded {:.1}",
                    r.label, r.success_ratio, r.subplans, r.expanded_nodes
                );
            }
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Replay { task, plan } => cmd_replay(&task, &plan),
        Cmd::Render { task, plan, out } => cmd_render(&task, plan.as_deref(), &out),
        Cmd::Bench(a) => cmd_bench(a),
    }
}
