//! Seeded generators for the three benchmark families.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pose2, Rect};
use crate::exec::{ExecConfig, ExecCtx};
use crate::features::blocking_counts;
use crate::sampler::{rng_from_seed, PlanRng, Sampler, SamplingDensity, MAX_BASES, MAX_GRASPS};
use crate::world::{
    misplaced_set, word_fits, words_valid_prefix, Family, GoalSpec, MovableObject, RobotParams, Table, Task,
    WorldState, WORD_MARGIN, WORD_PITCH,
};

pub const OBJECT_RADIUS: f64 = 0.035;
pub const TABLE_HALF: (f64, f64) = (0.5, 0.4);
pub const ARENA_HALF: f64 = 3.0;
pub const WORDS_OBJECTS: usize = 11;
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clutter {
    Low,
    Medium,
    High,
}

impl Clutter {
    /// Minimum center distance between objects, in radii.
    pub fn spacing(self) -> f64 {
        match self {
            Clutter::Low => 4.0,
            Clutter::Medium => 3.0,
            Clutter::High => 2.2,
        }
    }
}

impl FromStr for Clutter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Clutter::Low),
            "medium" => Ok(Clutter::Medium),
            "high" => Ok(Clutter::High),
            _ => Err(format!("unknown clutter level `{s}`")),
        }
    }
}

impl fmt::Display for Clutter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Clutter::Low => "low",
            Clutter::Medium => "medium",
            Clutter::High => "high",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BenchSpec {
    pub family: Family,
    pub n_tables: usize,
    pub n_goal_objects: usize,
    pub n_obstacle_objects: usize,
    pub clutter: Clutter,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
}

impl BenchSpec {
    pub fn sorting(n_tables: usize, n_objects: usize, n_goals: usize, clutter: Clutter, seed: u64) -> Self {
        BenchSpec {
            family: Family::Sorting,
            n_tables,
            n_goal_objects: n_goals,
            n_obstacle_objects: n_objects.saturating_sub(n_goals),
            clutter,
            seed,
            word: None,
        }
    }

    pub fn nonmonotonic(seed: u64) -> Self {
        BenchSpec {
            family: Family::NonMonotonic,
            n_tables: 2,
            n_goal_objects: 10,
            n_obstacle_objects: 0,
            clutter: Clutter::High,
            seed,
            word: None,
        }
    }

    pub fn words(word: &str, seed: u64) -> Self {
        BenchSpec {
            family: Family::Words,
            n_tables: 1,
            n_goal_objects: word.chars().count(),
            n_obstacle_objects: WORDS_OBJECTS.saturating_sub(word.chars().count()),
            clutter: Clutter::Medium,
            seed,
            word: Some(word.to_string()),
        }
    }

    /// Short human-readable label, e.g. `sorting-t3-o2-g2-low`.
    pub fn label(&self) -> String {
        match self.family {
            Family::Sorting => format!(
                "sorting-t{}-o{}-g{}-{}",
                self.n_tables,
                self.n_goal_objects + self.n_obstacle_objects,
                self.n_goal_objects,
                self.clutter
            ),
            Family::NonMonotonic => format!("nonmonotonic-o{}", self.n_goal_objects + self.n_obstacle_objects),
            Family::Words => format!("words-{}", self.word.as_deref().unwrap_or("")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("invalid bench spec: {0}")]
    InvalidSpec(String),
    #[error("sampling exhausted while placing {0}")]
    SamplingExhausted(String),
    #[error("generation failed after {0} attempts")]
    GenerationFailed(usize),
}

pub fn generate(spec: &BenchSpec) -> Result<Task, BenchError> {
    match spec.family {
        Family::Sorting => gen_sorting(spec),
        Family::NonMonotonic => gen_nonmonotonic(spec),
        Family::Words => gen_words(spec),
    }
}

pub fn robot() -> RobotParams {
    RobotParams { base_radius: 0.2, reach_min: 0.2, reach_max: 0.85, home: true }
}

fn arena() -> Rect {
    Rect::new(0.0, 0.0, ARENA_HALF, ARENA_HALF)
}

/// Tables in rows of at most three, row-major from the top left.
fn table_grid(n: usize) -> Vec<Table> {
    let cols = n.clamp(1, 3);
    let rows = n.div_ceil(cols);
    let (dx, dy) = (1.8, 1.6);
    (0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let in_row = if r + 1 == rows { n - r * cols } else { cols };
            let x = (c as f64 - (in_row as f64 - 1.0) / 2.0) * dx;
            let y = ((rows as f64 - 1.0) / 2.0 - r as f64) * dy;
            Table { id: i, rect: Rect::new(x, y, TABLE_HALF.0, TABLE_HALF.1), support_height: 0.7 }
        })
        .collect()
}

/// Start base below the lowest table.
fn start_base(tables: &[Table]) -> Pose2 {
    let low = tables.iter().map(|t| t.rect.min_y()).fold(f64::INFINITY, f64::min);
    Pose2::new(0.0, (low - 0.5).max(-ARENA_HALF + 0.3), std::f64::consts::FRAC_PI_2)
}

/// Uniform draw in `area` (disc centers) at least `spacing` from `taken`.
fn scatter(area: &Rect, taken: &[Pose2], spacing: f64, rng: &mut PlanRng) -> Option<Pose2> {
    for _ in 0..2000 {
        let p = Pose2::at(area.cx + rng.gen_range(-1.0..=1.0) * area.hx, area.cy + rng.gen_range(-1.0..=1.0) * area.hy);
        if taken.iter().all(|q| q.dist(&p) >= spacing) {
            return Some(p);
        }
    }
    None
}

fn object(id: usize, label: &str, goal: GoalSpec) -> MovableObject {
    MovableObject { id, radius: OBJECT_RADIUS, label: label.to_string(), goal }
}

/// Blue blocks go to the left table and green to the right one; with a
/// single table the halves stand in for the two tables. Red blocks are
/// goal-free obstacles.
pub fn gen_sorting(spec: &BenchSpec) -> Result<Task, BenchError> {
    if spec.family != Family::Sorting || spec.n_tables == 0 {
        return Err(BenchError::InvalidSpec("sorting needs at least one table".into()));
    }
    let tables = table_grid(spec.n_tables);
    let r = OBJECT_RADIUS;
    let last = tables.len() - 1;
    let (blue_goal, green_goal) = if last == 0 {
        let t = tables[0].rect;
        (
            Rect::new(t.cx - t.hx / 2.0, t.cy, t.hx / 2.0, t.hy),
            Rect::new(t.cx + t.hx / 2.0, t.cy, t.hx / 2.0, t.hy),
        )
    } else {
        (tables[0].rect, tables[last].rect)
    };
    let n_blue = spec.n_goal_objects.div_ceil(2);
    let n_green = spec.n_goal_objects / 2;
    let mut rng = rng_from_seed(spec.seed);
    let mut objects = Vec::new();
    for _ in 0..n_blue {
        objects.push(object(objects.len(), "blue", GoalSpec::AbsoluteRegion { table: 0, rect: blue_goal }));
    }
    for _ in 0..n_green {
        objects.push(object(objects.len(), "green", GoalSpec::AbsoluteRegion { table: last, rect: green_goal }));
    }
    for _ in 0..spec.n_obstacle_objects {
        objects.push(object(objects.len(), "red", GoalSpec::None));
    }
    let spacing = spec.clutter.spacing() * r;
    'attempt: for _ in 0..MAX_ATTEMPTS {
        let mut poses: BTreeMap<usize, Pose2> = BTreeMap::new();
        for o in &objects {
            let areas: Vec<Rect> = tables
                .iter()
                .map(|t| t.rect.shrink(r))
                .filter(|a| match &o.goal {
                    GoalSpec::AbsoluteRegion { rect, .. } => !rect.contains_rect(a) || last == 0,
                    _ => true,
                })
                .map(|a| match &o.goal {
                    GoalSpec::AbsoluteRegion { rect, .. } if last == 0 => {
                        let other = if rect.cx < a.cx { 1.0 } else { -1.0 };
                        Rect::new(a.cx + other * a.hx / 2.0, a.cy, a.hx / 2.0, a.hy)
                    }
                    _ => a,
                })
                .collect();
            let area = areas[rng.gen_range(0..areas.len())];
            let taken: Vec<Pose2> = poses.values().copied().collect();
            match scatter(&area, &taken, spacing, &mut rng) {
                Some(p) => {
                    poses.insert(o.id, p);
                }
                None => continue 'attempt,
            }
        }
        let task = Task {
            arena: arena(),
            tables: tables.clone(),
            objects: objects.clone(),
            robot: robot(),
            start: WorldState { base: start_base(&tables), held: None, object_poses: poses },
            family: Family::Sorting,
            word: None,
        };
        let goal_objects = objects.iter().filter(|o| !o.goal.is_none()).count();
        if task.validate().is_ok() && misplaced_set(&task.start, &task).len() == goal_objects {
            return Ok(task);
        }
    }
    Err(BenchError::GenerationFailed(MAX_ATTEMPTS))
}

/// Two tables side by side against the top wall, so their inner halves are
/// only reachable from below. Each green block stands behind one red block
/// on the left table, and each green goal slot lies behind one blue block
/// on the right table. A fourth red block flanks the greens. Red and blue
/// must return to their start poses.
pub fn gen_nonmonotonic(spec: &BenchSpec) -> Result<Task, BenchError> {
    const GREENS: usize = 3;
    const REDS: usize = 4;
    if spec.family != Family::NonMonotonic || spec.n_goal_objects < GREENS + REDS {
        return Err(BenchError::InvalidSpec(format!("non-monotonic needs at least {} goal objects", GREENS + REDS)));
    }
    let blues = (spec.n_goal_objects - GREENS - REDS).min(GREENS);
    let r = OBJECT_RADIUS;
    let (hx, hy) = TABLE_HALF;
    let cy = ARENA_HALF - 0.15 - hy;
    let cx = hx + 0.05;
    let tables = vec![
        Table { id: 0, rect: Rect::new(-cx, cy, hx, hy), support_height: 0.7 },
        Table { id: 1, rect: Rect::new(cx, cy, hx, hy), support_height: 0.7 },
    ];
    let mut rng = rng_from_seed(spec.seed);
    let front = 2.6 * r;
    let pitch = 0.14;
    for _ in 0..MAX_ATTEMPTS {
        // column k sits at |x| = 0.12 + pitch * k from the gap
        let column = |side: f64, rng: &mut PlanRng| -> Vec<Pose2> {
            let (jx, jy) = (rng.gen_range(-0.015..0.015), cy - hy + 0.35 + rng.gen_range(-0.05..0.05));
            (0..GREENS).map(|k| Pose2::at(side * (0.12 + pitch * k as f64 + jx), jy)).collect()
        };
        let src = column(-1.0, &mut rng);
        let dst = column(1.0, &mut rng);
        let below = |p: &Pose2| Pose2::at(p.x, p.y - front);
        let mut reds: Vec<Pose2> = src.iter().map(below).collect();
        let outer = src[GREENS - 1];
        reds.push(Pose2::at(outer.x - 0.1, outer.y));
        let blue_poses: Vec<Pose2> = dst.iter().take(blues).map(below).collect();

        let mut objects = Vec::new();
        let mut poses = BTreeMap::new();
        for (p, goal) in src.iter().zip(&dst) {
            let id = objects.len();
            let rect = Rect::new(goal.x, goal.y, 0.2 * r, 0.2 * r);
            objects.push(object(id, "green", GoalSpec::AbsoluteRegion { table: 1, rect }));
            poses.insert(id, *p);
        }
        for (label, list) in [("red", reds), ("blue", blue_poses)] {
            for p in list {
                let id = objects.len();
                objects.push(object(id, label, GoalSpec::ExactPose { pose: p, tolerance: 0.5 * r }));
                poses.insert(id, p);
            }
        }
        let task = Task {
            arena: arena(),
            tables: tables.clone(),
            objects,
            robot: robot(),
            start: WorldState { base: Pose2::new(0.0, cy - hy - 0.6, std::f64::consts::FRAC_PI_2), held: None, object_poses: poses },
            family: Family::NonMonotonic,
            word: None,
        };
        if task.validate().is_ok() && misplaced_set(&task.start, &task).len() == GREENS && greens_fenced(&task) {
            return Ok(task);
        }
    }
    Err(BenchError::GenerationFailed(MAX_ATTEMPTS))
}

/// Every green has a positive blocking count under a dense sample set.
fn greens_fenced(task: &Task) -> bool {
    let density = SamplingDensity { n_bases: MAX_BASES, n_placements_per_table: 10, n_grasps: MAX_GRASPS, n_sops: 1, attempt: 0 };
    let Ok(samples) = Sampler::new(0).sample(&task.start, task, density) else { return false };
    let cfg = ExecConfig::default();
    let b = blocking_counts(&ExecCtx { task, samples: &samples, cfg: &cfg }, &task.start);
    task.objects.iter().filter(|o| o.label == "green").all(|o| b.alpha.get(&o.id).is_some_and(|a| *a > 0))
}

const DISTRACTORS: &str = "BCDEFGHIJKLNQSUVWXYZ";

/// One small table holding the letter blocks of the word plus distractor
/// letters, scattered so that no valid prefix exists at the start.
pub fn gen_words(spec: &BenchSpec) -> Result<Task, BenchError> {
    let word: Vec<char> = spec.word.as_deref().unwrap_or("").to_uppercase().chars().collect();
    if spec.family != Family::Words || word.is_empty() {
        return Err(BenchError::InvalidSpec("words needs a non-empty word".into()));
    }
    let total = word.len() + spec.n_obstacle_objects;
    let r = OBJECT_RADIUS;
    let span = (word.len() - 1) as f64 * WORD_PITCH * r + 2.0 * (r + WORD_MARGIN * r);
    let table = Table { id: 0, rect: Rect::new(0.0, 0.0, (1.25 * span / 2.0).max(0.25), 0.4), support_height: 0.7 };
    let tables = vec![table];
    let mut rng = rng_from_seed(spec.seed);
    let pool: Vec<char> = DISTRACTORS.chars().filter(|c| !word.contains(c)).collect();
    let mut objects = Vec::new();
    for (k, c) in word.iter().enumerate() {
        let slot = word.iter().position(|w| w == c).unwrap_or(k);
        objects.push(object(objects.len(), &c.to_string(), GoalSpec::RelativeWord { slot }));
    }
    for _ in word.len()..total {
        let c = *pool.choose(&mut rng).ok_or_else(|| BenchError::InvalidSpec("no distractor letters".into()))?;
        objects.push(object(objects.len(), &c.to_string(), GoalSpec::None));
    }
    let spacing = spec.clutter.spacing() * r;
    'attempt: for _ in 0..MAX_ATTEMPTS {
        let mut poses = BTreeMap::new();
        let area = tables[0].rect.shrink(r);
        for o in &objects {
            let taken: Vec<Pose2> = poses.values().copied().collect();
            match scatter(&area, &taken, spacing, &mut rng) {
                Some(p) => {
                    poses.insert(o.id, p);
                }
                None => continue 'attempt,
            }
        }
        let task = Task {
            arena: arena(),
            tables: tables.clone(),
            objects: objects.clone(),
            robot: robot(),
            start: WorldState { base: start_base(&tables), held: None, object_poses: poses },
            family: Family::Words,
            word: Some(word.iter().collect()),
        };
        let anchor_room = (0..200).any(|i| {
            let t = tables[0].rect;
            let p = Pose2::at(t.min_x() + t.hx * 2.0 * (i % 20) as f64 / 20.0, t.min_y() + t.hy * 2.0 * (i / 20) as f64 / 10.0);
            word_fits(&task, &p, r, word.len())
        });
        if task.validate().is_ok() && words_valid_prefix(&task.start, &task).is_empty() && anchor_room {
            return Ok(task);
        }
    }
    Err(BenchError::GenerationFailed(MAX_ATTEMPTS))
}
