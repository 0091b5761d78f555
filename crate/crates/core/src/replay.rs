//! Independent plan checker. Every step is re-validated in Full mode from
//! the task start with a fresh RNG stream, state invariants are checked
//! after each step, and the final state must satisfy the goal.

use thiserror::Error;

use crate::exec::{validate, ExecConfig, ExecCtx, Mode, PipelineStats, ValidationResult};
use crate::geom::{Pose2, EPS};
use crate::rrt::DiscSpace;
use crate::sampler::{build_roadmap, derive_seed, rng_from_seed, GroundAction, PlacementRef, SampleSet, SamplingDensity};
use crate::search::Plan;
use crate::world::{is_goal, validate_state, Effect, Task, WorldState};

const REPLAY_STREAM: u64 = 0x2e91a7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("plan does not start at the task start state")]
    Start,
    #[error("step {index}: {reason}")]
    Step { index: usize, reason: String },
    #[error("terminal state not goal")]
    NotGoal,
}

impl Violation {
    pub fn index(&self) -> Option<usize> {
        match self {
            Violation::Step { index, .. } => Some(*index),
            _ => None,
        }
    }
}

/// Single-action sample set that grounds `effect` from `state`.
fn ground(task: &Task, state: &WorldState, effect: &Effect) -> Result<(SampleSet, GroundAction), String> {
    let mut placements = vec![Vec::new(); task.tables.len()];
    let mut grasps = Vec::new();
    let (bases, action) = match *effect {
        Effect::MoveBase { to } => (vec![state.base, to], GroundAction::MoveBase { from: 0, to: 1 }),
        Effect::Pick { object, grasp, base } => {
            grasps.push(grasp);
            (vec![base], GroundAction::Pick { base: 0, object, grasp: 0 })
        }
        Effect::Place { object, pose, base } => {
            let r = task.objects.get(object).ok_or(format!("unknown object {object}"))?.radius;
            let table = task.table_under(&pose, r).ok_or("placement is not on a table")?;
            placements[table].push(pose);
            let placement = PlacementRef { table, index: 0 };
            (vec![base], GroundAction::Place { base: 0, object, placement, sop: 0 })
        }
    };
    let (roadmap, _) = build_roadmap(&bases);
    let samples =
        SampleSet { bases, placements, grasps, roadmap, word_anchor: None, seed: 0, density: SamplingDensity::default() };
    Ok((samples, action))
}

fn stored_path_ok(task: &Task, from: &Pose2, to: &Pose2, path: &[Pose2]) -> bool {
    if path.is_empty() {
        return from.dist(to) <= EPS;
    }
    let rects: Vec<_> = task.tables.iter().map(|t| t.rect).collect();
    let space = DiscSpace { arena: &task.arena, obstacles: &rects, radius: task.robot.base_radius };
    path[0].dist(from) <= 1e-6
        && path[path.len() - 1].dist(to) <= 1e-6
        && path.windows(2).all(|w| space.segment_free(&w[0], &w[1]))
}

/// Checks `plan` against `task`; the first violation found is returned.
pub fn replay(task: &Task, plan: &Plan, cfg: &ExecConfig) -> Result<(), Violation> {
    if plan.states.first() != Some(&task.start) {
        return Err(Violation::Start);
    }
    let mut state = task.start.clone();
    for (index, step) in plan.steps.iter().enumerate() {
        let fail = |reason: String| Violation::Step { index, reason };
        let (samples, action) = ground(task, &state, &step.action).map_err(fail)?;
        let ctx = ExecCtx { task, samples: &samples, cfg };
        let mut rng = rng_from_seed(derive_seed(plan.seed, &[REPLAY_STREAM, index as u64]));
        let mut stats = PipelineStats::default();
        let next = match validate(&ctx, &state, &action, Mode::Full, &mut stats, &mut rng) {
            ValidationResult::Feasible(mp) => mp.end_state,
            ValidationResult::Infeasible(stage) => return Err(fail(format!("validation stage {stage} failed"))),
            ValidationResult::ProvisionallyFeasible { .. } => unreachable!("full mode"),
        };
        let goal_base = match step.action {
            Effect::MoveBase { to } | Effect::Pick { base: to, .. } | Effect::Place { base: to, .. } => to,
        };
        if !stored_path_ok(task, &state.base, &goal_base, &step.base_path) {
            return Err(fail("stored base path is not collision-free".into()));
        }
        validate_state(&next, task).map_err(|e| fail(e.to_string()))?;
        if plan.states.get(index + 1) != Some(&next) {
            return Err(fail("stored state does not match the action".into()));
        }
        state = next;
    }
    if !is_goal(&state, task) {
        return Err(Violation::NotGoal);
    }
    Ok(())
}
