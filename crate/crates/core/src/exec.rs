//! Executability: the three-stage validation pipeline
//! (arm workspace, inverse-kinematics surrogate, motion plan).

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Corridor, Pose2, Rect, EPS};
use crate::rrt::{path_length, rrt_connect, DiscSpace, RrtParams};
use crate::sampler::{GroundAction, PlanRng, SampleSet};
use crate::world::{apply, placement_free, Effect, ObjectId, Task, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    /// Corridor tests allowed per IK call.
    pub ik_budget: usize,
    pub clearance: f64,
    /// Half-width of the heading cone a grasp admits.
    pub grasp_half_cone: f64,
    pub manipulation_cost: f64,
    pub rrt_step: f64,
    pub rrt_goal_bias: f64,
    pub rrt_iter_cap: usize,
    pub shortcut_attempts: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            ik_budget: 64,
            clearance: 0.01,
            grasp_half_cone: PI / 3.0,
            manipulation_cost: 1.0,
            rrt_step: 0.15,
            rrt_goal_bias: 0.1,
            rrt_iter_cap: 2000,
            shortcut_attempts: 50,
        }
    }
}

impl ExecConfig {
    pub fn rrt(&self) -> RrtParams {
        RrtParams {
            step: self.rrt_step,
            goal_bias: self.rrt_goal_bias,
            iter_cap: self.rrt_iter_cap,
            shortcuts: self.shortcut_attempts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Lazy,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Approach {
    pub object: ObjectId,
    pub grasp: f64,
    pub base: Pose2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPlan {
    pub base_path: Vec<Pose2>,
    pub manipulation: Option<Approach>,
    pub end_state: WorldState,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationResult {
    Feasible(MotionPlan),
    ProvisionallyFeasible { end_state: WorldState, cost: f64 },
    Infeasible(u8),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounter {
    pub calls: u64,
    pub passes: u64,
    #[serde(skip)]
    pub nanos: u128,
}

/// Per-stage counters. `stages` profile manipulation actions; base moves go
/// straight to motion planning and are counted separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub stages: [StageCounter; 3],
    pub base_moves: StageCounter,
}

impl PipelineStats {
    pub fn merge(&mut self, o: &PipelineStats) {
        for (a, b) in self.stages.iter_mut().zip(o.stages.iter()) {
            a.calls += b.calls;
            a.passes += b.passes;
            a.nanos += b.nanos;
        }
        self.base_moves.calls += o.base_moves.calls;
        self.base_moves.passes += o.base_moves.passes;
        self.base_moves.nanos += o.base_moves.nanos;
    }

    /// Number of motion-planner invocations (manipulation stage 3 plus base moves).
    pub fn motion_plan_calls(&self) -> u64 {
        self.stages[2].calls + self.base_moves.calls
    }

    pub fn pass_ratio(&self, stage: usize) -> f64 {
        let s = &self.stages[stage];
        if s.calls == 0 {
            0.0
        } else {
            s.passes as f64 / s.calls as f64
        }
    }

    pub fn cumulative_pass_ratio(&self, stage: usize) -> f64 {
        (0..=stage).map(|i| self.pass_ratio(i)).product()
    }

    /// Stage `i+1` is only reached by actions that passed stage `i`.
    pub fn filter_monotone(&self) -> bool {
        self.stages.iter().all(|s| s.passes <= s.calls)
            && self.stages.windows(2).all(|w| w[1].calls <= w[0].passes)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("stage,calls,passes,pass_ratio,cumulative_pass_ratio\n");
        let names = ["in_arm_workspace", "inverse_kinematics", "motion_plan"];
        for (i, n) in names.iter().enumerate() {
            let s = &self.stages[i];
            out.push_str(&format!(
                "{n},{},{},{:.6},{:.6}\n",
                s.calls,
                s.passes,
                self.pass_ratio(i),
                self.cumulative_pass_ratio(i)
            ));
        }
        let b = &self.base_moves;
        let r = if b.calls == 0 { 0.0 } else { b.passes as f64 / b.calls as f64 };
        out.push_str(&format!("move_base,{},{},{r:.6},{r:.6}\n", b.calls, b.passes));
        out
    }
}

/// Everything needed to resolve and check ground actions.
#[derive(Debug, Clone, Copy)]
pub struct ExecCtx<'a> {
    pub task: &'a Task,
    pub samples: &'a SampleSet,
    pub cfg: &'a ExecConfig,
}

/// Manipulation target of a Pick/Place: `(object, target pose, base pose, grasp angle)`.
fn manipulation_target(ctx: &ExecCtx<'_>, state: &WorldState, action: &GroundAction) -> Option<(ObjectId, Pose2, Pose2, f64)> {
    match *action {
        GroundAction::Pick { base, object, grasp } => {
            let p = state.pose_of(object)?;
            Some((object, *p, ctx.samples.bases[base], ctx.samples.grasps[grasp]))
        }
        GroundAction::Place { base, object, placement, .. } => {
            let h = state.held.filter(|h| h.object == object)?;
            Some((object, ctx.samples.placement(placement), ctx.samples.bases[base], h.grasp))
        }
        GroundAction::MoveBase { .. } => None,
    }
}

pub fn effect_of(ctx: &ExecCtx<'_>, state: &WorldState, action: &GroundAction) -> Option<Effect> {
    Some(match *action {
        GroundAction::Pick { base, object, grasp } => {
            state.pose_of(object)?;
            Effect::Pick { object, grasp: ctx.samples.grasps[grasp], base: ctx.samples.bases[base] }
        }
        GroundAction::Place { base, object, placement, .. } => {
            if state.holding() != Some(object) {
                return None;
            }
            Effect::Place { object, pose: ctx.samples.placement(placement), base: ctx.samples.bases[base] }
        }
        GroundAction::MoveBase { to, .. } => Effect::MoveBase { to: ctx.samples.bases[to] },
    })
}

pub fn in_arm_workspace(ctx: &ExecCtx<'_>, state: &WorldState, action: &GroundAction) -> bool {
    match manipulation_target(ctx, state, action) {
        Some((_, target, base, _)) => {
            let d = base.dist(&target);
            let r = &ctx.task.robot;
            d >= r.reach_min - EPS && d <= r.reach_max + EPS
        }
        None => false,
    }
}

/// Whether the heading from base to target is admitted by the grasp.
pub fn grasp_admits(cfg: &ExecConfig, base: &Pose2, target: &Pose2, grasp: f64) -> bool {
    wrap_angle(base.heading_to(target) - grasp).abs() <= cfg.grasp_half_cone + EPS
}

/// Approach corridor for manipulating `object` at `target` from `base`.
pub fn approach_corridor(task: &Task, cfg: &ExecConfig, object: ObjectId, base: &Pose2, target: &Pose2) -> Corridor {
    Corridor::approach(base, target, task.robot.reach_min, task.object(object).radius + cfg.clearance)
}

/// Objects whose discs intersect the approach corridor, with a cap on the
/// number of disc tests. `None` when the budget ran out.
fn corridor_blockers(
    task: &Task,
    cfg: &ExecConfig,
    state: &WorldState,
    object: ObjectId,
    base: &Pose2,
    target: &Pose2,
    budget: usize,
) -> Option<Vec<ObjectId>> {
    let c = approach_corridor(task, cfg, object, base, target);
    let mut used = 0;
    let mut out = Vec::new();
    for (&o, p) in &state.object_poses {
        if o == object {
            continue;
        }
        used += 1;
        if used > budget {
            return None;
        }
        if c.intersects_disc(p.x, p.y, task.object(o).radius) {
            out.push(o);
        }
    }
    Some(out)
}

/// Geometric surrogate of an IK query: grasp heading admissible, target
/// free, approach corridor clear, base disc clear of every object.
pub fn inverse_kinematics(ctx: &ExecCtx<'_>, state: &WorldState, action: &GroundAction, budget: usize) -> bool {
    let Some((object, target, base, grasp)) = manipulation_target(ctx, state, action) else {
        return false;
    };
    let task = ctx.task;
    if !grasp_admits(ctx.cfg, &base, &target, grasp) {
        return false;
    }
    if let GroundAction::Place { placement, .. } = action {
        let table = task.table(placement.table);
        if !placement_free(state, task, table, &target, task.object(object).radius, Some(object)) {
            return false;
        }
    }
    let br = task.robot.base_radius;
    if state.object_poses.iter().any(|(o, p)| p.dist(&base) < br + task.object(*o).radius - EPS) {
        return false;
    }
    matches!(corridor_blockers(task, ctx.cfg, state, object, &base, &target, budget), Some(b) if b.is_empty())
}

fn table_rects(task: &Task) -> Vec<Rect> {
    task.tables.iter().map(|t| t.rect).collect()
}

/// Stage 3: base path via RRT-Connect, then the corridor re-check at the
/// final base for manipulation actions.
pub fn motion_plan(ctx: &ExecCtx<'_>, state: &WorldState, action: &GroundAction, rng: &mut PlanRng) -> Option<MotionPlan> {
    let task = ctx.task;
    let rects = table_rects(task);
    let space = DiscSpace { arena: &task.arena, obstacles: &rects, radius: task.robot.base_radius };
    let effect = effect_of(ctx, state, action)?;
    let goal_base = match effect {
        Effect::MoveBase { to } => to,
        Effect::Pick { base, .. } | Effect::Place { base, .. } => base,
    };
    let base_path = if state.base.dist(&goal_base) <= EPS {
        if !space.point_free(&goal_base) {
            return None;
        }
        Vec::new()
    } else {
        rrt_connect(&state.base, &goal_base, &space, &ctx.cfg.rrt(), rng)?
    };
    let mut cost = path_length(&base_path);
    let manipulation = match manipulation_target(ctx, state, action) {
        Some((object, target, base, grasp)) => {
            let moved = WorldState { base, ..state.clone() };
            let clear = corridor_blockers(task, ctx.cfg, &moved, object, &base, &target, usize::MAX)
                .map_or(false, |b| b.is_empty());
            if !clear {
                return None;
            }
            cost += ctx.cfg.manipulation_cost;
            Some(Approach { object, grasp, base })
        }
        None => None,
    };
    let end_state = apply(state, &effect, task).ok()?;
    Some(MotionPlan { base_path, manipulation, end_state, cost })
}

/// Cost used for provisional edges: straight-line base travel plus the
/// fixed manipulation cost.
pub fn estimated_cost(ctx: &ExecCtx<'_>, state: &WorldState, action: &GroundAction) -> f64 {
    let to = ctx.samples.bases[action.base()];
    let m = if action.is_manipulation() { ctx.cfg.manipulation_cost } else { 0.0 };
    state.base.dist(&to) + m
}

/// Runs the pipeline as sequential filters. Lazy mode stops after stage 2.
pub fn validate(
    ctx: &ExecCtx<'_>,
    state: &WorldState,
    action: &GroundAction,
    mode: Mode,
    stats: &mut PipelineStats,
    rng: &mut PlanRng,
) -> ValidationResult {
    if action.is_manipulation() {
        for stage in [0usize, 1] {
            let t0 = Instant::now();
            let ok = match stage {
                0 => in_arm_workspace(ctx, state, action),
                _ => inverse_kinematics(ctx, state, action, ctx.cfg.ik_budget),
            };
            let c = &mut stats.stages[stage];
            c.calls += 1;
            c.nanos += t0.elapsed().as_nanos();
            if !ok {
                return ValidationResult::Infeasible(stage as u8 + 1);
            }
            c.passes += 1;
        }
    }
    match mode {
        Mode::Lazy => {
            let Some(effect) = effect_of(ctx, state, action) else {
                return ValidationResult::Infeasible(2);
            };
            match apply(state, &effect, ctx.task) {
                Ok(end_state) => ValidationResult::ProvisionallyFeasible {
                    end_state,
                    cost: estimated_cost(ctx, state, action),
                },
                Err(_) => ValidationResult::Infeasible(2),
            }
        }
        Mode::Full => full_stage(ctx, state, action, stats, rng),
    }
}

/// Stage 3 alone, for edges that already passed stages 1 and 2.
pub fn full_stage(
    ctx: &ExecCtx<'_>,
    state: &WorldState,
    action: &GroundAction,
    stats: &mut PipelineStats,
    rng: &mut PlanRng,
) -> ValidationResult {
    let t0 = Instant::now();
    let res = motion_plan(ctx, state, action, rng);
    let c = if action.is_manipulation() { &mut stats.stages[2] } else { &mut stats.base_moves };
    c.calls += 1;
    c.nanos += t0.elapsed().as_nanos();
    match res {
        Some(plan) => {
            c.passes += 1;
            ValidationResult::Feasible(plan)
        }
        None => ValidationResult::Infeasible(3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{build_roadmap, rng_from_seed, PlacementRef, SamplingDensity};
    use crate::world::fixtures::one_table;
    use crate::world::{Family, GoalSpec, Held};

    fn samples_for(_task: &Task, bases: Vec<Pose2>, placements: Vec<Pose2>, grasps: Vec<f64>) -> SampleSet {
        let (roadmap, _) = build_roadmap(&bases);
        SampleSet {
            bases,
            placements: vec![placements],
            grasps,
            roadmap,
            word_anchor: None,
            seed: 0,
            density: SamplingDensity::default(),
        }
    }

    /// Grasp pointing from `base` towards `target`.
    fn grasp_towards(base: &Pose2, target: &Pose2) -> f64 {
        base.heading_to(target)
    }

    #[test]
    fn workspace_annulus() {
        let task = one_table(&[(0.0, 0.0, "b", GoalSpec::None)], Family::Sorting, None);
        let cfg = ExecConfig::default();
        let mid = (task.robot.reach_min + task.robot.reach_max) / 2.0;
        let far = task.robot.reach_max + 1e-3;
        let samples = samples_for(&task, vec![Pose2::at(0.0, -mid), Pose2::at(0.0, -far)], vec![Pose2::at(0.0, 0.0)], vec![PI / 2.0]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        assert!(in_arm_workspace(&ctx, &task.start, &GroundAction::Pick { base: 0, object: 0, grasp: 0 }));
        assert!(!in_arm_workspace(&ctx, &task.start, &GroundAction::Pick { base: 1, object: 0, grasp: 0 }));
    }

    #[test]
    fn lone_object_ik_passes() {
        let task = one_table(&[(0.0, 0.0, "b", GoalSpec::None)], Family::Sorting, None);
        let cfg = ExecConfig::default();
        let base = Pose2::at(0.0, -0.6);
        let samples = samples_for(&task, vec![base], vec![Pose2::at(0.0, 0.0)], vec![grasp_towards(&base, &Pose2::at(0.0, 0.0))]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        assert!(inverse_kinematics(&ctx, &task.start, &GroundAction::Pick { base: 0, object: 0, grasp: 0 }, 64));
    }

    #[test]
    fn hexagonal_ring_blocks_every_grasp() {
        // Six touching neighbours at distance 2r around the target. For any
        // heading, some neighbour centre lies within 30 degrees of the
        // approach ray on the base side: its lateral offset is at most
        // 2r sin(30) = r < r + clearance, so its disc cuts the corridor.
        let r = 0.035;
        let mut objs = vec![(0.0, 0.0, "g", GoalSpec::None)];
        for k in 0..6 {
            let a = k as f64 * PI / 3.0;
            objs.push((2.0 * r * a.cos(), 2.0 * r * a.sin(), "r", GoalSpec::None));
        }
        let task = one_table(&objs, Family::Sorting, None);
        let cfg = ExecConfig::default();
        let mut bases = Vec::new();
        for k in 0..24 {
            let a = k as f64 * PI / 12.0;
            let b = Pose2::at(0.6 * a.cos(), 0.6 * a.sin());
            bases.push(b);
        }
        let grasps: Vec<f64> = bases.iter().map(|b| grasp_towards(b, &Pose2::at(0.0, 0.0))).collect();
        let samples = samples_for(&task, bases, vec![Pose2::at(0.0, 0.0)], grasps);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        for b in 0..24 {
            for g in 0..24 {
                assert!(!inverse_kinematics(&ctx, &task.start, &GroundAction::Pick { base: b, object: 0, grasp: g }, 64));
            }
        }
    }

    #[test]
    fn ik_budget_times_out() {
        let task = one_table(&[(0.0, 0.0, "g", GoalSpec::None), (0.3, 0.3, "r", GoalSpec::None), (-0.3, 0.3, "r", GoalSpec::None)], Family::Sorting, None);
        let cfg = ExecConfig::default();
        let base = Pose2::at(0.0, -0.6);
        let samples = samples_for(&task, vec![base], vec![Pose2::at(0.0, 0.0)], vec![PI / 2.0]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        let a = GroundAction::Pick { base: 0, object: 0, grasp: 0 };
        assert!(inverse_kinematics(&ctx, &task.start, &a, 2));
        assert!(!inverse_kinematics(&ctx, &task.start, &a, 1));
    }

    #[test]
    fn filter_order_and_modes() {
        let task = one_table(&[(0.0, 0.0, "b", GoalSpec::None)], Family::Sorting, None);
        let cfg = ExecConfig::default();
        let near = Pose2::at(0.0, -0.6);
        let far = Pose2::at(2.5, 2.5);
        let samples = samples_for(&task, vec![task.start.base, near, far], vec![Pose2::at(0.0, 0.0)], vec![PI / 2.0]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        let mut stats = PipelineStats::default();
        let mut rng = rng_from_seed(0);
        let bad = GroundAction::Pick { base: 2, object: 0, grasp: 0 };
        assert_eq!(validate(&ctx, &task.start, &bad, Mode::Lazy, &mut stats, &mut rng), ValidationResult::Infeasible(1));
        assert_eq!((stats.stages[1].calls, stats.stages[2].calls), (0, 0));

        let good = GroundAction::Pick { base: 1, object: 0, grasp: 0 };
        let lazy = validate(&ctx, &task.start, &good, Mode::Lazy, &mut stats, &mut rng);
        assert!(matches!(lazy, ValidationResult::ProvisionallyFeasible { .. }));
        let full = validate(&ctx, &task.start, &good, Mode::Full, &mut stats, &mut rng);
        let ValidationResult::Feasible(plan) = full else { panic!("expected feasible") };
        let eff = effect_of(&ctx, &task.start, &good).unwrap();
        assert_eq!(plan.end_state, apply(&task.start, &eff, &task).unwrap());
        assert!(stats.filter_monotone());
        assert_eq!(stats.stages[2].calls, 1);
    }

    #[test]
    fn move_base_ignores_table_top_objects_but_corridor_does_not() {
        // objects on the table never block base motion
        let task = one_table(&[(0.0, 0.0, "g", GoalSpec::None), (0.0, -0.15, "r", GoalSpec::None)], Family::Sorting, None);
        let cfg = ExecConfig::default();
        let b0 = task.start.base;
        let b1 = Pose2::at(0.0, 0.8);
        let samples = samples_for(&task, vec![b0, b1], vec![], vec![PI / 2.0]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        let mut rng = rng_from_seed(1);
        let mv = GroundAction::MoveBase { from: 0, to: 1 };
        assert!(motion_plan(&ctx, &task.start, &mv, &mut rng).is_some());
        // the red object sits in the corridor from the south base
        let pick = GroundAction::Pick { base: 0, object: 0, grasp: 0 };
        assert!(!inverse_kinematics(&ctx, &task.start, &pick, 64));
    }

    #[test]
    fn move_base_into_table_fails() {
        let task = one_table(&[], Family::Sorting, None);
        let cfg = ExecConfig::default();
        let samples = samples_for(&task, vec![task.start.base, Pose2::at(0.0, 0.0)], vec![], vec![0.0]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        assert!(motion_plan(&ctx, &task.start, &GroundAction::MoveBase { from: 0, to: 1 }, &mut rng_from_seed(0)).is_none());
    }

    #[test]
    fn straight_move_base_cost() {
        let task = one_table(&[], Family::Sorting, None);
        let cfg = ExecConfig::default();
        let b1 = Pose2::at(1.5, -0.8);
        let samples = samples_for(&task, vec![task.start.base, b1], vec![], vec![0.0]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        let plan = motion_plan(&ctx, &task.start, &GroundAction::MoveBase { from: 0, to: 1 }, &mut rng_from_seed(0)).unwrap();
        assert!((plan.cost - task.start.base.dist(&b1)).abs() <= 0.01 * task.start.base.dist(&b1));
    }

    #[test]
    fn place_requires_free_target() {
        let task = one_table(&[(0.0, 0.0, "r", GoalSpec::None), (0.3, 0.0, "b", GoalSpec::None)], Family::Sorting, None);
        let cfg = ExecConfig::default();
        let mut s = task.start.clone();
        s.object_poses.remove(&1);
        let base = Pose2::at(0.0, -0.6);
        s.held = Some(Held { object: 1, grasp: PI / 2.0 });
        let samples = samples_for(&task, vec![base], vec![Pose2::at(0.02, 0.0), Pose2::at(0.0, 0.2)], vec![PI / 2.0]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        let occupied = GroundAction::Place { base: 0, object: 1, placement: PlacementRef { table: 0, index: 0 }, sop: 0 };
        assert!(!inverse_kinematics(&ctx, &s, &occupied, 64));
        // behind the red object from the south base: corridor blocked
        let behind = GroundAction::Place { base: 0, object: 1, placement: PlacementRef { table: 0, index: 1 }, sop: 0 };
        assert!(!inverse_kinematics(&ctx, &s, &behind, 64));
    }
}
