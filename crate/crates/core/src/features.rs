//! Sketch features of a world state: holding `H`, the held-object flag `I`,
//! misplaced count `m` and the blocking counters `u` and `v`.
//!
//! Blocking uses the approach corridors of the sampled bases and grasps.
//! An object blocks a corridor when its center lies in the corridor
//! inflated by its radius, a superset of the exact disc test used by the
//! IK stage, so a zero count always means an executable approach exists
//! for the sampled geometry.

use std::collections::BTreeMap;

use crate::exec::{approach_corridor, grasp_admits, ExecCtx};
use crate::geom::{Corridor, Pose2, EPS};
use crate::sampler::goal_poses;
use crate::sketch::FeatureVec;
use crate::world::{misplaced_set, word_slots, words_valid_prefix, Family, GoalSpec, ObjectId, Task, WorldState};

/// Bitset over object ids.
pub type Mask = u64;

fn bit(o: ObjectId) -> Mask {
    1u64 << o
}

/// Objects the task supports in one mask.
pub const MAX_OBJECTS: usize = 64;

#[derive(Debug, Clone)]
struct Opt {
    corridor: Corridor,
    /// Place target, for occupancy checks.
    target: Option<Pose2>,
    mask: Mask,
    /// Word slots still to fill before this place target.
    extra: u32,
}

impl Opt {
    /// Whether a disc of radius `r` at `q` would block this option.
    fn hit_by(&self, q: &Pose2, r: f64, own_r: f64) -> bool {
        self.corridor.inflated_contains(q.x, q.y, r)
            || self.target.is_some_and(|t| t.dist(q) < r + own_r - EPS)
    }
}

/// Pick and place options of one object, per grasp.
#[derive(Debug, Clone, Default)]
struct Options {
    radius: f64,
    per_grasp: Vec<(Vec<Opt>, Vec<Opt>)>,
}

impl Options {
    /// Minimum over grasps and option pairs of the number of distinct
    /// blockers, ignoring `removed` and adding a virtual disc `extra`.
    fn alpha(&self, removed: Mask, extra: Option<(Pose2, f64)>) -> Option<u32> {
        let mut best: Option<u32> = None;
        for (picks, places) in &self.per_grasp {
            for p in picks {
                let ph = extra.is_some_and(|(q, r)| p.hit_by(&q, r, self.radius));
                for pl in places {
                    let base = ((p.mask | pl.mask) & !removed).count_ones() + pl.extra;
                    if best.is_some_and(|b| base >= b) {
                        continue;
                    }
                    let hit = ph || extra.is_some_and(|(q, r)| pl.hit_by(&q, r, self.radius));
                    let c = base + hit as u32;
                    if best.map_or(true, |b| c < b) {
                        best = Some(c);
                    }
                }
            }
        }
        best
    }
}

fn blockers(state: &WorldState, task: &Task, subject: ObjectId, c: &Corridor, target: Option<&Pose2>) -> Mask {
    let r0 = task.object(subject).radius;
    let mut m = 0;
    for (&j, p) in &state.object_poses {
        if j == subject {
            continue;
        }
        let rj = task.object(j).radius;
        if c.inflated_contains(p.x, p.y, rj) || target.is_some_and(|t| t.dist(p) < r0 + rj - EPS) {
            m |= bit(j);
        }
    }
    m
}

fn options_to(
    ctx: &ExecCtx<'_>,
    state: &WorldState,
    object: ObjectId,
    target: &Pose2,
    grasp: f64,
    place: bool,
    extra: u32,
) -> Vec<Opt> {
    let r = &ctx.task.robot;
    ctx.samples
        .bases
        .iter()
        .filter(|b| {
            let d = b.dist(target);
            d >= r.reach_min - EPS && d <= r.reach_max + EPS && grasp_admits(ctx.cfg, b, target, grasp)
        })
        .map(|b| {
            let corridor = approach_corridor(ctx.task, ctx.cfg, object, b, target);
            let t = place.then_some(*target);
            Opt { corridor, target: t, mask: blockers(state, ctx.task, object, &corridor, t.as_ref()), extra }
        })
        .collect()
}

/// Goal poses used for blocking counts, each with the number of word slots
/// that must be filled before it. Word letters count every open slot
/// carrying their letter, so the counters do not jump when the prefix grows.
fn feature_goals(ctx: &ExecCtx<'_>, state: &WorldState, object: ObjectId) -> Vec<(Pose2, u32)> {
    let task = ctx.task;
    match task.object(object).goal {
        GoalSpec::RelativeWord { .. } => {
            let word = task.word_chars();
            let prefix = words_valid_prefix(state, task);
            let anchor = match prefix.first() {
                Some((a, _)) => state.object_poses.get(a).copied(),
                None => ctx.samples.word_anchor,
            };
            let Some(anchor) = anchor else { return Vec::new() };
            if prefix.iter().any(|(o, _)| *o == object) {
                return Vec::new();
            }
            let filled = prefix.len();
            let r = task.object(object).radius;
            word_slots(&anchor, r, word.len())
                .into_iter()
                .enumerate()
                .skip(filled)
                .filter(|(k, _)| task.letter(object) == Some(word[*k]))
                .map(|(k, p)| (p, (k - filled) as u32))
                .collect()
        }
        _ => goal_poses(state, task, ctx.samples, object).into_iter().map(|(_, p)| (p, 0)).collect(),
    }
}

pub fn feature_goal_poses(ctx: &ExecCtx<'_>, state: &WorldState, object: ObjectId) -> Vec<Pose2> {
    feature_goals(ctx, state, object).into_iter().map(|(p, _)| p).collect()
}

fn is_letter(task: &Task, o: ObjectId) -> bool {
    matches!(task.object(o).goal, GoalSpec::RelativeWord { .. })
}

/// `state` with `o` standing at `q`.
fn relocated(state: &WorldState, o: ObjectId, q: Pose2) -> WorldState {
    let mut s = state.clone();
    if s.held.is_some_and(|h| h.object == o) {
        s.held = None;
    }
    s.object_poses.insert(o, q);
    s
}

/// Alpha of `j` in `state`, zero when `j` is not misplaced there.
fn subject_alpha(ctx: &ExecCtx<'_>, state: &WorldState, j: ObjectId) -> u32 {
    let sentinel = ctx.task.objects.len() as u32;
    if state.held.is_some_and(|h| h.object == j) {
        if !held_misplaced(ctx, state) {
            return 0;
        }
        return held_options(ctx, state, &feature_goals(ctx, state, j)).alpha(0, None).unwrap_or(sentinel);
    }
    if !misplaced_set(state, ctx.task).contains(&j) {
        return 0;
    }
    standing_options(ctx, state, j, &feature_goals(ctx, state, j)).alpha(0, None).unwrap_or(sentinel)
}

fn standing_options(ctx: &ExecCtx<'_>, state: &WorldState, object: ObjectId, goals: &[(Pose2, u32)]) -> Options {
    let pose = state.object_poses[&object];
    let radius = ctx.task.object(object).radius;
    let per_grasp = ctx
        .samples
        .grasps
        .iter()
        .map(|&g| {
            let picks = options_to(ctx, state, object, &pose, g, false, 0);
            let places = goals.iter().flat_map(|(q, e)| options_to(ctx, state, object, q, g, true, *e)).collect();
            (picks, places)
        })
        .collect();
    Options { radius, per_grasp }
}

fn held_options(ctx: &ExecCtx<'_>, state: &WorldState, goals: &[(Pose2, u32)]) -> Options {
    let h = state.held.expect("held object");
    let radius = ctx.task.object(h.object).radius;
    let trivial = Opt { corridor: Corridor { start: state.base, end: state.base, half_width: 0.0 }, target: None, mask: 0, extra: 0 };
    let places = goals.iter().flat_map(|(q, e)| options_to(ctx, state, h.object, q, h.grasp, true, *e)).collect();
    Options { radius, per_grasp: vec![(vec![trivial], places)] }
}

/// Whether the held object has no reachable, unobstructed goal placement.
/// Objects without a goal are never misplaced.
pub fn held_misplaced(ctx: &ExecCtx<'_>, state: &WorldState) -> bool {
    let Some(h) = state.held else { return false };
    if ctx.task.object(h.object).goal.is_none() {
        return false;
    }
    let goals: Vec<(Pose2, u32)> = goal_poses(state, ctx.task, ctx.samples, h.object).into_iter().map(|(_, p)| (p, 0)).collect();
    held_options(ctx, state, &goals).alpha(0, None) != Some(0)
}

/// Per-object blocking counts `(alpha, beta)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blocking {
    pub alpha: BTreeMap<ObjectId, u32>,
    pub beta: BTreeMap<ObjectId, u32>,
}

/// Blocking counts for the misplaced objects (standing, plus the held one
/// when it is misplaced). An object without any pick/place option gets
/// `alpha = |objects|`.
pub fn blocking_counts(ctx: &ExecCtx<'_>, state: &WorldState) -> Blocking {
    // a held letter that can go to its slot counts as already there
    if let Some(h) = state.held.filter(|h| is_letter(ctx.task, h.object)) {
        if let Some(q) = placeable_goal(ctx, state) {
            return blocking_counts(ctx, &relocated(state, h.object, q));
        }
    }
    let sentinel = ctx.task.objects.len() as u32;
    let mut subjects: Vec<(ObjectId, Options, Vec<(Pose2, u32)>)> = Vec::new();
    for o in misplaced_set(state, ctx.task) {
        let goals = feature_goals(ctx, state, o);
        let opts = standing_options(ctx, state, o, &goals);
        subjects.push((o, opts, goals));
    }
    if held_misplaced(ctx, state) {
        let h = state.held.unwrap().object;
        let goals = feature_goals(ctx, state, h);
        let opts = held_options(ctx, state, &goals);
        subjects.push((h, opts, goals));
    }
    let mut out = Blocking::default();
    for (o, opts, _) in &subjects {
        out.alpha.insert(*o, opts.alpha(0, None).unwrap_or(sentinel));
    }
    for (o, _, goals) in &subjects {
        let r = ctx.task.object(*o).radius;
        let letter = is_letter(ctx.task, *o);
        let beta = goals
            .iter()
            .map(|(q, e)| {
                // the next letter in its slot extends the word
                let moved = (letter && *e == 0).then(|| relocated(state, *o, *q));
                subjects
                    .iter()
                    .filter(|(j, oj, _)| {
                        if j == o {
                            return false;
                        }
                        let without = oj.alpha(bit(*o), None).unwrap_or(sentinel);
                        let with = match &moved {
                            Some(s2) => subject_alpha(ctx, s2, *j),
                            None => oj.alpha(bit(*o), Some((*q, r))).unwrap_or(sentinel),
                        };
                        with > without
                    })
                    .count() as u32
            })
            .min()
            .unwrap_or(0);
        out.beta.insert(*o, beta);
    }
    out
}

/// A clear goal placement of the held object that would not add a blocker
/// to any misplaced standing object.
fn placeable_goal(ctx: &ExecCtx<'_>, state: &WorldState) -> Option<Pose2> {
    let h = state.held?;
    if ctx.task.object(h.object).goal.is_none() {
        return None;
    }
    let r = ctx.task.object(h.object).radius;
    let goals: Vec<Pose2> = goal_poses(state, ctx.task, ctx.samples, h.object).into_iter().map(|(_, p)| p).collect();
    let misplaced = misplaced_set(state, ctx.task);
    let clear = |q: &Pose2| held_options(ctx, state, &[(*q, 0)]).alpha(0, None) == Some(0);
    if is_letter(ctx.task, h.object) {
        let before: Vec<(ObjectId, u32)> = misplaced.iter().map(|&j| (j, subject_alpha(ctx, state, j))).collect();
        return goals.into_iter().find(|q| {
            if !clear(q) {
                return false;
            }
            let s2 = relocated(state, h.object, *q);
            before.iter().all(|&(j, a)| subject_alpha(ctx, &s2, j) <= a)
        });
    }
    let others: Vec<Options> =
        misplaced.into_iter().map(|j| standing_options(ctx, state, j, &feature_goals(ctx, state, j))).collect();
    goals
        .into_iter()
        .find(|q| clear(q) && others.iter().all(|oj| oj.alpha(0, Some((*q, r))) == oj.alpha(0, None)))
}

/// Whether the held object has a clear goal placement that would not add a
/// blocker to any misplaced standing object.
pub fn held_placeable(ctx: &ExecCtx<'_>, state: &WorldState) -> bool {
    placeable_goal(ctx, state).is_some()
}

pub fn compute_features(ctx: &ExecCtx<'_>, state: &WorldState) -> FeatureVec {
    assert!(ctx.task.objects.len() <= MAX_OBJECTS, "at most {MAX_OBJECTS} objects supported");
    let b = blocking_counts(ctx, state);
    let m = b.alpha.len() as u32;
    let u = b.alpha.iter().map(|(o, a)| a + b.beta[o]).min().unwrap_or(0);
    let v = b.alpha.values().sum();
    let h = state.held.is_some();
    let i = h && held_placeable(ctx, state);
    FeatureVec { h, i, m, u, v }
}

/// Whether word-family goal poses depend on the sample set.
pub fn uses_word_anchor(task: &Task) -> bool {
    task.family == Family::Words
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{inverse_kinematics, ExecConfig};
    use crate::geom::Rect;
    use crate::sampler::{build_roadmap, GroundAction, SampleSet, SamplingDensity};
    use crate::world::fixtures::one_table;
    use crate::world::{apply, Effect, Held};
    use std::f64::consts::PI;

    fn ring_samples(n_bases: usize, n_grasps: usize, placements: Vec<Pose2>) -> SampleSet {
        let bases: Vec<Pose2> = (0..n_bases)
            .map(|k| {
                let a = k as f64 * 2.0 * PI / n_bases as f64;
                // ellipse around the 1.0 x 0.8 table
                Pose2::at(0.75 * a.cos(), 0.65 * a.sin())
            })
            .collect();
        let (roadmap, _) = build_roadmap(&bases);
        SampleSet {
            bases,
            placements: vec![placements],
            grasps: (0..n_grasps).map(|i| -PI + 2.0 * PI * i as f64 / n_grasps as f64).collect(),
            roadmap,
            word_anchor: None,
            seed: 0,
            density: SamplingDensity::default(),
        }
    }

    fn right_region() -> GoalSpec {
        GoalSpec::AbsoluteRegion { table: 0, rect: Rect::new(0.3, 0.0, 0.2, 0.4) }
    }

    /// Oracle: smallest set of other objects whose removal lets some sampled
    /// pick and some sampled goal place pass the IK stage, by enumeration.
    fn alpha_oracle(ctx: &ExecCtx<'_>, state: &WorldState, o: ObjectId) -> Option<u32> {
        let others: Vec<ObjectId> = state.object_poses.keys().copied().filter(|&j| j != o).collect();
        let mut best = None;
        for subset in 0u32..(1 << others.len()) {
            let k = subset.count_ones();
            if best.is_some_and(|b| k >= b) {
                continue;
            }
            let mut s = state.clone();
            for (i, j) in others.iter().enumerate() {
                if subset & (1 << i) != 0 {
                    s.object_poses.remove(j);
                }
            }
            let mut ok = false;
            'outer: for g in 0..ctx.samples.grasps.len() {
                for b in 0..ctx.samples.bases.len() {
                    let pick = GroundAction::Pick { base: b, object: o, grasp: g };
                    if !inverse_kinematics(ctx, &s, &pick, usize::MAX) {
                        continue;
                    }
                    let mut held = s.clone();
                    held.object_poses.remove(&o);
                    held.held = Some(Held { object: o, grasp: ctx.samples.grasps[g] });
                    for q in feature_goal_poses(ctx, state, o) {
                        let pr = ctx.samples.find_placement(&q).unwrap();
                        for b2 in 0..ctx.samples.bases.len() {
                            let place = GroundAction::Place { base: b2, object: o, placement: pr, sop: 0 };
                            if inverse_kinematics(ctx, &held, &place, usize::MAX) {
                                ok = true;
                                break 'outer;
                            }
                        }
                    }
                }
            }
            if ok {
                best = Some(k);
            }
        }
        best
    }

    #[test]
    fn alpha_matches_enumeration_oracle() {
        // objects well away from corridor boundaries so the inflated test is exact
        let task = one_table(
            &[
                (-0.3, 0.0, "b", right_region()),
                (-0.3, -0.15, "r", GoalSpec::None),
                (-0.3, 0.15, "r", GoalSpec::None),
                (-0.15, 0.0, "r", GoalSpec::None),
                (-0.45, 0.0, "r", GoalSpec::None),
            ],
            Family::Sorting,
            None,
        );
        let cfg = ExecConfig::default();
        let samples = ring_samples(8, 4, vec![Pose2::at(0.3, 0.0)]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        let b = blocking_counts(&ctx, &task.start);
        let oracle = alpha_oracle(&ctx, &task.start, 0).unwrap();
        assert_eq!(b.alpha[&0], oracle);
        assert!(oracle >= 1);
    }

    #[test]
    fn free_object_has_zero_alpha() {
        let task = one_table(&[(-0.3, 0.0, "b", right_region())], Family::Sorting, None);
        let cfg = ExecConfig::default();
        let samples = ring_samples(8, 4, vec![Pose2::at(0.3, 0.0)]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        let f = compute_features(&ctx, &task.start);
        assert_eq!(f, FeatureVec { h: false, i: false, m: 1, u: 0, v: 0 });
    }

    #[test]
    fn no_option_gives_sentinel() {
        let task = one_table(&[(-0.3, 0.0, "b", right_region()), (0.0, 0.0, "r", GoalSpec::None)], Family::Sorting, None);
        let cfg = ExecConfig::default();
        // no placements in the goal region
        let samples = ring_samples(8, 4, vec![Pose2::at(-0.1, 0.2)]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        assert_eq!(blocking_counts(&ctx, &task.start).alpha[&0], 2);
    }

    #[test]
    fn beta_counts_newly_blocked_objects() {
        // single grasp from the south: each object's goal lies in the
        // other's pick corridor
        let task = one_table(
            &[
                (-0.3, 0.2, "b", GoalSpec::ExactPose { pose: Pose2::at(0.3, -0.1), tolerance: 0.01 }),
                (0.3, 0.1, "g", GoalSpec::ExactPose { pose: Pose2::at(-0.3, -0.2), tolerance: 0.01 }),
            ],
            Family::Sorting,
            None,
        );
        let cfg = ExecConfig::default();
        let bases = vec![Pose2::at(0.3, -0.6), Pose2::at(-0.3, -0.6), Pose2::at(-0.3, 0.6)];
        let (roadmap, _) = build_roadmap(&bases);
        let samples = SampleSet {
            bases,
            placements: vec![vec![Pose2::at(0.3, -0.1), Pose2::at(-0.3, -0.2)]],
            grasps: vec![PI / 2.0],
            roadmap,
            word_anchor: None,
            seed: 0,
            density: SamplingDensity::default(),
        };
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        let b = blocking_counts(&ctx, &task.start);
        assert_eq!(b.alpha[&0], 0);
        assert_eq!(b.alpha[&1], 0);
        assert_eq!(b.beta[&0], 1);
        assert_eq!(b.beta[&1], 1);
        let f = compute_features(&ctx, &task.start);
        assert_eq!((f.m, f.u, f.v), (2, 1, 0));
    }

    #[test]
    fn held_flags() {
        let task = one_table(&[(-0.3, 0.0, "b", right_region()), (0.0, 0.3, "r", GoalSpec::None)], Family::Sorting, None);
        let cfg = ExecConfig::default();
        let samples = ring_samples(8, 4, vec![Pose2::at(0.3, 0.0)]);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        let pick = |o: ObjectId, g: f64| {
            apply(&task.start, &Effect::Pick { object: o, grasp: g, base: samples.bases[4] }, &task).unwrap()
        };
        // grasp along +y: the south base reaches the goal
        let s = pick(0, PI / 2.0);
        let f = compute_features(&ctx, &s);
        assert!(f.h && f.i);
        assert_eq!(f.m, 0);
        // grasp along +x admits no base within reach of the goal
        let s = pick(0, 0.0);
        let f = compute_features(&ctx, &s);
        assert!(f.h && !f.i);
        assert_eq!(f.m, 1);
        // goal-free object is never placeable in the goal sense
        let s = pick(1, 0.0);
        let f = compute_features(&ctx, &s);
        assert!(f.h && !f.i);
        assert_eq!(f.m, 1);
    }
}
