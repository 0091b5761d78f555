//! Scene model: tables, disc-shaped movable objects, the robot surrogate,
//! the continuous world state and goal predicates for each task family.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pose2, Rect, EPS};

pub type ObjectId = usize;
pub type TableId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub id: TableId,
    pub rect: Rect,
    #[serde(default)]
    pub support_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalSpec {
    None,
    AbsoluteRegion { table: TableId, rect: Rect },
    ExactPose { pose: Pose2, tolerance: f64 },
    /// Letter slot of the target word; any block carrying the same letter
    /// may fill any slot with that letter.
    RelativeWord { slot: usize },
}

impl GoalSpec {
    pub fn is_none(&self) -> bool {
        matches!(self, GoalSpec::None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovableObject {
    pub id: ObjectId,
    pub radius: f64,
    pub label: String,
    pub goal: GoalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    pub base_radius: f64,
    pub reach_min: f64,
    pub reach_max: f64,
    #[serde(default = "default_home")]
    pub home: bool,
}

fn default_home() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Sorting,
    NonMonotonic,
    Words,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Held {
    pub object: ObjectId,
    /// Approach angle of the grasp, in the world frame.
    pub grasp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub base: Pose2,
    pub held: Option<Held>,
    pub object_poses: BTreeMap<ObjectId, Pose2>,
}

impl WorldState {
    pub fn pose_of(&self, o: ObjectId) -> Option<&Pose2> {
        self.object_poses.get(&o)
    }

    pub fn holding(&self) -> Option<ObjectId> {
        self.held.map(|h| h.object)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub arena: Rect,
    pub tables: Vec<Table>,
    pub objects: Vec<MovableObject>,
    pub robot: RobotParams,
    pub start: WorldState,
    pub family: Family,
    #[serde(default)]
    pub word: Option<String>,
}

/// Words layout constants, in multiples of the object radius.
pub const WORD_PITCH: f64 = 2.5;
pub const WORD_TOLERANCE: f64 = 0.25;
pub const WORD_MARGIN: f64 = 1.0;

/// A state change produced by a resolved ground action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Effect {
    Pick { object: ObjectId, grasp: f64, base: Pose2 },
    Place { object: ObjectId, pose: Pose2, base: Pose2 },
    MoveBase { to: Pose2 },
}

impl Task {
    pub fn object(&self, id: ObjectId) -> &MovableObject {
        &self.objects[id]
    }

    pub fn table(&self, id: TableId) -> &Table {
        &self.tables[id]
    }

    pub fn word_chars(&self) -> Vec<char> {
        self.word.as_deref().unwrap_or("").chars().collect()
    }

    /// Letter carried by an object, if its label is a single character.
    pub fn letter(&self, o: ObjectId) -> Option<char> {
        let mut cs = self.objects[o].label.chars();
        match (cs.next(), cs.next()) {
            (Some(c), None) => Some(c),
            _ => None,
        }
    }

    /// The table whose top fully supports a disc at `pose`.
    pub fn table_under(&self, pose: &Pose2, radius: f64) -> Option<TableId> {
        self.tables
            .iter()
            .find(|t| t.rect.contains_disc(pose.x, pose.y, radius))
            .map(|t| t.id)
    }

    pub fn max_radius(&self) -> f64 {
        self.objects.iter().map(|o| o.radius).fold(0.0, f64::max)
    }

    /// Structural checks for a loaded task.
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidTask(m));
        for (i, t) in self.tables.iter().enumerate() {
            if t.id != i {
                return bad(format!("table {i} has id {}", t.id));
            }
            if t.rect.hx <= 0.0 || t.rect.hy <= 0.0 {
                return bad(format!("table {i} has non-positive extent"));
            }
            for u in &self.tables[..i] {
                if t.rect.overlaps_rect(&u.rect) {
                    return bad(format!("tables {} and {i} overlap", u.id));
                }
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.id != i {
                return bad(format!("object {i} has id {}", o.id));
            }
            if !(o.radius > 0.0) {
                return bad(format!("object {i} radius must be positive"));
            }
            match &o.goal {
                GoalSpec::AbsoluteRegion { table, rect } => {
                    if *table >= self.tables.len() || !self.tables[*table].rect.contains_rect(rect) {
                        return bad(format!("object {i} goal region is not on its table"));
                    }
                }
                GoalSpec::ExactPose { tolerance, .. } if *tolerance <= 0.0 => {
                    return bad(format!("object {i} exact-pose tolerance must be positive"));
                }
                GoalSpec::RelativeWord { slot } => {
                    let w = self.word_chars();
                    if *slot >= w.len() || self.letter(i) != Some(w[*slot]) {
                        return bad(format!("object {i} word slot {slot} does not match its letter"));
                    }
                }
                _ => {}
            }
        }
        let r = &self.robot;
        if !(0.0 < r.reach_min && r.reach_min < r.reach_max) || r.base_radius <= 0.0 {
            return bad("robot reach must satisfy 0 < reach_min < reach_max".into());
        }
        if self.family == Family::Words && self.word_chars().is_empty() {
            return bad("words task requires a non-empty word".into());
        }
        validate_state(&self.start, self).map_err(|e| WorldError::InvalidTask(e.to_string()))
    }
}

/// Checks every world-state invariant against the task geometry.
pub fn validate_state(state: &WorldState, task: &Task) -> Result<(), WorldError> {
    let err = |m: String| Err(WorldError::InvariantViolation(m));
    if !state.base.is_finite() {
        return err("base pose is not finite".into());
    }
    if let Some(h) = state.held {
        if h.object >= task.objects.len() {
            return err(format!("held object {} unknown", h.object));
        }
        if state.object_poses.contains_key(&h.object) {
            return err(format!("held object {} also has a pose", h.object));
        }
    }
    let expected = task.objects.len() - usize::from(state.held.is_some());
    if state.object_poses.len() != expected {
        return err(format!("expected {expected} standing objects, found {}", state.object_poses.len()));
    }
    let standing: Vec<_> = state.object_poses.iter().collect();
    for (i, (&a, pa)) in standing.iter().enumerate() {
        if a >= task.objects.len() {
            return err(format!("unknown object {a}"));
        }
        let ra = task.objects[a].radius;
        if task.table_under(pa, ra).is_none() {
            return err(format!("object {a} is not fully supported by a table"));
        }
        for (&b, pb) in &standing[i + 1..] {
            let rb = task.objects[b].radius;
            if pa.dist(pb) < ra + rb - EPS {
                return err(format!("objects {a} and {b} overlap"));
            }
        }
    }
    let br = task.robot.base_radius;
    for t in &task.tables {
        if t.rect.overlaps_disc(state.base.x, state.base.y, br) {
            return err(format!("robot base overlaps table {}", t.id));
        }
    }
    if !task.arena.contains_disc(state.base.x, state.base.y, br) {
        return err("robot base leaves the arena".into());
    }
    Ok(())
}

/// Whether a disc of `radius` at `pose` lies on `table` and overlaps no
/// standing object (except `ignore`).
pub fn placement_free(
    state: &WorldState,
    task: &Task,
    table: &Table,
    pose: &Pose2,
    radius: f64,
    ignore: Option<ObjectId>,
) -> bool {
    if !pose.is_finite() || !table.rect.contains_disc(pose.x, pose.y, radius) {
        return false;
    }
    state
        .object_poses
        .iter()
        .filter(|(o, _)| Some(**o) != ignore)
        .all(|(o, p)| pose.dist(p) >= radius + task.objects[*o].radius - EPS)
}

/// Transition function: applies a validated effect and re-checks the state
/// invariants on the result.
pub fn apply(state: &WorldState, effect: &Effect, task: &Task) -> Result<WorldState, WorldError> {
    let mut next = state.clone();
    match *effect {
        Effect::MoveBase { to } => next.base = to,
        Effect::Pick { object, grasp, base } => {
            if state.held.is_some() {
                return Err(WorldError::InvariantViolation("pick while holding".into()));
            }
            if next.object_poses.remove(&object).is_none() {
                return Err(WorldError::InvariantViolation(format!("object {object} is not standing")));
            }
            next.held = Some(Held { object, grasp });
            next.base = base;
        }
        Effect::Place { object, pose, base } => {
            if state.holding() != Some(object) {
                return Err(WorldError::InvariantViolation(format!("object {object} is not held")));
            }
            next.held = None;
            next.object_poses.insert(object, pose);
            next.base = base;
        }
    }
    validate_state(&next, task)?;
    Ok(next)
}

/// Longest valid left-to-right prefix of the target word as
/// `(object, slot)` pairs.
pub fn words_valid_prefix(state: &WorldState, task: &Task) -> Vec<(ObjectId, usize)> {
    let word = task.word_chars();
    if word.is_empty() {
        return Vec::new();
    }
    let n = word.len();
    let mut best: Vec<(ObjectId, usize)> = Vec::new();
    let mut best_anchor: Option<Pose2> = None;
    for (&a, pa) in &state.object_poses {
        if task.letter(a) != Some(word[0]) || task.objects[a].goal.is_none() {
            continue;
        }
        let r = task.objects[a].radius;
        if !word_fits(task, pa, r, n) {
            continue;
        }
        let pitch = WORD_PITCH * r;
        let mut seq = vec![(a, 0)];
        for (k, &letter) in word.iter().enumerate().skip(1) {
            let slot = Pose2::at(pa.x + k as f64 * pitch, pa.y);
            let hit = state.object_poses.iter().find(|(&c, pc)| {
                task.letter(c) == Some(letter)
                    && !task.objects[c].goal.is_none()
                    && !seq.iter().any(|(u, _)| *u == c)
                    && pc.dist(&slot) <= WORD_TOLERANCE * r + EPS
            });
            match hit {
                Some((&c, _)) => seq.push((c, k)),
                None => break,
            }
        }
        let better = match best_anchor {
            None => true,
            Some(b) => {
                seq.len() > best.len()
                    || (seq.len() == best.len() && (pa.x, pa.y) < (b.x, b.y))
            }
        };
        if better {
            best = seq;
            best_anchor = Some(*pa);
        }
    }
    best
}

/// Whether an anchor at `anchor` leaves room for all `n` slots, each disc
/// keeping one radius of margin to the table edges.
pub fn word_fits(task: &Task, anchor: &Pose2, r: f64, n: usize) -> bool {
    let Some(t) = task.table_under(anchor, r) else {
        return false;
    };
    let inner = task.tables[t].rect.shrink(r + WORD_MARGIN * r);
    let last_x = anchor.x + (n.saturating_sub(1)) as f64 * WORD_PITCH * r;
    inner.contains_point(anchor.x, anchor.y) && inner.contains_point(last_x, anchor.y)
}

/// Slot centers of the target word for a given anchor.
pub fn word_slots(anchor: &Pose2, r: f64, n: usize) -> Vec<Pose2> {
    (0..n).map(|k| Pose2::at(anchor.x + k as f64 * WORD_PITCH * r, anchor.y)).collect()
}

/// Whether a standing object at `pose` meets its absolute goal.
pub fn meets_absolute_goal(goal: &GoalSpec, pose: &Pose2) -> bool {
    match goal {
        GoalSpec::None => true,
        GoalSpec::AbsoluteRegion { rect, .. } => rect.contains_point(pose.x, pose.y),
        GoalSpec::ExactPose { pose: g, tolerance } => pose.dist(g) <= *tolerance + EPS,
        GoalSpec::RelativeWord { .. } => false,
    }
}

/// Standing objects that violate their goal. The held object is handled by
/// the feature layer, which knows the sampled goal placements.
pub fn misplaced_set(state: &WorldState, task: &Task) -> BTreeSet<ObjectId> {
    let prefix: BTreeSet<ObjectId> = if task.family == Family::Words {
        words_valid_prefix(state, task).into_iter().map(|(o, _)| o).collect()
    } else {
        BTreeSet::new()
    };
    state
        .object_poses
        .iter()
        .filter(|(o, p)| match &task.objects[**o].goal {
            GoalSpec::None => false,
            GoalSpec::RelativeWord { .. } => !prefix.contains(o),
            g => !meets_absolute_goal(g, p),
        })
        .map(|(o, _)| *o)
        .collect()
}

pub fn is_goal(state: &WorldState, task: &Task) -> bool {
    state.held.is_none() && misplaced_set(state, task).is_empty()
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn region_left() -> GoalSpec {
        GoalSpec::AbsoluteRegion { table: 0, rect: Rect::new(-0.25, 0.0, 0.25, 0.4) }
    }

    #[test]
    fn placement_free_cases() {
        let empty = one_table(&[], Family::Sorting, None);
        let t = &empty.tables[0];
        assert!(placement_free(&empty.start, &empty, t, &Pose2::at(0.0, 0.0), 0.035, None));
        assert!(!placement_free(&empty.start, &empty, t, &Pose2::at(0.48, 0.0), 0.035, None));

        let task = one_table(&[(0.0, 0.0, "r", GoalSpec::None), (0.3, 0.0, "r", GoalSpec::None)], Family::Sorting, None);
        let t = &task.tables[0];
        let eps = 1e-4;
        // hand oracle: centers must be at least r1 + r2 = 0.07 apart
        assert!(!placement_free(&task.start, &task, t, &Pose2::at(0.07 - eps, 0.0), 0.035, None));
        assert!(placement_free(&task.start, &task, t, &Pose2::at(0.07 + eps, 0.0), 0.035, None));
        assert!(placement_free(&task.start, &task, t, &Pose2::at(0.07 - eps, 0.0), 0.035, Some(0)));
    }

    #[test]
    fn apply_move_pick_place() {
        let task = one_table(&[(0.1, 0.1, "b", region_left())], Family::Sorting, None);
        let s0 = task.start.clone();
        let moved = apply(&s0, &Effect::MoveBase { to: Pose2::at(0.0, -0.9) }, &task).unwrap();
        assert_eq!(moved.object_poses, s0.object_poses);
        assert_eq!(moved.base, Pose2::at(0.0, -0.9));

        let picked = apply(&s0, &Effect::Pick { object: 0, grasp: 0.5, base: s0.base }, &task).unwrap();
        assert_eq!(picked.holding(), Some(0));
        assert!(picked.object_poses.is_empty());
        let back = apply(&picked, &Effect::Place { object: 0, pose: Pose2::at(0.1, 0.1), base: s0.base }, &task).unwrap();
        assert_eq!(back, s0);

        let p = Pose2::at(-0.2, 0.2);
        assert!(placement_free(&picked, &task, &task.tables[0], &p, 0.035, None));
        let placed = apply(&picked, &Effect::Place { object: 0, pose: p, base: s0.base }, &task).unwrap();
        assert_eq!(placed.pose_of(0), Some(&p));
        assert!(placed.held.is_none());
    }

    #[test]
    fn apply_rejects_overlap() {
        let task = one_table(&[(0.0, 0.0, "r", GoalSpec::None), (0.3, 0.0, "r", GoalSpec::None)], Family::Sorting, None);
        let picked = apply(&task.start, &Effect::Pick { object: 1, grasp: 0.0, base: task.start.base }, &task).unwrap();
        let r = apply(&picked, &Effect::Place { object: 1, pose: Pose2::at(0.05, 0.0), base: task.start.base }, &task);
        assert!(matches!(r, Err(WorldError::InvariantViolation(_))));
    }

    #[test]
    fn misplaced_and_goal() {
        let task = one_table(
            &[(-0.2, 0.0, "b", region_left()), (0.2, 0.0, "g", region_left()), (0.0, 0.3, "r", GoalSpec::None)],
            Family::Sorting,
            None,
        );
        assert_eq!(misplaced_set(&task.start, &task), BTreeSet::from([1]));
        assert!(!is_goal(&task.start, &task));
        let mut s = task.start.clone();
        s.object_poses.insert(1, Pose2::at(-0.2, 0.2));
        assert!(is_goal(&s, &task));
        // holding a goal-free object is not a goal state
        s.object_poses.remove(&2);
        s.held = Some(Held { object: 2, grasp: 0.0 });
        assert!(!is_goal(&s, &task));
    }

    #[test]
    fn words_prefix_hand_oracle() {
        let r = 0.035;
        let pitch = WORD_PITCH * r;
        let tamp = |k: usize| GoalSpec::RelativeWord { slot: k };
        // T at x=-0.3: last slot at -0.3 + 3*0.0875 = -0.0375, inside -0.5+0.07..0.43
        let task = one_table(
            &[(-0.3, 0.0, "T", tamp(0)), (-0.3 + pitch, 0.0, "A", tamp(1)), (0.2, 0.3, "M", tamp(2)), (0.3, -0.3, "P", tamp(3))],
            Family::Words,
            Some("TAMP"),
        );
        assert_eq!(words_valid_prefix(&task.start, &task), vec![(0, 0), (1, 1)]);
        assert_eq!(misplaced_set(&task.start, &task), BTreeSet::from([2, 3]));

        // anchor too close to the right edge: P slot would overhang
        let x0 = 0.43 - 3.0 * pitch + 0.01;
        let task = one_table(
            &[(x0, 0.0, "T", tamp(0)), (x0 + pitch, 0.0, "A", tamp(1)), (-0.3, 0.3, "M", tamp(2)), (-0.3, -0.3, "P", tamp(3))],
            Family::Words,
            Some("TAMP"),
        );
        assert!(words_valid_prefix(&task.start, &task).is_empty());
        assert_eq!(misplaced_set(&task.start, &task).len(), 4);

        let empty = one_table(&[], Family::Words, Some("TAMP"));
        assert!(words_valid_prefix(&empty.start, &empty).is_empty());
    }

    #[test]
    fn words_repeated_letter_either_block() {
        let r = 0.035;
        let pitch = WORD_PITCH * r;
        let slot = |k| GoalSpec::RelativeWord { slot: k };
        let x0 = -0.35;
        for (first_o, second_o) in [(1usize, 3usize), (3, 1)] {
            let mut objs = vec![
                (x0, 0.0, "R", slot(0)),
                (0.0, 0.0, "O", slot(1)),
                (x0 + 2.0 * pitch, 0.0, "B", slot(2)),
                (0.0, 0.0, "O", slot(3)),
                (x0 + 4.0 * pitch, 0.0, "T", slot(4)),
            ];
            objs[first_o].0 = x0 + pitch;
            objs[second_o].0 = x0 + 3.0 * pitch;
            let task = one_table(&objs, Family::Words, Some("ROBOT"));
            assert_eq!(words_valid_prefix(&task.start, &task).len(), 5);
            assert!(is_goal(&task.start, &task));
        }
    }
}
