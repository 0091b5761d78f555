//! The sampling function: pools of base locations, placements and grasps for
//! one subproblem, the base roadmap, and the density escalation schedule.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{point_segment_distance, wrap_angle, Pose2, Rect, EPS};
use crate::world::{
    placement_free, word_fits, word_slots, words_valid_prefix, Family, GoalSpec, ObjectId, Table, TableId, Task,
    WorldState,
};

/// Seedable generator used everywhere a random draw is made.
pub type PlanRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> PlanRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a run seed with stream identifiers (splitmix64 finalizer).
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut z = seed;
    for p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub const MAXIMIN_BATCH: usize = 32;
pub const RETRY_FACTOR: usize = 10;
pub const GOAL_SAMPLES_PER_REGION: usize = 3;
pub const MAX_PLACEMENTS_PER_TABLE: usize = 200;
pub const MAX_BASES: usize = 64;
pub const MAX_GRASPS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("sampling exhausted: found {found} of {wanted} collision-free samples")]
    SamplingExhausted { found: usize, wanted: usize },
    #[error("sampling density cap reached after {0} escalations")]
    DensityCapReached(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingDensity {
    pub n_bases: usize,
    pub n_placements_per_table: usize,
    pub n_grasps: usize,
    pub n_sops: usize,
    pub attempt: usize,
}

impl Default for SamplingDensity {
    fn default() -> Self {
        SamplingDensity { n_bases: 12, n_placements_per_table: 10, n_grasps: 4, n_sops: 1, attempt: 0 }
    }
}

/// Next density in the escalation schedule; fails once `max_escalations`
/// rounds have been used.
pub fn escalate(d: SamplingDensity, max_escalations: usize) -> Result<SamplingDensity, SamplingError> {
    if d.attempt >= max_escalations {
        return Err(SamplingError::DensityCapReached(d.attempt));
    }
    Ok(SamplingDensity {
        n_bases: ((d.n_bases as f64 * 1.25).ceil() as usize).min(MAX_BASES).max(d.n_bases),
        n_placements_per_table: ((d.n_placements_per_table as f64 * 1.5).ceil() as usize)
            .min(MAX_PLACEMENTS_PER_TABLE)
            .max(d.n_placements_per_table),
        n_grasps: (d.n_grasps + 2).min(MAX_GRASPS).max(d.n_grasps),
        n_sops: d.n_sops,
        attempt: d.attempt + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlacementRef {
    pub table: TableId,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundAction {
    Pick { base: usize, object: ObjectId, grasp: usize },
    Place { base: usize, object: ObjectId, placement: PlacementRef, sop: usize },
    MoveBase { from: usize, to: usize },
}

impl GroundAction {
    pub fn base(&self) -> usize {
        match *self {
            GroundAction::Pick { base, .. } | GroundAction::Place { base, .. } => base,
            GroundAction::MoveBase { to, .. } => to,
        }
    }

    pub fn is_manipulation(&self) -> bool {
        !matches!(self, GroundAction::MoveBase { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub bases: Vec<Pose2>,
    pub placements: Vec<Vec<Pose2>>,
    pub grasps: Vec<f64>,
    pub roadmap: Vec<Vec<usize>>,
    /// Anchor used for word goals when no valid prefix exists yet.
    pub word_anchor: Option<Pose2>,
    pub seed: u64,
    pub density: SamplingDensity,
}

impl SampleSet {
    pub fn placement(&self, r: PlacementRef) -> Pose2 {
        self.placements[r.table][r.index]
    }

    pub fn placement_refs(&self) -> impl Iterator<Item = PlacementRef> + '_ {
        self.placements
            .iter()
            .enumerate()
            .flat_map(|(t, ps)| (0..ps.len()).map(move |i| PlacementRef { table: t, index: i }))
    }

    /// Placement reference matching `pose` exactly (up to `EPS`).
    pub fn find_placement(&self, pose: &Pose2) -> Option<PlacementRef> {
        self.placement_refs().find(|r| self.placement(*r).dist(pose) <= 1e-7)
    }

    pub fn nearest_base(&self, pose: &Pose2) -> usize {
        self.bases
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.dist(pose).total_cmp(&b.1.dist(pose)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn find_base(&self, pose: &Pose2) -> Option<usize> {
        self.bases.iter().position(|b| b.dist(pose) <= 1e-7)
    }
}

fn min_dist_to(p: &Pose2, pts: &[Pose2]) -> f64 {
    pts.iter().map(|q| p.dist(q)).fold(f64::INFINITY, f64::min)
}

fn push_unique(v: &mut Vec<Pose2>, p: Pose2) {
    if !v.iter().any(|q| q.dist(&p) <= 1e-7) {
        v.push(p);
    }
}

/// Greedy maximin sampling within `region` (disc centers). Returns the poses
/// found and whether the draw budget ran out before `k` were found.
fn maximin_in(
    region: &Rect,
    k: usize,
    existing: &[Pose2],
    free: &dyn Fn(&Pose2) -> bool,
    rng: &mut PlanRng,
) -> (Vec<Pose2>, bool) {
    let mut out = Vec::with_capacity(k);
    let mut all: Vec<Pose2> = existing.to_vec();
    let budget = MAXIMIN_BATCH * k * RETRY_FACTOR;
    let mut draws = 0;
    while out.len() < k {
        let mut best: Option<(f64, Pose2)> = None;
        for _ in 0..MAXIMIN_BATCH {
            if draws >= budget {
                break;
            }
            draws += 1;
            let x = region.cx + rng.gen_range(-1.0..=1.0) * region.hx;
            let y = region.cy + rng.gen_range(-1.0..=1.0) * region.hy;
            let p = Pose2::at(x, y);
            if !free(&p) || min_dist_to(&p, &all) <= EPS {
                continue;
            }
            let d = min_dist_to(&p, &all);
            if best.map_or(true, |(bd, _)| d > bd) {
                best = Some((d, p));
            }
        }
        match best {
            Some((_, p)) => {
                out.push(p);
                all.push(p);
            }
            None if draws >= budget => return (out, true),
            None => {}
        }
    }
    (out, false)
}

/// `fixed` followed by `k` maximin placements on `table`. Candidates must be
/// collision-free against `obstacles` (center, radius) for a disc of
/// `radius`.
pub fn sample_placements(
    table: &Table,
    k: usize,
    fixed: &[Pose2],
    obstacles: &[(Pose2, f64)],
    radius: f64,
    rng: &mut PlanRng,
) -> Result<Vec<Pose2>, SamplingError> {
    let (out, exhausted) = sample_placements_partial(table, k, fixed, obstacles, radius, rng);
    if exhausted {
        return Err(SamplingError::SamplingExhausted { found: out.len() - fixed.len(), wanted: k });
    }
    Ok(out)
}

fn sample_placements_partial(
    table: &Table,
    k: usize,
    fixed: &[Pose2],
    obstacles: &[(Pose2, f64)],
    radius: f64,
    rng: &mut PlanRng,
) -> (Vec<Pose2>, bool) {
    let region = table.rect.shrink(radius);
    let free = |p: &Pose2| {
        table.rect.contains_disc(p.x, p.y, radius) && obstacles.iter().all(|(c, r)| p.dist(c) >= radius + r - EPS)
    };
    let mut existing = fixed.to_vec();
    existing.extend(obstacles.iter().map(|(c, _)| *c));
    let (new, exhausted) = maximin_in(&region, k, &existing, &free, rng);
    let mut out = fixed.to_vec();
    out.extend(new);
    (out, exhausted)
}

/// Whether a base pose is admissible: inside the arena, clear of every
/// table, and within arm reach of at least one table.
pub fn base_admissible(task: &Task, p: &Pose2) -> bool {
    let br = task.robot.base_radius;
    task.arena.contains_disc(p.x, p.y, br)
        && task.tables.iter().all(|t| !t.rect.overlaps_disc(p.x, p.y, br))
        && task.tables.iter().any(|t| t.rect.distance_to(p.x, p.y) <= task.robot.reach_max)
}

/// Table edge pieces of length at most `reach_max` used by the base
/// coverage check.
pub fn edge_segments(task: &Task) -> Vec<(TableId, Pose2, Pose2)> {
    let mut out = Vec::new();
    for t in &task.tables {
        for (a, b) in t.rect.edges() {
            let n = (a.dist(&b) / task.robot.reach_max).ceil().max(1.0) as usize;
            for i in 0..n {
                out.push((t.id, a.lerp(&b, i as f64 / n as f64), a.lerp(&b, (i + 1) as f64 / n as f64)));
            }
        }
    }
    out
}

pub fn bases_cover_edges(task: &Task, bases: &[Pose2]) -> bool {
    edge_segments(task)
        .iter()
        .all(|(_, a, b)| bases.iter().any(|p| point_segment_distance(p, a, b) <= task.robot.reach_max))
}

fn draw_base(task: &Task, near: Option<(&Pose2, &Pose2)>, rng: &mut PlanRng) -> Option<Pose2> {
    let reach = task.robot.reach_max;
    for _ in 0..10_000 {
        let (x, y) = match near {
            Some((a, b)) => {
                let t: f64 = rng.gen();
                let c = a.lerp(b, t);
                (c.x + rng.gen_range(-reach..=reach), c.y + rng.gen_range(-reach..=reach))
            }
            None => (
                task.arena.cx + rng.gen_range(-1.0..=1.0) * task.arena.hx,
                task.arena.cy + rng.gen_range(-1.0..=1.0) * task.arena.hy,
            ),
        };
        let theta = rng.gen_range(-PI..PI);
        let p = Pose2::new(x, y, theta);
        let ok_near = near.map_or(true, |(a, b)| point_segment_distance(&p, a, b) <= reach);
        if ok_near && base_admissible(task, &p) {
            return Some(p);
        }
    }
    None
}

/// `k` base poses in the manipulation band, always starting with
/// `current`. Extra poses are appended when needed to cover every table
/// edge piece.
pub fn sample_bases(task: &Task, current: &Pose2, k: usize, rng: &mut PlanRng) -> Result<Vec<Pose2>, SamplingError> {
    let k = k.max(1);
    let mut bases = vec![*current];
    for _ in 1..k {
        match draw_base(task, None, rng) {
            Some(p) => bases.push(p),
            None => return Err(SamplingError::SamplingExhausted { found: bases.len(), wanted: k }),
        }
    }
    if k > 1 {
        let segs = edge_segments(task);
        for (_, a, b) in &segs {
            if !bases.iter().any(|p| point_segment_distance(p, a, b) <= task.robot.reach_max) {
                match draw_base(task, Some((a, b)), rng) {
                    Some(p) => bases.push(p),
                    None => return Err(SamplingError::SamplingExhausted { found: bases.len(), wanted: k }),
                }
            }
        }
    }
    Ok(bases)
}

/// Heading cone used when adding bases for a grasp direction.
pub const COVER_HALF_CONE: f64 = PI / 4.0;

/// Adds bases until every target can be approached with every grasp from
/// some base within reach. Returns whether any base was added.
pub fn cover_targets(task: &Task, bases: &mut Vec<Pose2>, targets: &[Pose2], grasps: &[f64], rng: &mut PlanRng) -> bool {
    let r = &task.robot;
    let covered = |bases: &[Pose2], t: &Pose2, g: f64| {
        bases.iter().any(|b| {
            let d = b.dist(t);
            d >= r.reach_min && d <= r.reach_max && wrap_angle(b.heading_to(t) - g).abs() <= COVER_HALF_CONE
        })
    };
    let mut added = false;
    for t in targets {
        for &g in grasps {
            if bases.len() >= MAX_BASES || covered(bases, t, g) {
                continue;
            }
            for _ in 0..RETRY_FACTOR * 5 {
                let h = g + rng.gen_range(-COVER_HALF_CONE..=COVER_HALF_CONE);
                let d = rng.gen_range(r.reach_min + r.base_radius..=r.reach_max - EPS.max(1e-3));
                let b = Pose2::new(t.x - d * h.cos(), t.y - d * h.sin(), h);
                if base_admissible(task, &b) {
                    bases.push(b);
                    added = true;
                    break;
                }
            }
        }
    }
    added
}

/// Symmetric adjacency over base indices: pairs closer than `d_max`, where
/// `d_max` starts at twice the mean nearest-neighbour distance and doubles
/// until the graph is connected.
pub fn build_roadmap(bases: &[Pose2]) -> (Vec<Vec<usize>>, f64) {
    let n = bases.len();
    if n <= 1 {
        return (vec![Vec::new(); n], 0.0);
    }
    let mean_nn = bases
        .iter()
        .enumerate()
        .map(|(i, p)| {
            bases
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| p.dist(q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / n as f64;
    let mut d_max = (2.0 * mean_nn).max(1e-6);
    loop {
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && bases[i].dist(&bases[j]) <= d_max + EPS).collect())
            .collect();
        if connected(&adj) {
            return (adj, d_max);
        }
        d_max *= 2.0;
    }
}

fn connected(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Every grounded action relevant in `state`. Executability is not checked.
pub fn ground_actions(state: &WorldState, samples: &SampleSet, _task: &Task) -> Vec<GroundAction> {
    let mut out = Vec::new();
    let nb = samples.bases.len();
    match state.held {
        None => {
            for &o in state.object_poses.keys() {
                for g in 0..samples.grasps.len() {
                    for b in 0..nb {
                        out.push(GroundAction::Pick { base: b, object: o, grasp: g });
                    }
                }
            }
        }
        Some(h) => {
            for r in samples.placement_refs() {
                for b in 0..nb {
                    out.push(GroundAction::Place { base: b, object: h.object, placement: r, sop: 0 });
                }
            }
        }
    }
    let here = samples.nearest_base(&state.base);
    for &to in &samples.roadmap[here] {
        out.push(GroundAction::MoveBase { from: here, to });
    }
    out
}

/// Goal anchor for a word when no valid prefix exists: a maximin sample of
/// the admissible anchor area that keeps every slot free.
fn sample_word_anchor(state: &WorldState, task: &Task, rng: &mut PlanRng) -> Option<Pose2> {
    let n = task.word_chars().len();
    let r = task.max_radius();
    let mut best: Option<(f64, Pose2)> = None;
    for t in &task.tables {
        let area = t.rect.shrink(2.0 * r);
        for _ in 0..MAXIMIN_BATCH * RETRY_FACTOR {
            let p = Pose2::at(area.cx + rng.gen_range(-1.0..=1.0) * area.hx, area.cy + rng.gen_range(-1.0..=1.0) * area.hy);
            if !word_fits(task, &p, r, n) {
                continue;
            }
            let slots = word_slots(&p, r, n);
            // free slots count first, then clearance
            let occupied = slots
                .iter()
                .filter(|s| !placement_free(state, task, t, s, r, state.holding()))
                .count();
            let clearance = slots
                .iter()
                .map(|s| min_dist_to(s, &state.object_poses.values().copied().collect::<Vec<_>>()))
                .fold(f64::INFINITY, f64::min);
            let score = -(occupied as f64) * 100.0 + clearance.min(1.0);
            if best.map_or(true, |(b, _)| score > b) {
                best = Some((score, p));
            }
        }
    }
    best.map(|(_, p)| p)
}

/// Goal poses that currently serve `object`, derived from its goal and the
/// sample set (region samples, exact pose or word slots).
pub fn goal_poses(state: &WorldState, task: &Task, samples: &SampleSet, object: ObjectId) -> Vec<(TableId, Pose2)> {
    let obj = task.object(object);
    match &obj.goal {
        GoalSpec::None => Vec::new(),
        GoalSpec::AbsoluteRegion { table, rect } => samples.placements[*table]
            .iter()
            .filter(|p| rect.contains_point(p.x, p.y))
            .map(|p| (*table, *p))
            .collect(),
        GoalSpec::ExactPose { pose, .. } => task
            .table_under(pose, obj.radius)
            .map(|t| vec![(t, *pose)])
            .unwrap_or_default(),
        GoalSpec::RelativeWord { .. } => word_next_slots(state, task, samples, object),
    }
}

/// Slots that would extend the current valid word prefix with `object`.
pub fn word_next_slots(state: &WorldState, task: &Task, samples: &SampleSet, object: ObjectId) -> Vec<(TableId, Pose2)> {
    let word = task.word_chars();
    let r = task.object(object).radius;
    let prefix = words_valid_prefix(state, task);
    if prefix.iter().any(|(o, _)| *o == object) || task.letter(object).is_none() {
        return Vec::new();
    }
    let anchor = match prefix.first() {
        Some((a, _)) => state.object_poses.get(a).copied(),
        None => samples.word_anchor,
    };
    let Some(anchor) = anchor else { return Vec::new() };
    let k = prefix.len();
    if k >= word.len() || Some(word[k]) != task.letter(object) {
        return Vec::new();
    }
    let slot = word_slots(&anchor, r, word.len())[k];
    task.table_under(&slot, r).map(|t| vec![(t, slot)]).unwrap_or_default()
}

/// All word slot positions from the current prefix end onward, used to seed
/// placements.
fn word_open_slots(state: &WorldState, task: &Task, anchor: Option<Pose2>) -> Vec<Pose2> {
    let n = task.word_chars().len();
    let r = task.max_radius();
    let prefix = words_valid_prefix(state, task);
    let anchor = match prefix.first() {
        Some((a, _)) => state.object_poses.get(a).copied(),
        None => anchor,
    };
    match anchor {
        Some(a) => word_slots(&a, r, n).into_iter().skip(prefix.len()).collect(),
        None => Vec::new(),
    }
}

/// Owns the per-run sampling stream. Bases and grasps persist across
/// subproblems until the density changes; placements are redrawn per call.
#[derive(Debug, Clone)]
pub struct Sampler {
    seed: u64,
    calls: u64,
    cached: Option<(SamplingDensity, Vec<Pose2>, Vec<f64>)>,
    /// Word anchor, kept until the density changes so a held letter's slot
    /// does not move between subproblems.
    anchor: Option<(SamplingDensity, Pose2)>,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler { seed, calls: 0, cached: None, anchor: None }
    }

    pub fn sample(&mut self, state: &WorldState, task: &Task, density: SamplingDensity) -> Result<SampleSet, SamplingError> {
        let seed = derive_seed(self.seed, &[self.calls, density.attempt as u64]);
        self.calls += 1;
        let mut rng = rng_from_seed(seed);

        let reuse = matches!(&self.cached, Some((d, bases, _)) if *d == density && bases.iter().any(|b| b.dist(&state.base) <= 1e-7));
        let (mut bases, grasps) = if reuse {
            let (_, b, g) = self.cached.clone().unwrap();
            (b, g)
        } else {
            let bases = sample_bases(task, &state.base, density.n_bases, &mut rng)?;
            let phase = rng.gen_range(-PI..PI);
            let n = density.n_grasps.max(1);
            let grasps = (0..n).map(|i| wrap_angle(phase + 2.0 * PI * i as f64 / n as f64)).collect::<Vec<_>>();
            self.cached = Some((density, bases.clone(), grasps.clone()));
            (bases, grasps)
        };
        let word_anchor = match self.anchor {
            _ if task.family != Family::Words => None,
            Some((d, a)) if d == density => Some(a),
            _ => {
                let a = sample_word_anchor(state, task, &mut rng);
                self.anchor = a.map(|a| (density, a));
                a
            }
        };
        let radius = task.max_radius();
        let obstacles: Vec<(Pose2, f64)> =
            state.object_poses.iter().map(|(o, p)| (*p, task.object(*o).radius)).collect();

        let mut placements = Vec::with_capacity(task.tables.len());
        let mut targets = Vec::new();
        for table in &task.tables {
            let mut fixed = Vec::new();
            for (o, p) in &state.object_poses {
                if task.table_under(p, task.object(*o).radius) == Some(table.id) {
                    push_unique(&mut fixed, *p);
                }
            }
            for obj in &task.objects {
                match &obj.goal {
                    GoalSpec::AbsoluteRegion { table: t, rect } if *t == table.id => {
                        let region = rect.shrink(0.0);
                        let inner = Rect::new(
                            region.cx,
                            region.cy,
                            (region.hx.min(table.rect.hx - radius)).max(0.0),
                            (region.hy.min(table.rect.hy - radius)).max(0.0),
                        );
                        let free = |p: &Pose2| {
                            rect.contains_point(p.x, p.y)
                                && placement_free(state, task, table, p, radius, None)
                        };
                        let mut existing = fixed.clone();
                        existing.extend(obstacles.iter().map(|(c, _)| *c));
                        let (goal, _) = maximin_in(&inner, GOAL_SAMPLES_PER_REGION, &existing, &free, &mut rng);
                        for p in goal {
                            push_unique(&mut fixed, p);
                        }
                    }
                    GoalSpec::ExactPose { pose, .. } if task.table_under(pose, obj.radius) == Some(table.id) => {
                        push_unique(&mut fixed, Pose2::at(pose.x, pose.y));
                    }
                    _ => {}
                }
            }
            if task.family == Family::Words {
                for s in word_open_slots(state, task, word_anchor) {
                    if task.table_under(&s, radius) == Some(table.id) {
                        push_unique(&mut fixed, s);
                    }
                }
            }
            targets.extend(fixed.iter().copied());
            let mut obst = obstacles.clone();
            obst.retain(|(c, _)| table.rect.distance_to(c.x, c.y) <= radius * 4.0);
            let (ps, _) = sample_placements_partial(table, density.n_placements_per_table, &fixed, &obst, radius, &mut rng);
            placements.push(ps);
        }
        if cover_targets(task, &mut bases, &targets, &grasps, &mut rng) {
            self.cached = Some((density, bases.clone(), grasps.clone()));
        }
        let (roadmap, _) = build_roadmap(&bases);

        Ok(SampleSet { bases, placements, grasps, roadmap, word_anchor, seed, density })
    }
}
