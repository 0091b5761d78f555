//! The pick-and-place problem as a [`SearchDomain`]: discrete state keys
//! over one sample set, `F_H` atoms, subgoal predicates and edge
//! validation through the executability pipeline.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::exec::{estimated_cost, full_stage, validate, ExecCtx, Mode, MotionPlan, PipelineStats, ValidationResult};
use crate::features::compute_features;
use crate::sampler::{ground_actions, GroundAction, PlacementRef, PlanRng};
use crate::search::graph::{SearchDomain, Successor};
use crate::sketch::{pair_satisfies, FeatureVec, SketchRule};
use crate::world::{is_goal, misplaced_set, ObjectId, WorldState};

/// Where an object is, in sample-set terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spot {
    Placement(PlacementRef),
    Held,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Atom {
    RobotAt(usize),
    ObjectAt(ObjectId, Spot),
}

/// Discrete state: base index, held object with grasp bits, and the
/// placement of every standing object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub base: usize,
    pub held: Option<(ObjectId, u64)>,
    pub objects: Vec<(ObjectId, PlacementRef)>,
}

impl StateKey {
    /// Part of the key the sketch features depend on.
    fn scene(&self) -> (Option<(ObjectId, u64)>, Vec<(ObjectId, PlacementRef)>) {
        (self.held, self.objects.clone())
    }
}

/// What counts as reaching the end of a subproblem.
#[derive(Debug, Clone)]
pub enum Subgoal {
    /// The task goal, or a feature pair satisfying `rule` from `from`.
    Sketch { rule: SketchRule, from: FeatureVec },
    /// The task goal, or `!H` with fewer misplaced objects than `m`.
    GoalCount { m: usize },
}

pub struct TampDomain<'a> {
    pub ctx: ExecCtx<'a>,
    pub mode: Mode,
    pub subgoal: Subgoal,
    pub stats: PipelineStats,
    rng: PlanRng,
    worlds: HashMap<StateKey, WorldState>,
    features: HashMap<(Option<(ObjectId, u64)>, Vec<(ObjectId, PlacementRef)>), FeatureVec>,
}

impl<'a> TampDomain<'a> {
    pub fn new(ctx: ExecCtx<'a>, mode: Mode, subgoal: Subgoal, rng: PlanRng) -> Self {
        TampDomain {
            ctx,
            mode,
            subgoal,
            stats: PipelineStats::default(),
            rng,
            worlds: HashMap::new(),
            features: HashMap::new(),
        }
    }

    /// Registers `state` and returns its key. Fails when the base or an
    /// object pose is not part of the sample set.
    pub fn key_of(&mut self, state: &WorldState) -> Option<StateKey> {
        let samples = self.ctx.samples;
        let base = samples.find_base(&state.base)?;
        let mut objects = Vec::with_capacity(state.object_poses.len());
        for (o, p) in &state.object_poses {
            objects.push((*o, samples.find_placement(p)?));
        }
        let key = StateKey { base, held: state.held.map(|h| (h.object, h.grasp.to_bits())), objects };
        self.worlds.entry(key.clone()).or_insert_with(|| state.clone());
        Some(key)
    }

    pub fn world(&self, key: &StateKey) -> &WorldState {
        &self.worlds[key]
    }

    pub fn features(&mut self, key: &StateKey) -> FeatureVec {
        let scene = key.scene();
        if let Some(f) = self.features.get(&scene) {
            return *f;
        }
        let f = compute_features(&self.ctx, &self.worlds[key]);
        self.features.insert(scene, f);
        f
    }

    fn successor_key(&self, key: &StateKey, action: &GroundAction, end: &WorldState) -> StateKey {
        let mut k = key.clone();
        match *action {
            GroundAction::Pick { base, object, .. } => {
                k.base = base;
                k.objects.retain(|(o, _)| *o != object);
                k.held = end.held.map(|h| (h.object, h.grasp.to_bits()));
            }
            GroundAction::Place { base, object, placement, .. } => {
                k.base = base;
                k.held = None;
                let at = k.objects.partition_point(|(o, _)| *o < object);
                k.objects.insert(at, (object, placement));
            }
            GroundAction::MoveBase { to, .. } => k.base = to,
        }
        k
    }
}

impl SearchDomain for TampDomain<'_> {
    type State = StateKey;
    type Action = GroundAction;
    type Atom = Atom;
    type Proof = MotionPlan;

    fn atoms(&mut self, s: &StateKey) -> Vec<Atom> {
        let mut out = Vec::with_capacity(s.objects.len() + 2);
        out.push(Atom::RobotAt(s.base));
        if let Some((o, _)) = s.held {
            out.push(Atom::ObjectAt(o, Spot::Held));
        }
        out.extend(s.objects.iter().map(|(o, p)| Atom::ObjectAt(*o, Spot::Placement(*p))));
        out
    }

    fn successors(&mut self, s: &StateKey) -> Vec<Successor<StateKey, GroundAction, MotionPlan>> {
        let world = self.worlds[s].clone();
        let mut out = Vec::new();
        for action in ground_actions(&world, self.ctx.samples, self.ctx.task) {
            let (end, proof) = match validate(&self.ctx, &world, &action, self.mode, &mut self.stats, &mut self.rng) {
                ValidationResult::ProvisionallyFeasible { end_state, .. } => (end_state, None),
                ValidationResult::Feasible(plan) => (plan.end_state.clone(), Some(plan)),
                ValidationResult::Infeasible(_) => continue,
            };
            let key = self.successor_key(s, &action, &end);
            let cost = estimated_cost(&self.ctx, &world, &action);
            self.worlds.entry(key.clone()).or_insert(end);
            out.push(Successor { action, state: key, cost, proof });
        }
        out
    }

    fn confirm(&mut self, from: &StateKey, action: &GroundAction, to: &StateKey) -> Option<MotionPlan> {
        let world = &self.worlds[from];
        match full_stage(&self.ctx, world, action, &mut self.stats, &mut self.rng) {
            ValidationResult::Feasible(plan) if self.successor_key(from, action, &plan.end_state) == *to => Some(plan),
            _ => None,
        }
    }

    fn is_goal(&mut self, s: &StateKey) -> bool {
        if is_goal(&self.worlds[s], self.ctx.task) {
            return true;
        }
        match self.subgoal.clone() {
            Subgoal::Sketch { rule, from } => {
                let f = self.features(s);
                pair_satisfies(&rule, &from, &f)
            }
            Subgoal::GoalCount { m } => {
                let w = &self.worlds[s];
                w.held.is_none() && misplaced_set(w, self.ctx.task).len() < m
            }
        }
    }
}
