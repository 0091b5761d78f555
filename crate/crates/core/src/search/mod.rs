//! Planners: lazy width-based search and the sketch-driven outer loop.

pub mod graph;
pub mod tamp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{effect_of, ExecConfig, ExecCtx, Mode, PipelineStats};
use crate::features::compute_features;
use crate::geom::Pose2;
use crate::sampler::{derive_seed, escalate, rng_from_seed, Sampler, SamplingDensity, SamplingError};
use crate::sketch::{FeatureVec, Sketch, SketchError};
use crate::world::{apply, is_goal, misplaced_set, Effect, Task, WorldError, WorldState};

use graph::{LazyIw, SearchDomain};
use tamp::{Subgoal, TampDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Planner {
    #[serde(rename = "lazy-siiwr")]
    LazySiiwr,
    #[serde(rename = "siwr-full")]
    SiwrFull,
    #[serde(rename = "siw-baseline")]
    SiwBaseline,
}

impl Planner {
    pub const ALL: [Planner; 3] = [Planner::LazySiiwr, Planner::SiwrFull, Planner::SiwBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Planner::LazySiiwr => "lazy-siiwr",
            Planner::SiwrFull => "siwr-full",
            Planner::SiwBaseline => "siw-baseline",
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            Planner::LazySiiwr => Mode::Lazy,
            _ => Mode::Full,
        }
    }
}

impl fmt::Display for Planner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Planner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Planner::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown planner `{s}` (expected lazy-siiwr, siwr-full or siw-baseline)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub planner: Planner,
    pub seed: u64,
    pub density: SamplingDensity,
    pub escalation_max: usize,
    pub exec: ExecConfig,
    /// Node expansions allowed per IW(k) round.
    pub max_expansions: usize,
    pub max_subplans: usize,
    /// Width cap; `None` means one more than the number of objects.
    pub k_max: Option<usize>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            planner: Planner::LazySiiwr,
            seed: 0,
            density: SamplingDensity::default(),
            escalation_max: 8,
            exec: ExecConfig::default(),
            max_expansions: 2000,
            max_subplans: 200,
            k_max: None,
        }
    }
}

/// One resolved action of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub action: Effect,
    pub base_path: Vec<Pose2>,
    pub cost: f64,
}

/// Boundaries and feature transition of one solved subproblem. Actions
/// `start..end` belong to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subplan {
    pub start: usize,
    pub end: usize,
    pub rule: Option<String>,
    pub features_before: FeatureVec,
    pub features_after: FeatureVec,
    pub k: usize,
    pub escalations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub seed: u64,
    pub steps: Vec<PlanStep>,
    /// One more than `steps`.
    pub states: Vec<WorldState>,
    pub total_cost: f64,
    pub subplans: Vec<Subplan>,
}

impl Plan {
    pub fn empty(seed: u64, start: WorldState) -> Plan {
        Plan { seed, steps: Vec::new(), states: vec![start], total_cost: 0.0, subplans: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Folds the resolved actions over the first state and compares with
    /// the stored states.
    pub fn check_states(&self, task: &Task) -> Result<(), (usize, WorldError)> {
        let mut s = self.states[0].clone();
        for (i, st) in self.steps.iter().enumerate() {
            s = apply(&s, &st.action, task).map_err(|e| (i, e))?;
            if self.states.get(i + 1) != Some(&s) {
                return Err((i, WorldError::InvariantViolation("state sequence does not match actions".into())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub planner: String,
    pub seed: u64,
    pub success: bool,
    pub failure: Option<String>,
    pub expanded_nodes: usize,
    pub generated_nodes: usize,
    pub subplans: usize,
    pub plan_actions: usize,
    pub plan_cost: f64,
    pub escalations: usize,
    /// Largest width any IW round ran with.
    pub max_k: usize,
    pub rejected_edges: usize,
    /// IW rounds started.
    pub iterations: usize,
    pub stats: PipelineStats,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error("subplan cap of {0} reached")]
    SubplanCap(usize),
    #[error("start state off the sample set")]
    Unkeyed,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub plan: Option<Plan>,
    pub metrics: RunMetrics,
    pub error: Option<PlanError>,
}

struct SubResult {
    steps: Vec<PlanStep>,
    states: Vec<WorldState>,
    before: FeatureVec,
    after: FeatureVec,
    rule: Option<String>,
    k: usize,
}

/// Runs the configured planner on `task`.
pub fn solve(task: &Task, sketch: &Sketch, cfg: &PlannerConfig) -> RunOutcome {
    let mut metrics = RunMetrics { planner: cfg.planner.name().to_string(), seed: cfg.seed, ..Default::default() };
    let res = serialized(task, sketch, cfg, &mut metrics);
    match res {
        Ok(plan) => {
            metrics.success = true;
            metrics.subplans = plan.subplans.len();
            metrics.plan_actions = plan.len();
            metrics.plan_cost = plan.total_cost;
            RunOutcome { plan: Some(plan), metrics, error: None }
        }
        Err(e) => {
            metrics.failure = Some(e.to_string());
            RunOutcome { plan: None, metrics, error: Some(e) }
        }
    }
}

/// Sketch-driven serialized search: lazy (`LazySiiwr`) or full (`SiwrFull`)
/// edge validation.
pub fn siwr(task: &Task, sketch: &Sketch, cfg: &PlannerConfig) -> RunOutcome {
    let cfg = PlannerConfig { planner: if cfg.planner == Planner::SiwBaseline { Planner::LazySiiwr } else { cfg.planner }, ..cfg.clone() };
    solve(task, sketch, &cfg)
}

/// Serialized search on goal counting.
pub fn siw_baseline(task: &Task, cfg: &PlannerConfig) -> RunOutcome {
    let cfg = PlannerConfig { planner: Planner::SiwBaseline, ..cfg.clone() };
    solve(task, &Sketch::default(), &cfg)
}

fn serialized(task: &Task, sketch: &Sketch, cfg: &PlannerConfig, metrics: &mut RunMetrics) -> Result<Plan, PlanError> {
    let mut sampler = Sampler::new(cfg.seed);
    let mut plan = Plan::empty(cfg.seed, task.start.clone());
    let mut state = task.start.clone();
    while !is_goal(&state, task) {
        if plan.subplans.len() >= cfg.max_subplans {
            return Err(PlanError::SubplanCap(cfg.max_subplans));
        }
        let index = plan.subplans.len() as u64;
        let mut density = cfg.density;
        let mut escalations = 0;
        let sub = loop {
            let attempt = sampler.sample(&state, task, density).map_err(PlanError::from).and_then(|samples| {
                let rng = rng_from_seed(derive_seed(cfg.seed, &[0x5eed, index, density.attempt as u64]));
                subproblem(task, sketch, cfg, &state, &samples, rng, metrics)
            });
            match attempt {
                Ok(Some(sub)) => break sub,
                Ok(None) | Err(PlanError::Sampling(SamplingError::SamplingExhausted { .. })) => {
                    density = escalate(density, cfg.escalation_max)?;
                    escalations += 1;
                    metrics.escalations += 1;
                }
                Err(e) => return Err(e),
            }
        };
        let start = plan.steps.len();
        plan.total_cost += sub.steps.iter().map(|s| s.cost).sum::<f64>();
        plan.steps.extend(sub.steps);
        plan.states.extend(sub.states);
        state = plan.states.last().cloned().expect("plan has states");
        plan.subplans.push(Subplan {
            start,
            end: plan.steps.len(),
            rule: sub.rule,
            features_before: sub.before,
            features_after: sub.after,
            k: sub.k,
            escalations,
        });
    }
    Ok(plan)
}

/// IW(1), IW(2), ... on one subproblem and sample set. `Ok(None)` when every
/// width fails.
fn subproblem(
    task: &Task,
    sketch: &Sketch,
    cfg: &PlannerConfig,
    state: &WorldState,
    samples: &crate::sampler::SampleSet,
    rng: crate::sampler::PlanRng,
    metrics: &mut RunMetrics,
) -> Result<Option<SubResult>, PlanError> {
    let ctx = ExecCtx { task, samples, cfg: &cfg.exec };
    let before = compute_features(&ctx, state);
    let (subgoal, rule) = match cfg.planner {
        Planner::SiwBaseline => (Subgoal::GoalCount { m: misplaced_set(state, task).len() }, None),
        _ => {
            let r = sketch.active_rule(&before)?;
            (Subgoal::Sketch { rule: r.clone(), from: before }, Some(r.id.clone()))
        }
    };
    let mut domain = TampDomain::new(ctx, cfg.planner.mode(), subgoal, rng);
    let root = domain.key_of(state).ok_or(PlanError::Unkeyed)?;
    let k_max = cfg.k_max.unwrap_or(task.objects.len() + 1).max(1);
    let mut found = None;
    for k in 1..=k_max {
        metrics.iterations += 1;
        metrics.max_k = metrics.max_k.max(k);
        let mut iw = LazyIw::new(&mut domain, root.clone(), k);
        let res = if domain.is_goal(&root) { Some(Vec::new()) } else { iw.step(&mut domain, cfg.max_expansions) };
        metrics.expanded_nodes += iw.expanded;
        metrics.generated_nodes += iw.nodes.len();
        metrics.rejected_edges += iw.rejected;
        if let Some(p) = res {
            found = Some((p, k));
            break;
        }
    }
    metrics.stats.merge(&domain.stats);
    let Some((edges, k)) = found else { return Ok(None) };
    let mut steps = Vec::with_capacity(edges.len());
    let mut states = Vec::with_capacity(edges.len());
    for e in &edges {
        let from = domain.world(&e.from).clone();
        let motion = e.proof.clone().expect("plan edges are validated");
        let action = effect_of(&ctx, &from, &e.action).expect("validated action has an effect");
        steps.push(PlanStep { action, base_path: motion.base_path.clone(), cost: motion.cost });
        states.push(motion.end_state);
    }
    let last = edges.last().map_or(root, |e| e.to.clone());
    let after = domain.features(&last);
    Ok(Some(SubResult { steps, states, before, after, rule, k }))
}
