//! Exhaustive breadth-first search over grounded actions, used as an
//! optimality oracle for single subproblems.

use std::collections::{HashSet, VecDeque};

use sketchplan::bench::{generate, BenchSpec, Clutter};
use sketchplan::exec::{validate, ExecConfig, ExecCtx, Mode, PipelineStats, ValidationResult};
use sketchplan::features::compute_features;
use sketchplan::geom::Pose2;
use sketchplan::sampler::{build_roadmap, ground_actions, rng_from_seed, SampleSet, Sampler, SamplingDensity};
use sketchplan::search::graph::lazy_iw;
use sketchplan::search::tamp::{Subgoal, TampDomain};
use sketchplan::sketch::{pair_satisfies, Sketch};
use sketchplan::world::{is_goal, Task, WorldState};

type Key = (usize, Option<(usize, u64)>, Vec<(usize, usize, usize)>);

fn key(s: &WorldState, samples: &SampleSet) -> Key {
    let objects = s
        .object_poses
        .iter()
        .map(|(o, p)| {
            let r = samples.find_placement(p).expect("pose in sample set");
            (*o, r.table, r.index)
        })
        .collect();
    (samples.find_base(&s.base).expect("base in sample set"), s.held.map(|h| (h.object, h.grasp.to_bits())), objects)
}

/// Shortest action count to a state satisfying `done`, every edge fully validated.
fn bfs(ctx: &ExecCtx<'_>, start: &WorldState, done: &dyn Fn(&WorldState) -> bool) -> Option<usize> {
    let mut stats = PipelineStats::default();
    let mut rng = rng_from_seed(77);
    let mut seen = HashSet::from([key(start, ctx.samples)]);
    let mut open = VecDeque::from([(start.clone(), 0usize)]);
    while let Some((s, d)) = open.pop_front() {
        if done(&s) {
            return Some(d);
        }
        for a in ground_actions(&s, ctx.samples, ctx.task) {
            if let ValidationResult::Feasible(mp) = validate(ctx, &s, &a, Mode::Full, &mut stats, &mut rng) {
                if seen.insert(key(&mp.end_state, ctx.samples)) {
                    open.push_back((mp.end_state, d + 1));
                }
            }
        }
    }
    None
}

/// Keeps the current base and the last five others, which include the
/// ones added to reach targets.
fn at_most_six_bases(mut samples: SampleSet, state: &WorldState) -> SampleSet {
    let cur = samples.find_base(&state.base).expect("current base sampled");
    let others: Vec<Pose2> = samples.bases.iter().enumerate().filter(|(j, _)| *j != cur).map(|(_, b)| *b).collect();
    let mut bases = vec![samples.bases[cur]];
    bases.extend(others.iter().rev().take(5).rev());
    samples.roadmap = build_roadmap(&bases).0;
    samples.bases = bases;
    samples
}

/// Random small instance and a state along its solution, so that all four
/// rules show up as subgoals.
fn instance(i: u64) -> Option<(Task, WorldState)> {
    let n_goals = 1 + (i % 3) as usize;
    let n_objects = n_goals + ((i / 3) % (4 - n_goals as u64)) as usize;
    let spec = BenchSpec::sorting(1 + (i % 2) as usize, n_objects.min(3), n_goals, Clutter::Low, 100 + i);
    let task = generate(&spec).ok()?;
    let out = sketchplan::search::solve(&task, &Sketch::default(), &Default::default());
    let plan = out.plan?;
    let at = (i as usize / 2) % plan.states.len();
    Some((task, plan.states[at].clone()))
}

pub struct OracleReport {
    pub checked: usize,
    pub widest: usize,
    pub mismatches: Vec<String>,
}

/// Compares lazy IW with the BFS oracle until `n` solvable instances were
/// seen. Each sample set keeps at most six bases.
pub fn run_oracle(n: usize) -> OracleReport {
    let sketch = Sketch::default();
    let cfg = ExecConfig::default();
    let density = SamplingDensity { n_bases: 4, ..Default::default() };
    let mut rep = OracleReport { checked: 0, widest: 0, mismatches: Vec::new() };
    let mut i = 0;
    while rep.checked < n && i < 8 * n as u64 {
        i += 1;
        let Some((task, state)) = instance(i - 1) else { continue };
        if is_goal(&state, &task) {
            continue;
        }
        let Ok(samples) = Sampler::new(i).sample(&state, &task, density) else { continue };
        let samples = at_most_six_bases(samples, &state);
        let ctx = ExecCtx { task: &task, samples: &samples, cfg: &cfg };
        let from = compute_features(&ctx, &state);
        let rule = sketch.active_rule(&from).unwrap().clone();
        let done = |s: &WorldState| is_goal(s, &task) || pair_satisfies(&rule, &from, &compute_features(&ctx, s));
        let oracle = bfs(&ctx, &state, &done);

        let sub = Subgoal::Sketch { rule: rule.clone(), from };
        let mut domain = TampDomain::new(ctx, Mode::Lazy, sub, rng_from_seed(i));
        let root = domain.key_of(&state).unwrap();
        let out = lazy_iw(&mut domain, root, task.objects.len() + 1);
        let got = out.plan.map(|p| p.len());
        if got != oracle {
            rep.mismatches.push(format!("instance {i} ({}): lazy_iw {got:?}, bfs {oracle:?}", rule.id));
        }
        if oracle.is_some() {
            rep.checked += 1;
            rep.widest = rep.widest.max(out.k);
        }
    }
    rep
}
