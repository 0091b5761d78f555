use sketchplan::bench::{generate, BenchSpec, Clutter};
use sketchplan::exec::ExecConfig;
use sketchplan::replay::{replay, Violation};
use sketchplan::search::{solve, Plan, PlannerConfig};
use sketchplan::sketch::Sketch;
use sketchplan::world::Effect;

fn solved(spec: &BenchSpec) -> (sketchplan::world::Task, Plan) {
    let task = generate(spec).unwrap();
    let out = solve(&task, &Sketch::default(), &PlannerConfig { seed: spec.seed, ..Default::default() });
    (task, out.plan.expect("solved"))
}

#[test]
fn fresh_plans_replay() {
    for spec in [
        BenchSpec::sorting(3, 2, 2, Clutter::Low, 1),
        BenchSpec::nonmonotonic(2),
        BenchSpec::words("TAMP", 3),
    ] {
        let (task, plan) = solved(&spec);
        assert_eq!(replay(&task, &plan, &ExecConfig::default()), Ok(()), "{}", spec.label());
    }
}

#[test]
fn placement_into_collision_is_caught() {
    let (task, mut plan) = solved(&BenchSpec::sorting(1, 8, 2, Clutter::High, 0));
    let i = plan.steps.iter().position(|s| matches!(s.action, Effect::Place { .. })).unwrap();
    let Effect::Place { object, base, .. } = plan.steps[i].action else { unreachable!() };
    // drop it on top of another standing object
    let (_, other) = plan.states[i].object_poses.iter().find(|(o, _)| **o != object).unwrap();
    plan.steps[i].action = Effect::Place { object, pose: *other, base };
    let v = replay(&task, &plan, &ExecConfig::default()).unwrap_err();
    assert_eq!(v.index(), Some(i), "{v}");
}

#[test]
fn empty_plan_on_open_task() {
    let task = generate(&BenchSpec::sorting(3, 2, 2, Clutter::Low, 0)).unwrap();
    let plan = Plan::empty(0, task.start.clone());
    assert_eq!(replay(&task, &plan, &ExecConfig::default()), Err(Violation::NotGoal));
}

#[test]
fn wrong_start_is_caught() {
    let (task, mut plan) = solved(&BenchSpec::sorting(3, 2, 2, Clutter::Low, 0));
    plan.states[0].base.x += 0.05;
    assert_eq!(replay(&task, &plan, &ExecConfig::default()), Err(Violation::Start));
}

#[test]
fn goal_start_needs_nothing() {
    let (task, plan) = solved(&BenchSpec::sorting(3, 2, 2, Clutter::Low, 0));
    let mut done = task.clone();
    done.start = plan.states.last().unwrap().clone();
    let out = solve(&done, &Sketch::default(), &PlannerConfig::default());
    let p = out.plan.unwrap();
    assert!(p.is_empty() && p.subplans.is_empty());
    assert_eq!(replay(&done, &p, &ExecConfig::default()), Ok(()));
}
