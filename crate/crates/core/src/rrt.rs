//! RRT-Connect for a disc robot in the plane, with random shortcut
//! smoothing.

use rand::Rng;

use crate::geom::{swept_disc_clear, Pose2, Rect};
use crate::sampler::PlanRng;

#[derive(Debug, Clone, Copy)]
pub struct RrtParams {
    pub step: f64,
    pub goal_bias: f64,
    pub iter_cap: usize,
    pub shortcuts: usize,
}

impl Default for RrtParams {
    fn default() -> Self {
        RrtParams { step: 0.15, goal_bias: 0.1, iter_cap: 2000, shortcuts: 50 }
    }
}

/// Free space for the base disc: inside `arena`, clear of `obstacles`.
#[derive(Debug, Clone, Copy)]
pub struct DiscSpace<'a> {
    pub arena: &'a Rect,
    pub obstacles: &'a [Rect],
    pub radius: f64,
}

impl DiscSpace<'_> {
    pub fn point_free(&self, p: &Pose2) -> bool {
        self.arena.contains_disc(p.x, p.y, self.radius)
            && self.obstacles.iter().all(|o| !o.overlaps_disc(p.x, p.y, self.radius))
    }

    pub fn segment_free(&self, a: &Pose2, b: &Pose2) -> bool {
        if !self.point_free(a) || !self.point_free(b) {
            return false;
        }
        let steps = ((a.dist(b) / (self.radius * 0.25)).ceil() as usize).max(1);
        let inside = (0..=steps).all(|i| {
            let p = a.lerp(b, i as f64 / steps as f64);
            self.arena.contains_disc(p.x, p.y, self.radius)
        });
        inside && self.obstacles.iter().all(|o| swept_disc_clear(a, b, self.radius, o))
    }
}

pub fn path_length(path: &[Pose2]) -> f64 {
    path.windows(2).map(|w| w[0].dist(&w[1])).sum()
}

struct Tree {
    nodes: Vec<Pose2>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: Pose2) -> Self {
        Tree { nodes: vec![root], parent: vec![0] }
    }

    fn nearest(&self, p: &Pose2) -> usize {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.dist(p);
            if d < bd {
                bd = d;
                best = i;
            }
        }
        best
    }

    fn add(&mut self, p: Pose2, parent: usize) -> usize {
        self.nodes.push(p);
        self.parent.push(parent);
        self.nodes.len() - 1
    }

    fn branch(&self, mut i: usize) -> Vec<Pose2> {
        let mut out = vec![self.nodes[i]];
        while i != 0 {
            i = self.parent[i];
            out.push(self.nodes[i]);
        }
        out
    }
}

enum Extend {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

fn extend(tree: &mut Tree, target: &Pose2, space: &DiscSpace<'_>, step: f64) -> Extend {
    let near = tree.nearest(target);
    let from = tree.nodes[near];
    let d = from.dist(target);
    let (to, reached) = if d <= step { (*target, true) } else { (from.lerp(target, step / d), false) };
    if !space.segment_free(&from, &to) {
        return Extend::Trapped;
    }
    let id = tree.add(to, near);
    if reached {
        Extend::Reached(id)
    } else {
        Extend::Advanced(id)
    }
}

fn connect(tree: &mut Tree, target: &Pose2, space: &DiscSpace<'_>, step: f64) -> Extend {
    loop {
        match extend(tree, target, space, step) {
            Extend::Advanced(_) => continue,
            other => return other,
        }
    }
}

/// Plans a collision-free polyline from `start` to `goal`. Returns `None`
/// when either endpoint is invalid or the iteration cap is exhausted.
pub fn rrt_connect(
    start: &Pose2,
    goal: &Pose2,
    space: &DiscSpace<'_>,
    params: &RrtParams,
    rng: &mut PlanRng,
) -> Option<Vec<Pose2>> {
    if !space.point_free(start) || !space.point_free(goal) {
        return None;
    }
    if space.segment_free(start, goal) {
        return Some(vec![*start, *goal]);
    }
    let mut a = Tree::new(*start);
    let mut b = Tree::new(*goal);
    let mut a_is_start = true;
    for _ in 0..params.iter_cap {
        let sample = if rng.gen::<f64>() < params.goal_bias {
            b.nodes[0]
        } else {
            Pose2::at(
                space.arena.cx + rng.gen_range(-1.0..=1.0) * space.arena.hx,
                space.arena.cy + rng.gen_range(-1.0..=1.0) * space.arena.hy,
            )
        };
        let new = match extend(&mut a, &sample, space, params.step) {
            Extend::Trapped => None,
            Extend::Advanced(i) | Extend::Reached(i) => Some(i),
        };
        if let Some(ia) = new {
            let q = a.nodes[ia];
            if let Extend::Reached(ib) = connect(&mut b, &q, space, params.step) {
                let mut pa = a.branch(ia);
                pa.reverse();
                let pb = b.branch(ib);
                pa.extend(pb.into_iter().skip(1));
                if !a_is_start {
                    pa.reverse();
                }
                return Some(shortcut(pa, space, params.shortcuts, rng));
            }
        }
        std::mem::swap(&mut a, &mut b);
        a_is_start = !a_is_start;
    }
    None
}

/// Random shortcutting: `attempts` random vertex pairs, joined directly when
/// the straight segment is free.
pub fn shortcut(mut path: Vec<Pose2>, space: &DiscSpace<'_>, attempts: usize, rng: &mut PlanRng) -> Vec<Pose2> {
    for _ in 0..attempts {
        if path.len() <= 2 {
            break;
        }
        let i = rng.gen_range(0..path.len() - 2);
        let j = rng.gen_range(i + 2..path.len());
        if space.segment_free(&path[i], &path[j]) {
            path.drain(i + 1..j);
        }
    }
    path
}
