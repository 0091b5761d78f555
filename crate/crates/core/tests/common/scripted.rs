//! Scripted search graphs with designated failing edges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchplan::search::graph::{LazyIw, SearchDomain, Successor};

#[derive(Clone)]
pub struct Scripted {
    pub edges: Vec<Vec<(usize, usize, f64, bool)>>,
    pub atoms: Vec<Vec<u32>>,
    pub lazy: bool,
}

impl SearchDomain for Scripted {
    type State = usize;
    type Action = usize;
    type Atom = u32;
    type Proof = ();

    fn atoms(&mut self, s: &usize) -> Vec<u32> {
        self.atoms[*s].clone()
    }
    fn successors(&mut self, s: &usize) -> Vec<Successor<usize, usize, ()>> {
        self.edges[*s]
            .iter()
            .filter(|e| self.lazy || !e.3)
            .map(|&(a, t, c, _)| Successor { action: a, state: t, cost: c, proof: (!self.lazy).then_some(()) })
            .collect()
    }
    fn confirm(&mut self, from: &usize, a: &usize, _to: &usize) -> Option<()> {
        let e = self.edges[*from].iter().find(|e| e.0 == *a)?;
        (!e.3).then_some(())
    }
    fn is_goal(&mut self, _s: &usize) -> bool {
        false
    }
}

pub fn random_graph(seed: u64) -> Scripted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=30);
    let n_atoms = rng.gen_range(3..=12);
    let mut edges = vec![Vec::new(); n];
    let mut aid = 0;
    for (s, out) in edges.iter_mut().enumerate() {
        for _ in 0..rng.gen_range(0..=3) {
            let t = rng.gen_range(0..n);
            if t == s {
                continue;
            }
            out.push((aid, t, rng.gen_range(1..=5) as f64, rng.gen_bool(0.2)));
            aid += 1;
        }
    }
    let atoms = (0..n)
        .map(|_| (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(0..n_atoms)).collect())
        .collect();
    Scripted { edges, atoms, lazy: true }
}

/// Lazy run to exhaustion, then every failing edge with a live parent is
/// rejected and the search resumed, until none is left.
pub fn lazy_with_repairs(g: &Scripted) -> LazyIw<Scripted> {
    let mut d = g.clone();
    let mut iw = LazyIw::new(&mut d, 0, 1);
    iw.run(&mut d);
    loop {
        let mut hit = None;
        'scan: for (c, node) in iw.nodes.iter().enumerate() {
            for e in &node.parents {
                if iw.is_live(e.parent) && d.confirm(&iw.nodes[e.parent].state, &e.action, &node.state).is_none() {
                    hit = Some((e.parent, c, e.action));
                    break 'scan;
                }
            }
        }
        let Some((p, c, a)) = hit else { break };
        iw.invalidate(&mut d, p, c, &a).unwrap();
        iw.audit().unwrap();
        iw.run(&mut d);
    }
    iw
}

pub fn scratch(g: &Scripted) -> LazyIw<Scripted> {
    let mut d = g.clone();
    d.lazy = false;
    let mut iw = LazyIw::new(&mut d, 0, 1);
    iw.run(&mut d);
    iw
}

/// Seeds in `0..n` whose repaired search differs from the from-scratch one.
pub fn repair_mismatches(n: u64) -> Vec<u64> {
    (0..n)
        .filter(|&seed| {
            let g = random_graph(seed);
            lazy_with_repairs(&g).snapshot() != scratch(&g).snapshot()
        })
        .collect()
}
