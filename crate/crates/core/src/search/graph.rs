//! Width-based search with lazy edge validation over an abstract domain:
//! the novelty table with main and backup supporters, the multi-parent
//! search graph, backward plan validation and novelty repair.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;

pub type NodeId = usize;

/// Minimal positive edge cost; keeps best-parent chains acyclic.
pub const MIN_EDGE_COST: f64 = 1e-9;

/// A successor proposed by a domain. `proof` is present when the edge has
/// already been fully validated.
#[derive(Debug, Clone)]
pub struct Successor<S, A, P> {
    pub action: A,
    pub state: S,
    pub cost: f64,
    pub proof: Option<P>,
}

pub trait SearchDomain {
    type State: Clone + Eq + Hash + Ord + Debug;
    type Action: Clone + PartialEq + Debug;
    type Atom: Clone + Ord + Debug;
    type Proof: Clone + Debug;

    fn atoms(&mut self, s: &Self::State) -> Vec<Self::Atom>;
    /// Successors that passed the (possibly relaxed) validation, in a fixed order.
    fn successors(&mut self, s: &Self::State) -> Vec<Successor<Self::State, Self::Action, Self::Proof>>;
    /// Full validation of a provisional edge.
    fn confirm(&mut self, from: &Self::State, action: &Self::Action, to: &Self::State) -> Option<Self::Proof>;
    fn is_goal(&mut self, s: &Self::State) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeStatus {
    Provisional,
    Confirmed,
}

#[derive(Debug, Clone)]
pub struct ParentEdge<A, P> {
    pub parent: NodeId,
    pub action: A,
    pub cost: f64,
    pub status: EdgeStatus,
    pub proof: Option<P>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Open,
    Closed,
    Pruned,
    Orphan,
}

#[derive(Debug, Clone)]
pub struct SearchNode<S, A, P> {
    pub id: NodeId,
    pub state: S,
    /// In discovery order; the preferred parent is chosen by cost at access time.
    pub parents: Vec<ParentEdge<A, P>>,
    pub successors: Vec<NodeId>,
    pub status: NodeStatus,
    pub g: f64,
    pub connected_to_goal: Option<NodeId>,
    pub goal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoveltyEntry {
    pub main: NodeId,
    /// Other supporters; node ids grow with generation order, so the first
    /// is the oldest.
    pub backups: BTreeSet<NodeId>,
}

/// Atom tuples of size `<= k` mapped to the node that made them true first
/// and the later nodes that also make them true.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoveltyTable<T: Ord> {
    pub k: usize,
    pub entries: BTreeMap<Vec<T>, NoveltyEntry>,
}

/// Every sorted sub-tuple of `atoms` with 1..=k elements.
pub fn tuples<T: Clone + Ord>(atoms: &[T], k: usize) -> Vec<Vec<T>> {
    let mut a: Vec<T> = atoms.to_vec();
    a.sort();
    a.dedup();
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec<T: Clone>(a: &[T], start: usize, k: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        for i in start..a.len() {
            cur.push(a[i].clone());
            out.push(cur.clone());
            if cur.len() < k {
                rec(a, i + 1, k, cur, out);
            }
            cur.pop();
        }
    }
    rec(&a, 0, k.max(1), &mut cur, &mut out);
    out
}

impl<T: Clone + Ord> NoveltyTable<T> {
    pub fn new(k: usize) -> Self {
        NoveltyTable { k, entries: BTreeMap::new() }
    }

    /// Registers `node` as main support of its unseen tuples and as backup
    /// of the others. Returns whether any tuple was new.
    pub fn check(&mut self, node: NodeId, atoms: &[T]) -> bool {
        let mut novel = false;
        for t in tuples(atoms, self.k) {
            match self.entries.get_mut(&t) {
                Some(e) => {
                    if e.main != node {
                        e.backups.insert(node);
                    }
                }
                None => {
                    self.entries.insert(t, NoveltyEntry { main: node, backups: BTreeSet::new() });
                    novel = true;
                }
            }
        }
        novel
    }

    /// Drops `orphans` from every entry. Entries whose main support was
    /// orphaned promote their oldest remaining backup or disappear.
    /// Returns the promoted nodes.
    pub fn retract(&mut self, orphans: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        let mut promoted = BTreeSet::new();
        self.entries.retain(|_, e| {
            e.backups.retain(|b| !orphans.contains(b));
            if orphans.contains(&e.main) {
                if e.backups.is_empty() {
                    return false;
                }
                e.main = e.backups.pop_first().expect("non-empty");
                promoted.insert(e.main);
            }
            true
        });
        promoted
    }
}

/// One validated step of an extracted plan.
#[derive(Debug, Clone)]
pub struct PlanEdge<S, A, P> {
    pub from: S,
    pub action: A,
    pub to: S,
    pub cost: f64,
    pub proof: Option<P>,
}

#[derive(Debug, Clone, Copy)]
struct HeapItem(f64, NodeId);

impl PartialEq for HeapItem {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Frontier and novelty table in state terms, for comparing runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IwSnapshot<S: Ord, T: Ord> {
    pub frontier: BTreeSet<S>,
    pub table: BTreeMap<Vec<T>, S>,
}

type Plan<D> = Vec<PlanEdge<<D as SearchDomain>::State, <D as SearchDomain>::Action, <D as SearchDomain>::Proof>>;

/// Cached expansion entry: child node and the edge that produced it.
#[derive(Debug, Clone)]
struct Expansion<A, P> {
    child: NodeId,
    action: A,
    cost: f64,
    proof: Option<P>,
}

/// One IW(k) search over a growing multi-parent graph.
///
/// Nodes, edges, edge confirmations and successor lists persist for the
/// whole call. The novelty table and the open queue belong to the current
/// pass: rejecting an edge starts a new pass that replays the cached
/// expansions in breadth-first order, so the table ends up as if the
/// rejected edges had never been generated, without re-validating anything.
pub struct LazyIw<D: SearchDomain> {
    pub k: usize,
    pub nodes: Vec<SearchNode<D::State, D::Action, D::Proof>>,
    pub table: NoveltyTable<D::Atom>,
    pub open: VecDeque<NodeId>,
    /// Real expansions (cache misses).
    pub expanded: usize,
    /// Edges rejected by full validation.
    pub rejected: usize,
    index: HashMap<D::State, NodeId>,
    atoms: Vec<Vec<D::Atom>>,
    cache: Vec<Option<Vec<Expansion<D::Action, D::Proof>>>>,
    /// Generated in the current pass.
    seen: Vec<bool>,
    /// Reachable from the root over the current edges.
    live: Vec<bool>,
    restarted: bool,
}

pub const ROOT: NodeId = 0;

impl<D: SearchDomain> LazyIw<D> {
    pub fn new(domain: &mut D, start: D::State, k: usize) -> Self {
        let mut s = LazyIw {
            k,
            nodes: Vec::new(),
            table: NoveltyTable::new(k),
            open: VecDeque::new(),
            expanded: 0,
            rejected: 0,
            index: HashMap::new(),
            atoms: Vec::new(),
            cache: Vec::new(),
            seen: Vec::new(),
            live: Vec::new(),
            restarted: false,
        };
        s.push_node(domain, start);
        s.live[ROOT] = true;
        s.start_pass();
        s
    }

    fn push_node(&mut self, domain: &mut D, state: D::State) -> NodeId {
        let id = self.nodes.len();
        self.atoms.push(domain.atoms(&state));
        self.index.insert(state.clone(), id);
        self.cache.push(None);
        self.seen.push(false);
        self.live.push(false);
        self.nodes.push(SearchNode {
            id,
            state,
            parents: Vec::new(),
            successors: Vec::new(),
            status: NodeStatus::Orphan,
            g: f64::INFINITY,
            connected_to_goal: None,
            goal: false,
        });
        id
    }

    /// Fresh table and queue holding only the root.
    fn start_pass(&mut self) {
        self.table = NoveltyTable::new(self.k);
        self.open.clear();
        for (i, n) in self.nodes.iter_mut().enumerate() {
            self.seen[i] = false;
            if !self.live[i] {
                n.status = NodeStatus::Orphan;
            }
        }
        self.seen[ROOT] = true;
        self.table.check(ROOT, &self.atoms[ROOT]);
        self.nodes[ROOT].status = NodeStatus::Open;
        self.open.push_back(ROOT);
    }

    pub fn node_of(&self, s: &D::State) -> Option<NodeId> {
        self.index.get(s).copied()
    }

    pub fn is_live(&self, n: NodeId) -> bool {
        self.live[n]
    }

    /// Whether `n` was generated in the current pass.
    pub fn is_seen(&self, n: NodeId) -> bool {
        self.seen[n]
    }

    /// Index of the preferred live parent edge: least `parent.g + cost`,
    /// earliest on ties.
    pub fn best_parent(&self, n: NodeId) -> Option<usize> {
        let node = &self.nodes[n];
        let mut best: Option<(f64, usize)> = None;
        for (i, e) in node.parents.iter().enumerate() {
            if !self.live[e.parent] {
                continue;
            }
            let c = self.nodes[e.parent].g + e.cost;
            if !c.is_finite() {
                continue;
            }
            if best.map_or(true, |(b, _)| c < b) {
                best = Some((c, i));
            }
        }
        best.map(|(_, i)| i)
    }

    /// Runs until a validated plan to a goal node is found or open empties.
    pub fn run(&mut self, domain: &mut D) -> Option<Plan<D>> {
        if self.nodes.len() == 1 && self.expanded == 0 && domain.is_goal(&self.nodes[ROOT].state) {
            self.nodes[ROOT].goal = true;
            return Some(Vec::new());
        }
        self.process_queue(domain, false, usize::MAX)
    }

    /// Expands at most `limit` nodes from open.
    pub fn step(&mut self, domain: &mut D, limit: usize) -> Option<Plan<D>> {
        self.process_queue(domain, false, limit)
    }

    /// Breadth-first expansion. With `replay_only`, stops in front of the
    /// first node whose successors are not cached yet.
    fn process_queue(&mut self, domain: &mut D, replay_only: bool, limit: usize) -> Option<Plan<D>> {
        let mut done = 0;
        while done < limit {
            let Some(p) = self.open.pop_front() else { break };
            if self.nodes[p].status != NodeStatus::Open || !self.seen[p] || !self.live[p] {
                continue;
            }
            if self.cache[p].is_none() {
                if replay_only {
                    self.open.push_front(p);
                    return None;
                }
                self.expanded += 1;
                let state = self.nodes[p].state.clone();
                let mut list = Vec::new();
                for s in domain.successors(&state) {
                    let child = match self.node_of(&s.state) {
                        Some(c) => c,
                        None => self.push_node(domain, s.state),
                    };
                    if child != p {
                        list.push(Expansion { child, action: s.action, cost: s.cost.max(MIN_EDGE_COST), proof: s.proof });
                    }
                }
                self.cache[p] = Some(list);
            }
            done += 1;
            self.nodes[p].status = NodeStatus::Closed;
            let n = self.cache[p].as_ref().map_or(0, Vec::len);
            for i in 0..n {
                let Some(x) = self.cache[p].as_ref().and_then(|l| l.get(i)).cloned() else { break };
                if let Some(plan) = self.generate(domain, p, x) {
                    return Some(plan);
                }
                if self.restarted {
                    break;
                }
            }
            self.restarted = false;
        }
        None
    }

    /// Adds the edge if new. Returns whether the child became reachable.
    fn add_edge(&mut self, p: NodeId, x: &Expansion<D::Action, D::Proof>) -> bool {
        let c = x.child;
        if self.nodes[c].parents.iter().any(|e| e.parent == p && e.action == x.action) {
            return false;
        }
        let status = if x.proof.is_some() { EdgeStatus::Confirmed } else { EdgeStatus::Provisional };
        self.nodes[c].parents.push(ParentEdge {
            parent: p,
            action: x.action.clone(),
            cost: x.cost,
            status,
            proof: x.proof.clone(),
        });
        if !self.nodes[p].successors.contains(&c) {
            self.nodes[p].successors.push(c);
        }
        if self.live[p] && !self.live[c] {
            self.refresh_liveness();
            true
        } else {
            self.relax(c);
            false
        }
    }

    fn generate(&mut self, domain: &mut D, p: NodeId, x: Expansion<D::Action, D::Proof>) -> Option<Plan<D>> {
        let c = x.child;
        let before = self.best_parent(c).map(|i| self.nodes[c].parents[i].parent);
        self.add_edge(p, &x);
        if self.seen[c] {
            // duplicate within this pass
            let after = self.best_parent(c).map(|i| self.nodes[c].parents[i].parent);
            if self.nodes[c].status == NodeStatus::Closed && before != after {
                let target = if self.nodes[c].goal { Some(c) } else { self.nodes[c].connected_to_goal };
                if let Some(goal) = target.filter(|&g| self.live[g]) {
                    return self.get_plan(domain, goal);
                }
            }
            return None;
        }
        self.seen[c] = true;
        if self.nodes[c].goal || domain.is_goal(&self.nodes[c].state) {
            self.nodes[c].goal = true;
            self.nodes[c].status = NodeStatus::Closed;
            return self.get_plan(domain, c);
        }
        if let Some(goal) = self.nodes[c].connected_to_goal.filter(|&g| self.live[g] && g != c) {
            // rediscovered piece of a validated chain
            if let Some(plan) = self.get_plan(domain, goal) {
                return Some(plan);
            }
            if self.restarted {
                return None;
            }
        }
        if self.table.check(c, &self.atoms[c]) {
            self.nodes[c].status = NodeStatus::Open;
            self.open.push_back(c);
        } else {
            self.nodes[c].status = NodeStatus::Pruned;
        }
        None
    }

    /// Decrease-key propagation from `n` after a new parent edge.
    fn relax(&mut self, n: NodeId) {
        let best = self.best_parent(n).map(|i| {
            let e = &self.nodes[n].parents[i];
            self.nodes[e.parent].g + e.cost
        });
        let Some(g) = best else { return };
        if g >= self.nodes[n].g {
            return;
        }
        self.nodes[n].g = g;
        self.propagate(vec![HeapItem(g, n)]);
    }

    fn propagate(&mut self, init: Vec<HeapItem>) {
        let mut heap = BinaryHeap::from(init);
        while let Some(HeapItem(gu, u)) = heap.pop() {
            if gu > self.nodes[u].g {
                continue;
            }
            for ci in 0..self.nodes[u].successors.len() {
                let c = self.nodes[u].successors[ci];
                if !self.live[c] {
                    continue;
                }
                let via = self.nodes[c]
                    .parents
                    .iter()
                    .filter(|e| e.parent == u)
                    .map(|e| gu + e.cost)
                    .fold(f64::INFINITY, f64::min);
                if via < self.nodes[c].g {
                    self.nodes[c].g = via;
                    heap.push(HeapItem(via, c));
                }
            }
        }
    }

    /// Reachability from the root, orphan marking and costs from scratch.
    fn refresh_liveness(&mut self) {
        let mut seen = vec![false; self.nodes.len()];
        seen[ROOT] = true;
        let mut stack = vec![ROOT];
        while let Some(u) = stack.pop() {
            for &c in &self.nodes[u].successors {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        self.live = seen;
        for (i, n) in self.nodes.iter_mut().enumerate() {
            n.g = f64::INFINITY;
            if !self.live[i] {
                n.status = NodeStatus::Orphan;
            }
        }
        self.nodes[ROOT].g = 0.0;
        self.propagate(vec![HeapItem(0.0, ROOT)]);
    }

    /// Walks back from `goal` along preferred parents, fully validating
    /// provisional edges. A rejected edge is removed and the walk restarts
    /// while the goal stays connected to the root.
    pub fn get_plan(&mut self, domain: &mut D, goal: NodeId) -> Option<Plan<D>> {
        'restart: loop {
            if !self.live[goal] {
                return None;
            }
            let mut path = Vec::new();
            let mut node = goal;
            while node != ROOT {
                let ei = self.best_parent(node)?;
                let e = &self.nodes[node].parents[ei];
                let parent = e.parent;
                if e.status == EdgeStatus::Provisional {
                    let (from, action, to) =
                        (self.nodes[parent].state.clone(), e.action.clone(), self.nodes[node].state.clone());
                    match domain.confirm(&from, &action, &to) {
                        Some(proof) => {
                            let e = &mut self.nodes[node].parents[ei];
                            e.status = EdgeStatus::Confirmed;
                            e.proof = Some(proof.clone());
                            if let Some(x) = self.cache[parent]
                                .as_mut()
                                .and_then(|l| l.iter_mut().find(|x| x.child == node && x.action == action))
                            {
                                x.proof = Some(proof);
                            }
                        }
                        None => {
                            self.rejected += 1;
                            self.remove_edge(node, ei);
                            continue 'restart;
                        }
                    }
                }
                self.nodes[parent].connected_to_goal = Some(goal);
                path.push((parent, node, ei));
                node = parent;
            }
            path.reverse();
            return Some(
                path.into_iter()
                    .map(|(p, c, ei)| {
                        let e = &self.nodes[c].parents[ei];
                        PlanEdge {
                            from: self.nodes[p].state.clone(),
                            action: e.action.clone(),
                            to: self.nodes[c].state.clone(),
                            cost: e.cost,
                            proof: e.proof.clone(),
                        }
                    })
                    .collect(),
            );
        }
    }

    /// Removes a parent edge, orphans whatever lost its connection to the
    /// root and starts a new pass.
    fn remove_edge(&mut self, child: NodeId, ei: usize) {
        let e = self.nodes[child].parents.remove(ei);
        if !self.nodes[child].parents.iter().any(|x| x.parent == e.parent) {
            self.nodes[e.parent].successors.retain(|&c| c != child);
        }
        if let Some(l) = self.cache[e.parent].as_mut() {
            l.retain(|x| !(x.child == child && x.action == e.action));
        }
        self.refresh_liveness();
        self.repair_novelty();
    }

    /// Discards the table and queue of the current pass and starts over
    /// from the root; cached expansions are replayed as the queue drains.
    pub fn repair_novelty(&mut self) {
        self.start_pass();
        self.restarted = true;
    }

    /// Rejects the edge `parent -> child` carrying `action` and replays the
    /// cached part of the search. Returns the nodes that were pruned before
    /// and now wait in open.
    pub fn invalidate(&mut self, domain: &mut D, parent: NodeId, child: NodeId, action: &D::Action) -> Option<Vec<NodeId>> {
        let ei = self.nodes[child].parents.iter().position(|e| e.parent == parent && &e.action == action)?;
        let pruned: Vec<bool> = self.nodes.iter().map(|n| n.status == NodeStatus::Pruned).collect();
        self.remove_edge(child, ei);
        self.restarted = false;
        let _ = self.process_queue(domain, true, usize::MAX);
        let mut rec = Vec::new();
        for &n in &self.open {
            if n < pruned.len() && pruned[n] && self.nodes[n].status == NodeStatus::Open && !rec.contains(&n) {
                rec.push(n);
            }
        }
        Some(rec)
    }

    /// Structural audit: g-consistency and novelty-table soundness.
    pub fn audit(&self) -> Result<(), String> {
        for n in &self.nodes {
            if n.id == ROOT || !self.live[n.id] {
                continue;
            }
            let g = self
                .best_parent(n.id)
                .map(|i| self.nodes[n.parents[i].parent].g + n.parents[i].cost)
                .unwrap_or(f64::INFINITY);
            if (g - n.g).abs() > 1e-9 * g.abs().max(1.0) && !(g.is_infinite() && n.g.is_infinite()) {
                return Err(format!("node {} has g {} but best parent gives {}", n.id, n.g, g));
            }
        }
        for (t, e) in &self.table.entries {
            if !self.live[e.main] || !self.seen[e.main] {
                return Err(format!("tuple {t:?} supported by unreachable node {}", e.main));
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> IwSnapshot<D::State, D::Atom> {
        IwSnapshot {
            frontier: self
                .nodes
                .iter()
                .filter(|n| {
                    self.seen[n.id] && !n.goal && matches!(n.status, NodeStatus::Open | NodeStatus::Closed)
                })
                .map(|n| n.state.clone())
                .collect(),
            table: self
                .table
                .entries
                .iter()
                .map(|(t, e)| (t.clone(), self.nodes[e.main].state.clone()))
                .collect(),
        }
    }
}

/// Outcome of [`lazy_iw`].
#[derive(Debug, Clone)]
pub struct IwOutcome<S, A, P> {
    pub plan: Option<Vec<PlanEdge<S, A, P>>>,
    /// Width of the last IW(k) round that ran.
    pub k: usize,
    pub expanded: usize,
    pub generated: usize,
    pub rejected: usize,
}

/// IW(1), IW(2), ... up to `k_max`, each round on a fresh graph.
pub fn lazy_iw<D: SearchDomain>(domain: &mut D, start: D::State, k_max: usize) -> IwOutcome<D::State, D::Action, D::Proof> {
    let mut out = IwOutcome { plan: None, k: 0, expanded: 0, generated: 0, rejected: 0 };
    for k in 1..=k_max.max(1) {
        let mut iw = LazyIw::new(domain, start.clone(), k);
        let plan = iw.run(domain);
        out.k = k;
        out.expanded += iw.expanded;
        out.generated += iw.nodes.len();
        out.rejected += iw.rejected;
        if plan.is_some() {
            out.plan = plan;
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Explicit graph: `edges[s]` lists `(action id, target, cost, fails)`.
    struct Scripted {
        edges: Vec<Vec<(usize, usize, f64, bool)>>,
        atoms: Vec<Vec<u32>>,
        goals: BTreeSet<usize>,
        lazy: bool,
        confirms: usize,
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
            self.confirms += 1;
            let e = self.edges[*from].iter().find(|e| e.0 == *a)?;
            (!e.3).then_some(())
        }
        fn is_goal(&mut self, s: &usize) -> bool {
            self.goals.contains(s)
        }
    }

    fn chain() -> Scripted {
        // 0 -> 1 -> 3 (goal), 0 -> 2 -> 3; edge 1->3 fails
        Scripted {
            edges: vec![
                vec![(0, 1, 1.0, false), (1, 2, 2.0, false)],
                vec![(2, 3, 1.0, true)],
                vec![(3, 3, 1.0, false)],
                vec![],
            ],
            atoms: vec![vec![0], vec![1], vec![2], vec![3]],
            goals: BTreeSet::from([3]),
            lazy: true,
            confirms: 0,
        }
    }

    #[test]
    fn tuples_enumeration() {
        assert_eq!(tuples(&[2, 1], 1), vec![vec![1], vec![2]]);
        assert_eq!(tuples(&[3, 1, 2], 2).len(), 6);
        assert_eq!(tuples(&[1, 2, 3], 3).len(), 7);
    }

    #[test]
    fn root_goal_gives_empty_plan() {
        let mut d = chain();
        d.goals = BTreeSet::from([0]);
        let out = lazy_iw(&mut d, 0, 2);
        assert_eq!(out.plan.unwrap().len(), 0);
    }

    #[test]
    fn novelty_duplicate_is_backup() {
        let mut t = NoveltyTable::new(1);
        assert!(t.check(0, &[1, 2]));
        assert!(!t.check(1, &[2, 1]));
        assert_eq!(t.entries[&vec![1]], NoveltyEntry { main: 0, backups: BTreeSet::from([1]) });
        assert!(t.check(2, &[2, 5]));
        assert_eq!(t.entries[&vec![2]].backups, BTreeSet::from([1, 2]));
    }

    #[test]
    fn reroutes_through_second_parent() {
        let mut d = chain();
        let out = lazy_iw(&mut d, 0, 1);
        let plan = out.plan.unwrap();
        let states: Vec<usize> = std::iter::once(plan[0].from).chain(plan.iter().map(|e| e.to)).collect();
        // the goal is first generated from 1; after 1->3 fails it is
        // regenerated from 2 and revived
        assert_eq!(states, vec![0, 2, 3]);
        assert_eq!(out.rejected, 1);
    }

    #[test]
    fn multi_parent_reroute_without_research() {
        // 3 is reached from 1 and 2 before the goal 4 is generated from 3
        let mut d = Scripted {
            edges: vec![
                vec![(0, 1, 1.0, false), (1, 2, 1.5, false)],
                vec![(2, 3, 1.0, true)],
                vec![(3, 3, 1.0, false)],
                vec![(4, 4, 1.0, false)],
                vec![],
            ],
            atoms: vec![vec![0], vec![1], vec![2], vec![3], vec![4]],
            goals: BTreeSet::from([4]),
            lazy: true,
            confirms: 0,
        };
        let mut iw = LazyIw::new(&mut d, 0, 1);
        let plan = iw.run(&mut d).unwrap();
        let states: Vec<usize> = std::iter::once(plan[0].from).chain(plan.iter().map(|e| e.to)).collect();
        assert_eq!(states, vec![0, 2, 3, 4]);
        assert_eq!(iw.rejected, 1);
        let n3 = iw.node_of(&3).unwrap();
        assert_eq!(iw.nodes[n3].parents.len(), 1);
        assert!((iw.nodes[n3].g - 2.5).abs() < 1e-12);
        iw.audit().unwrap();
    }

    #[test]
    fn single_parent_failure_orphans_subtree() {
        let mut d = Scripted {
            edges: vec![vec![(0, 1, 1.0, true)], vec![(1, 2, 1.0, false)], vec![]],
            atoms: vec![vec![0], vec![1], vec![2]],
            goals: BTreeSet::from([2]),
            lazy: true,
            confirms: 0,
        };
        let mut iw = LazyIw::new(&mut d, 0, 1);
        assert!(iw.run(&mut d).is_none());
        assert_eq!(iw.nodes[1].status, NodeStatus::Orphan);
        assert_eq!(iw.nodes[2].status, NodeStatus::Orphan);
        assert!(!iw.table.entries.contains_key(&vec![1]));
        iw.audit().unwrap();
    }

    #[test]
    fn orphan_sole_support_recovers_pruned_to_front() {
        // 1 and 2 both make atom 7 true; 1 is novel, 2 pruned. Losing 0->1
        // puts 2 at the head of open.
        let mut d = Scripted {
            edges: vec![vec![(0, 1, 1.0, true), (1, 2, 1.0, false), (2, 3, 1.0, false)], vec![], vec![], vec![]],
            atoms: vec![vec![0], vec![7], vec![7], vec![8]],
            goals: BTreeSet::new(),
            lazy: true,
            confirms: 0,
        };
        let mut iw = LazyIw::new(&mut d, 0, 1);
        assert!(iw.step(&mut d, 1).is_none());
        assert_eq!(iw.nodes[2].status, NodeStatus::Pruned);
        let rec = iw.invalidate(&mut d, ROOT, 1, &0).unwrap();
        assert_eq!(rec, vec![2]);
        assert_eq!(iw.open.front(), Some(&2));
        assert_eq!(iw.table.entries[&vec![7]].main, 2);
    }

    #[test]
    fn closed_backup_promoted_without_recovery() {
        let mut d = Scripted {
            edges: vec![vec![(0, 1, 1.0, true), (1, 2, 1.0, false)], vec![], vec![]],
            atoms: vec![vec![0], vec![7], vec![7, 9]],
            goals: BTreeSet::new(),
            lazy: true,
            confirms: 0,
        };
        let mut iw = LazyIw::new(&mut d, 0, 1);
        assert!(iw.run(&mut d).is_none());
        assert_eq!(iw.nodes[2].status, NodeStatus::Closed);
        let rec = iw.invalidate(&mut d, ROOT, 1, &0).unwrap();
        assert!(rec.is_empty());
        assert_eq!(iw.table.entries[&vec![7]], NoveltyEntry { main: 2, backups: BTreeSet::new() });
    }

    #[test]
    fn orphan_without_tuples_changes_nothing() {
        let mut d = Scripted {
            edges: vec![vec![(0, 1, 1.0, false), (1, 2, 1.0, true)], vec![], vec![]],
            atoms: vec![vec![0], vec![5], vec![5]],
            goals: BTreeSet::new(),
            lazy: true,
            confirms: 0,
        };
        let mut iw = LazyIw::new(&mut d, 0, 1);
        assert!(iw.run(&mut d).is_none());
        let mains = |t: &NoveltyTable<u32>| t.entries.iter().map(|(k, e)| (k.clone(), e.main)).collect::<Vec<_>>();
        let before = mains(&iw.table);
        let rec = iw.invalidate(&mut d, ROOT, 2, &1).unwrap();
        assert!(rec.is_empty());
        assert_eq!(mains(&iw.table), before);
        assert!(iw.table.entries[&vec![5]].backups.is_empty());
    }

    #[test]
    fn connected_chain_is_reused() {
        // goal 4 found via 0->1->3->4; edge 0->1 fails, leaving the
        // validated chain 3->4. Node 3 rediscovered from 2 triggers a plan
        // without validating 3->4 again.
        let mut d = Scripted {
            edges: vec![
                vec![(0, 1, 1.0, true), (1, 6, 1.0, false)],
                vec![(2, 3, 1.0, false)],
                vec![(3, 3, 1.0, false)],
                vec![(5, 4, 1.0, false)],
                vec![],
                vec![],
                vec![(6, 2, 1.0, false)],
            ],
            atoms: vec![vec![0], vec![1], vec![2], vec![3], vec![4], vec![5], vec![6]],
            goals: BTreeSet::from([4]),
            lazy: true,
            confirms: 0,
        };
        let mut iw = LazyIw::new(&mut d, 0, 1);
        let plan = iw.run(&mut d).unwrap();
        let states: Vec<usize> = std::iter::once(plan[0].from).chain(plan.iter().map(|e| e.to)).collect();
        assert_eq!(states, vec![0, 6, 2, 3, 4]);
        let n3 = iw.node_of(&3).unwrap();
        assert_eq!(iw.nodes[n3].connected_to_goal, iw.node_of(&4));
        assert_eq!(iw.rejected, 1);
        // 3->4, 1->3, 0->1, then 2->3, 6->2, 0->6
        assert_eq!(d.confirms, 6);
        iw.audit().unwrap();
    }
}
