//! Serial blossom solver: the reference implementation the distributed
//! solver is checked against.
//!
//! Grows one alternating tree at a time, always rooted at the unmatched
//! blossom containing the lowest vertex id. Each iteration applies exactly
//! one operation, chosen by fixed priority (augment > graft > contract >
//! expand > reweight) with lexicographic vertex-pair tie-breaks, so runs are
//! fully deterministic. All arithmetic happens in the graph's scaled domain;
//! reported weights are unscaled.

use crate::graph::{Matching, ProblemGraph, VertexId};
use crate::snapshot::{BlossomSnap, SnapEdge, StateSnapshot};
use crate::trace::{EventTrace, TraceEvent, TraceRecord};
use crate::weight::Weight;
use std::collections::BTreeSet;

/// Everything a serial run produces.
#[derive(Clone, Debug)]
pub struct SerialOutcome {
    pub matching: Matching,
    /// Total matching weight in the instance's own scale.
    pub weight: Weight,
    pub trace: EventTrace,
    /// Forest state after every operation, when recording was requested.
    pub snapshots: Vec<StateSnapshot>,
    /// State at optimality, before terminal expansions dissolve the
    /// macrovertices; this is what the optimality certificate inspects.
    pub pre_terminal: StateSnapshot,
    /// Expansions that happened inside a growing tree (terminal rotations
    /// excluded); useful for checking that deep paths were exercised.
    pub in_tree_expands: u64,
}

/// Solves without recording per-operation snapshots.
pub fn solve(g: &ProblemGraph) -> SerialOutcome {
    run(g, false)
}

/// Solves and keeps a snapshot after every operation.
pub fn solve_with_snapshots(g: &ProblemGraph) -> SerialOutcome {
    run(g, true)
}

/// One blossom in the arena; the index is its key. Expanded macrovertices
/// stay in place (dead) so keys remain stable.
#[derive(Clone, Debug)]
struct Blossom {
    vertex_id: Option<VertexId>,
    z: Weight,
    pistil: Option<u32>,
    petals: Vec<SnapEdge>,
    match_edge: Option<SnapEdge>,
    parent: Option<SnapEdge>,
    children: Vec<SnapEdge>,
    positive: bool,
    alive: bool,
}

/// The operation selected for one iteration. Edge ops carry the edge with
/// the tree-side endpoint as source.
#[derive(Clone, Debug)]
enum Op {
    Augment(SnapEdge),
    Graft(SnapEdge),
    Contract(SnapEdge),
    Expand(u32),
    Reweight(Weight),
}

struct Solver<'g> {
    g: &'g ProblemGraph,
    arena: Vec<Blossom>,
    trace: EventTrace,
    snapshots: Vec<StateSnapshot>,
    record: bool,
    ops: u64,
    in_tree_expands: u64,
}

fn run(g: &ProblemGraph, record: bool) -> SerialOutcome {
    let mut s = Solver::new(g, record);
    s.main_loop();
    let pre_terminal = s.snapshot();
    s.terminal_expansions();
    let matching = s.extract_matching();
    let weight = matching.total_weight(g);
    SerialOutcome {
        matching,
        weight,
        trace: s.trace,
        snapshots: s.snapshots,
        pre_terminal,
        in_tree_expands: s.in_tree_expands,
    }
}

impl<'g> Solver<'g> {
    fn new(g: &'g ProblemGraph, record: bool) -> Solver<'g> {
        let arena = (0..g.n() as u32)
            .map(|id| Blossom {
                vertex_id: Some(VertexId(id)),
                z: Weight::ZERO,
                pistil: None,
                petals: vec![],
                match_edge: None,
                parent: None,
                children: vec![],
                positive: true,
                alive: true,
            })
            .collect();
        Solver {
            g,
            arena,
            trace: EventTrace::default(),
            snapshots: Vec::new(),
            record,
            ops: 0,
            in_tree_expands: 0,
        }
    }

    // ------------------------------------------------------------------
    // Queries

    fn blossom(&self, key: u32) -> &Blossom {
        &self.arena[key as usize]
    }

    /// Key of the top-level blossom containing vertex `v`.
    fn top_of(&self, v: VertexId) -> u32 {
        let mut key = v.0;
        while let Some(p) = self.arena[key as usize].pistil {
            key = p;
        }
        key
    }

    /// Sum of dual weights from vertex `v` up the chain, excluding `stop`
    /// and everything above it.
    fn dual_sum(&self, v: VertexId, stop: Option<u32>) -> Weight {
        let mut sum = Weight::ZERO;
        let mut key = v.0;
        loop {
            if Some(key) == stop {
                return sum;
            }
            sum += self.arena[key as usize].z;
            match self.arena[key as usize].pistil {
                Some(p) => key = p,
                None => return sum,
            }
        }
    }

    fn adjusted(&self, x: VertexId, y: VertexId) -> Weight {
        self.g.scaled_weight(x, y) - self.dual_sum(x, None) - self.dual_sum(y, None)
    }

    /// Smallest original vertex id under the blossom.
    fn min_id(&self, key: u32) -> u32 {
        let b = self.blossom(key);
        match b.vertex_id {
            Some(v) => v.0,
            None => b
                .petals
                .iter()
                .map(|p| self.min_id(p.source_key))
                .min()
                .expect("macrovertex has petals"),
        }
    }

    /// Top-level keys of the tree rooted at `root`, walking child edges.
    fn tree_tops(&self, root: u32) -> Vec<u32> {
        let mut out = vec![root];
        let mut i = 0;
        while i < out.len() {
            let key = out[i];
            for c in &self.blossom(key).children {
                out.push(c.target_key);
            }
            i += 1;
        }
        out
    }

    fn unmatched_tops(&self) -> Vec<u32> {
        (0..self.arena.len() as u32)
            .filter(|&k| {
                let b = self.blossom(k);
                b.alive && b.pistil.is_none() && b.match_edge.is_none()
            })
            .collect()
    }

    // ------------------------------------------------------------------
    // Operation selection

    fn find_op(&self, root: u32) -> Op {
        let tree = self.tree_tops(root);
        let in_tree: BTreeSet<u32> = tree.iter().copied().collect();
        let mut best: Option<(u8, (u32, u32), Op)> = None;
        let consider = |rank: u8, tie: (u32, u32), op: Op, best: &mut Option<(u8, (u32, u32), Op)>| {
            let key = (rank, tie);
            if best.as_ref().is_none_or(|(r, t, _)| key < (*r, *t)) {
                *best = Some((rank, tie, op));
            }
        };
        let mut cap: Option<Weight> = None;
        let shrink = |c: Weight, cap: &mut Option<Weight>| {
            if cap.is_none_or(|old| c < old) {
                *cap = Some(c);
            }
        };

        for x in self.g.vertices() {
            let xt = self.top_of(x);
            if !in_tree.contains(&xt) || !self.blossom(xt).positive {
                continue;
            }
            for y in self.g.vertices() {
                if y == x {
                    continue;
                }
                let yt = self.top_of(y);
                if yt == xt {
                    continue;
                }
                let adj = self.adjusted(x, y);
                debug_assert!(!adj.is_negative(), "dual infeasible at ({x}, {y})");
                let edge = SnapEdge {
                    source_key: xt,
                    source_vertex: x,
                    target_vertex: y,
                    target_key: yt,
                };
                if in_tree.contains(&yt) {
                    if !self.blossom(yt).positive {
                        // T+ to T- edges are unaffected by reweights; never
                        // a candidate or a cap.
                        continue;
                    }
                    if adj.is_zero() {
                        consider(2, (x.0, y.0), Op::Contract(edge), &mut best);
                    } else if x < y {
                        // Both endpoints gain the full amount, so the room
                        // is half the slack. Even by the tree parity
                        // invariant; halve() panicking would expose a bug.
                        shrink(adj.halve(), &mut cap);
                    }
                } else if adj.is_zero() {
                    if self.blossom(yt).match_edge.is_some() {
                        consider(1, (x.0, y.0), Op::Graft(edge), &mut best);
                    } else {
                        consider(0, (x.0, y.0), Op::Augment(edge), &mut best);
                    }
                } else {
                    shrink(adj, &mut cap);
                }
            }
        }

        // Negative macrovertices: weightless ones want to expand; the rest
        // cap the reweight at their remaining dual weight.
        for &key in &tree {
            let b = self.blossom(key);
            if b.positive || b.vertex_id.is_some() {
                continue;
            }
            if b.z.is_zero() {
                consider(3, (self.min_id(key), 0), Op::Expand(key), &mut best);
            } else {
                shrink(b.z, &mut cap);
            }
        }

        if let Some((_, _, op)) = best {
            return op;
        }
        let amount = cap.expect("complete graph always offers a reweight cap");
        assert!(amount.is_positive(), "stalled reweight");
        Op::Reweight(amount)
    }

    // ------------------------------------------------------------------
    // Operation application

    fn apply(&mut self, root: u32, op: Op) -> bool {
        let root_id = self.min_id(root);
        let mut augmented = false;
        let event = match op {
            Op::Augment(e) => {
                let pair = (e.source_vertex.0, e.target_vertex.0);
                self.apply_augment(root, e);
                augmented = true;
                TraceEvent::Augment { edge: pair }
            }
            Op::Graft(e) => {
                let pair = (e.source_vertex.0, e.target_vertex.0);
                self.apply_graft(e);
                TraceEvent::Graft { root: root_id, edge: pair }
            }
            Op::Contract(e) => {
                let pair = (e.source_vertex.0, e.target_vertex.0);
                self.apply_contract(e);
                TraceEvent::Contract { root: root_id, edge: pair }
            }
            Op::Expand(key) => {
                let mid = self.min_id(key);
                self.apply_expand(key);
                self.in_tree_expands += 1;
                TraceEvent::Expand { root: root_id, macro_min_id: mid }
            }
            Op::Reweight(amount) => {
                for key in self.tree_tops(root) {
                    let delta = if self.blossom(key).positive { amount } else { -amount };
                    self.arena[key as usize].z += delta;
                }
                TraceEvent::Reweight { root: root_id, amount }
            }
        };
        self.ops += 1;
        self.trace.push(TraceRecord { tick: self.ops, actor: 0, event });
        if self.record {
            let snap = self.snapshot();
            self.snapshots.push(snap);
        }
        augmented
    }

    fn apply_graft(&mut self, e: SnapEdge) {
        let (x_top, y_top) = (e.source_key, e.target_key);
        let m = self.blossom(y_top).match_edge.expect("graft target is matched");
        let w_top = m.target_key;
        self.arena[x_top as usize].children.push(e);
        let y = &mut self.arena[y_top as usize];
        y.positive = false;
        y.parent = Some(e.reversed());
        y.children = vec![m];
        let w = &mut self.arena[w_top as usize];
        w.positive = true;
        w.parent = Some(m.reversed());
    }

    fn apply_augment(&mut self, root: u32, e: SnapEdge) {
        // The free blossom outside the tree matches along the new edge.
        self.arena[e.target_key as usize].match_edge = Some(e.reversed());
        // Walk from the tree-side endpoint to the root, flipping matched
        // status along the way. `incoming` always points into `key`.
        let mut key = e.source_key;
        let mut incoming = e.reversed();
        loop {
            let b = &self.arena[key as usize];
            let parent = b.parent;
            let new_match = match b.match_edge {
                Some(m) if m.vertex_pair() == incoming.vertex_pair() => {
                    parent.expect("matched into the tree implies a parent")
                }
                _ => incoming.reversed(),
            };
            self.arena[key as usize].match_edge = Some(new_match);
            match parent {
                None => break,
                Some(p) => {
                    incoming = p;
                    key = p.target_key;
                }
            }
        }
        // The tree dissolves into matched barbells.
        for key in self.tree_tops(root) {
            let b = &mut self.arena[key as usize];
            b.parent = None;
            b.children = vec![];
            b.positive = true;
        }
    }

    /// Path of top-level keys from `key` to the tree root via parent edges.
    fn path_to_root(&self, key: u32) -> Vec<u32> {
        let mut path = vec![key];
        while let Some(p) = self.blossom(*path.last().unwrap()).parent {
            path.push(p.target_key);
        }
        path
    }

    fn apply_contract(&mut self, e: SnapEdge) {
        let up_x = self.path_to_root(e.source_key);
        let up_y = self.path_to_root(e.target_key);
        // Nearest common ancestor: trim the shared suffix.
        let (mut ix, mut iy) = (up_x.len(), up_y.len());
        while ix > 1 && iy > 1 && up_x[ix - 2] == up_y[iy - 2] {
            ix -= 1;
            iy -= 1;
        }
        debug_assert_eq!(up_x[ix - 1], up_y[iy - 1]);
        let nca = up_x[ix - 1];
        let up_x = &up_x[..ix]; // X, ..., nca
        let up_y = &up_y[..iy]; // Y, ..., nca

        // Oriented cycle nca -> ... -> X -> (e) -> Y -> ... -> nca.
        let mut petals: Vec<SnapEdge> = Vec::new();
        for i in (0..up_x.len() - 1).rev() {
            petals.push(self.blossom(up_x[i]).parent.unwrap().reversed());
        }
        petals.push(e);
        for &k in up_y.iter().take(up_y.len() - 1) {
            petals.push(self.blossom(k).parent.unwrap());
        }
        debug_assert!(petals.len() >= 3 && petals.len() % 2 == 1);

        let cycle: Vec<u32> = petals.iter().map(|p| p.source_key).collect();
        let in_cycle: BTreeSet<u32> = cycle.iter().copied().collect();
        let key = self.arena.len() as u32;

        // The macrovertex inherits the ancestor's external links.
        let patch_source = |edge: SnapEdge| SnapEdge { source_key: key, ..edge };
        let nca_b = self.blossom(nca);
        let parent = nca_b.parent.map(patch_source);
        let match_edge = nca_b.match_edge.map(patch_source);
        let mut children: Vec<SnapEdge> = Vec::new();
        for &c in &cycle {
            for ch in &self.blossom(c).children {
                if !in_cycle.contains(&ch.target_key) {
                    children.push(patch_source(*ch));
                }
            }
        }

        // Re-aim the outside world at the macrovertex.
        if let Some(p) = parent {
            let up = &mut self.arena[p.target_key as usize];
            for ch in &mut up.children {
                if ch.target_key == nca {
                    ch.target_key = key;
                }
            }
        }
        if let Some(m) = match_edge {
            let partner = &mut self.arena[m.target_key as usize];
            if let Some(pm) = &mut partner.match_edge {
                debug_assert_eq!(pm.target_key, nca);
                pm.target_key = key;
            }
        }
        for ch in &children {
            let down = &mut self.arena[ch.target_key as usize];
            if let Some(dp) = &mut down.parent {
                dp.target_key = key;
            }
        }

        for &c in &cycle {
            let b = &mut self.arena[c as usize];
            b.pistil = Some(key);
            b.match_edge = None;
            b.parent = None;
            b.children = vec![];
            b.positive = true;
        }
        self.arena.push(Blossom {
            vertex_id: None,
            z: Weight::ZERO,
            pistil: None,
            petals,
            match_edge,
            parent,
            children,
            positive: true,
            alive: true,
        });
    }

    /// Direct member of macrovertex `key` containing vertex `v`: the chain
    /// entry just below `key`.
    fn member_containing(&self, key: u32, v: VertexId) -> u32 {
        let mut k = v.0;
        loop {
            match self.arena[k as usize].pistil {
                Some(p) if p == key => return k,
                Some(p) => k = p,
                None => panic!("vertex {v} is not inside blossom {key}"),
            }
        }
    }

    /// Rewrites the internal matching of the cycle so that the member at
    /// `pos_m` is internally unmatched; everyone else pairs up along cycle
    /// edges. Returns the cycle member keys in petal order.
    fn rotate_matches(&mut self, petals: &[SnapEdge], pos_m: usize) -> Vec<u32> {
        let k = petals.len();
        let cycle: Vec<u32> = petals.iter().map(|p| p.source_key).collect();
        for step in (1..k).step_by(2) {
            let e = petals[(pos_m + step) % k];
            self.arena[e.source_key as usize].match_edge = Some(e);
            self.arena[e.target_key as usize].match_edge = Some(e.reversed());
        }
        cycle
    }

    fn apply_expand(&mut self, key: u32) {
        let b = self.blossom(key);
        assert!(b.z.is_zero() && !b.positive, "expand requires weightless T-");
        let petals = b.petals.clone();
        let parent_edge = b.parent.expect("in-tree T- has a parent");
        let match_edge = b.match_edge.expect("T- is matched to its child");
        let b_p = self.member_containing(key, parent_edge.source_vertex);
        let b_m = self.member_containing(key, match_edge.source_vertex);
        let cycle: Vec<u32> = petals.iter().map(|p| p.source_key).collect();
        let k = cycle.len();
        let pos = |member: u32| cycle.iter().position(|&c| c == member).unwrap();
        let pos_m = pos(b_m);
        self.rotate_matches(&petals, pos_m);

        // Tree path: from b_p step first onto its internal match partner,
        // then keep going around the cycle until b_m. Starting with the
        // matched edge keeps the alternation correct.
        let pos_p = pos(b_p);
        let mut path = vec![b_p];
        let mut edges: Vec<SnapEdge> = Vec::new();
        if b_p != b_m {
            let forward = {
                let m = self.blossom(b_p).match_edge.expect("rotated member is matched");
                petals[pos_p].vertex_pair() == m.vertex_pair()
            };
            let mut at = pos_p;
            loop {
                let (edge, next) = if forward {
                    (petals[at], (at + 1) % k)
                } else {
                    ((petals[(at + k - 1) % k]).reversed(), (at + k - 1) % k)
                };
                edges.push(edge);
                path.push(cycle[next]);
                at = next;
                if cycle[at] == b_m {
                    break;
                }
            }
        }
        debug_assert!(path.len() % 2 == 1, "tree path spans an even edge count");

        // Everyone leaves the macrovertex.
        for &c in &cycle {
            let m = &mut self.arena[c as usize];
            m.pistil = None;
            m.parent = None;
            m.children = vec![];
            m.positive = true;
        }

        // Wire the path into the tree, alternating signs from negative b_p.
        for (i, &member) in path.iter().enumerate() {
            self.arena[member as usize].positive = i % 2 == 1;
        }
        for (i, g) in edges.iter().enumerate() {
            self.arena[path[i] as usize].children.push(*g);
            self.arena[path[i + 1] as usize].parent = Some(g.reversed());
        }
        let bp_parent = SnapEdge { source_key: b_p, ..parent_edge };
        self.arena[b_p as usize].parent = Some(bp_parent);
        let up = &mut self.arena[parent_edge.target_key as usize];
        for ch in &mut up.children {
            if ch.target_key == key {
                ch.target_key = b_p;
            }
        }
        let bm_match = SnapEdge { source_key: b_m, ..match_edge };
        self.arena[b_m as usize].match_edge = Some(bm_match);
        self.arena[b_m as usize].children.push(bm_match);
        let child = &mut self.arena[match_edge.target_key as usize];
        if let Some(cm) = &mut child.match_edge {
            debug_assert_eq!(cm.target_key, key);
            cm.target_key = b_m;
        }
        if let Some(cp) = &mut child.parent {
            debug_assert_eq!(cp.target_key, key);
            cp.target_key = b_m;
        }
        self.arena[key as usize].alive = false;
    }

    /// Unwraps a matched, tree-free macrovertex: rotation only.
    fn terminal_expand(&mut self, key: u32) {
        let b = self.blossom(key);
        debug_assert!(b.parent.is_none() && b.children.is_empty());
        let petals = b.petals.clone();
        let match_edge = b.match_edge.expect("terminal expansion needs a matched top");
        let b_m = self.member_containing(key, match_edge.source_vertex);
        let cycle: Vec<u32> = petals.iter().map(|p| p.source_key).collect();
        let pos_m = cycle.iter().position(|&c| c == b_m).unwrap();
        self.rotate_matches(&petals, pos_m);
        for &c in &cycle {
            self.arena[c as usize].pistil = None;
        }
        let bm_match = SnapEdge { source_key: b_m, ..match_edge };
        self.arena[b_m as usize].match_edge = Some(bm_match);
        let partner = &mut self.arena[match_edge.target_key as usize];
        if let Some(pm) = &mut partner.match_edge {
            debug_assert_eq!(pm.target_key, key);
            pm.target_key = b_m;
        }
        self.arena[key as usize].alive = false;
        self.ops += 1;
        let record = TraceRecord {
            tick: self.ops,
            actor: 0,
            event: TraceEvent::Expand { root: self.min_id(b_m), macro_min_id: self.min_id(b_m) },
        };
        self.trace.push(record);
    }

    // ------------------------------------------------------------------
    // Drivers

    fn main_loop(&mut self) {
        let limit = 200 * (self.g.n() as u64 + 4).pow(2);
        loop {
            let Some(&start) = self
                .unmatched_tops()
                .iter()
                .min_by_key(|&&k| self.min_id(k))
            else {
                break;
            };
            // A contraction at the root replaces its top-level key, so the
            // root is tracked by a vertex it is guaranteed to keep.
            let root_vertex = VertexId(self.min_id(start));
            loop {
                assert!(self.ops < limit, "operation budget exhausted; solver bug");
                let root = self.top_of(root_vertex);
                let op = self.find_op(root);
                if self.apply(root, op) {
                    break;
                }
            }
        }
    }

    fn terminal_expansions(&mut self) {
        loop {
            let Some(key) = (0..self.arena.len() as u32).find(|&k| {
                let b = self.blossom(k);
                b.alive && b.pistil.is_none() && b.vertex_id.is_none()
            }) else {
                break;
            };
            self.terminal_expand(key);
        }
    }

    fn extract_matching(&self) -> Matching {
        let pairs = self.g.vertices().filter_map(|v| {
            let m = self.arena[v.0 as usize]
                .match_edge
                .expect("terminal state is perfectly matched");
            debug_assert_eq!(m.source_vertex, v);
            (m.source_vertex < m.target_vertex).then_some((m.source_vertex, m.target_vertex))
        });
        Matching::new(pairs)
    }

    fn snapshot(&self) -> StateSnapshot {
        let blossoms = (0..self.arena.len() as u32)
            .filter(|&k| self.blossom(k).alive)
            .map(|k| {
                let b = self.blossom(k);
                BlossomSnap {
                    key: k,
                    vertex_id: b.vertex_id,
                    internal_weight: b.z,
                    pistil: b.pistil,
                    petals: b.petals.clone(),
                    match_edge: b.match_edge,
                    parent: b.parent,
                    children: b.children.clone(),
                    positive: b.positive,
                }
            })
            .collect();
        StateSnapshot { n: self.g.n(), blossoms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_mwpm;
    use crate::samples;

    #[test]
    fn two_vertices() {
        let g = ProblemGraph::from_fn(2, |_, _| Weight::from_units(7));
        let out = solve(&g);
        assert_eq!(out.weight, Weight::from_units(7));
        assert_eq!(out.matching.pairs().count(), 1);
    }

    #[test]
    fn diamond_solves_to_two() {
        let out = solve(&samples::diamond());
        assert_eq!(out.weight, Weight::from_units(samples::DIAMOND_OPTIMUM_UNITS));
        out.matching.validate_perfect(&samples::diamond()).unwrap();
    }

    #[test]
    fn grid_solves_to_four() {
        let out = solve(&samples::grid());
        assert_eq!(out.weight, Weight::from_units(samples::GRID_OPTIMUM_UNITS));
    }

    #[test]
    fn line_solves_to_four() {
        let out = solve(&samples::line());
        assert_eq!(out.weight, Weight::from_units(samples::LINE_OPTIMUM_UNITS));
    }

    /// Triangle of mutual weight 2 plus a far vertex reachable only from
    /// vertex 0: the triangle must contract before the tree can reach out.
    fn pendant_triangle() -> ProblemGraph {
        ProblemGraph::from_fn(4, |a, b| {
            Weight::from_units(match (a.0, b.0) {
                (0, 1) | (0, 2) | (1, 2) => 2,
                (0, 3) => 2,
                _ => 100,
            })
        })
    }

    #[test]
    fn pendant_triangle_contracts_and_expands() {
        let out = solve_with_snapshots(&pendant_triangle());
        assert_eq!(out.weight, Weight::from_units(4));
        assert_eq!(out.trace.count("contract"), 1);
        assert_eq!(out.trace.count("expand"), 1);
        // The macrovertex is present at optimality and matched outward.
        let snap = &out.pre_terminal;
        let macro_b = snap.macros().next().expect("one macrovertex");
        assert_eq!(snap.vertices_under(macro_b.key).len(), 3);
        assert!(macro_b.match_edge.is_some());
        let pairs: Vec<_> = out.matching.pairs().collect();
        assert_eq!(pairs, vec![(VertexId(0), VertexId(3)), (VertexId(1), VertexId(2))]);
    }

    #[test]
    fn matches_oracle_on_random_instances() {
        for n in [4usize, 6, 8, 10] {
            for seed in 0..30u64 {
                let g = ProblemGraph::random_complete(n, 20, seed + 1000 * n as u64);
                let out = solve(&g);
                out.matching.validate_perfect(&g).unwrap();
                assert_eq!(out.matching.total_weight(&g), out.weight);
                let (best, _) = oracle_mwpm(&g).unwrap();
                assert_eq!(out.weight, best, "n={n} seed={seed}");
            }
        }
    }

    #[test]
    fn matches_oracle_on_fractional_weights() {
        // Euclidean rounding produces odd half-units; the solver rescales
        // internally and must still agree with the oracle exactly.
        for seed in 0..20u64 {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<(i64, i64)> =
                (0..6).map(|_| (rng.gen_range(0..8), rng.gen_range(0..8))).collect();
            let Ok(g) = ProblemGraph::from_points(pts, crate::graph::Metric::Euclidean) else {
                continue;
            };
            let out = solve(&g);
            let (best, _) = oracle_mwpm(&g).unwrap();
            assert_eq!(out.weight, best, "seed={seed}");
        }
    }

    #[test]
    fn in_tree_expansion_is_reachable() {
        // Small weights force many ties, which is what creates negative
        // weightless macrovertices mid-run.
        let found = (0..400u64).any(|seed| {
            let g = ProblemGraph::random_complete(10, 6, seed);
            solve(&g).in_tree_expands > 0
        });
        assert!(found, "no instance exercised in-tree expansion");
    }

    #[test]
    fn nested_macrovertices_are_reachable() {
        let found = (0..400u64).any(|seed| {
            let g = ProblemGraph::random_complete(10, 6, seed);
            let out = solve_with_snapshots(&g);
            out.snapshots
                .iter()
                .any(|s| s.macros().any(|b| b.pistil.is_some()))
        });
        assert!(found, "no instance exercised nested contraction");
    }

    #[test]
    fn trace_is_deterministic() {
        let g = ProblemGraph::random_complete(8, 15, 3);
        let a = solve(&g).trace.to_jsonl();
        let b = solve(&g).trace.to_jsonl();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }
}
