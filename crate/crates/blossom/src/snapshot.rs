//! Structural snapshots of solver state.
//!
//! Both solvers can freeze their blossom forest into this shape: every
//! original vertex and every live macrovertex becomes a [`BlossomSnap`],
//! linked by stable keys. The validators and the optimality certificate work
//! on snapshots only, so they apply to the serial and the distributed solver
//! alike. All weights in a snapshot live in the solver's scaled domain.

use crate::graph::{ProblemGraph, VertexId};
use crate::weight::Weight;
use serde::{Deserialize, Serialize};

/// A directed edge at the blossom level: the underlying graph edge
/// (`source_vertex`, `target_vertex`) plus the keys of the blossoms the two
/// endpoints currently belong to at the relevant level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapEdge {
    pub source_key: u32,
    pub source_vertex: VertexId,
    pub target_vertex: VertexId,
    pub target_key: u32,
}

impl SnapEdge {
    pub fn reversed(self) -> SnapEdge {
        SnapEdge {
            source_key: self.target_key,
            source_vertex: self.target_vertex,
            target_vertex: self.source_vertex,
            target_key: self.source_key,
        }
    }

    /// The unordered underlying graph edge.
    pub fn vertex_pair(self) -> (VertexId, VertexId) {
        let (a, b) = (self.source_vertex, self.target_vertex);
        (a.min(b), a.max(b))
    }
}

/// One blossom: an original vertex (`vertex_id` set, key < n) or a
/// macrovertex (key >= n, assigned in creation order).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlossomSnap {
    pub key: u32,
    pub vertex_id: Option<VertexId>,
    /// Dual weight z, scaled domain.
    pub internal_weight: Weight,
    /// Key of the directly containing macrovertex, if any.
    pub pistil: Option<u32>,
    /// Oriented odd cycle over the direct members; empty for vertices.
    pub petals: Vec<SnapEdge>,
    pub match_edge: Option<SnapEdge>,
    /// Edge from self toward the tree parent.
    pub parent: Option<SnapEdge>,
    /// Edges from self toward tree children.
    pub children: Vec<SnapEdge>,
    pub positive: bool,
}

impl BlossomSnap {
    pub fn is_macro(&self) -> bool {
        self.vertex_id.is_none()
    }

    pub fn is_top(&self) -> bool {
        self.pistil.is_none()
    }

    /// In a tree iff it has tree pointers; a lone root is only detectable by
    /// context (unmatched top), so free barbells also report false here.
    pub fn has_tree_links(&self) -> bool {
        self.parent.is_some() || !self.children.is_empty()
    }
}

/// The full forest at one instant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub n: usize,
    /// Sorted by key; keys are sparse once macrovertices have expanded.
    pub blossoms: Vec<BlossomSnap>,
}

impl StateSnapshot {
    /// Sorts by key; call once after assembling out of order.
    pub fn normalize(&mut self) {
        self.blossoms.sort_by_key(|b| b.key);
    }

    pub fn get(&self, key: u32) -> Option<&BlossomSnap> {
        self.blossoms
            .binary_search_by_key(&key, |b| b.key)
            .ok()
            .map(|i| &self.blossoms[i])
    }

    pub fn tops(&self) -> impl Iterator<Item = &BlossomSnap> {
        self.blossoms.iter().filter(|b| b.is_top())
    }

    pub fn macros(&self) -> impl Iterator<Item = &BlossomSnap> {
        self.blossoms.iter().filter(|b| b.is_macro())
    }

    /// Keys of the blossoms containing `v`, innermost (the vertex itself)
    /// first, top-level last. Returns None on a broken pistil link.
    pub fn chain(&self, v: VertexId) -> Option<Vec<u32>> {
        let mut chain = vec![v.0];
        let mut current = self.get(v.0)?;
        while let Some(p) = current.pistil {
            chain.push(p);
            current = self.get(p)?;
        }
        Some(chain)
    }

    /// Key of the top-level blossom containing `v`.
    pub fn top_of(&self, v: VertexId) -> Option<u32> {
        self.chain(v).map(|c| *c.last().unwrap())
    }

    /// Sum of dual weights along `v`'s chain, optionally stopping below
    /// `stop` (exclusive). With `stop = None` the whole chain counts.
    pub fn dual_sum(&self, v: VertexId, stop: Option<u32>) -> Option<Weight> {
        let mut sum = Weight::ZERO;
        for key in self.chain(v)? {
            if Some(key) == stop {
                return Some(sum);
            }
            sum += self.get(key)?.internal_weight;
        }
        match stop {
            // Caller named a stop that is not on the chain.
            Some(_) => None,
            None => Some(sum),
        }
    }

    /// Adjusted weight of an edge between vertices in *different* top-level
    /// blossoms: scaled weight minus both full dual chains.
    pub fn adjusted_cross(&self, g: &ProblemGraph, u: VertexId, v: VertexId) -> Option<Weight> {
        Some(g.scaled_weight(u, v) - self.dual_sum(u, None)? - self.dual_sum(v, None)?)
    }

    /// Adjusted weight of an edge whose endpoints both live strictly inside
    /// the macrovertex `inside`: dual chains count only below it.
    pub fn adjusted_within(
        &self,
        g: &ProblemGraph,
        u: VertexId,
        v: VertexId,
        inside: u32,
    ) -> Option<Weight> {
        Some(g.scaled_weight(u, v) - self.dual_sum(u, Some(inside))? - self.dual_sum(v, Some(inside))?)
    }

    /// All original vertices lying under the blossom `key`.
    pub fn vertices_under(&self, key: u32) -> Vec<VertexId> {
        (0..self.n as u32)
            .map(VertexId)
            .filter(|&v| self.chain(v).is_some_and(|c| c.contains(&key)))
            .collect()
    }

    /// The matching read off the top level: each matched top contributes the
    /// underlying vertex pair of its match edge.
    pub fn top_matching(&self) -> Vec<(VertexId, VertexId)> {
        let mut pairs: Vec<_> = self
            .tops()
            .filter_map(|b| b.match_edge.map(SnapEdge::vertex_pair))
            .collect();
        pairs.sort();
        pairs.dedup();
        pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ProblemGraph;

    /// n = 4: triangle {0,1,2} wrapped in macro 4 matched to vertex 3.
    fn wrapped_triangle() -> StateSnapshot {
        let vertex = |id: u32, z: i64, pistil: Option<u32>| BlossomSnap {
            key: id,
            vertex_id: Some(VertexId(id)),
            internal_weight: Weight::from_half_units(z),
            pistil,
            petals: vec![],
            match_edge: None,
            parent: None,
            children: vec![],
            positive: true,
        };
        let edge = |sk: u32, sv: u32, tv: u32, tk: u32| SnapEdge {
            source_key: sk,
            source_vertex: VertexId(sv),
            target_vertex: VertexId(tv),
            target_key: tk,
        };
        let mut snap = StateSnapshot {
            n: 4,
            blossoms: vec![
                vertex(0, 2, Some(4)),
                vertex(1, 2, Some(4)),
                vertex(2, 2, Some(4)),
                {
                    let mut v3 = vertex(3, 0, None);
                    v3.match_edge = Some(edge(3, 3, 0, 4));
                    v3
                },
                BlossomSnap {
                    key: 4,
                    vertex_id: None,
                    internal_weight: Weight::from_half_units(1),
                    pistil: None,
                    petals: vec![edge(0, 0, 1, 1), edge(1, 1, 2, 2), edge(2, 2, 0, 0)],
                    match_edge: Some(edge(4, 0, 3, 3)),
                    parent: None,
                    children: vec![],
                    positive: true,
                },
            ],
        };
        snap.normalize();
        snap
    }

    #[test]
    fn chains_and_tops() {
        let s = wrapped_triangle();
        assert_eq!(s.chain(VertexId(1)), Some(vec![1, 4]));
        assert_eq!(s.chain(VertexId(3)), Some(vec![3]));
        assert_eq!(s.top_of(VertexId(2)), Some(4));
        assert_eq!(s.tops().count(), 2);
        assert_eq!(s.vertices_under(4), vec![VertexId(0), VertexId(1), VertexId(2)]);
    }

    #[test]
    fn dual_sums_respect_stop() {
        let s = wrapped_triangle();
        assert_eq!(s.dual_sum(VertexId(0), None), Some(Weight::from_half_units(3)));
        assert_eq!(
            s.dual_sum(VertexId(0), Some(4)),
            Some(Weight::from_half_units(2))
        );
        // Stop key not on the chain.
        assert_eq!(s.dual_sum(VertexId(3), Some(4)), None);
    }

    #[test]
    fn adjusted_weights() {
        let s = wrapped_triangle();
        let g = ProblemGraph::from_fn(4, |_, _| Weight::from_units(2));
        // w = 4 half-units scaled; chains: 0 -> 2+1, 3 -> 0.
        assert_eq!(
            s.adjusted_cross(&g, VertexId(0), VertexId(3)),
            Some(Weight::from_half_units(1))
        );
        // Inside the macro both endpoints stop below key 4.
        assert_eq!(
            s.adjusted_within(&g, VertexId(0), VertexId(1), 4),
            Some(Weight::ZERO)
        );
    }

    #[test]
    fn top_matching_reads_vertex_pairs() {
        let s = wrapped_triangle();
        assert_eq!(s.top_matching(), vec![(VertexId(0), VertexId(3))]);
    }
}
