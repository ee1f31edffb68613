//! Maximum-cardinality matching on bipartite graphs via augmenting paths.
//!
//! This is the bipartite special case of the matcher: no blossoms can form,
//! so growing alternating trees and augmenting is the whole story. It is kept
//! as a readable reference for the graft/augment mechanics and as a test
//! oracle; the weighted solvers do not call it.

use crate::graph::{Matching, SimpleGraph, VertexId};

/// Reasons the bipartite matcher rejects its input.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BipartiteError {
    #[error("graph is not bipartite: an odd cycle passes through vertex {0}")]
    OddCycle(VertexId),
    #[error("initial matching pair ({0}, {1}) is not an edge")]
    NotAnEdge(VertexId, VertexId),
}

/// Grows `m0` into a maximum-cardinality matching of the bipartite graph `g`.
///
/// Runs one augmenting-path search per unmatched left-side vertex; by the
/// augmenting-path theorem a vertex that cannot be augmented now never can
/// be, so a single pass suffices.
pub fn hungarian_maximum_matching(
    g: &SimpleGraph,
    m0: &Matching,
) -> Result<Matching, BipartiteError> {
    let side = two_color(g)?;
    let n = g.n();

    let mut partner: Vec<Option<u32>> = vec![None; n];
    for (a, b) in m0.pairs() {
        if !g.has_edge(a.0, b.0) {
            return Err(BipartiteError::NotAnEdge(a, b));
        }
        partner[a.0 as usize] = Some(b.0);
        partner[b.0 as usize] = Some(a.0);
    }

    for v in 0..n as u32 {
        if side[v as usize] && partner[v as usize].is_none() {
            let mut visited = vec![false; n];
            try_augment(g, v, &mut partner, &mut visited);
        }
    }

    let pairs = (0..n as u32).filter_map(|v| {
        let p = partner[v as usize]?;
        (v < p).then_some((VertexId(v), VertexId(p)))
    });
    Ok(Matching::new(pairs))
}

/// Depth-first alternating-path search from a free left vertex; flips the
/// path's matched status when it reaches a free right vertex.
fn try_augment(g: &SimpleGraph, v: u32, partner: &mut Vec<Option<u32>>, visited: &mut Vec<bool>) -> bool {
    for &u in g.neighbors(v) {
        if visited[u as usize] {
            continue;
        }
        visited[u as usize] = true;
        let free = match partner[u as usize] {
            None => true,
            Some(next) => try_augment(g, next, partner, visited),
        };
        if free {
            partner[u as usize] = Some(v);
            partner[v as usize] = Some(u);
            return true;
        }
    }
    false
}

/// Two-colors the graph; `true` marks the side containing the lowest vertex
/// of each component. Fails on any odd cycle.
fn two_color(g: &SimpleGraph) -> Result<Vec<bool>, BipartiteError> {
    let n = g.n();
    let mut color: Vec<Option<bool>> = vec![None; n];
    for start in 0..n as u32 {
        if color[start as usize].is_some() {
            continue;
        }
        color[start as usize] = Some(true);
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            let c = color[v as usize].unwrap();
            for &u in g.neighbors(v) {
                match color[u as usize] {
                    None => {
                        color[u as usize] = Some(!c);
                        queue.push_back(u);
                    }
                    Some(cu) if cu == c => return Err(BipartiteError::OddCycle(VertexId(u))),
                    Some(_) => {}
                }
            }
        }
    }
    Ok(color.into_iter().map(|c| c.unwrap()).collect())
}

/// Maximum matching cardinality by branch-and-bound enumeration.
///
/// Works on any graph (it never looks at colors) but is exponential; meant
/// for cross-checking on instances of at most ~16 vertices.
pub fn exhaustive_maximum_cardinality(g: &SimpleGraph) -> usize {
    fn rec(g: &SimpleGraph, decided: &mut Vec<bool>, from: u32, best: &mut usize, current: usize) {
        // Bound: even matching every remaining vertex cannot beat `best`.
        let remaining = decided.iter().skip(from as usize).filter(|&&d| !d).count();
        if current + remaining / 2 <= *best {
            return;
        }
        let Some(v) = (from..g.n() as u32).find(|&v| !decided[v as usize]) else {
            *best = (*best).max(current);
            return;
        };
        decided[v as usize] = true;
        for &u in g.neighbors(v) {
            if u > v && !decided[u as usize] {
                decided[u as usize] = true;
                rec(g, decided, v + 1, best, current + 1);
                decided[u as usize] = false;
            }
        }
        // v stays unmatched.
        rec(g, decided, v + 1, best, current);
        decided[v as usize] = false;
    }
    let mut best = 0;
    rec(g, &mut vec![false; g.n()], 0, &mut best, 0);
    best
}

/// Random bipartite graph with sides `0..left` and `left..left+right`.
pub fn random_bipartite(left: usize, right: usize, edge_permille: u32, seed: u64) -> SimpleGraph {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..left as u32 {
        for b in 0..right as u32 {
            if rng.gen_range(0..1000) < edge_permille {
                edges.push((a, left as u32 + b));
            }
        }
    }
    SimpleGraph::new(left + right, edges)
}
