//! Exhaustive minimum-weight perfect matching.
//!
//! Enumerates all (n-1)!! perfect matchings, so it is only usable on tiny
//! instances, but it is trivially correct and serves as the ground truth the
//! real solvers are compared against.

use crate::graph::{Matching, ProblemGraph, VertexId};
use crate::weight::Weight;

/// Largest vertex count the exhaustive solver accepts (10395 matchings).
pub const ORACLE_LIMIT: usize = 12;

/// Instance too large to enumerate.
#[derive(Debug, Clone, thiserror::Error)]
#[error("exhaustive solver limited to n <= {ORACLE_LIMIT}, got n = {0}")]
pub struct OracleTooLarge(pub usize);

/// Minimum-weight perfect matching by exhaustive enumeration.
///
/// Ties are broken lexicographically on the sorted pair list, so the result
/// is a deterministic function of the instance.
pub fn oracle_mwpm(g: &ProblemGraph) -> Result<(Weight, Matching), OracleTooLarge> {
    if g.n() > ORACLE_LIMIT {
        return Err(OracleTooLarge(g.n()));
    }
    let mut best: Option<(Weight, Vec<(VertexId, VertexId)>)> = None;
    let mut current = Vec::with_capacity(g.n() / 2);
    let mut free: Vec<bool> = vec![true; g.n()];
    enumerate(g, &mut free, &mut current, Weight::ZERO, &mut |w, pairs| {
        let candidate = (w, pairs.to_vec());
        // Pairs are generated lowest-first, so plain tuple order gives the
        // lexicographic tie-break.
        if best.as_ref().is_none_or(|b| candidate < *b) {
            best = Some(candidate);
        }
    });
    let (weight, pairs) = best.expect("even nonempty graph has a perfect matching");
    Ok((weight, Matching::new(pairs)))
}

/// Calls `visit` once per perfect matching with its total weight.
fn enumerate(
    g: &ProblemGraph,
    free: &mut Vec<bool>,
    current: &mut Vec<(VertexId, VertexId)>,
    acc: Weight,
    visit: &mut impl FnMut(Weight, &[(VertexId, VertexId)]),
) {
    let Some(a) = free.iter().position(|&f| f) else {
        visit(acc, current);
        return;
    };
    free[a] = false;
    for b in a + 1..g.n() {
        if !free[b] {
            continue;
        }
        free[b] = false;
        let (va, vb) = (VertexId(a as u32), VertexId(b as u32));
        current.push((va, vb));
        enumerate(g, free, current, acc + g.edge_weight(va, vb), visit);
        current.pop();
        free[b] = true;
    }
    free[a] = true;
}
