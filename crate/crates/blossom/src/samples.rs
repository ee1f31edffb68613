//! Small fixed instances used across tests, examples, and benchmarks.
//!
//! Each is tiny enough to check by hand yet exercises a distinct part of the
//! solver. Optimal weights quoted here are frozen from the exhaustive oracle.

use crate::graph::{Metric, ProblemGraph};
use crate::weight::Weight;

/// K4 whose unit edges form the 4-cycle 0-1-3-2-0 and whose diagonals
/// (0,3) and (1,2) cost 2.
///
/// Both optimal matchings take opposite sides of the cycle for total
/// weight 2. Solving it forces an odd-cycle contraction, which makes it the
/// smallest useful blossom regression.
pub fn diamond() -> ProblemGraph {
    ProblemGraph::from_fn(4, |a, b| {
        let units = match (a.0, b.0) {
            (0, 1) | (0, 2) | (1, 3) | (2, 3) => 1,
            (0, 3) | (1, 2) => 2,
            _ => unreachable!(),
        };
        Weight::from_units(units)
    })
}

/// Six points of the integer grid under the manhattan metric:
///
/// ```text
/// y=1      0   1   2
/// y=0  4   3   5
///      x=0 1   2   3
/// ```
///
/// The minimum matching weight is 4, attained by five of the fifteen perfect
/// matchings, e.g. {(0,5), (1,2), (3,4)}. Two trees end up holding each other
/// across a tight edge, so this instance exercises coordinated multi-tree
/// reweighting.
pub fn grid() -> ProblemGraph {
    ProblemGraph::from_points(
        vec![(1, 1), (2, 1), (3, 1), (1, 0), (0, 0), (2, 0)],
        Metric::Manhattan,
    )
    .expect("fixed instance is valid")
}

/// Four collinear points at x = 0, 1, 3, 6 under the manhattan metric.
///
/// Optimal matching {(0,1), (2,3)} with total weight 4. Neighbouring trees
/// compete to reweight over the shared middle gap, which makes this the
/// smallest instance that can provoke a priority rewind.
pub fn line() -> ProblemGraph {
    ProblemGraph::from_points(vec![(0, 0), (1, 0), (3, 0), (6, 0)], Metric::Manhattan)
        .expect("fixed instance is valid")
}

/// Frozen optimal total weights for the fixed instances.
pub const DIAMOND_OPTIMUM_UNITS: i64 = 2;
pub const GRID_OPTIMUM_UNITS: i64 = 4;
pub const LINE_OPTIMUM_UNITS: i64 = 4;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VertexId;

    #[test]
    fn diamond_weights() {
        let g = diamond();
        assert_eq!(g.n(), 4);
        assert_eq!(g.solver_scale(), 1);
        assert_eq!(
            g.edge_weight(VertexId(0), VertexId(1)),
            Weight::from_units(1)
        );
        assert_eq!(
            g.edge_weight(VertexId(1), VertexId(2)),
            Weight::from_units(2)
        );
        // A hand-checked optimal matching.
        let m = crate::graph::Matching::new(vec![
            (VertexId(0), VertexId(1)),
            (VertexId(2), VertexId(3)),
        ]);
        assert_eq!(
            m.total_weight(&g),
            Weight::from_units(DIAMOND_OPTIMUM_UNITS)
        );
    }

    #[test]
    fn grid_weights() {
        let g = grid();
        assert_eq!(g.n(), 6);
        assert_eq!(g.solver_scale(), 1);
        let m = crate::graph::Matching::new(vec![
            (VertexId(0), VertexId(5)),
            (VertexId(1), VertexId(2)),
            (VertexId(3), VertexId(4)),
        ]);
        assert_eq!(m.total_weight(&g), Weight::from_units(GRID_OPTIMUM_UNITS));
    }

    #[test]
    fn line_weights() {
        let g = line();
        let m = crate::graph::Matching::new(vec![
            (VertexId(0), VertexId(1)),
            (VertexId(2), VertexId(3)),
        ]);
        assert_eq!(m.total_weight(&g), Weight::from_units(LINE_OPTIMUM_UNITS));
    }
}
