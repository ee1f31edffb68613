//! Front door of the distributed solver: builds the process world, runs the
//! simulator, and turns the raw outcome into solver-independent artifacts.
//!
//! The process layout is fixed: collector at 0, dryad at 1, driver at 2,
//! vertices at 3..3+n in id order, macrovertices wherever contraction spawns
//! them. Raw snapshots carry process addresses; here they are rewritten to
//! the stable key scheme (vertices 0..n, macrovertices n, n+1, ... in
//! creation order) shared with the serial solver, so the same validators and
//! certificate checks apply to both.

use crate::dryad::{CollectorState, DriverState, DryadState};
use crate::graph::{Matching, ProblemGraph};
use crate::msg::Address;
use crate::node::{NodeState, Topology};
use crate::sim::{RunError, Sim, SimConfig};
use crate::snapshot::{BlossomSnap, SnapEdge, StateSnapshot};
use crate::trace::EventTrace;
use crate::weight::Weight;
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

/// Everything a distributed run produces.
#[derive(Clone, Debug)]
pub struct DistributedOutcome {
    pub matching: Matching,
    /// Total matching weight in the instance's own scale.
    pub weight: Weight,
    pub trace: EventTrace,
    pub ticks: u64,
    /// Forest at every busy-to-quiescent transition, with tick stamps.
    pub snapshots: Vec<(u64, StateSnapshot)>,
    /// State at optimality, before terminal expansions dissolve the
    /// macrovertices; this is what the optimality certificate inspects.
    pub pre_terminal: StateSnapshot,
    /// Tick of the first terminal expansion, when the run stopped solving
    /// and started reading the matching out. Snapshots from that tick on
    /// dismantle macrovertex duals and are no longer forest-invariant
    /// states; None when the optimum had no macrovertices to unwrap.
    pub readout_tick: Option<u64>,
    pub final_state: StateSnapshot,
}

#[derive(Debug)]
pub enum SolveError {
    /// The run blew its tick budget or wedged; the trace is kept for
    /// diagnosis.
    Livelock { ticks: u64, trace: EventTrace },
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Livelock { ticks, .. } => {
                write!(f, "distributed run did not quiesce within {ticks} ticks")
            }
        }
    }
}

impl std::error::Error for SolveError {}

/// Maps every node process address to its stable snapshot key. The first n
/// node spawns are the vertices in id order; later ones are macrovertices in
/// creation order, numbered from n.
fn key_map(
    n: usize,
    vertex_base: Address,
    spawn_log: &[(Address, &'static str)],
) -> BTreeMap<Address, u32> {
    let mut map = BTreeMap::new();
    let mut rank = 0u32;
    for &(addr, kind) in spawn_log {
        if kind != "node" {
            continue;
        }
        if (rank as usize) < n {
            debug_assert_eq!(addr, vertex_base + rank, "vertex spawn order broke");
        }
        map.insert(addr, rank);
        rank += 1;
    }
    map
}

fn translate(n: usize, parts: &[BlossomSnap], key_of: &BTreeMap<Address, u32>) -> StateSnapshot {
    let key = |a: u32| key_of[&a];
    let edge = |e: &SnapEdge| SnapEdge {
        source_key: key(e.source_key),
        target_key: key(e.target_key),
        ..*e
    };
    let blossoms = parts
        .iter()
        .map(|b| BlossomSnap {
            key: key(b.key),
            vertex_id: b.vertex_id,
            internal_weight: b.internal_weight,
            pistil: b.pistil.map(key),
            petals: b.petals.iter().map(edge).collect(),
            match_edge: b.match_edge.as_ref().map(edge),
            parent: b.parent.as_ref().map(edge),
            children: b.children.iter().map(edge).collect(),
            positive: b.positive,
        })
        .collect();
    let mut snap = StateSnapshot { n, blossoms };
    snap.normalize();
    snap
}

/// Solves the instance on the simulated actor runtime. Deterministic in
/// (instance, config).
pub fn solve_distributed(
    g: &ProblemGraph,
    config: SimConfig,
) -> Result<DistributedOutcome, SolveError> {
    let n = g.n();
    if n == 0 {
        let empty = StateSnapshot { n: 0, blossoms: Vec::new() };
        return Ok(DistributedOutcome {
            matching: Matching::new([]),
            weight: Weight::ZERO,
            trace: EventTrace::default(),
            ticks: 0,
            snapshots: Vec::new(),
            pre_terminal: empty.clone(),
            readout_tick: None,
            final_state: empty,
        });
    }

    let mut sim = Sim::new(config);
    let topo = Arc::new(Topology {
        graph: Arc::new(g.clone()),
        collector: 0,
        dryad: 1,
        vertex_base: 3,
    });
    let pairs = Rc::new(RefCell::new(Vec::new()));
    let collector = sim.spawn_initial(Box::new(CollectorState::new(pairs.clone())));
    let dryad = sim.spawn_initial(Box::new(DryadState::new(topo.clone())));
    sim.spawn_initial(Box::new(DriverState::new(topo.clone())));
    debug_assert_eq!((collector, dryad), (topo.collector, topo.dryad));
    for id in g.vertices() {
        let planned = topo.vertex_addr(id);
        let addr = sim.spawn_initial(Box::new(NodeState::vertex(topo.clone(), planned, id)));
        debug_assert_eq!(addr, planned);
    }

    let out = sim.run().map_err(|RunError::Livelock { ticks, trace }| {
        SolveError::Livelock { ticks, trace }
    })?;

    let key_of = key_map(n, topo.vertex_base, &out.spawn_log);
    let final_state = translate(n, &out.raw_final, &key_of);
    let snapshots = out
        .raw_snapshots
        .iter()
        .map(|(tick, parts)| (*tick, translate(n, parts, &key_of)))
        .collect();
    // With no macrovertices left at optimality no unwrap directive is ever
    // sent, and the final forest is already the optimality forest.
    let readout_tick = out.raw_pre_terminal.as_ref().map(|&(tick, _)| tick);
    let pre_terminal = out
        .raw_pre_terminal
        .as_ref()
        .map_or_else(|| final_state.clone(), |(_, parts)| translate(n, parts, &key_of));

    let matching = Matching::new(pairs.borrow().iter().copied());
    let reaped: Vec<_> = matching.pairs().collect();
    assert_eq!(
        reaped,
        final_state.top_matching(),
        "reaped pairs disagree with the final forest"
    );
    let weight = matching.total_weight(g);

    Ok(DistributedOutcome {
        matching,
        weight,
        trace: out.trace,
        ticks: out.ticks,
        snapshots,
        pre_terminal,
        readout_tick,
        final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VertexId;
    use crate::sim::Latency;
    use crate::verify::{check_certificate, validate_quiescent_state};
    use crate::{samples, serial};

    fn config(seed: u64) -> SimConfig {
        SimConfig { seed, ..SimConfig::default() }
    }

    fn solved(g: &ProblemGraph, cfg: SimConfig) -> DistributedOutcome {
        let out = solve_distributed(g, cfg).expect("run quiesces");
        let solving = |tick: u64| out.readout_tick.is_none_or(|r| tick < r);
        for (tick, snap) in &out.snapshots {
            if !solving(*tick) {
                break;
            }
            let bad = validate_quiescent_state(g, snap);
            assert!(bad.is_empty(), "tick {tick}: {bad:?}");
        }
        check_certificate(g, &out.pre_terminal, &out.matching)
            .unwrap_or_else(|bad| panic!("certificate rejected: {bad:?}"));
        out
    }

    #[test]
    fn two_vertices_pair_up() {
        let g = ProblemGraph::from_fn(2, |_, _| Weight::from_units(5));
        let out = solved(&g, config(0));
        assert_eq!(out.weight, Weight::from_units(5));
        assert_eq!(
            out.matching.pairs().collect::<Vec<_>>(),
            vec![(VertexId(0), VertexId(1))]
        );
    }

    #[test]
    fn diamond_reaches_the_frozen_optimum() {
        let g = samples::diamond();
        for seed in 0..4 {
            let out = solved(&g, config(seed));
            assert_eq!(out.weight, Weight::from_units(samples::DIAMOND_OPTIMUM_UNITS));
        }
    }

    #[test]
    fn grid_reaches_the_frozen_optimum() {
        let g = samples::grid();
        let out = solved(&g, config(1));
        assert_eq!(out.weight, Weight::from_units(samples::GRID_OPTIMUM_UNITS));
    }

    #[test]
    fn line_reaches_the_frozen_optimum() {
        let g = samples::line();
        let out = solved(&g, config(2));
        assert_eq!(out.weight, Weight::from_units(samples::LINE_OPTIMUM_UNITS));
    }

    #[test]
    fn agrees_with_the_serial_solver_on_random_instances() {
        for n in [2usize, 4, 6, 8] {
            for seed in 0..3u64 {
                let g = ProblemGraph::random_complete(n, 10, 1000 * n as u64 + seed);
                let expected = serial::solve(&g).weight;
                let out = solved(&g, config(seed));
                assert_eq!(out.weight, expected, "n = {n}, seed = {seed}");
            }
        }
    }

    #[test]
    fn jittery_latency_still_converges() {
        let g = samples::grid();
        let cfg = SimConfig {
            seed: 3,
            latency: Latency::Uniform(1, 5),
            ..SimConfig::default()
        };
        let out = solved(&g, cfg);
        assert_eq!(out.weight, Weight::from_units(samples::GRID_OPTIMUM_UNITS));
    }

    #[test]
    fn starving_the_tick_budget_reports_livelock() {
        let g = samples::grid();
        let cfg = SimConfig { seed: 0, max_ticks: 3, ..SimConfig::default() };
        match solve_distributed(&g, cfg) {
            Err(SolveError::Livelock { ticks, .. }) => assert!(ticks <= 4),
            other => panic!("expected livelock, got {other:?}"),
        }
    }
}
