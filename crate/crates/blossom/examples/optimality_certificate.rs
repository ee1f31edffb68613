//! Check the invariants a run must maintain and the certificate it ends on.
//!
//! The simulator snapshots the forest whenever the system goes quiescent.
//! During the solving phase every such snapshot must be a sound state:
//! chains intact, petal edges tight, duals feasible, trees alternating.
//! Once the optimum is reached the run switches to reading the matching out
//! of its macrovertices (`readout_tick`); from that point the forest is
//! intentionally dismantled and the invariants no longer apply.
//!
//! The state just before readout doubles as an optimality certificate: dual
//! weights that price every edge consistently and are paid out exactly by
//! the matching. Verifying it takes one pass over the edges, no rerun.
//!
//! Run with: cargo run --example optimality_certificate

use blossom::graph::ProblemGraph;
use blossom::samples;
use blossom::sim::SimConfig;
use blossom::solver::solve_distributed;
use blossom::verify::{check_certificate, validate_quiescent_state};

fn main() {
    // This instance's optimum wraps two odd cycles, so the run ends with a
    // visible readout phase.
    let instances = [
        ("diamond", samples::diamond()),
        ("grid", samples::grid()),
        ("line", samples::line()),
        ("random n=10", ProblemGraph::random_complete(10, 12, 6)),
    ];

    for (name, g) in instances {
        let out = solve_distributed(&g, SimConfig::default()).expect("run quiesces");

        let mut validated = 0;
        let mut skipped = 0;
        for (tick, snap) in &out.snapshots {
            if out.readout_tick.is_some_and(|r| *tick >= r) {
                skipped += 1;
                continue;
            }
            let violations = validate_quiescent_state(&g, snap);
            assert!(violations.is_empty(), "{name} tick {tick}: {violations:?}");
            validated += 1;
        }

        check_certificate(&g, &out.pre_terminal, &out.matching)
            .unwrap_or_else(|bad| panic!("{name}: certificate rejected: {bad:?}"));

        let macros = out.pre_terminal.macros().count();
        let readout = match out.readout_tick {
            Some(t) => format!("readout from tick {t}/{}", out.ticks),
            None => "no readout needed".into(),
        };
        println!(
            "{name:>12}: weight {} certified ({} macro duals), \
             {validated} snapshots validated, {skipped} in readout, {readout}",
            out.weight, macros
        );
    }
}
