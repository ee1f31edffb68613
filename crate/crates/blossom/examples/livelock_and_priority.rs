//! How symmetric conflicts get broken, and what the tick budget catches.
//!
//! Four collinear points make the two matching trees perfectly symmetric:
//! both want to reweight over the shared middle gap, and with unlucky
//! message timing both commit before either hears of the other. Rank breaks
//! the tie: every tree carries the minimum vertex id of its members as its
//! priority, and when two committed reweights oversubscribe an edge, the
//! higher-ranked (larger min-id) tree rewinds its commit and retries. The
//! lower rank never yields, so the system cannot oscillate forever.
//!
//! The tick budget is the safety net for everything else: a run that fails
//! to quiesce in time is reported as a livelock, with the trace retained
//! for diagnosis.
//!
//! Run with: cargo run --example livelock_and_priority

use blossom::samples;
use blossom::sim::SimConfig;
use blossom::solver::{solve_distributed, SolveError};
use blossom::trace::TraceLevel;
use blossom::verify::audit_trace;

fn main() {
    let g = samples::line();

    let mut conflicts = 0u64;
    let mut yielded_to_rank = 0u64;
    for seed in 0..60u64 {
        let cfg = SimConfig {
            seed,
            trace_level: TraceLevel::StateUpdates,
            ..SimConfig::default()
        };
        let out = solve_distributed(&g, cfg).expect("run quiesces");
        assert_eq!(out.weight, blossom::Weight::from_units(samples::LINE_OPTIMUM_UNITS));
        let report = audit_trace(&out.trace).expect("trace passes the audit");
        for (root, evidence_root) in report.rewinds {
            conflicts += 1;
            if root > evidence_root {
                yielded_to_rank += 1;
            }
            println!("seed {seed:>2}: tree {root} rewound in favour of tree {evidence_root}");
        }
    }
    println!(
        "{conflicts} rewinds over 60 seeds; {yielded_to_rank} resolved by rank \
         (the rest yielded to an already-final tree)"
    );
    assert!(conflicts > 0, "some seed should provoke a collision");

    // A three-tick budget is hopeless for any real run. The error keeps the
    // trace so the stall can be inspected.
    let tight = SimConfig { max_ticks: 3, ..SimConfig::default() };
    match solve_distributed(&g, tight) {
        Err(SolveError::Livelock { ticks, trace }) => {
            println!(
                "budget of 3 ticks: reported livelock at tick {ticks} with {} messages on record",
                trace.messages_delivered
            );
        }
        Ok(_) => unreachable!("cannot finish in three ticks"),
    }
}
