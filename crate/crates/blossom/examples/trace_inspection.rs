//! Record a full event trace, audit it, and round-trip it through JSONL.
//!
//! At `TraceLevel::Full` the simulator records one line per delivered
//! message plus every structural commit (grafts, augments, contractions,
//! expansions, reweights) and every lock acquisition. The auditor replays
//! the trace and checks protocol sanity: gapless channel sequence numbers,
//! causal delivery, balanced lock/unlock pairs, commits only inside
//! critical sections.
//!
//! Run with: cargo run --example trace_inspection

use blossom::samples;
use blossom::sim::SimConfig;
use blossom::solver::solve_distributed;
use blossom::trace::{EventTrace, TraceLevel};
use blossom::verify::audit_trace;

fn main() {
    let g = samples::grid();
    let cfg = SimConfig { trace_level: TraceLevel::Full, ..SimConfig::default() };
    let out = solve_distributed(&g, cfg).expect("run quiesces");

    println!("event counts:");
    for (kind, count) in &out.trace.kind_counts {
        println!("  {kind:>14} {count}");
    }

    println!("structural commits, in order:");
    for record in out.trace.records.iter().filter(|r| r.event.is_commit()) {
        println!("  tick {:>5}  {:?}", record.tick, record.event);
    }

    let report = audit_trace(&out.trace).expect("trace passes the audit");
    println!(
        "audit: {} deliveries, {} multireweights, {} rewinds",
        report.deliveries,
        report.multireweights,
        report.rewinds.len()
    );
    for (root, evidence) in &report.rewinds {
        println!("  tree {root} rewound, yielding to tree {evidence}");
    }

    // The JSONL form is deterministic and parses back to the same records.
    let text = out.trace.to_jsonl();
    let back = EventTrace::from_jsonl(&text).expect("trace parses");
    assert_eq!(back.records, out.trace.records);
    println!(
        "round-tripped {} records through {} bytes of JSONL",
        back.records.len(),
        text.len()
    );
}
