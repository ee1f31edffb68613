//! Sweep scheduler seeds and latency models over one instance.
//!
//! The simulator's randomness only affects message timing, never the answer:
//! every seed must reach the same total weight. What does vary is the route
//! taken, visible here as the spread in ticks, messages, and conflict
//! recoveries (rewinds).
//!
//! Run with: cargo run --example seed_sweep

use blossom::samples;
use blossom::sim::{Latency, SimConfig};
use blossom::solver::solve_distributed;

fn main() {
    let g = samples::grid();
    let models = [
        ("fixed:1", Latency::Fixed(1)),
        ("fixed:3", Latency::Fixed(3)),
        ("uniform:1:4", Latency::Uniform(1, 4)),
        ("uniform:2:7", Latency::Uniform(2, 7)),
    ];

    for (name, latency) in models {
        let mut ticks = Vec::new();
        let mut messages = Vec::new();
        let mut rewinds = 0u64;
        let mut weight = None;
        for seed in 0..25u64 {
            let cfg = SimConfig { seed, latency, ..SimConfig::default() };
            let out = solve_distributed(&g, cfg).expect("run quiesces");
            match weight {
                None => weight = Some(out.weight),
                Some(w) => assert_eq!(w, out.weight, "{name} seed {seed} diverged"),
            }
            ticks.push(out.ticks);
            messages.push(out.trace.messages_delivered);
            rewinds += out.trace.count("rewind");
        }
        ticks.sort_unstable();
        messages.sort_unstable();
        println!(
            "{name:>12}: weight {} ticks {}..{} messages {}..{} rewinds {}",
            weight.unwrap(),
            ticks[0],
            ticks[ticks.len() - 1],
            messages[0],
            messages[messages.len() - 1],
            rewinds,
        );
    }
    println!("every seed and latency model agreed on the weight");
}
