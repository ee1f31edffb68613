use std::time::Instant;

use blossom::graph::ProblemGraph;
use blossom::oracle::oracle_mwpm;
use blossom::serial;
use blossom::sim::{Latency, SimConfig};
use blossom::solver::solve_distributed;
use blossom::verify::{check_certificate, validate_quiescent_state};

fn latency_for(seed: u64) -> Latency {
    match seed % 3 {
        0 => Latency::Fixed(1),
        1 => Latency::Uniform(1, 4),
        _ => Latency::Uniform(2, 7),
    }
}

fn main() {
    // Former assertion failure: descent into a member whose unlock was in flight.
    {
        let g = ProblemGraph::random_complete(6, 100, 4666);
        let cfg = SimConfig { seed: 4, latency: Latency::Uniform(1, 4), ..SimConfig::default() };
        let out = solve_distributed(&g, cfg).expect("former crash case must quiesce");
        let oracle = oracle_mwpm(&g).unwrap();
        assert_eq!(out.weight, oracle.weight, "former crash case weight mismatch");
        println!(
            "regression case: quiesced tick {} weight {} == oracle",
            out.ticks, out.weight
        );
    }

    let mut failures = 0u32;
    for n in [2usize, 4, 6, 8, 10, 12] {
        let mut total_ms = 0.0f64;
        let mut max_ms = 0.0f64;
        let mut runs = 0u32;
        let mut max_msgs_fixed = 0u64;
        let mut max_ticks_any = 0u64;
        for inst in 0..12u64 {
            let g = ProblemGraph::random_complete(n, 100, n as u64 * 777 + inst);
            let oracle = oracle_mwpm(&g).unwrap();
            let ser = serial::solve(&g);
            if ser.weight != oracle.weight {
                println!("FAIL serial n {n} inst {inst}: {} vs {}", ser.weight, oracle.weight);
                failures += 1;
            }
            for seed in 0..6u64 {
                let cfg = SimConfig { seed, latency: latency_for(seed), ..SimConfig::default() };
                let t0 = Instant::now();
                let out = match solve_distributed(&g, cfg) {
                    Ok(o) => o,
                    Err(e) => {
                        println!("FAIL n {n} inst {inst} seed {seed}: {e}");
                        failures += 1;
                        continue;
                    }
                };
                let ms = t0.elapsed().as_secs_f64() * 1e3;
                total_ms += ms;
                if ms > max_ms {
                    max_ms = ms;
                }
                runs += 1;
                if out.weight != oracle.weight {
                    println!(
                        "FAIL weight n {n} inst {inst} seed {seed}: {} vs {}",
                        out.weight, oracle.weight
                    );
                    failures += 1;
                }
                let cutoff = out.readout_tick.unwrap_or(u64::MAX);
                for (tick, snap) in &out.snapshots {
                    if *tick >= cutoff {
                        continue;
                    }
                    let bad = validate_quiescent_state(&g, snap);
                    if !bad.is_empty() {
                        println!("FAIL snapshot n {n} inst {inst} seed {seed} tick {tick}: {bad:?}");
                        failures += 1;
                    }
                }
                if let Err(bad) = check_certificate(&g, &out.pre_terminal, &out.matching) {
                    println!("FAIL certificate n {n} inst {inst} seed {seed}: {bad:?}");
                    failures += 1;
                }
                if seed % 3 == 0 {
                    max_msgs_fixed = max_msgs_fixed.max(out.trace.messages_delivered);
                }
                max_ticks_any = max_ticks_any.max(out.ticks);
            }
        }
        println!(
            "n {n}: runs {runs} avg {:.2}ms max {:.2}ms max_msgs_fixed1 {} (n^4 {}) max_ticks {}",
            total_ms / runs as f64,
            max_ms,
            max_msgs_fixed,
            (n as u64).pow(4),
            max_ticks_any
        );
    }
    println!("failures: {failures}");
    assert_eq!(failures, 0);
}
