//! Cross-check the three solvers against each other on random instances.
//!
//! The serial solver grows one tree at a time; the distributed solver runs
//! every vertex as an actor under randomized message latency. Both must land
//! on the exhaustive optimum whenever the instance is small enough to
//! enumerate.
//!
//! Run with: cargo run --example serial_vs_distributed

use blossom::graph::ProblemGraph;
use blossom::oracle::{oracle_mwpm, ORACLE_LIMIT};
use blossom::serial;
use blossom::sim::{Latency, SimConfig};
use blossom::solver::solve_distributed;

fn main() {
    println!("{:>4} {:>6} {:>10} {:>10} {:>10}", "n", "seed", "serial", "distrib", "oracle");
    for n in [4usize, 6, 8, 10, 12] {
        for seed in 0..4u64 {
            let g = ProblemGraph::random_complete(n, 20, n as u64 * 1000 + seed);

            let serial_out = serial::solve(&g);

            let cfg = SimConfig {
                seed,
                latency: Latency::Uniform(1, 4),
                ..SimConfig::default()
            };
            let dist_out = solve_distributed(&g, cfg).expect("run quiesces");

            let oracle_w = if g.n() <= ORACLE_LIMIT {
                let (w, _) = oracle_mwpm(&g).unwrap();
                format!("{w}")
            } else {
                "-".into()
            };

            println!(
                "{:>4} {:>6} {:>10} {:>10} {:>10}",
                n, seed, serial_out.weight, dist_out.weight, oracle_w
            );
            assert_eq!(serial_out.weight, dist_out.weight, "n {n} seed {seed}");
            if g.n() <= ORACLE_LIMIT {
                let (w, _) = oracle_mwpm(&g).unwrap();
                assert_eq!(w, serial_out.weight, "n {n} seed {seed}");
            }
        }
    }
    println!("all solvers agree");
}
