//! The instance file format: explicit weights, metric points, round trips.
//!
//! Instances are line-oriented text. `n <count>` declares the (even) vertex
//! count; after that either every unordered pair gets a `w a b <weight>`
//! line, or a `metric <name>` line is followed by one `v id x y` line per
//! vertex. Weights resolve to half-integral units, so "3.5" is exact.
//!
//! Run with: cargo run --example instance_io

use blossom::graph::ProblemGraph;
use blossom::serial;

fn main() {
    let explicit = "\
# a triangle-free quad
n 4
w 0 1 3.5
w 0 2 1
w 0 3 4
w 1 2 4
w 1 3 1
w 2 3 3.5
";
    let g = ProblemGraph::parse(explicit).expect("valid instance");
    println!("parsed explicit-weight instance: n = {}", g.n());
    let out = serial::solve(&g);
    println!("  optimal weight {}", out.weight);

    let metric = "\
n 6
metric manhattan
v 0 1 1
v 1 2 1
v 2 3 1
v 3 1 0
v 4 0 0
v 5 2 0
";
    let g = ProblemGraph::parse(metric).expect("valid instance");
    println!("parsed manhattan instance: n = {}", g.n());
    println!("  optimal weight {}", serial::solve(&g).weight);

    // save() renders the same format back out, and the round trip is exact.
    let text = g.save();
    let again = ProblemGraph::parse(&text).expect("saved instances parse");
    assert_eq!(again.n(), g.n());
    for (a, b) in g.vertex_pairs() {
        assert_eq!(g.edge_weight(a, b), again.edge_weight(a, b));
    }
    println!("save/parse round trip preserved all {} pair weights", g.n() * (g.n() - 1) / 2);

    // The parser rejects structural mistakes with a line-numbered error.
    for (label, text) in [
        ("odd vertex count", "n 3\nw 0 1 1\nw 0 2 1\nw 1 2 1\n"),
        ("missing pair", "n 4\nw 0 1 1\n"),
        ("negative weight", "n 2\nw 0 1 -2\n"),
        ("unknown metric", "n 2\nmetric chebyshev\nv 0 0 0\nv 1 1 1\n"),
    ] {
        let err = ProblemGraph::parse(text).unwrap_err();
        println!("  rejected {label}: {err}");
    }
}
