//! Build crown graphs: a three-layer extension with predictable structure.
//!
//! The crown of a graph G on n vertices keeps a copy of G (the circlet),
//! joins each circlet vertex to a private avatar (the arches), and joins the
//! arches completely to a third layer (the monde). The regal matching pairs
//! every circlet vertex with its avatar. Any matching inside G frees up
//! avatars that the monde can absorb, which makes matching sizes in the
//! crown track matching sizes in G while the overall shape stays fixed:
//! 3n vertices and |E(G)| + n + n^2 edges, whatever G looks like.
//!
//! Run with: cargo run --example crown_structures

use blossom::graph::SimpleGraph;
use blossom::verify::build_crown;

fn main() {
    for (n, edge_permille, seed) in [(4, 300, 1), (7, 500, 2), (12, 150, 3), (20, 800, 4)] {
        let g = SimpleGraph::random(n, edge_permille, seed);
        let crown = build_crown(&g);

        println!(
            "base n {:>2} edges {:>3}  ->  crown vertices {:>2} edges {:>3}",
            g.n(),
            g.edge_count(),
            crown.graph.n(),
            crown.graph.edge_count(),
        );
        assert_eq!(crown.graph.n(), 3 * g.n());
        assert_eq!(crown.graph.edge_count(), g.edge_count() + n + n * n);
        assert_eq!(crown.circlet.len(), g.n());
        assert_eq!(crown.arches.len(), g.n());
        assert_eq!(crown.monde.len(), g.n());

        // The circlet layer is an exact copy of G.
        for (a, b) in g.edges() {
            assert!(crown.graph.has_edge(a, b));
        }
        // Each arch sees its circlet twin plus the whole monde.
        for (i, &arch) in crown.arches.iter().enumerate() {
            assert_eq!(crown.graph.neighbors(arch).len(), 1 + g.n());
            assert!(crown.graph.has_edge(crown.circlet[i], arch));
            for &m in &crown.monde {
                assert!(crown.graph.has_edge(arch, m));
            }
        }
        // The regal matching covers circlet and arches, leaving the monde
        // free; any k-edge matching inside G frees k avatar pairs for it.
        assert_eq!(crown.regal_matching.len(), g.n());
    }
    println!("all layer and edge-count identities hold");
}
