//! Problem instances: complete graphs over an even number of vertices with
//! exact nonnegative edge weights, plus the perfect matchings found on them.
//!
//! Weights come either from an explicit table or from integer coordinates
//! under a metric. Instances round-trip through a line-oriented text format
//! (see [`ProblemGraph::parse`]).

use crate::weight::Weight;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Identifier of an original graph vertex, `0..n`.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Distance function applied to integer coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Metric {
    /// |dx| + |dy|, always a whole number of units.
    Manhattan,
    /// sqrt(dx^2 + dy^2), rounded to the nearest half-unit so the weight
    /// stays exact.
    Euclidean,
}

impl Metric {
    fn weight(self, a: (i64, i64), b: (i64, i64)) -> Weight {
        let dx = a.0 - b.0;
        let dy = a.1 - b.1;
        match self {
            Metric::Manhattan => Weight::from_units(dx.abs() + dy.abs()),
            Metric::Euclidean => {
                let dist = ((dx * dx + dy * dy) as f64).sqrt();
                Weight::from_half_units((dist * 2.0).round() as i64)
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Manhattan => write!(f, "manhattan"),
            Metric::Euclidean => write!(f, "euclidean"),
        }
    }
}

#[derive(Clone, Debug)]
enum WeightSource {
    /// Upper-triangular table indexed by [`pair_index`].
    Table(Vec<Weight>),
    Coords { points: Vec<(i64, i64)>, metric: Metric },
}

/// Flat index of the unordered pair (a, b), a < b, in row-major upper
/// triangular order.
fn pair_index(n: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < n);
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

/// A complete weighted graph on an even number of vertices.
#[derive(Clone, Debug)]
pub struct ProblemGraph {
    n: usize,
    source: WeightSource,
    /// 1 when every edge weight is a whole number of half-unit pairs, 2 when
    /// some weight is an odd half-unit. Solvers multiply weights by this so
    /// that internal halving stays exact; results are reported unscaled.
    scale: i64,
}

/// Problem instances that fail structural validation.
#[derive(Debug, Clone, thiserror::Error)]
pub enum InstanceError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Structure(String),
}

fn line_err(line: usize, msg: impl Into<String>) -> InstanceError {
    InstanceError::Line { line, msg: msg.into() }
}

impl ProblemGraph {
    fn validate_n(n: usize) -> Result<(), InstanceError> {
        if n < 2 {
            Err(InstanceError::Structure(format!(
                "vertex count must be at least 2, got {n}"
            )))
        } else if n % 2 != 0 {
            Err(InstanceError::Structure(format!(
                "vertex count must be even for a perfect matching, got {n}"
            )))
        } else {
            Ok(())
        }
    }

    fn finish(n: usize, source: WeightSource) -> Result<ProblemGraph, InstanceError> {
        Self::validate_n(n)?;
        let mut g = ProblemGraph { n, source, scale: 1 };
        for (a, b) in g.vertex_pairs() {
            let w = g.edge_weight(a, b);
            if w.is_negative() {
                return Err(InstanceError::Structure(format!(
                    "edge ({a}, {b}) has negative weight {w}"
                )));
            }
            if w.is_odd_half() {
                g.scale = 2;
            }
        }
        Ok(g)
    }

    /// Builds a graph from a weight function. Intended for tests and
    /// generators; panics on invalid shape or negative weights.
    pub fn from_fn(n: usize, f: impl Fn(VertexId, VertexId) -> Weight) -> ProblemGraph {
        let mut table = vec![Weight::ZERO; n * (n.saturating_sub(1)) / 2];
        for a in 0..n {
            for b in a + 1..n {
                table[pair_index(n, a, b)] = f(VertexId(a as u32), VertexId(b as u32));
            }
        }
        Self::finish(n, WeightSource::Table(table)).expect("invalid graph")
    }

    /// Builds a graph from coordinates under a metric.
    pub fn from_points(points: Vec<(i64, i64)>, metric: Metric) -> Result<ProblemGraph, InstanceError> {
        let n = points.len();
        Self::finish(n, WeightSource::Coords { points, metric })
    }

    /// A complete graph with uniform random whole-unit weights in
    /// `0..=max_units`, deterministic in the seed.
    pub fn random_complete(n: usize, max_units: i64, seed: u64) -> ProblemGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = vec![Weight::ZERO; n * (n - 1) / 2];
        for a in 0..n {
            for b in a + 1..n {
                table[pair_index(n, a, b)] = Weight::from_units(rng.gen_range(0..=max_units));
            }
        }
        Self::finish(n, WeightSource::Table(table)).expect("invalid random graph")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        (0..self.n as u32).map(VertexId)
    }

    /// All unordered pairs (a, b) with a < b.
    pub fn vertex_pairs(&self) -> impl Iterator<Item = (VertexId, VertexId)> {
        let n = self.n as u32;
        (0..n).flat_map(move |a| (a + 1..n).map(move |b| (VertexId(a), VertexId(b))))
    }

    /// Edge weight in the instance's own scale.
    pub fn edge_weight(&self, a: VertexId, b: VertexId) -> Weight {
        let (a, b) = (a.0 as usize, b.0 as usize);
        assert!(a != b && a < self.n && b < self.n, "bad edge ({a}, {b})");
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        match &self.source {
            WeightSource::Table(t) => t[pair_index(self.n, a, b)],
            WeightSource::Coords { points, metric } => metric.weight(points[a], points[b]),
        }
    }

    /// Edge weight multiplied by [`solver_scale`](Self::solver_scale).
    ///
    /// In the scaled domain every weight is a whole number of units, which
    /// the solvers rely on when they halve dual adjustments.
    pub fn scaled_weight(&self, a: VertexId, b: VertexId) -> Weight {
        let w = self.edge_weight(a, b);
        if self.scale == 2 {
            w.double()
        } else {
            w
        }
    }

    /// Factor relating [`scaled_weight`](Self::scaled_weight) to
    /// [`edge_weight`](Self::edge_weight); either 1 or 2.
    pub fn solver_scale(&self) -> i64 {
        self.scale
    }

    /// Parses the line-oriented instance format.
    ///
    /// ```text
    /// # comment
    /// n 4
    /// w 0 1 3.5
    /// w 0 2 1
    /// ...                     every unordered pair exactly once
    /// ```
    ///
    /// or the coordinate form:
    ///
    /// ```text
    /// n 4
    /// metric manhattan
    /// v 0 0 0
    /// v 1 2 3
    /// ...                     every id in 0..n exactly once
    /// ```
    pub fn parse(text: &str) -> Result<ProblemGraph, InstanceError> {
        let mut n: Option<usize> = None;
        let mut metric: Option<Metric> = None;
        let mut weights: Vec<Option<Weight>> = Vec::new();
        let mut points: Vec<Option<(i64, i64)>> = Vec::new();
        let mut saw_w = false;
        let mut saw_v = false;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let tag = fields.next().unwrap();
            let rest: Vec<&str> = fields.collect();
            match tag {
                "n" => {
                    if n.is_some() {
                        return Err(line_err(lineno, "duplicate 'n' line"));
                    }
                    let [count] = rest[..] else {
                        return Err(line_err(lineno, "expected 'n <count>'"));
                    };
                    let count: usize = count
                        .parse()
                        .map_err(|_| line_err(lineno, format!("invalid vertex count '{count}'")))?;
                    Self::validate_n(count)
                        .map_err(|e| line_err(lineno, e.to_string()))?;
                    n = Some(count);
                    weights = vec![None; count * (count - 1) / 2];
                    points = vec![None; count];
                }
                "metric" => {
                    let [name] = rest[..] else {
                        return Err(line_err(lineno, "expected 'metric manhattan|euclidean'"));
                    };
                    if metric.is_some() {
                        return Err(line_err(lineno, "duplicate 'metric' line"));
                    }
                    metric = Some(match name {
                        "manhattan" => Metric::Manhattan,
                        "euclidean" => Metric::Euclidean,
                        other => {
                            return Err(line_err(lineno, format!("unknown metric '{other}'")))
                        }
                    });
                }
                "w" => {
                    let count =
                        n.ok_or_else(|| line_err(lineno, "'w' line before 'n' line"))?;
                    if saw_v {
                        return Err(line_err(lineno, "cannot mix 'w' and 'v' lines"));
                    }
                    saw_w = true;
                    let [u, v, w] = rest[..] else {
                        return Err(line_err(lineno, "expected 'w <u> <v> <weight>'"));
                    };
                    let parse_vertex = |s: &str| -> Result<usize, InstanceError> {
                        let id: usize = s
                            .parse()
                            .map_err(|_| line_err(lineno, format!("invalid vertex '{s}'")))?;
                        if id >= count {
                            return Err(line_err(
                                lineno,
                                format!("vertex {id} out of range 0..{count}"),
                            ));
                        }
                        Ok(id)
                    };
                    let u = parse_vertex(u)?;
                    let v = parse_vertex(v)?;
                    if u == v {
                        return Err(line_err(lineno, format!("self-loop on vertex {u}")));
                    }
                    let w: Weight =
                        w.parse().map_err(|e: crate::weight::WeightParseError| {
                            line_err(lineno, e.to_string())
                        })?;
                    if w.is_negative() {
                        return Err(line_err(lineno, format!("negative weight {w}")));
                    }
                    let slot = &mut weights[pair_index(count, u.min(v), u.max(v))];
                    if slot.is_some() {
                        return Err(line_err(lineno, format!("duplicate edge ({u}, {v})")));
                    }
                    *slot = Some(w);
                }
                "v" => {
                    let count =
                        n.ok_or_else(|| line_err(lineno, "'v' line before 'n' line"))?;
                    if saw_w {
                        return Err(line_err(lineno, "cannot mix 'w' and 'v' lines"));
                    }
                    saw_v = true;
                    let [id, x, y] = rest[..] else {
                        return Err(line_err(lineno, "expected 'v <id> <x> <y>'"));
                    };
                    let id: usize = id
                        .parse()
                        .map_err(|_| line_err(lineno, format!("invalid vertex '{id}'")))?;
                    if id >= count {
                        return Err(line_err(
                            lineno,
                            format!("vertex {id} out of range 0..{count}"),
                        ));
                    }
                    let parse_coord = |s: &str| -> Result<i64, InstanceError> {
                        s.parse()
                            .map_err(|_| line_err(lineno, format!("invalid coordinate '{s}'")))
                    };
                    let x = parse_coord(x)?;
                    let y = parse_coord(y)?;
                    if points[id].is_some() {
                        return Err(line_err(lineno, format!("duplicate vertex {id}")));
                    }
                    points[id] = Some((x, y));
                }
                other => {
                    return Err(line_err(lineno, format!("unknown directive '{other}'")));
                }
            }
        }

        let n = n.ok_or_else(|| InstanceError::Structure("missing 'n' line".into()))?;
        if saw_v {
            let metric = metric.ok_or_else(|| {
                InstanceError::Structure("coordinate instance is missing a 'metric' line".into())
            })?;
            let points: Vec<(i64, i64)> = points
                .into_iter()
                .enumerate()
                .map(|(id, p)| {
                    p.ok_or_else(|| InstanceError::Structure(format!("missing vertex {id}")))
                })
                .collect::<Result<_, _>>()?;
            Self::finish(n, WeightSource::Coords { points, metric })
        } else if saw_w {
            if metric.is_some() {
                return Err(InstanceError::Structure(
                    "'metric' only applies to coordinate instances".into(),
                ));
            }
            let mut table = Vec::with_capacity(weights.len());
            for (idx, w) in weights.into_iter().enumerate() {
                match w {
                    Some(w) => table.push(w),
                    None => {
                        // Recover the pair from the triangular index for the message.
                        let (mut a, mut rem) = (0usize, idx);
                        while rem >= n - a - 1 {
                            rem -= n - a - 1;
                            a += 1;
                        }
                        let b = a + 1 + rem;
                        return Err(InstanceError::Structure(format!(
                            "missing edge ({a}, {b})"
                        )));
                    }
                }
            }
            Self::finish(n, WeightSource::Table(table))
        } else {
            Err(InstanceError::Structure(
                "instance has no 'w' or 'v' lines".into(),
            ))
        }
    }

    /// Renders the instance in the same format [`parse`](Self::parse) reads,
    /// preserving whether it is table- or coordinate-based.
    pub fn save(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n {}\n", self.n));
        match &self.source {
            WeightSource::Table(_) => {
                for (a, b) in self.vertex_pairs() {
                    out.push_str(&format!("w {} {} {}\n", a, b, self.edge_weight(a, b)));
                }
            }
            WeightSource::Coords { points, metric } => {
                out.push_str(&format!("metric {metric}\n"));
                for (id, (x, y)) in points.iter().enumerate() {
                    out.push_str(&format!("v {id} {x} {y}\n"));
                }
            }
        }
        out
    }
}

/// An unweighted simple graph, not necessarily complete.
///
/// Used where edge existence matters but weights do not: the bipartite
/// maximum-matching routine and the structural test utilities.
#[derive(Clone, Debug)]
pub struct SimpleGraph {
    n: usize,
    /// Normalized (smaller, larger) pairs.
    edges: BTreeSet<(u32, u32)>,
    adj: Vec<Vec<u32>>,
}

impl SimpleGraph {
    /// Builds a graph from an edge list, deduplicating. Panics on self-loops
    /// or out-of-range endpoints.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> SimpleGraph {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            assert!(a != b, "self-loop on {a}");
            assert!((a as usize) < n && (b as usize) < n, "edge ({a}, {b}) out of range");
            set.insert((a.min(b), a.max(b)));
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &set {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        SimpleGraph { n, edges: set, adj }
    }

    /// Erdos-Renyi style graph: each possible edge kept with probability
    /// `edge_permille`/1000, deterministic in the seed.
    pub fn random(n: usize, edge_permille: u32, seed: u64) -> SimpleGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for a in 0..n as u32 {
            for b in a + 1..n as u32 {
                if rng.gen_range(0..1000) < edge_permille {
                    edges.push((a, b));
                }
            }
        }
        SimpleGraph::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[v as usize]
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }
}

/// A perfect matching: n/2 vertex-disjoint pairs covering every vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// Stored as (smaller id, larger id), ordered.
    pairs: BTreeSet<(VertexId, VertexId)>,
}

impl Matching {
    /// Normalizes pair order. Panics on self-loops or a repeated vertex;
    /// solver outputs violating that are bugs, not data errors.
    pub fn new(pairs: impl IntoIterator<Item = (VertexId, VertexId)>) -> Matching {
        let mut seen = BTreeSet::new();
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            assert!(a != b, "matching pairs vertex {a} with itself");
            assert!(seen.insert(a), "vertex {a} matched twice");
            assert!(seen.insert(b), "vertex {b} matched twice");
            set.insert((a.min(b), a.max(b)));
        }
        Matching { pairs: set }
    }

    /// Pairs in ascending order of the smaller endpoint.
    pub fn pairs(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The partner of `v`, if matched.
    pub fn partner(&self, v: VertexId) -> Option<VertexId> {
        self.pairs
            .iter()
            .find_map(|&(a, b)| match v {
                x if x == a => Some(b),
                x if x == b => Some(a),
                _ => None,
            })
    }

    /// Checks that the matching is perfect on `graph`.
    pub fn validate_perfect(&self, graph: &ProblemGraph) -> Result<(), String> {
        let mut covered = BTreeSet::new();
        for (a, b) in self.pairs() {
            for v in [a, b] {
                if (v.0 as usize) >= graph.n() {
                    return Err(format!("matched vertex {v} is not in the graph"));
                }
                if !covered.insert(v) {
                    return Err(format!("vertex {v} covered twice"));
                }
            }
        }
        if covered.len() != graph.n() {
            return Err(format!(
                "matching covers {} of {} vertices",
                covered.len(),
                graph.n()
            ));
        }
        Ok(())
    }

    /// Total weight under the graph's own scale.
    pub fn total_weight(&self, graph: &ProblemGraph) -> Weight {
        self.pairs().map(|(a, b)| graph.edge_weight(a, b)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn manhattan_example() {
        let w = Metric::Manhattan.weight((0, 0), (2, 3));
        assert_eq!(w, Weight::from_units(5));
    }

    #[test]
    fn euclidean_rounds_to_half_units() {
        assert_eq!(
            Metric::Euclidean.weight((0, 0), (3, 4)),
            Weight::from_units(5)
        );
        // sqrt(2) = 1.414..., nearest half-unit is 1.5
        assert_eq!(
            Metric::Euclidean.weight((0, 0), (1, 1)),
            Weight::from_half_units(3)
        );
    }

    #[test]
    fn pair_index_is_a_bijection() {
        let n = 7;
        let mut seen = vec![false; n * (n - 1) / 2];
        for a in 0..n {
            for b in a + 1..n {
                let idx = pair_index(n, a, b);
                assert!(!seen[idx]);
                seen[idx] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn parse_table_instance() {
        let text = "# toy instance\nn 4\nw 0 1 1\nw 0 2 2.5\nw 0 3 3\nw 1 2 0\nw 3 1 4\nw 2 3 1\n";
        let g = ProblemGraph::parse(text).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(g.edge_weight(VertexId(0), VertexId(2)), "2.5".parse().unwrap());
        assert_eq!(g.edge_weight(VertexId(1), VertexId(3)), Weight::from_units(4));
        // Odd half-units present, so the solver works at double scale.
        assert_eq!(g.solver_scale(), 2);
        assert_eq!(
            g.scaled_weight(VertexId(0), VertexId(2)),
            Weight::from_units(5)
        );
    }

    #[test]
    fn parse_coordinate_instance() {
        let text = "n 2\nmetric manhattan\nv 0 0 0\nv 1 2 3\n";
        let g = ProblemGraph::parse(text).unwrap();
        assert_eq!(g.edge_weight(VertexId(0), VertexId(1)), Weight::from_units(5));
        assert_eq!(g.solver_scale(), 1);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases: &[(&str, &str)] = &[
            ("n 3\n", "line 1"),
            ("n 4\nw 0 1 1\nw 0 1 2\n", "line 3: duplicate edge"),
            ("n 4\nw 0 0 1\n", "line 2: self-loop"),
            ("n 4\nw 0 5 1\n", "line 2: vertex 5 out of range"),
            ("n 4\nw 0 1 -2\n", "line 2: negative weight"),
            ("n 4\nw 0 1 1.25\n", "line 2: invalid weight"),
            ("n 4\nmetric chebyshev\n", "line 2: unknown metric"),
            ("n 4\nv 0 0 0\nw 0 1 1\n", "line 3: cannot mix"),
            ("w 0 1 1\n", "line 1: 'w' line before 'n'"),
            ("n 4\nq 1 2\n", "line 2: unknown directive 'q'"),
        ];
        for (text, needle) in cases {
            let err = ProblemGraph::parse(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?}: {err} !~ {needle}");
        }
    }

    #[test]
    fn parse_reports_missing_pieces() {
        let err = ProblemGraph::parse("n 4\nw 0 1 1\n").unwrap_err().to_string();
        assert!(err.contains("missing edge"), "{err}");
        let err = ProblemGraph::parse("n 2\nmetric manhattan\nv 0 0 0\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("missing vertex 1"), "{err}");
        let err = ProblemGraph::parse("n 2\nv 0 0 0\nv 1 1 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("metric"), "{err}");
    }

    #[test]
    fn save_load_round_trips() {
        let g = ProblemGraph::random_complete(6, 20, 7);
        let reparsed = ProblemGraph::parse(&g.save()).unwrap();
        for (a, b) in g.vertex_pairs() {
            assert_eq!(g.edge_weight(a, b), reparsed.edge_weight(a, b));
        }
        let g = ProblemGraph::from_points(vec![(0, 0), (1, 2), (5, 5), (-3, 4)], Metric::Euclidean)
            .unwrap();
        let saved = g.save();
        let reparsed = ProblemGraph::parse(&saved).unwrap();
        assert_eq!(saved, reparsed.save());
    }

    #[test]
    fn matching_validation_and_weight() {
        let g = ProblemGraph::from_fn(4, |a, b| Weight::from_units((a.0 + b.0) as i64));
        let m = Matching::new(vec![(VertexId(3), VertexId(0)), (VertexId(1), VertexId(2))]);
        m.validate_perfect(&g).unwrap();
        assert_eq!(m.total_weight(&g), Weight::from_units(6));
        assert_eq!(m.partner(VertexId(3)), Some(VertexId(0)));

        let incomplete = Matching::new(vec![(VertexId(0), VertexId(1))]);
        assert!(incomplete.validate_perfect(&g).is_err());
    }

    #[test]
    #[should_panic(expected = "matched twice")]
    fn matching_rejects_reused_vertex() {
        let _ = Matching::new(vec![
            (VertexId(0), VertexId(1)),
            (VertexId(1), VertexId(2)),
        ]);
    }

    proptest! {
        #[test]
        fn random_instances_round_trip(n in 1usize..6, seed in 0u64..50) {
            let g = ProblemGraph::random_complete(n * 2, 30, seed);
            let reparsed = ProblemGraph::parse(&g.save()).unwrap();
            prop_assert_eq!(g.save(), reparsed.save());
        }
    }
}
