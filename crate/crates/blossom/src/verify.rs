//! Validators, the optimality certificate, the trace auditor, and a few
//! structural test utilities.
//!
//! Everything here works on solver-independent artifacts (snapshots, traces,
//! matchings), so the same checks apply to the serial and the distributed
//! solver. All functions report violations as human-readable strings instead
//! of panicking; tests assert emptiness.

use crate::graph::{Matching, ProblemGraph, SimpleGraph, VertexId};
use crate::snapshot::StateSnapshot;
use crate::trace::{EventTrace, TraceEvent};
use crate::weight::Weight;
use std::collections::{BTreeMap, BTreeSet};

// ----------------------------------------------------------------------
// Quiescent-state validation

/// Checks every structural and dual invariant a resting forest must satisfy.
/// Returns the list of violations, empty when the snapshot is sound.
pub fn validate_quiescent_state(g: &ProblemGraph, snap: &StateSnapshot) -> Vec<String> {
    let mut bad = Vec::new();
    let mut complain = |msg: String| bad.push(msg);

    // Key space: vertices 0..n present and labelled, macros above.
    if snap.n != g.n() {
        complain(format!("snapshot n = {} but graph n = {}", snap.n, g.n()));
    }
    for id in 0..g.n() as u32 {
        match snap.get(id) {
            Some(b) if b.vertex_id == Some(VertexId(id)) => {}
            _ => complain(format!("vertex {id} missing or mislabelled")),
        }
    }
    for b in &snap.blossoms {
        if b.key >= g.n() as u32 && b.vertex_id.is_some() {
            complain(format!("blossom {} has a macro key but a vertex id", b.key));
        }
        if b.key < g.n() as u32 && b.vertex_id.is_none() {
            complain(format!("blossom {} has a vertex key but no vertex id", b.key));
        }
    }

    // Pistil chains are well formed and strictly increasing in key.
    for v in g.vertices() {
        match snap.chain(v) {
            None => complain(format!("broken pistil chain above vertex {v}")),
            Some(chain) => {
                if !chain.windows(2).all(|w| w[0] < w[1]) {
                    complain(format!("chain above vertex {v} is not creation-ordered"));
                }
            }
        }
    }

    // Petal structure per macrovertex.
    for b in snap.macros() {
        let k = b.petals.len();
        if k < 3 || k % 2 == 0 {
            complain(format!("macro {} has {} petals", b.key, k));
            continue;
        }
        for (i, p) in b.petals.iter().enumerate() {
            let q = &b.petals[(i + 1) % k];
            if p.target_key != q.source_key {
                complain(format!("macro {} petal cycle broken at {i}", b.key));
            }
            for (end, vertex) in [(p.source_key, p.source_vertex), (p.target_key, p.target_vertex)] {
                match snap.get(end) {
                    None => complain(format!("macro {} petal names missing member {end}", b.key)),
                    Some(member) => {
                        if member.pistil != Some(b.key) {
                            complain(format!(
                                "macro {} petal member {end} has pistil {:?}",
                                b.key, member.pistil
                            ));
                        }
                        if !snap.vertices_under(end).contains(&vertex) {
                            complain(format!(
                                "macro {} petal vertex {vertex} is not under member {end}",
                                b.key
                            ));
                        }
                    }
                }
            }
        }
        let members: BTreeSet<u32> = b.petals.iter().map(|p| p.source_key).collect();
        if members.len() != k {
            complain(format!("macro {} repeats a petal member", b.key));
        }
        // Petal edges are weightless under the duals inside the macro.
        for p in &b.petals {
            match snap.adjusted_within(g, p.source_vertex, p.target_vertex, b.key) {
                Some(w) if w.is_zero() => {}
                other => complain(format!(
                    "macro {} petal ({}, {}) adjusted weight {:?}",
                    b.key, p.source_vertex, p.target_vertex, other
                )),
            }
        }
        if b.internal_weight.is_negative() {
            complain(format!("macro {} has negative dual {}", b.key, b.internal_weight));
        }
    }

    // Interior blossoms carry no external links.
    for b in &snap.blossoms {
        if b.pistil.is_some()
            && (b.match_edge.is_some() || b.parent.is_some() || !b.children.is_empty() || !b.positive)
        {
            complain(format!("interior blossom {} retains external links", b.key));
        }
    }

    // Top-level matching symmetry.
    for b in snap.tops() {
        let Some(m) = b.match_edge else { continue };
        if m.source_key != b.key {
            complain(format!("top {} match edge sourced elsewhere", b.key));
        }
        if !snap.vertices_under(b.key).contains(&m.source_vertex) {
            complain(format!("top {} match vertex {} not inside", b.key, m.source_vertex));
        }
        match snap.get(m.target_key) {
            Some(p) if p.is_top() => match p.match_edge {
                Some(back)
                    if back.vertex_pair() == m.vertex_pair() && back.target_key == b.key => {}
                _ => complain(format!("tops {} and {} disagree on matching", b.key, m.target_key)),
            },
            _ => complain(format!("top {} matched to non-top {}", b.key, m.target_key)),
        }
    }

    // Forest shape: parent/child symmetry, alternation, no parent cycles.
    for b in snap.tops() {
        for c in &b.children {
            if c.source_key != b.key {
                complain(format!("top {} child edge sourced elsewhere", b.key));
            }
            match snap.get(c.target_key).filter(|t| t.is_top()).and_then(|t| t.parent) {
                Some(back)
                    if back.vertex_pair() == c.vertex_pair() && back.target_key == b.key => {}
                _ => complain(format!(
                    "child link {} -> {} lacks a matching parent link",
                    b.key, c.target_key
                )),
            }
        }
        if let Some(p) = b.parent {
            let up = snap.get(p.target_key).filter(|t| t.is_top());
            let mirrored = up.is_some_and(|t| {
                t.children
                    .iter()
                    .any(|c| c.vertex_pair() == p.vertex_pair() && c.target_key == b.key)
            });
            if !mirrored {
                complain(format!("parent link of {} is not mirrored", b.key));
            }
        }
        match (b.positive, b.parent, b.match_edge) {
            (true, None, _) => {} // root or free barbell
            (false, None, _) => complain(format!("top {} is negative without a parent", b.key)),
            (true, Some(p), Some(m)) => {
                if p.vertex_pair() != m.vertex_pair() {
                    complain(format!("positive top {} hangs by a non-matched edge", b.key));
                }
            }
            (true, Some(_), None) => {
                complain(format!("positive non-root {} is unmatched", b.key))
            }
            (false, Some(p), Some(m)) => {
                if p.vertex_pair() == m.vertex_pair() {
                    complain(format!("negative top {} hangs by its matched edge", b.key));
                }
                let matched_children: Vec<_> = b
                    .children
                    .iter()
                    .filter(|c| c.vertex_pair() == m.vertex_pair())
                    .collect();
                if b.children.len() != 1 || matched_children.len() != 1 {
                    complain(format!(
                        "negative top {} must have exactly its matched child, has {}",
                        b.key,
                        b.children.len()
                    ));
                }
            }
            (false, Some(_), None) => {
                complain(format!("negative top {} is unmatched", b.key))
            }
        }
        if b.match_edge.is_none() && b.parent.is_some() {
            complain(format!("unmatched top {} is not a root", b.key));
        }
    }
    for b in snap.tops() {
        let mut seen = BTreeSet::new();
        let mut cur = b.key;
        while let Some(p) = snap.get(cur).and_then(|t| t.parent) {
            if !seen.insert(cur) {
                complain(format!("parent cycle through top {}", b.key));
                break;
            }
            cur = p.target_key;
        }
    }

    // Dual feasibility across top-level blossoms, with tightness on matched
    // and tree edges.
    let mut required_tight: BTreeSet<(VertexId, VertexId)> = BTreeSet::new();
    for b in snap.tops() {
        if let Some(m) = b.match_edge {
            required_tight.insert(m.vertex_pair());
        }
        for c in &b.children {
            required_tight.insert(c.vertex_pair());
        }
    }
    for (u, v) in g.vertex_pairs() {
        let (tu, tv) = match (snap.top_of(u), snap.top_of(v)) {
            (Some(a), Some(b)) => (a, b),
            _ => continue, // chain breakage already reported
        };
        if tu == tv {
            continue;
        }
        match snap.adjusted_cross(g, u, v) {
            Some(w) if w.is_negative() => {
                complain(format!("edge ({u}, {v}) has negative adjusted weight {w}"))
            }
            Some(w) if !w.is_zero() && required_tight.contains(&(u, v)) => {
                complain(format!("matched/tree edge ({u}, {v}) is not weightless: {w}"))
            }
            Some(_) => {}
            None => complain(format!("cannot evaluate edge ({u}, {v})")),
        }
    }

    bad
}

// ----------------------------------------------------------------------
// Optimality certificate

/// Proves a matching optimal from a snapshot's dual values alone.
///
/// The snapshot is taken at optimality, before terminal expansions; the
/// matching is the final one on original vertices. The check is the linear
/// programming argument: duals must be feasible on every vertex pair
/// (counting only the macrovertices separating the pair), matched pairs must
/// be tight, and every macrovertex with positive dual must be crossed by
/// exactly one matched pair. Those facts force
/// `weight(M) = sum(y) + sum(z)`, a bound no perfect matching can beat, so
/// any M satisfying them is optimal regardless of which solver produced it.
pub fn check_certificate(
    g: &ProblemGraph,
    snap: &StateSnapshot,
    matching: &Matching,
) -> Result<(), Vec<String>> {
    let mut bad = Vec::new();

    if let Err(e) = matching.validate_perfect(g) {
        bad.push(format!("matching not perfect: {e}"));
        return Err(bad);
    }

    // Structure: chains ordered, petal sets odd.
    for v in g.vertices() {
        match snap.chain(v) {
            Some(chain) if chain.windows(2).all(|w| w[0] < w[1]) => {}
            _ => bad.push(format!("vertex {v} has a broken or unordered chain")),
        }
    }
    for b in snap.macros() {
        let under = snap.vertices_under(b.key);
        if under.len() % 2 == 0 || under.len() < 3 {
            bad.push(format!("macro {} wraps {} vertices", b.key, under.len()));
        }
        if b.internal_weight.is_negative() {
            bad.push(format!("macro {} has negative dual", b.key));
        }
        let k = b.petals.len();
        if k < 3 || k % 2 == 0 || b.petals.iter().enumerate().any(|(i, p)| p.target_key != b.petals[(i + 1) % k].source_key) {
            bad.push(format!("macro {} petal cycle malformed", b.key));
        }
    }
    if !bad.is_empty() {
        return Err(bad);
    }

    let matched: BTreeSet<(VertexId, VertexId)> = matching.pairs().collect();

    // Adjusted weight counting only the blossoms that separate u from v.
    let separated_adjusted = |u: VertexId, v: VertexId| -> Option<Weight> {
        let cu = snap.chain(u)?;
        let cv: BTreeSet<u32> = snap.chain(v)?.into_iter().collect();
        let lca = cu.iter().copied().find(|k| cv.contains(k));
        Some(g.scaled_weight(u, v) - snap.dual_sum(u, lca)? - snap.dual_sum(v, lca)?)
    };

    for (u, v) in g.vertex_pairs() {
        match separated_adjusted(u, v) {
            None => bad.push(format!("cannot evaluate pair ({u}, {v})")),
            Some(w) if w.is_negative() => {
                bad.push(format!("dual infeasible on ({u}, {v}): {w}"))
            }
            Some(w) if matched.contains(&(u, v)) && !w.is_zero() => {
                bad.push(format!("matched pair ({u}, {v}) not tight: {w}"))
            }
            Some(_) => {}
        }
    }

    // Each positive-dual macrovertex is crossed exactly once, and the bound
    // is attained: weight(M) = sum of vertex duals + crossed macro duals.
    let mut dual_total: Weight = g
        .vertices()
        .filter_map(|v| snap.get(v.0).map(|b| b.internal_weight))
        .sum();
    for b in snap.macros() {
        let under: BTreeSet<VertexId> = snap.vertices_under(b.key).into_iter().collect();
        let crossings = matching
            .pairs()
            .filter(|(u, v)| under.contains(u) != under.contains(v))
            .count();
        if b.internal_weight.is_positive() && crossings != 1 {
            bad.push(format!(
                "macro {} with positive dual crossed {} times",
                b.key, crossings
            ));
        }
        for _ in 0..crossings {
            dual_total += b.internal_weight;
        }
    }
    let scaled_weight: Weight = matching.pairs().map(|(u, v)| g.scaled_weight(u, v)).sum();
    if bad.is_empty() && scaled_weight != dual_total {
        bad.push(format!(
            "matching weight {scaled_weight} does not meet the dual bound {dual_total}"
        ));
    }

    if bad.is_empty() { Ok(()) } else { Err(bad) }
}

// ----------------------------------------------------------------------
// Trace audit

/// Aggregates of a structural trace review.
#[derive(Clone, Debug, Default)]
pub struct AuditReport {
    pub deliveries: u64,
    pub kind_counts: BTreeMap<String, u64>,
    /// (rewinding root, evidence root) pairs, in order.
    pub rewinds: Vec<(u32, u32)>,
    pub multireweights: u64,
}

/// Checks a distributed trace for protocol sanity: gapless per-channel
/// sequence numbers, causal delivery times, balanced lock/unlock pairs, the
/// one-operation-per-supervisor discipline, and rewinds only after a
/// matching reweight. Serial traces do not fit this discipline.
pub fn audit_trace(trace: &EventTrace) -> Result<AuditReport, Vec<String>> {
    let mut bad = Vec::new();
    let mut report = AuditReport::default();
    let mut next_seq: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    #[derive(PartialEq, Clone, Copy, Debug)]
    enum Phase {
        Idle,
        Locked,
        Committed,
        Rewound,
        Done,
    }
    let mut phase: BTreeMap<u32, Phase> = BTreeMap::new();
    let mut commits: BTreeMap<u32, u64> = BTreeMap::new();
    let mut reweight_amount: BTreeMap<u32, Weight> = BTreeMap::new();
    let mut last_tick = 0u64;

    for (i, rec) in trace.records.iter().enumerate() {
        *report.kind_counts.entry(rec.event.kind().to_string()).or_insert(0) += 1;
        if rec.tick < last_tick {
            bad.push(format!("record {i}: tick went backwards"));
        }
        last_tick = rec.tick;
        let actor_phase = phase.entry(rec.actor).or_insert(Phase::Idle);
        match &rec.event {
            TraceEvent::Deliver { src, dst, seq, sent_tick, .. } => {
                report.deliveries += 1;
                let want = next_seq.entry((*src, *dst)).or_insert(0);
                if seq != want {
                    bad.push(format!(
                        "record {i}: channel ({src},{dst}) seq {seq}, expected {want}"
                    ));
                }
                *want = seq + 1;
                if sent_tick > &rec.tick {
                    bad.push(format!("record {i}: delivered before it was sent"));
                }
                if dst != &rec.actor {
                    bad.push(format!("record {i}: deliver actor is not the recipient"));
                }
            }
            TraceEvent::Lock { .. } => {
                if *actor_phase != Phase::Idle {
                    bad.push(format!("record {i}: actor {} double-locked", rec.actor));
                }
                *actor_phase = Phase::Locked;
            }
            TraceEvent::Unlock { .. } => {
                if matches!(*actor_phase, Phase::Idle | Phase::Done) {
                    bad.push(format!("record {i}: actor {} unlocked without a lock", rec.actor));
                }
                *actor_phase = Phase::Done;
            }
            TraceEvent::Abort { .. } => {
                // Pre-lock aborts leave the phase idle; post-lock aborts
                // must still unlock, so stay in Locked.
                if matches!(*actor_phase, Phase::Committed | Phase::Rewound) {
                    bad.push(format!("record {i}: actor {} aborted after committing", rec.actor));
                }
            }
            TraceEvent::Rewind { root, evidence_root, amount } => {
                if *actor_phase != Phase::Committed {
                    bad.push(format!("record {i}: rewind without a committed reweight"));
                } else if reweight_amount.get(&rec.actor) != Some(amount) {
                    bad.push(format!("record {i}: rewind amount differs from the reweight"));
                }
                *actor_phase = Phase::Rewound;
                report.rewinds.push((*root, *evidence_root));
            }
            event if event.is_commit() => {
                let c = commits.entry(rec.actor).or_insert(0);
                *c += 1;
                if *c > 1 {
                    bad.push(format!(
                        "record {i}: actor {} committed more than once",
                        rec.actor
                    ));
                }
                if *actor_phase != Phase::Locked {
                    bad.push(format!("record {i}: commit outside a critical section"));
                }
                *actor_phase = Phase::Committed;
                match event {
                    TraceEvent::Reweight { amount, .. } => {
                        reweight_amount.insert(rec.actor, *amount);
                    }
                    TraceEvent::Multireweight { amount, .. } => {
                        report.multireweights += 1;
                        reweight_amount.insert(rec.actor, *amount);
                    }
                    _ => {}
                }
            }
            _ => {}
        }
    }
    for (actor, p) in &phase {
        if matches!(p, Phase::Locked | Phase::Committed | Phase::Rewound) {
            bad.push(format!("actor {actor} never released its locks"));
        }
    }

    if bad.is_empty() { Ok(report) } else { Err(bad) }
}

// ----------------------------------------------------------------------
// Crown construction

/// Three-layer extension of a base graph, used as a structural test fixture.
///
/// Layer names: the circlet carries a copy of the base graph, each circlet
/// vertex is joined to its avatar in the arches, and the arches are joined
/// completely to the monde. The regal matching pairs every circlet vertex
/// with its arch avatar.
#[derive(Clone, Debug)]
pub struct CrownGraph {
    pub base_n: usize,
    pub circlet: Vec<u32>,
    pub arches: Vec<u32>,
    pub monde: Vec<u32>,
    pub graph: SimpleGraph,
    pub regal_matching: Matching,
}

/// Builds the crown of `g`: vertices 0..n are the circlet, n..2n the arches,
/// 2n..3n the monde.
pub fn build_crown(g: &SimpleGraph) -> CrownGraph {
    let n = g.n() as u32;
    let mut edges: Vec<(u32, u32)> = g.edges().collect();
    for i in 0..n {
        edges.push((i, n + i));
    }
    for i in 0..n {
        for j in 0..n {
            edges.push((n + i, 2 * n + j));
        }
    }
    CrownGraph {
        base_n: g.n(),
        circlet: (0..n).collect(),
        arches: (n..2 * n).collect(),
        monde: (2 * n..3 * n).collect(),
        graph: SimpleGraph::new(3 * g.n(), edges),
        regal_matching: Matching::new((0..n).map(|i| (VertexId(i), VertexId(n + i)))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;
    use crate::serial;

    // -------------------- validator --------------------

    #[test]
    fn serial_snapshots_all_validate() {
        for (g, name) in [
            (samples::diamond(), "diamond"),
            (samples::grid(), "grid"),
            (samples::line(), "line"),
        ] {
            let out = serial::solve_with_snapshots(&g);
            for (i, snap) in out.snapshots.iter().enumerate() {
                let bad = validate_quiescent_state(&g, snap);
                assert!(bad.is_empty(), "{name} snapshot {i}: {bad:?}");
            }
        }
        for seed in 0..40u64 {
            let g = ProblemGraph::random_complete(10, 8, seed);
            let out = serial::solve_with_snapshots(&g);
            for (i, snap) in out.snapshots.iter().enumerate() {
                let bad = validate_quiescent_state(&g, snap);
                assert!(bad.is_empty(), "seed {seed} snapshot {i}: {bad:?}");
            }
        }
    }

    fn good_snapshot() -> (ProblemGraph, StateSnapshot) {
        let g = ProblemGraph::random_complete(10, 8, 11);
        let out = serial::solve_with_snapshots(&g);
        let snap = out
            .snapshots
            .iter()
            .find(|s| s.macros().next().is_some())
            .expect("seed 11 contracts")
            .clone();
        (g, snap)
    }

    #[test]
    fn validator_flags_negative_macro_dual() {
        let (g, mut snap) = good_snapshot();
        let key = snap.macros().next().unwrap().key;
        let idx = snap.blossoms.iter().position(|b| b.key == key).unwrap();
        snap.blossoms[idx].internal_weight = Weight::from_half_units(-1);
        let bad = validate_quiescent_state(&g, &snap);
        assert!(bad.iter().any(|m| m.contains("negative dual")), "{bad:?}");
    }

    #[test]
    fn validator_flags_broken_matching_symmetry() {
        let (g, mut snap) = good_snapshot();
        let idx = snap
            .blossoms
            .iter()
            .position(|b| b.is_top() && b.match_edge.is_some())
            .unwrap();
        snap.blossoms[idx].match_edge = None;
        let bad = validate_quiescent_state(&g, &snap);
        assert!(!bad.is_empty());
    }

    #[test]
    fn validator_flags_infeasible_duals() {
        let (g, mut snap) = good_snapshot();
        // Inflate vertex 0's dual absurdly: some adjusted weight goes
        // negative.
        snap.blossoms[0].internal_weight += Weight::from_units(10_000);
        let bad = validate_quiescent_state(&g, &snap);
        assert!(
            bad.iter().any(|m| m.contains("negative adjusted")),
            "{bad:?}"
        );
    }

    #[test]
    fn validator_flags_torn_petal_cycle() {
        let (g, mut snap) = good_snapshot();
        let key = snap.macros().next().unwrap().key;
        let idx = snap.blossoms.iter().position(|b| b.key == key).unwrap();
        snap.blossoms[idx].petals.swap(0, 1);
        let bad = validate_quiescent_state(&g, &snap);
        assert!(bad.iter().any(|m| m.contains("petal")), "{bad:?}");
    }

    // -------------------- certificate --------------------

    #[test]
    fn certificate_accepts_serial_solutions() {
        for seed in 0..60u64 {
            let g = ProblemGraph::random_complete(8, 12, seed);
            let out = serial::solve(&g);
            check_certificate(&g, &out.pre_terminal, &out.matching)
                .unwrap_or_else(|e| panic!("seed {seed}: {e:?}"));
        }
        let out = serial::solve(&samples::grid());
        check_certificate(&samples::grid(), &out.pre_terminal, &out.matching).unwrap();
    }

    #[test]
    fn certificate_rejects_suboptimal_matchings() {
        let g = samples::grid();
        let out = serial::solve(&g);
        // Swap two pairs to get a heavier perfect matching.
        let heavier = Matching::new([
            (VertexId(0), VertexId(4)),
            (VertexId(1), VertexId(5)),
            (VertexId(2), VertexId(3)),
        ]);
        assert!(heavier.total_weight(&g) > out.weight);
        assert!(check_certificate(&g, &out.pre_terminal, &heavier).is_err());
    }

    #[test]
    fn certificate_rejects_tampered_duals() {
        let g = ProblemGraph::random_complete(8, 12, 3);
        let out = serial::solve(&g);
        let mut snap = out.pre_terminal.clone();
        snap.blossoms[2].internal_weight += Weight::from_units(1);
        assert!(check_certificate(&g, &snap, &out.matching).is_err());
    }

    // -------------------- audit --------------------

    #[test]
    fn audit_accepts_a_clean_protocol_story() {
        use crate::trace::TraceRecord;
        let mut t = EventTrace::default();
        let rec = |tick, actor, event| TraceRecord { tick, actor, event };
        t.push(rec(0, 1, TraceEvent::Deliver { src: 0, dst: 1, seq: 0, sent_tick: 0, sent_event: 0, msg: "Start".into(), dropped: false }));
        t.push(rec(1, 9, TraceEvent::Lock { roots: vec![0] }));
        t.push(rec(2, 9, TraceEvent::Reweight { root: 0, amount: Weight::from_units(2) }));
        t.push(rec(3, 9, TraceEvent::Rewind { root: 0, evidence_root: 2, amount: Weight::from_units(2) }));
        t.push(rec(4, 9, TraceEvent::Unlock { roots: vec![0] }));
        t.push(rec(4, 8, TraceEvent::Abort { stage: "preflight".into() }));
        let report = audit_trace(&t).unwrap();
        assert_eq!(report.rewinds, vec![(0, 2)]);
        assert_eq!(report.deliveries, 1);
    }

    #[test]
    fn audit_flags_seq_gaps_and_double_commits() {
        use crate::trace::TraceRecord;
        let mut t = EventTrace::default();
        t.push(TraceRecord { tick: 0, actor: 1, event: TraceEvent::Deliver { src: 0, dst: 1, seq: 1, sent_tick: 0, sent_event: 0, msg: "Ping".into(), dropped: false } });
        let bad = audit_trace(&t).unwrap_err();
        assert!(bad.iter().any(|m| m.contains("seq")), "{bad:?}");

        let mut t = EventTrace::default();
        t.push(TraceRecord { tick: 0, actor: 9, event: TraceEvent::Lock { roots: vec![0] } });
        t.push(TraceRecord { tick: 1, actor: 9, event: TraceEvent::Graft { root: 0, edge: (0, 1) } });
        t.push(TraceRecord { tick: 2, actor: 9, event: TraceEvent::Contract { root: 0, edge: (0, 1) } });
        t.push(TraceRecord { tick: 3, actor: 9, event: TraceEvent::Unlock { roots: vec![0] } });
        let bad = audit_trace(&t).unwrap_err();
        assert!(bad.iter().any(|m| m.contains("more than once")), "{bad:?}");
    }

    #[test]
    fn audit_flags_unreleased_locks() {
        use crate::trace::TraceRecord;
        let mut t = EventTrace::default();
        t.push(TraceRecord { tick: 0, actor: 9, event: TraceEvent::Lock { roots: vec![0] } });
        let bad = audit_trace(&t).unwrap_err();
        assert!(bad.iter().any(|m| m.contains("never released")), "{bad:?}");
    }

    // -------------------- crown --------------------

    #[test]
    fn crown_of_a_path() {
        let path = SimpleGraph::new(4, [(0, 1), (1, 2), (2, 3)]);
        let crown = build_crown(&path);
        assert_eq!(crown.graph.n(), 12);
        assert_eq!(crown.graph.edge_count(), 3 + 4 + 16);
        assert_eq!(crown.regal_matching.len(), 4);
    }

    #[test]
    fn crown_layer_rules() {
        let g = SimpleGraph::random(6, 500, 9);
        let crown = build_crown(&g);
        let n = 6u32;
        for (a, b) in crown.graph.edges() {
            let layer = |v: u32| v / n;
            let (la, lb) = (layer(a).min(layer(b)), layer(a).max(layer(b)));
            match (la, lb) {
                (0, 0) => assert!(g.has_edge(a, b), "circlet edge must come from the base"),
                (0, 1) => assert_eq!(a % n, b % n, "circlet-arch edges join avatars only"),
                (1, 2) => {}
                other => panic!("forbidden layer pair {other:?} for edge ({a}, {b})"),
            }
        }
        assert_eq!(
            crown.graph.edge_count(),
            g.edge_count() + g.n() + g.n() * g.n()
        );
    }

    // -------------------- snapshot discipline --------------------

    #[test]
    fn validator_accepts_hand_built_wrapped_triangle() {
        // A macrovertex with interior duals; mirrors the snapshot module's
        // fixture but runs the full validator over it.
        let g = ProblemGraph::from_fn(4, |a, b| {
            Weight::from_units(match (a.0, b.0) {
                (0, 1) | (0, 2) | (1, 2) => 2,
                (0, 3) => 2,
                _ => 100,
            })
        });
        let out = serial::solve_with_snapshots(&g);
        let wrapped = out
            .snapshots
            .iter()
            .find(|s| s.macros().next().is_some())
            .unwrap();
        assert!(validate_quiescent_state(&g, wrapped).is_empty());
    }
}
