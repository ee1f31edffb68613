//! Message vocabulary of the distributed solver, plus the pong algebra that
//! folds scan responses into a single operation decision.
//!
//! Fold order never matters: [`unify`] is commutative and associative with
//! [`OpCandidate::Pass`] as identity (property-tested below), so a tree can
//! combine pongs in whatever order the network delivers them.

use crate::graph::VertexId;
use crate::weight::Weight;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// Process address inside the simulator.
pub type Address = u32;

/// An edge between two blossoms, remembering both the underlying graph edge
/// and the blossom-level endpoints. Source is "our" side.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct DirectedEdge {
    pub source_blossom: Address,
    pub source_vertex: VertexId,
    pub target_vertex: VertexId,
    pub target_blossom: Address,
}

impl DirectedEdge {
    pub fn reversed(self) -> DirectedEdge {
        DirectedEdge {
            source_blossom: self.target_blossom,
            source_vertex: self.target_vertex,
            target_vertex: self.source_vertex,
            target_blossom: self.source_blossom,
        }
    }

    /// The unordered underlying graph edge; protocol equality of edges is
    /// equality of vertex pairs, blossom endpoints are transient.
    pub fn vertex_pair(self) -> (VertexId, VertexId) {
        let (a, b) = (self.source_vertex, self.target_vertex);
        (a.min(b), a.max(b))
    }
}

impl fmt::Display for DirectedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}-{})", self.source_vertex, self.target_vertex)
    }
}

/// Where a pong should be sent: the session's owner and its token.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SessionRef {
    pub owner: Address,
    pub token: u64,
}

/// Identity of the tree a reweight constraint came from, used to decide who
/// rewinds when two reweights collide.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Evidence {
    /// Priority of the counterpart's root (lower id outranks).
    pub root_min_id: u32,
    /// True when the counterpart answered while its own tree was mid
    /// critical section (pingable = soft): its reweight is not final yet.
    pub mid_soft: bool,
}

impl Evidence {
    /// Total order for deterministic tie-breaks.
    fn sort_key(e: &Option<Evidence>) -> (u32, u8) {
        match e {
            Some(ev) => (ev.root_min_id, ev.mid_soft as u8),
            None => (u32::MAX, 2),
        }
    }
}

/// The operation one edge (or one folded subtree) proposes.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum OpCandidate {
    Pass,
    Reweight { amount: Weight, evidence: Option<Evidence> },
    /// The scanned tree is blocked behind weightless edges into the listed
    /// foreign roots; a joint reweight is needed.
    Hold { bucket: BTreeSet<Address> },
    Expand { target: Address, min_id: u32 },
    Contract { edge: DirectedEdge },
    Graft { edge: DirectedEdge },
    Augment { edge: DirectedEdge },
}

impl OpCandidate {
    /// Priority rank; the larger wins a fold.
    fn rank(&self) -> u8 {
        match self {
            OpCandidate::Pass => 0,
            OpCandidate::Reweight { .. } => 1,
            OpCandidate::Hold { .. } => 2,
            OpCandidate::Expand { .. } => 3,
            OpCandidate::Contract { .. } => 4,
            OpCandidate::Graft { .. } => 5,
            OpCandidate::Augment { .. } => 6,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            OpCandidate::Pass => "pass",
            OpCandidate::Reweight { .. } => "reweight",
            OpCandidate::Hold { .. } => "hold",
            OpCandidate::Expand { .. } => "expand",
            OpCandidate::Contract { .. } => "contract",
            OpCandidate::Graft { .. } => "graft",
            OpCandidate::Augment { .. } => "augment",
        }
    }
}

/// Drops hold entries already covered by the scan's own cluster; an emptied
/// hold is no information at all.
fn normalize(op: OpCandidate, hold_cluster: &BTreeSet<Address>) -> OpCandidate {
    match op {
        OpCandidate::Hold { bucket } => {
            let bucket: BTreeSet<Address> =
                bucket.difference(hold_cluster).copied().collect();
            if bucket.is_empty() {
                OpCandidate::Pass
            } else {
                OpCandidate::Hold { bucket }
            }
        }
        other => other,
    }
}

/// Folds two candidates into the stronger one. Ties break lexicographically
/// on the underlying vertex pair (edge ops), the target (expand), or the
/// (amount, evidence) pair (reweight), so the fold is order-independent.
pub fn unify(
    a: OpCandidate,
    b: OpCandidate,
    hold_cluster: &BTreeSet<Address>,
) -> OpCandidate {
    use OpCandidate::*;
    let a = normalize(a, hold_cluster);
    let b = normalize(b, hold_cluster);
    match a.rank().cmp(&b.rank()) {
        std::cmp::Ordering::Greater => return a,
        std::cmp::Ordering::Less => return b,
        std::cmp::Ordering::Equal => {}
    }
    match (a, b) {
        (Pass, Pass) => Pass,
        (
            Reweight { amount: wa, evidence: ea },
            Reweight { amount: wb, evidence: eb },
        ) => {
            let ka = (wa, Evidence::sort_key(&ea));
            let kb = (wb, Evidence::sort_key(&eb));
            if ka <= kb {
                Reweight { amount: wa, evidence: ea }
            } else {
                Reweight { amount: wb, evidence: eb }
            }
        }
        (Hold { bucket: mut ba }, Hold { bucket: bb }) => {
            ba.extend(bb);
            Hold { bucket: ba }
        }
        (Expand { target: ta, min_id: ia }, Expand { target: tb, min_id: ib }) => {
            if (ia, ta) <= (ib, tb) {
                Expand { target: ta, min_id: ia }
            } else {
                Expand { target: tb, min_id: ib }
            }
        }
        (Contract { edge: ea }, Contract { edge: eb }) => Contract { edge: pick(ea, eb) },
        (Graft { edge: ea }, Graft { edge: eb }) => Graft { edge: pick(ea, eb) },
        (Augment { edge: ea }, Augment { edge: eb }) => Augment { edge: pick(ea, eb) },
        _ => unreachable!("equal ranks imply equal variants"),
    }
}

fn pick(a: DirectedEdge, b: DirectedEdge) -> DirectedEdge {
    if (a.source_vertex, a.target_vertex) <= (b.source_vertex, b.target_vertex) {
        a
    } else {
        b
    }
}

/// The smallest adjusted weight a scan saw, with the counterpart tree behind
/// it. Primal candidates (tight edges) contribute zero.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MinSeen {
    pub amount: Weight,
    pub evidence: Option<Evidence>,
    /// True when some oversubscribed edge in this fold is ours to fix. Each
    /// receiver judges its own edge (rank and finality of its tree versus the
    /// scanning one), and the verdicts are ORed: a scan may cover several
    /// collisions at once, and one rewind-demanding edge anywhere is enough.
    pub rewind_hint: bool,
}

impl MinSeen {
    pub fn merge(a: Option<MinSeen>, b: Option<MinSeen>) -> Option<MinSeen> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(x), Some(y)) => {
                let kx = (x.amount, Evidence::sort_key(&x.evidence));
                let ky = (y.amount, Evidence::sort_key(&y.evidence));
                let mut min = if kx <= ky { x } else { y };
                min.rewind_hint = x.rewind_hint || y.rewind_hint;
                Some(min)
            }
        }
    }
}

/// How approachable a node currently is for protocol traffic.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Pingable {
    /// Defer all pings and scans.
    None,
    /// Handle soft (verification) traffic only.
    Soft,
    /// Handle everything.
    All,
}

/// A hard or soft ping along one graph edge.
#[derive(Clone, Debug)]
pub struct PingData {
    pub session: SessionRef,
    /// Root of the pinging tree.
    pub root: Address,
    pub root_min_id: u32,
    /// Top-level blossom the ping left from.
    pub blossom: Address,
    /// Dual chain weight on the sender side.
    pub weight: Weight,
    pub hold_cluster: Arc<BTreeSet<Address>>,
    pub sender_vertex: VertexId,
    pub soft: bool,
}

/// A scan propagating through a tree.
#[derive(Clone, Debug)]
pub struct ScanData {
    /// Where to send the folded result; None at the initiating root.
    pub reply: Option<SessionRef>,
    pub root: Address,
    pub root_min_id: u32,
    /// Top-level blossom currently being descended.
    pub blossom: Address,
    /// Dual prefix accumulated from the current top downward.
    pub weight: Weight,
    pub hold_cluster: Arc<BTreeSet<Address>>,
    pub soft: bool,
}

/// Response to one ping or one folded subtree.
#[derive(Clone, Debug)]
pub struct PongData {
    pub token: u64,
    pub op: OpCandidate,
    pub min_seen: Option<MinSeen>,
}

/// Stateless chain walk: up the pistil chain accumulating dual weight, then
/// up the parent chain to the root. Every node answers immediately, even
/// locked or defunct ones; staleness is caught by supervisor revalidation.
#[derive(Clone, Copy, Debug)]
pub struct TreeInfoHopData {
    pub origin: Address,
    pub token: u64,
    pub weight: Weight,
    /// Set once the pistil phase tops out: (topmost address, positive).
    pub topmost: Option<(Address, bool)>,
    /// The topmost blossom's matched vertex pair, captured when topping out.
    pub topmost_match_pair: Option<(VertexId, VertexId)>,
}

/// Terminal answer of a chain walk, sent straight to the origin.
#[derive(Clone, Copy, Debug)]
pub struct TreeInfoReplyData {
    pub token: u64,
    pub topmost: Address,
    pub topmost_positive: bool,
    /// The topmost blossom's matched vertex pair, if matched.
    pub topmost_match_pair: Option<(VertexId, VertexId)>,
    /// Dual weight from the queried vertex through its topmost blossom.
    pub chain_weight: Weight,
    pub root: Address,
    pub root_matched: bool,
    pub root_min_id: u32,
}

/// Frozen facts about one blossom, gathered at lock time (and by the
/// fact-query message). Supervisors compute critical sections from these.
#[derive(Clone, Debug)]
pub struct MemberInfo {
    pub addr: Address,
    pub vertex_id: Option<VertexId>,
    pub min_id: u32,
    pub top_level: bool,
    pub positive: bool,
    pub is_macro: bool,
    pub defunct: bool,
    pub internal_weight: Weight,
    pub pistil: Option<Address>,
    pub petals: Vec<DirectedEdge>,
    pub match_edge: Option<DirectedEdge>,
    pub parent: Option<DirectedEdge>,
    pub children: Vec<DirectedEdge>,
}

/// Request to lock a whole tree (sent to its root) or a subtree (internal
/// propagation).
#[derive(Clone, Copy, Debug)]
pub struct LockRequestData {
    pub owner: Address,
    pub token: u64,
    /// Root min-id of the requesting operation; lower outranks.
    pub priority: u32,
}

#[derive(Clone, Debug)]
pub struct LockReplyData {
    pub token: u64,
    pub granted: bool,
    /// Facts for every blossom in the granted subtree.
    pub members: Vec<MemberInfo>,
}

#[derive(Clone, Copy, Debug)]
pub struct UnlockData {
    pub token: u64,
    /// Clear the paused flag (sent to the sponsoring root only).
    pub unpause: bool,
    /// Scan cooldown to impose, in ticks (0 after clean commits).
    pub cooldown_ticks: u64,
}

/// One field rewrite inside a locked node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotUpdate {
    SetPositive(bool),
    SetParent(Option<DirectedEdge>),
    SetChildren(Vec<DirectedEdge>),
    AddChild(DirectedEdge),
    /// Retarget the child edge currently aimed at `old`.
    ReplaceChildTarget { old: Address, new: Address },
    SetMatch(Option<DirectedEdge>),
    /// Retarget the match edge's blossom endpoint.
    PatchMatchTarget { new: Address },
    PatchParentTarget { new: Address },
    SetPistil(Option<Address>),
    SetPetals(Vec<DirectedEdge>),
    AddWeight(Weight),
    /// Mark an expanded macrovertex as a zombie: it answers stale queries
    /// minimally and denies locks, but never acts again.
    SetDefunct,
}

#[derive(Clone, Debug)]
pub struct MutateData {
    pub token: u64,
    pub ack_to: Address,
    pub updates: Vec<SlotUpdate>,
}

/// Vertex-level matching status, for the reaping phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchState {
    Matched { partner: VertexId },
    /// Inside a macrovertex; `next` is the directly containing one.
    Wrapped { next: Address },
    Free,
}

#[derive(Clone, Debug)]
pub struct HeldReplyData {
    pub token: u64,
    pub root: Address,
    pub min_id: u32,
    /// The root's latest scan outcome if it was a hold: the foreign roots it
    /// is tight against.
    pub bucket: Option<BTreeSet<Address>>,
}

/// Everything that travels between processes.
#[derive(Clone, Debug)]
pub enum Message {
    Start,
    /// Registers one vertex with the coordinator; `expected_total` lets the
    /// coordinator hold roster queries until everyone checked in.
    Sow { id: VertexId, vertex: Address, expected_total: u32 },
    /// Vertex asks for the neighbor roster.
    Discover,
    DiscoverReply { roster: Arc<Vec<(VertexId, Address)>> },
    /// A top-level blossom just became matched: cascade down to vertices.
    AnnounceSprout,
    /// Vertex tells the coordinator it is covered by the matching.
    Sprout { id: VertexId },
    MatchStatusQuery,
    MatchStatus { id: Option<VertexId>, state: MatchState },
    /// Ask a matched, tree-free macrovertex to unwrap itself.
    TerminalExpandDirective,
    /// Final pair announcement to the collector.
    Reap { a: VertexId, b: VertexId },
    /// Generic delayed self-call for retry timers.
    Nudge { tag: u8 },

    Ping(Box<PingData>),
    Scan(Box<ScanData>),
    Pong(Box<PongData>),
    /// Supervisor asks a (locked, soft) root to run a verification scan.
    SoftScanCommand { reply: SessionRef, hold_cluster: Arc<BTreeSet<Address>> },
    /// Folded result of a commanded scan, back to the supervisor.
    ScanResult { token: u64, op: OpCandidate, min_seen: Option<MinSeen> },
    TreeInfoHop(Box<TreeInfoHopData>),
    TreeInfoReply(Box<TreeInfoReplyData>),
    GetNodeFacts { token: u64 },
    NodeFacts { token: u64, info: Box<MemberInfo> },

    LockTree(LockRequestData),
    LockSubtree(LockRequestData),
    LockReply(Box<LockReplyData>),
    Unlock(UnlockData),
    SetPingable { token: u64, ack_to: Address, level: Pingable },
    Mutate(Box<MutateData>),
    Ack { token: u64 },
    /// One step of the matched-edge flip along an augmenting path.
    AugmentStep { supervisor: Address, preceding: DirectedEdge },
    AugmentDone,
    /// Cluster discovery probe for joint reweights.
    HeldQuery { token: u64 },
    HeldReply(Box<HeldReplyData>),
}

impl Message {
    /// Compact deterministic label for traces.
    pub fn summary(&self) -> String {
        match self {
            Message::Start => "Start".into(),
            Message::Sow { id, .. } => format!("Sow({id})"),
            Message::Discover => "Discover".into(),
            Message::DiscoverReply { .. } => "DiscoverReply".into(),
            Message::AnnounceSprout => "AnnounceSprout".into(),
            Message::Sprout { id } => format!("Sprout({id})"),
            Message::MatchStatusQuery => "MatchStatusQuery".into(),
            Message::MatchStatus { state, .. } => match state {
                MatchState::Matched { .. } => "MatchStatus(Matched)".into(),
                MatchState::Wrapped { .. } => "MatchStatus(Wrapped)".into(),
                MatchState::Free => "MatchStatus(Free)".into(),
            },
            Message::TerminalExpandDirective => "TerminalExpandDirective".into(),
            Message::Reap { a, b } => format!("Reap({a},{b})"),
            Message::Nudge { tag } => format!("Nudge({tag})"),
            Message::Ping(p) => format!(
                "Ping{}({})",
                if p.soft { "Soft" } else { "" },
                p.sender_vertex
            ),
            Message::Scan(s) => format!("Scan{}", if s.soft { "Soft" } else { "" }),
            Message::Pong(p) => format!("Pong({})", p.op.kind_name()),
            Message::SoftScanCommand { .. } => "SoftScanCommand".into(),
            Message::ScanResult { op, .. } => format!("ScanResult({})", op.kind_name()),
            Message::TreeInfoHop(_) => "TreeInfoHop".into(),
            Message::TreeInfoReply(_) => "TreeInfoReply".into(),
            Message::GetNodeFacts { .. } => "GetNodeFacts".into(),
            Message::NodeFacts { .. } => "NodeFacts".into(),
            Message::LockTree(_) => "LockTree".into(),
            Message::LockSubtree(_) => "LockSubtree".into(),
            Message::LockReply(r) => {
                format!("LockReply({})", if r.granted { "granted" } else { "denied" })
            }
            Message::Unlock(_) => "Unlock".into(),
            Message::SetPingable { level, .. } => format!("SetPingable({level:?})"),
            Message::Mutate(m) => format!("Mutate(x{})", m.updates.len()),
            Message::Ack { .. } => "Ack".into(),
            Message::AugmentStep { .. } => "AugmentStep".into(),
            Message::AugmentDone => "AugmentDone".into(),
            Message::HeldQuery { .. } => "HeldQuery".into(),
            Message::HeldReply(_) => "HeldReply".into(),
        }
    }

    /// The simulator snapshots the forest right before the first of these
    /// lands: that is the state at optimality, before terminal unwrapping.
    pub fn is_terminal_directive(&self) -> bool {
        matches!(self, Message::TerminalExpandDirective)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn edge(a: u32, b: u32) -> DirectedEdge {
        DirectedEdge {
            source_blossom: 100 + a,
            source_vertex: VertexId(a),
            target_vertex: VertexId(b),
            target_blossom: 100 + b,
        }
    }

    fn arb_candidate() -> impl Strategy<Value = OpCandidate> {
        prop_oneof![
            Just(OpCandidate::Pass),
            (0i64..20, prop::option::of((0u32..5, any::<bool>()))).prop_map(|(w, e)| {
                OpCandidate::Reweight {
                    amount: Weight::from_half_units(w),
                    evidence: e.map(|(r, m)| Evidence { root_min_id: r, mid_soft: m }),
                }
            }),
            prop::collection::btree_set(0u32..6, 1..3)
                .prop_map(|bucket| OpCandidate::Hold { bucket }),
            (0u32..6, 0u32..6).prop_map(|(t, m)| OpCandidate::Expand { target: t, min_id: m }),
            (0u32..5, 0u32..5).prop_map(|(a, b)| OpCandidate::Contract { edge: edge(a, b) }),
            (0u32..5, 0u32..5).prop_map(|(a, b)| OpCandidate::Graft { edge: edge(a, b) }),
            (0u32..5, 0u32..5).prop_map(|(a, b)| OpCandidate::Augment { edge: edge(a, b) }),
        ]
    }

    #[test]
    fn priorities() {
        let h = BTreeSet::new();
        let reweight = OpCandidate::Reweight { amount: Weight::from_units(1), evidence: None };
        let augment = OpCandidate::Augment { edge: edge(3, 4) };
        assert_eq!(unify(reweight.clone(), augment.clone(), &h), augment);
        assert_eq!(unify(augment.clone(), OpCandidate::Pass, &h), augment);
        let graft = OpCandidate::Graft { edge: edge(0, 1) };
        assert_eq!(unify(graft, augment.clone(), &h), augment);
    }

    #[test]
    fn reweight_keeps_the_minimum() {
        let h = BTreeSet::new();
        let a = OpCandidate::Reweight { amount: Weight::from_units(3), evidence: None };
        let b = OpCandidate::Reweight {
            amount: Weight::from_units(1),
            evidence: Some(Evidence { root_min_id: 4, mid_soft: false }),
        };
        assert_eq!(unify(a, b.clone(), &h), b);
    }

    #[test]
    fn holds_union_and_collapse() {
        let h: BTreeSet<Address> = [7u32].into();
        let a = OpCandidate::Hold { bucket: [1u32].into() };
        let b = OpCandidate::Hold { bucket: [2u32, 7].into() };
        assert_eq!(
            unify(a, b, &h),
            OpCandidate::Hold { bucket: [1u32, 2].into() }
        );
        let covered = OpCandidate::Hold { bucket: [7u32].into() };
        assert_eq!(unify(covered, OpCandidate::Pass, &h), OpCandidate::Pass);
    }

    #[test]
    fn edge_ties_break_lexicographically() {
        let h = BTreeSet::new();
        let a = OpCandidate::Augment { edge: edge(2, 5) };
        let b = OpCandidate::Augment { edge: edge(2, 3) };
        assert_eq!(unify(a, b.clone(), &h), b);
    }

    proptest! {
        #[test]
        fn unify_is_commutative(a in arb_candidate(), b in arb_candidate(), h in prop::collection::btree_set(0u32..6, 0..3)) {
            prop_assert_eq!(unify(a.clone(), b.clone(), &h), unify(b, a, &h));
        }

        #[test]
        fn unify_is_associative(
            a in arb_candidate(),
            b in arb_candidate(),
            c in arb_candidate(),
            h in prop::collection::btree_set(0u32..6, 0..3),
        ) {
            let left = unify(unify(a.clone(), b.clone(), &h), c.clone(), &h);
            let right = unify(a, unify(b, c, &h), &h);
            prop_assert_eq!(left, right);
        }

        #[test]
        fn pass_is_identity(a in arb_candidate(), h in prop::collection::btree_set(0u32..6, 0..3)) {
            // Identity up to normalization, which is idempotent.
            let normalized = unify(a.clone(), OpCandidate::Pass, &h);
            prop_assert_eq!(unify(normalized.clone(), OpCandidate::Pass, &h), normalized);
        }

        #[test]
        fn min_seen_merge_is_commutative_and_associative(
            xs in prop::collection::vec((0i64..10, 0u32..5, any::<bool>()), 0..4),
        ) {
            let items: Vec<Option<MinSeen>> = xs
                .iter()
                .map(|&(w, r, h)| {
                    Some(MinSeen {
                        amount: Weight::from_half_units(w),
                        evidence: Some(Evidence { root_min_id: r, mid_soft: false }),
                        rewind_hint: h,
                    })
                })
                .collect();
            let fold_left = items.iter().cloned().fold(None, MinSeen::merge);
            let fold_right = items.iter().rev().cloned().fold(None, MinSeen::merge);
            prop_assert_eq!(fold_left, fold_right);
        }
    }
}
