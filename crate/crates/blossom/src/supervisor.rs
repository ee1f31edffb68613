//! Supervisors: short-lived processes that carry one proposed operation from
//! a scan conclusion to a commit, or give up trying.
//!
//! A supervisor owns no graph state. It locks the trees the operation
//! touches, re-derives the preconditions from the locked facts (everything it
//! learned earlier may be stale), applies the change through field mutations,
//! and releases. Every failed recheck is an abort: the sponsoring root is
//! unpaused with a small cooldown and simply scans again.
//!
//! Locks are acquired one root at a time in ascending min-id order, and a
//! request only waits behind a better-ranked holder (lower min-id), so lock
//! wait chains strictly ascend and can never close into a cycle. Scans can
//! also wait, on deferred pings, but only for trees whose members are
//! hardened to unpingable, and hardening happens strictly between taking the
//! last lock and releasing: a span with no waits in it. Every wait therefore
//! sits behind a supervisor that finishes on its own.

use crate::msg::{
    Address, DirectedEdge, LockRequestData, MemberInfo, Message, MinSeen, MutateData,
    OpCandidate, PingData, Pingable, SessionRef, SlotUpdate, TreeInfoHopData, UnlockData,
};
use crate::node::{MacroSeed, NodeState, Topology};
use crate::sim::{Ctx, Process};
use crate::trace::TraceEvent;
use crate::weight::Weight;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

/// Scan cooldown handed to the sponsor after an abort or a rewind, so the
/// competing operation gets room to finish first.
const ABORT_COOLDOWN: u64 = 6;

/// The operation a scan conclusion asked for.
#[derive(Clone, Debug)]
pub enum OpKind {
    Reweight { amount: Weight },
    /// Joint reweight of the mutually held cluster seeded by these roots.
    Multireweight { bucket: BTreeSet<Address> },
    Expand { target: Address },
    Contract { edge: DirectedEdge },
    Graft { edge: DirectedEdge },
    Augment { edge: DirectedEdge },
    /// Unwrap a matched, tree-free macrovertex (final phase only).
    TerminalExpand { target: Address },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Stage {
    Boot,
    /// Pre-lock fact queries (graft partner chain, terminal partner).
    AwaitFactsA,
    AwaitFactsB,
    /// Pre-lock chain walk to the augment target's root.
    AwaitResolveHop,
    /// Multireweight cluster discovery fixpoint.
    Preflight,
    Locking,
    /// Edge-op revalidation: chain walk on the source side.
    AwaitRevalHop,
    /// Target vertex switched to soft; then the verification ping itself.
    AwaitRevalSoften,
    AwaitRevalPong,
    /// All members to none before a structural mutation: a tree being torn
    /// apart must not answer anything until the new shape is in place.
    AwaitRevalHarden,
    /// Reweight rounds: members to soft, commanded scans, members to none,
    /// dual updates. `verify`/`rewind` pick the round.
    AwaitSoften { verify: bool },
    AwaitScans { verify: bool },
    AwaitHarden { rewind: bool },
    AwaitApply { rewind: bool },
    /// Structural mutations in flight; commit trace fires when acked.
    AwaitCritical,
    AwaitAugmentWalk,
}

struct LockedTree {
    root: Address,
    members: Vec<MemberInfo>,
}

pub struct SupervisorState {
    topo: Arc<Topology>,
    sponsor: Address,
    sponsor_min_id: u32,
    kind: OpKind,
    addr: Address,
    token: u64,
    stage: Stage,
    /// Facts from the first resolve query (graft target, terminal macro).
    first_facts: Option<MemberInfo>,
    /// Chain weight of the operation edge's source side, from revalidation.
    source_chain: Weight,
    /// Cluster discovery state: root -> min id, plus who was asked already.
    cluster: BTreeMap<Address, u32>,
    queried: BTreeSet<Address>,
    pending_held: usize,
    /// Roots to lock, ascending (min id, address).
    lock_plan: Vec<(u32, Address)>,
    next_lock: usize,
    trees: Vec<LockedTree>,
    lock_traced: bool,
    /// All locked roots, as the hold cluster for commanded scans.
    cluster_set: Arc<BTreeSet<Address>>,
    acks_waiting: usize,
    results_waiting: usize,
    augments_waiting: usize,
    fold_op: OpCandidate,
    fold_min: Option<MinSeen>,
    /// Dual change being applied (fixed up front, or by cluster scan).
    amount: Weight,
    rewind_evidence_root: u32,
    commit_event: Option<TraceEvent>,
    /// Nodes born under this lock (a contraction's macrovertex).
    extra_unlocks: Vec<Address>,
}


fn pair_u32(e: DirectedEdge) -> (u32, u32) {
    let (a, b) = e.vertex_pair();
    (a.0, b.0)
}

impl SupervisorState {
    pub fn new(
        topo: Arc<Topology>,
        sponsor: Address,
        sponsor_min_id: u32,
        kind: OpKind,
    ) -> SupervisorState {
        SupervisorState {
            topo,
            sponsor,
            sponsor_min_id,
            kind,
            addr: 0,
            token: 0,
            stage: Stage::Boot,
            first_facts: None,
            source_chain: Weight::ZERO,
            cluster: BTreeMap::new(),
            queried: BTreeSet::new(),
            pending_held: 0,
            lock_plan: Vec::new(),
            next_lock: 0,
            trees: Vec::new(),
            lock_traced: false,
            cluster_set: Arc::new(BTreeSet::new()),
            acks_waiting: 0,
            results_waiting: 0,
            augments_waiting: 0,
            fold_op: OpCandidate::Pass,
            fold_min: None,
            amount: Weight::ZERO,
            rewind_evidence_root: 0,
            commit_event: None,
            extra_unlocks: Vec::new(),
        }
    }

    // ------------------------------------------------------------------
    // Small lookups over the locked facts

    fn member_in(&self, root: Address, addr: Address) -> Option<&MemberInfo> {
        self.trees
            .iter()
            .find(|t| t.root == root)?
            .members
            .iter()
            .find(|m| m.addr == addr)
    }

    fn member_map(&self) -> BTreeMap<Address, &MemberInfo> {
        self.trees
            .iter()
            .flat_map(|t| t.members.iter())
            .map(|m| (m.addr, m))
            .collect()
    }

    fn all_member_addrs(&self) -> Vec<Address> {
        self.trees
            .iter()
            .flat_map(|t| t.members.iter().map(|m| m.addr))
            .collect()
    }

    fn op_edge(&self) -> DirectedEdge {
        match &self.kind {
            OpKind::Contract { edge } | OpKind::Graft { edge } | OpKind::Augment { edge } => *edge,
            other => unreachable!("no operation edge on {other:?}"),
        }
    }

    // ------------------------------------------------------------------
    // Barriers

    fn arm_acks(&mut self, ctx: &mut Ctx, n: usize, next: Stage) {
        self.stage = next;
        self.acks_waiting = n;
        if n == 0 {
            self.acks_done(ctx);
        }
    }

    fn send_mutates(
        &mut self,
        ctx: &mut Ctx,
        mutates: Vec<(Address, Vec<SlotUpdate>)>,
        next: Stage,
    ) {
        let n = mutates.len();
        for (addr, updates) in mutates {
            let data = MutateData { token: self.token, ack_to: self.addr, updates };
            ctx.send(addr, Message::Mutate(Box::new(data)));
        }
        self.arm_acks(ctx, n, next);
    }

    fn set_members_pingable(&mut self, ctx: &mut Ctx, level: Pingable, next: Stage) {
        let addrs = self.all_member_addrs();
        for &a in &addrs {
            ctx.send(a, Message::SetPingable { token: self.token, ack_to: self.addr, level });
        }
        self.arm_acks(ctx, addrs.len(), next);
    }

    // ------------------------------------------------------------------
    // Resolve

    fn begin(&mut self, ctx: &mut Ctx) {
        match &self.kind {
            OpKind::Reweight { amount } => {
                self.amount = *amount;
                self.lock_plan = vec![(self.sponsor_min_id, self.sponsor)];
                self.start_locking(ctx);
            }
            OpKind::Contract { .. } | OpKind::Expand { .. } => {
                self.lock_plan = vec![(self.sponsor_min_id, self.sponsor)];
                self.start_locking(ctx);
            }
            OpKind::Graft { edge } => {
                ctx.send(edge.target_blossom, Message::GetNodeFacts { token: self.token });
                self.stage = Stage::AwaitFactsA;
            }
            OpKind::TerminalExpand { target } => {
                ctx.send(*target, Message::GetNodeFacts { token: self.token });
                self.stage = Stage::AwaitFactsA;
            }
            OpKind::Augment { edge } => {
                let hop = TreeInfoHopData {
                    origin: self.addr,
                    token: self.token,
                    weight: Weight::ZERO,
                    topmost: None,
                    topmost_match_pair: None,
                };
                ctx.send(edge.target_blossom, Message::TreeInfoHop(Box::new(hop)));
                self.stage = Stage::AwaitResolveHop;
            }
            OpKind::Multireweight { bucket } => {
                if bucket.is_empty() {
                    self.abort(ctx, "preflight");
                    return;
                }
                self.cluster.insert(self.sponsor, self.sponsor_min_id);
                self.queried.insert(self.sponsor);
                let bucket = bucket.clone();
                for &r in &bucket {
                    self.queried.insert(r);
                    ctx.send(r, Message::HeldQuery { token: self.token });
                }
                self.pending_held = bucket.len();
                self.stage = Stage::Preflight;
            }
        }
    }

    fn on_facts(&mut self, ctx: &mut Ctx, info: MemberInfo) {
        match self.stage {
            Stage::AwaitFactsA => {
                // The queried node must still be a matched, tree-free top.
                let sound = !info.defunct
                    && info.top_level
                    && info.positive
                    && info.parent.is_none()
                    && info.children.is_empty()
                    && info.match_edge.is_some();
                let wants_macro = matches!(self.kind, OpKind::TerminalExpand { .. });
                if !sound || (wants_macro && !info.is_macro) || info.addr == self.sponsor && !wants_macro {
                    self.abort(ctx, "resolve");
                    return;
                }
                let partner = info.match_edge.expect("checked above").target_blossom;
                if partner == info.addr || partner == self.sponsor && !wants_macro {
                    self.abort(ctx, "resolve");
                    return;
                }
                ctx.send(partner, Message::GetNodeFacts { token: self.token });
                self.first_facts = Some(info);
                self.stage = Stage::AwaitFactsB;
            }
            Stage::AwaitFactsB => {
                let first = self.first_facts.take().expect("first facts stored");
                let fm = first.match_edge.expect("matched when stored");
                let sound = !info.defunct
                    && info.top_level
                    && info.positive
                    && info.parent.is_none()
                    && info.children.is_empty()
                    && info.addr == fm.target_blossom
                    && info
                        .match_edge
                        .is_some_and(|m| {
                            m.target_blossom == first.addr
                                && m.vertex_pair() == fm.vertex_pair()
                        });
                if !sound {
                    self.abort(ctx, "resolve");
                    return;
                }
                let mut plan = vec![(first.min_id, first.addr), (info.min_id, info.addr)];
                if !matches!(self.kind, OpKind::TerminalExpand { .. }) {
                    plan.push((self.sponsor_min_id, self.sponsor));
                }
                self.lock_plan = plan;
                self.start_locking(ctx);
            }
            _ => {}
        }
    }

    fn on_resolve_hop(&mut self, ctx: &mut Ctx, r: crate::msg::TreeInfoReplyData) {
        let OpKind::Augment { edge } = self.kind else {
            return;
        };
        if r.root_matched || r.root == self.sponsor || r.topmost != edge.target_blossom {
            self.abort(ctx, "resolve");
            return;
        }
        self.lock_plan =
            vec![(self.sponsor_min_id, self.sponsor), (r.root_min_id, r.root)];
        self.start_locking(ctx);
    }

    fn on_held_reply(&mut self, ctx: &mut Ctx, reply: crate::msg::HeldReplyData) {
        if self.stage != Stage::Preflight {
            return;
        }
        self.pending_held -= 1;
        let Some(bucket) = reply.bucket else {
            // Someone in the supposed cluster is not actually holding: the
            // picture is stale, try again after a rescan.
            self.abort(ctx, "preflight");
            return;
        };
        self.cluster.insert(reply.root, reply.min_id);
        for r in bucket {
            if self.queried.insert(r) {
                ctx.send(r, Message::HeldQuery { token: self.token });
                self.pending_held += 1;
            }
        }
        if self.pending_held > 0 {
            return;
        }
        // Cluster closed. Only the best-ranked root's supervisor proceeds;
        // the rest stand down and let it work.
        let best = self.cluster.values().copied().min().expect("cluster nonempty");
        if best != self.sponsor_min_id {
            self.abort(ctx, "preflight");
            return;
        }
        self.lock_plan = self.cluster.iter().map(|(&r, &m)| (m, r)).collect();
        self.start_locking(ctx);
    }

    // ------------------------------------------------------------------
    // Locking

    fn start_locking(&mut self, ctx: &mut Ctx) {
        self.lock_plan.sort_unstable();
        self.next_lock = 0;
        self.stage = Stage::Locking;
        self.send_next_lock(ctx);
    }

    fn send_next_lock(&mut self, ctx: &mut Ctx) {
        let (_, root) = self.lock_plan[self.next_lock];
        let req = LockRequestData {
            owner: self.addr,
            token: self.token,
            priority: self.sponsor_min_id,
        };
        ctx.send(root, Message::LockTree(req));
    }

    fn on_lock_reply(&mut self, ctx: &mut Ctx, reply: crate::msg::LockReplyData) {
        if self.stage != Stage::Locking {
            return;
        }
        if !reply.granted {
            self.abort(ctx, "locking");
            return;
        }
        let (_, root) = self.lock_plan[self.next_lock];
        self.trees.push(LockedTree { root, members: reply.members });
        self.next_lock += 1;
        if self.next_lock < self.lock_plan.len() {
            self.send_next_lock(ctx);
        } else {
            self.locked(ctx);
        }
    }

    fn locked(&mut self, ctx: &mut Ctx) {
        self.lock_traced = true;
        ctx.trace(TraceEvent::Lock {
            roots: self.lock_plan.iter().map(|&(m, _)| m).collect(),
        });
        self.cluster_set = Arc::new(self.trees.iter().map(|t| t.root).collect());
        if !self.root_check() {
            self.abort(ctx, "rootcheck");
            return;
        }
        match self.kind.clone() {
            OpKind::Reweight { .. } | OpKind::Multireweight { .. } => {
                self.set_members_pingable(ctx, Pingable::Soft, Stage::AwaitSoften { verify: false });
            }
            OpKind::Contract { edge } | OpKind::Graft { edge } | OpKind::Augment { edge } => {
                let hop = TreeInfoHopData {
                    origin: self.addr,
                    token: self.token,
                    weight: Weight::ZERO,
                    topmost: None,
                    topmost_match_pair: None,
                };
                ctx.send(
                    self.topo.vertex_addr(edge.source_vertex),
                    Message::TreeInfoHop(Box::new(hop)),
                );
                self.stage = Stage::AwaitRevalHop;
            }
            OpKind::Expand { .. } | OpKind::TerminalExpand { .. } => {
                self.set_members_pingable(ctx, Pingable::None, Stage::AwaitRevalHarden);
            }
        }
    }

    /// Re-derives the operation's shape from locked facts. Anything that
    /// moved since the scan makes this return false.
    fn root_check(&self) -> bool {
        for tree in &self.trees {
            let Some(root) = self.member_in(tree.root, tree.root) else {
                return false;
            };
            if root.defunct || !root.top_level {
                return false;
            }
        }
        let unmatched_root = |addr: Address| {
            self.member_in(addr, addr).is_some_and(|m| m.match_edge.is_none())
        };
        let top_positive = |root: Address, addr: Address| {
            self.member_in(root, addr)
                .is_some_and(|m| m.top_level && m.positive && !m.defunct)
        };
        match &self.kind {
            OpKind::Reweight { .. } => unmatched_root(self.sponsor),
            OpKind::Multireweight { .. } => self.trees.iter().all(|t| unmatched_root(t.root)),
            OpKind::Contract { edge } => {
                unmatched_root(self.sponsor)
                    && edge.source_blossom != edge.target_blossom
                    && top_positive(self.sponsor, edge.source_blossom)
                    && top_positive(self.sponsor, edge.target_blossom)
            }
            OpKind::Graft { edge } => {
                let y_addr = edge.target_blossom;
                let Some(y) = self.member_in(y_addr, y_addr) else { return false };
                let Some(ym) = y.match_edge else { return false };
                let Some(w) = self.member_in(ym.target_blossom, ym.target_blossom) else {
                    return false;
                };
                unmatched_root(self.sponsor)
                    && top_positive(self.sponsor, edge.source_blossom)
                    && y.positive
                    && y.children.is_empty()
                    && w.positive
                    && w.children.is_empty()
                    && w.match_edge.is_some_and(|m| {
                        m.target_blossom == y_addr && m.vertex_pair() == ym.vertex_pair()
                    })
            }
            OpKind::Augment { edge } => {
                let other = self.trees.iter().map(|t| t.root).find(|&r| r != self.sponsor);
                let Some(other) = other else { return false };
                unmatched_root(self.sponsor)
                    && unmatched_root(other)
                    && top_positive(self.sponsor, edge.source_blossom)
                    && top_positive(other, edge.target_blossom)
            }
            OpKind::Expand { target } => {
                let Some(b) = self.member_in(self.sponsor, *target) else { return false };
                unmatched_root(self.sponsor)
                    && b.is_macro
                    && !b.defunct
                    && b.top_level
                    && !b.positive
                    && b.internal_weight.is_zero()
                    && b.parent.is_some()
                    && b.children.len() == 1
                    && b.match_edge
                        .is_some_and(|m| m.target_blossom == b.children[0].target_blossom)
            }
            OpKind::TerminalExpand { target } => {
                let Some(b) = self.member_in(*target, *target) else { return false };
                let Some(bm) = b.match_edge else { return false };
                let Some(m) = self.member_in(bm.target_blossom, bm.target_blossom) else {
                    return false;
                };
                b.is_macro
                    && b.positive
                    && b.children.is_empty()
                    && m.children.is_empty()
                    && m.match_edge.is_some_and(|e| {
                        e.target_blossom == b.addr && e.vertex_pair() == bm.vertex_pair()
                    })
            }
        }
    }

    // ------------------------------------------------------------------
    // Edge-op revalidation: one soft ping replayed exactly as the scan
    // would have sent it, expecting the same conclusion.

    fn on_reval_hop(&mut self, ctx: &mut Ctx, r: crate::msg::TreeInfoReplyData) {
        let edge = self.op_edge();
        if r.root != self.sponsor || r.topmost != edge.source_blossom || !r.topmost_positive {
            self.abort(ctx, "revalidate");
            return;
        }
        self.source_chain = r.chain_weight;
        ctx.send(
            self.topo.vertex_addr(edge.target_vertex),
            Message::SetPingable {
                token: self.token,
                ack_to: self.addr,
                level: Pingable::Soft,
            },
        );
        self.arm_acks(ctx, 1, Stage::AwaitRevalSoften);
    }

    fn send_reval_ping(&mut self, ctx: &mut Ctx) {
        let edge = self.op_edge();
        let ping = PingData {
            session: SessionRef { owner: self.addr, token: self.token },
            root: self.sponsor,
            root_min_id: self.sponsor_min_id,
            blossom: edge.source_blossom,
            weight: self.source_chain,
            hold_cluster: Arc::new(BTreeSet::from([self.sponsor])),
            sender_vertex: edge.source_vertex,
            soft: true,
        };
        ctx.send(self.topo.vertex_addr(edge.target_vertex), Message::Ping(Box::new(ping)));
        self.stage = Stage::AwaitRevalPong;
    }

    fn on_reval_pong(&mut self, ctx: &mut Ctx, pong: crate::msg::PongData) {
        let edge = self.op_edge();
        let expected = match &self.kind {
            OpKind::Contract { .. } => OpCandidate::Contract { edge },
            OpKind::Graft { .. } => OpCandidate::Graft { edge },
            OpKind::Augment { .. } => OpCandidate::Augment { edge },
            _ => unreachable!("only edge ops ping"),
        };
        if pong.op != expected {
            self.abort(ctx, "revalidate");
            return;
        }
        self.set_members_pingable(ctx, Pingable::None, Stage::AwaitRevalHarden);
    }

    // ------------------------------------------------------------------
    // Critical sections

    fn critical_graft(&mut self, ctx: &mut Ctx) {
        let edge = self.op_edge();
        let y = self
            .member_in(edge.target_blossom, edge.target_blossom)
            .expect("root-checked")
            .clone();
        let ym = y.match_edge.expect("root-checked");
        let mutates = vec![
            (edge.source_blossom, vec![SlotUpdate::AddChild(edge)]),
            (
                y.addr,
                vec![
                    SlotUpdate::SetParent(Some(edge.reversed())),
                    SlotUpdate::SetPositive(false),
                    SlotUpdate::SetChildren(vec![ym]),
                ],
            ),
            (
                ym.target_blossom,
                vec![
                    SlotUpdate::SetParent(Some(ym.reversed())),
                    SlotUpdate::SetPositive(true),
                ],
            ),
        ];
        self.commit_event = Some(TraceEvent::Graft {
            root: self.sponsor_min_id,
            edge: pair_u32(edge),
        });
        self.send_mutates(ctx, mutates, Stage::AwaitCritical);
    }

    fn critical_contract(&mut self, ctx: &mut Ctx) {
        let edge = self.op_edge();
        let b = ctx.next_spawn_addr();
        let plan = plan_contract(&self.member_map(), edge, b);
        let seed = MacroSeed {
            min_id: plan.min_id,
            petals: plan.petals,
            match_edge: plan.match_edge,
            parent: plan.parent,
            children: plan.children,
            lock_owner: self.addr,
            lock_token: self.token,
            lock_priority: self.sponsor_min_id,
        };
        let spawned = ctx.spawn(Box::new(NodeState::macro_node(self.topo.clone(), b, seed)));
        debug_assert_eq!(spawned, b);
        self.extra_unlocks.push(b);
        self.commit_event = Some(TraceEvent::Contract {
            root: self.sponsor_min_id,
            edge: pair_u32(edge),
        });
        self.send_mutates(ctx, plan.mutates, Stage::AwaitCritical);
    }

    fn critical_augment(&mut self, ctx: &mut Ctx) {
        let edge = self.op_edge();
        ctx.send(
            edge.source_blossom,
            Message::AugmentStep { supervisor: self.addr, preceding: edge },
        );
        ctx.send(
            edge.target_blossom,
            Message::AugmentStep { supervisor: self.addr, preceding: edge.reversed() },
        );
        self.augments_waiting = 2;
        self.stage = Stage::AwaitAugmentWalk;
    }

    fn on_augment_done(&mut self, ctx: &mut Ctx) {
        if self.stage != Stage::AwaitAugmentWalk {
            return;
        }
        self.augments_waiting -= 1;
        if self.augments_waiting > 0 {
            return;
        }
        // Both flips arrived; the trees dissolve into matched barbells.
        let mutates: Vec<(Address, Vec<SlotUpdate>)> = self
            .trees
            .iter()
            .flat_map(|t| t.members.iter())
            .filter(|m| m.top_level)
            .map(|m| {
                (
                    m.addr,
                    vec![
                        SlotUpdate::SetParent(None),
                        SlotUpdate::SetChildren(Vec::new()),
                        SlotUpdate::SetPositive(true),
                    ],
                )
            })
            .collect();
        self.commit_event = Some(TraceEvent::Augment { edge: pair_u32(self.op_edge()) });
        self.send_mutates(ctx, mutates, Stage::AwaitCritical);
    }

    fn critical_expand(&mut self, ctx: &mut Ctx) {
        let OpKind::Expand { target } = self.kind else { unreachable!() };
        let map = self.member_map();
        let b = map[&target];
        let macro_min_id = b.min_id;
        let mutates = plan_expand(&map, b);
        self.commit_event = Some(TraceEvent::Expand {
            root: self.sponsor_min_id,
            macro_min_id,
        });
        self.send_mutates(ctx, mutates, Stage::AwaitCritical);
    }

    fn critical_terminal(&mut self, ctx: &mut Ctx) {
        let OpKind::TerminalExpand { target } = self.kind else { unreachable!() };
        let map = self.member_map();
        let b = map[&target];
        let macro_min_id = b.min_id;
        let mutates = plan_terminal(&map, b);
        self.commit_event = Some(TraceEvent::Expand {
            root: self.sponsor_min_id,
            macro_min_id,
        });
        self.send_mutates(ctx, mutates, Stage::AwaitCritical);
    }

    // ------------------------------------------------------------------
    // Reweight rounds

    fn issue_scans(&mut self, ctx: &mut Ctx, verify: bool) {
        self.fold_op = OpCandidate::Pass;
        self.fold_min = None;
        self.results_waiting = self.trees.len();
        for i in 0..self.trees.len() {
            let root = self.trees[i].root;
            ctx.send(
                root,
                Message::SoftScanCommand {
                    reply: SessionRef { owner: self.addr, token: self.token },
                    hold_cluster: self.cluster_set.clone(),
                },
            );
        }
        self.stage = Stage::AwaitScans { verify };
    }

    fn on_scan_result(&mut self, ctx: &mut Ctx, op: OpCandidate, min_seen: Option<MinSeen>) {
        let Stage::AwaitScans { verify } = self.stage else {
            return;
        };
        let acc = std::mem::replace(&mut self.fold_op, OpCandidate::Pass);
        self.fold_op = crate::msg::unify(acc, op, &self.cluster_set);
        self.fold_min = MinSeen::merge(self.fold_min, min_seen);
        self.results_waiting -= 1;
        if self.results_waiting > 0 {
            return;
        }
        if verify {
            self.verify_scans_done(ctx);
        } else {
            self.first_scans_done(ctx);
        }
    }

    fn first_scans_done(&mut self, ctx: &mut Ctx) {
        match (&self.kind, &self.fold_op) {
            (OpKind::Reweight { .. }, OpCandidate::Reweight { amount, .. })
                if *amount == self.amount => {}
            (OpKind::Multireweight { .. }, OpCandidate::Reweight { amount, .. })
                if amount.is_positive() =>
            {
                self.amount = *amount;
            }
            _ => {
                // The picture changed under us (a better operation appeared,
                // or the headroom moved): rescan instead.
                self.abort(ctx, "revalidate");
                return;
            }
        }
        self.set_members_pingable(ctx, Pingable::None, Stage::AwaitHarden { rewind: false });
    }

    fn apply_weights(&mut self, ctx: &mut Ctx, rewind: bool) {
        let w = if rewind { -self.amount } else { self.amount };
        let mutates: Vec<(Address, Vec<SlotUpdate>)> = self
            .trees
            .iter()
            .flat_map(|t| t.members.iter())
            .filter(|m| m.top_level)
            .map(|m| {
                let delta = if m.positive { w } else { -w };
                (m.addr, vec![SlotUpdate::AddWeight(delta)])
            })
            .collect();
        self.send_mutates(ctx, mutates, Stage::AwaitApply { rewind });
    }

    fn commit_reweight(&mut self, ctx: &mut Ctx) {
        let event = match &self.kind {
            OpKind::Reweight { .. } => TraceEvent::Reweight {
                root: self.sponsor_min_id,
                amount: self.amount,
            },
            OpKind::Multireweight { .. } => TraceEvent::Multireweight {
                roots: self.lock_plan.iter().map(|&(m, _)| m).collect(),
                amount: self.amount,
            },
            _ => unreachable!("reweight commit on a reweight kind"),
        };
        ctx.trace(event);
        self.set_members_pingable(ctx, Pingable::Soft, Stage::AwaitSoften { verify: true });
    }

    fn verify_scans_done(&mut self, ctx: &mut Ctx) {
        let negative = self.fold_min.filter(|m| m.amount.is_negative());
        match negative {
            Some(m) if m.rewind_hint || m.evidence.is_none() => {
                self.rewind_evidence_root =
                    m.evidence.map_or(self.sponsor_min_id, |e| e.root_min_id);
                self.set_members_pingable(
                    ctx,
                    Pingable::None,
                    Stage::AwaitHarden { rewind: true },
                );
            }
            // Either nothing is oversubscribed, or every counterpart behind
            // a negative slack is a still-soft tree we outrank: each of them
            // sees the same collision from its side and yields there.
            _ => self.release(ctx, 0),
        }
    }

    // ------------------------------------------------------------------
    // Barrier dispatch

    fn acks_done(&mut self, ctx: &mut Ctx) {
        match self.stage {
            Stage::AwaitRevalSoften => self.send_reval_ping(ctx),
            Stage::AwaitRevalHarden => match self.kind.clone() {
                OpKind::Contract { .. } => self.critical_contract(ctx),
                OpKind::Graft { .. } => self.critical_graft(ctx),
                OpKind::Augment { .. } => self.critical_augment(ctx),
                OpKind::Expand { .. } => self.critical_expand(ctx),
                OpKind::TerminalExpand { .. } => self.critical_terminal(ctx),
                _ => unreachable!("structural ops only"),
            },
            Stage::AwaitSoften { verify } => self.issue_scans(ctx, verify),
            Stage::AwaitHarden { rewind } => self.apply_weights(ctx, rewind),
            Stage::AwaitApply { rewind: false } => self.commit_reweight(ctx),
            Stage::AwaitApply { rewind: true } => {
                ctx.trace(TraceEvent::Rewind {
                    root: self.sponsor_min_id,
                    evidence_root: self.rewind_evidence_root,
                    amount: self.amount,
                });
                self.release(ctx, ABORT_COOLDOWN);
            }
            Stage::AwaitCritical => {
                let event = self.commit_event.take().expect("commit event prepared");
                ctx.trace(event);
                self.release(ctx, 0);
            }
            other => unreachable!("no ack barrier in {other:?}"),
        }
    }

    // ------------------------------------------------------------------
    // Release

    fn abort(&mut self, ctx: &mut Ctx, stage: &str) {
        ctx.trace(TraceEvent::Abort { stage: stage.to_string() });
        self.release(ctx, ABORT_COOLDOWN);
    }

    fn release(&mut self, ctx: &mut Ctx, sponsor_cooldown: u64) {
        if self.lock_traced {
            ctx.trace(TraceEvent::Unlock {
                roots: self.lock_plan.iter().map(|&(m, _)| m).collect(),
            });
        }
        let mut sponsor_covered = false;
        for tree in &self.trees {
            for m in &tree.members {
                let unpause = m.addr == self.sponsor;
                sponsor_covered |= unpause;
                let data = UnlockData {
                    token: self.token,
                    unpause,
                    cooldown_ticks: if unpause { sponsor_cooldown } else { 0 },
                };
                ctx.send(m.addr, Message::Unlock(data));
            }
        }
        for &x in &self.extra_unlocks {
            let data = UnlockData { token: self.token, unpause: false, cooldown_ticks: 0 };
            ctx.send(x, Message::Unlock(data));
        }
        if !sponsor_covered {
            // Never locked the sponsor (early abort): it still needs its
            // unpause to resume scanning.
            let data = UnlockData {
                token: self.token,
                unpause: true,
                cooldown_ticks: sponsor_cooldown,
            };
            ctx.send(self.sponsor, Message::Unlock(data));
        }
        ctx.terminate();
    }
}

impl Process for SupervisorState {
    fn handle(&mut self, ctx: &mut Ctx, _src: Address, msg: Message) {
        match msg {
            Message::Start => {
                self.addr = ctx.self_addr;
                self.token = ctx.self_addr as u64;
                self.begin(ctx);
            }
            Message::NodeFacts { token, info } if token == self.token => {
                self.on_facts(ctx, *info);
            }
            Message::TreeInfoReply(r) if r.token == self.token => match self.stage {
                Stage::AwaitResolveHop => self.on_resolve_hop(ctx, *r),
                Stage::AwaitRevalHop => self.on_reval_hop(ctx, *r),
                _ => {}
            },
            Message::LockReply(r) if r.token == self.token => self.on_lock_reply(ctx, *r),
            Message::Pong(p) if p.token == self.token => {
                if self.stage == Stage::AwaitRevalPong {
                    self.on_reval_pong(ctx, *p);
                }
            }
            Message::Ack { token } if token == self.token => {
                if self.acks_waiting > 0 {
                    self.acks_waiting -= 1;
                    if self.acks_waiting == 0 {
                        self.acks_done(ctx);
                    }
                }
            }
            Message::ScanResult { token, op, min_seen } if token == self.token => {
                self.on_scan_result(ctx, op, min_seen);
            }
            Message::AugmentDone => self.on_augment_done(ctx),
            Message::HeldReply(r) if r.token == self.token => self.on_held_reply(ctx, *r),
            _ => {}
        }
    }

    fn idle(&self) -> bool {
        // A supervisor is always mid-operation; it disappears when done.
        false
    }

    fn resting(&self) -> bool {
        false
    }

    fn kind(&self) -> &'static str {
        "supervisor"
    }
}

// ----------------------------------------------------------------------
// Critical-section plans, computed from locked facts only

struct ContractPlan {
    min_id: u32,
    petals: Vec<DirectedEdge>,
    match_edge: Option<DirectedEdge>,
    parent: Option<DirectedEdge>,
    children: Vec<DirectedEdge>,
    mutates: Vec<(Address, Vec<SlotUpdate>)>,
}

/// Cycle wrap for a tight in-tree edge: walk both endpoints' parent chains
/// to their nearest common ancestor, orient the cycle, and produce both the
/// newborn macrovertex's fields and the member rewrites.
fn plan_contract(
    members: &BTreeMap<Address, &MemberInfo>,
    e: DirectedEdge,
    b: Address,
) -> ContractPlan {
    let path_to_root = |start: Address| {
        let mut path = vec![start];
        while let Some(p) = members[path.last().unwrap()].parent {
            path.push(p.target_blossom);
        }
        path
    };
    let up_x = path_to_root(e.source_blossom);
    let up_y = path_to_root(e.target_blossom);
    let (mut ix, mut iy) = (up_x.len(), up_y.len());
    while ix > 1 && iy > 1 && up_x[ix - 2] == up_y[iy - 2] {
        ix -= 1;
        iy -= 1;
    }
    debug_assert_eq!(up_x[ix - 1], up_y[iy - 1]);
    let nca = up_x[ix - 1];
    let up_x = &up_x[..ix];
    let up_y = &up_y[..iy];

    // Oriented cycle nca -> ... -> X -> (e) -> Y -> ... -> nca.
    let mut petals: Vec<DirectedEdge> = Vec::new();
    for i in (0..up_x.len() - 1).rev() {
        petals.push(members[&up_x[i]].parent.expect("interior of the path").reversed());
    }
    petals.push(e);
    for &k in up_y.iter().take(up_y.len() - 1) {
        petals.push(members[&k].parent.expect("interior of the path"));
    }
    assert!(petals.len() >= 3 && petals.len() % 2 == 1, "contraction cycle must be odd");

    let cycle: Vec<Address> = petals.iter().map(|p| p.source_blossom).collect();
    let in_cycle: BTreeSet<Address> = cycle.iter().copied().collect();
    let patch = |edge: DirectedEdge| DirectedEdge { source_blossom: b, ..edge };

    let nca_m = members[&nca];
    let parent = nca_m.parent.map(patch);
    let match_edge = nca_m.match_edge.map(patch);
    let mut children: Vec<DirectedEdge> = Vec::new();
    for &c in &cycle {
        for ch in &members[&c].children {
            if !in_cycle.contains(&ch.target_blossom) {
                children.push(patch(*ch));
            }
        }
    }
    let min_id = cycle.iter().map(|c| members[c].min_id).min().expect("nonempty cycle");

    let mut mutates: Vec<(Address, Vec<SlotUpdate>)> = Vec::new();
    for &c in &cycle {
        mutates.push((
            c,
            vec![
                SlotUpdate::SetPistil(Some(b)),
                SlotUpdate::SetMatch(None),
                SlotUpdate::SetParent(None),
                SlotUpdate::SetChildren(Vec::new()),
                SlotUpdate::SetPositive(true),
            ],
        ));
    }
    if let Some(p) = nca_m.parent {
        // A positive non-root is matched along its parent edge, so the same
        // neighbor holds both links to retarget.
        let mut ups = vec![SlotUpdate::ReplaceChildTarget { old: nca, new: b }];
        if let Some(m) = nca_m.match_edge {
            debug_assert_eq!(m.target_blossom, p.target_blossom);
            ups.push(SlotUpdate::PatchMatchTarget { new: b });
        }
        mutates.push((p.target_blossom, ups));
    }
    for ch in &children {
        mutates.push((ch.target_blossom, vec![SlotUpdate::PatchParentTarget { new: b }]));
    }

    ContractPlan { min_id, petals, match_edge, parent, children, mutates }
}

/// Does this member (transitively) contain the vertex?
fn contains_vertex(members: &BTreeMap<Address, &MemberInfo>, addr: Address, v: crate::graph::VertexId) -> bool {
    let m = members[&addr];
    m.vertex_id == Some(v)
        || m.petals.iter().any(|p| contains_vertex(members, p.source_blossom, v))
}

/// Internal rematch of a cycle leaving the member at `pos_m` free: every
/// other member pairs up along a cycle edge.
fn rotation_matches(
    petals: &[DirectedEdge],
    pos_m: usize,
) -> BTreeMap<Address, DirectedEdge> {
    let k = petals.len();
    let mut match_of = BTreeMap::new();
    for step in (1..k).step_by(2) {
        let g = petals[(pos_m + step) % k];
        match_of.insert(g.source_blossom, g);
        match_of.insert(g.target_blossom, g.reversed());
    }
    match_of
}

/// Unwraps a weightless negative macrovertex that hangs in a tree: rotate
/// its internal matching, wire the petal path between the parent-side and
/// match-side members into the tree, eject the rest as matched barbells.
fn plan_expand(
    members: &BTreeMap<Address, &MemberInfo>,
    b: &MemberInfo,
) -> Vec<(Address, Vec<SlotUpdate>)> {
    let petals = &b.petals;
    let k = petals.len();
    let parent_edge = b.parent.expect("in-tree expansion needs a parent");
    let match_edge = b.match_edge.expect("negative tops are matched to a child");
    let cycle: Vec<Address> = petals.iter().map(|p| p.source_blossom).collect();
    let b_p = *cycle
        .iter()
        .find(|&&c| contains_vertex(members, c, parent_edge.source_vertex))
        .expect("parent edge leaves through a petal member");
    let b_m = *cycle
        .iter()
        .find(|&&c| contains_vertex(members, c, match_edge.source_vertex))
        .expect("match edge leaves through a petal member");
    let pos = |member: Address| cycle.iter().position(|&c| c == member).expect("on the cycle");
    let pos_m = pos(b_m);
    let pos_p = pos(b_p);
    let match_of = rotation_matches(petals, pos_m);

    // Tree path: from b_p step first onto its internal match partner, then
    // keep going around the cycle until b_m; starting on the matched edge
    // keeps the alternation correct.
    let mut path = vec![b_p];
    let mut edges: Vec<DirectedEdge> = Vec::new();
    if b_p != b_m {
        let forward = petals[pos_p].vertex_pair() == match_of[&b_p].vertex_pair();
        let mut at = pos_p;
        loop {
            let (g, next) = if forward {
                (petals[at], (at + 1) % k)
            } else {
                (petals[(at + k - 1) % k].reversed(), (at + k - 1) % k)
            };
            edges.push(g);
            path.push(cycle[next]);
            at = next;
            if cycle[at] == b_m {
                break;
            }
        }
    }
    debug_assert!(path.len() % 2 == 1, "tree path spans an even edge count");

    let mut ups: BTreeMap<Address, Vec<SlotUpdate>> = BTreeMap::new();
    for &c in &cycle {
        let mut v = vec![
            SlotUpdate::SetPistil(None),
            SlotUpdate::SetParent(None),
            SlotUpdate::SetChildren(Vec::new()),
            SlotUpdate::SetPositive(true),
        ];
        if c == b_m {
            v.push(SlotUpdate::SetMatch(Some(DirectedEdge {
                source_blossom: b_m,
                ..match_edge
            })));
        } else {
            v.push(SlotUpdate::SetMatch(Some(
                *match_of.get(&c).expect("rotation covers everyone but b_m"),
            )));
        }
        ups.insert(c, v);
    }
    // Path wiring, alternating signs from negative b_p.
    for (i, &member) in path.iter().enumerate() {
        ups.get_mut(&member).expect("on cycle").push(SlotUpdate::SetPositive(i % 2 == 1));
    }
    for (i, g) in edges.iter().enumerate() {
        ups.get_mut(&path[i]).expect("on cycle").push(SlotUpdate::AddChild(*g));
        ups.get_mut(&path[i + 1])
            .expect("on cycle")
            .push(SlotUpdate::SetParent(Some(g.reversed())));
    }
    ups.get_mut(&b_p)
        .expect("on cycle")
        .push(SlotUpdate::SetParent(Some(DirectedEdge { source_blossom: b_p, ..parent_edge })));
    ups.get_mut(&b_m)
        .expect("on cycle")
        .push(SlotUpdate::AddChild(DirectedEdge { source_blossom: b_m, ..match_edge }));

    let mut mutates: Vec<(Address, Vec<SlotUpdate>)> = ups.into_iter().collect();
    mutates.push((
        parent_edge.target_blossom,
        vec![SlotUpdate::ReplaceChildTarget { old: b.addr, new: b_p }],
    ));
    // The matched child below held both links to the macrovertex.
    mutates.push((
        match_edge.target_blossom,
        vec![
            SlotUpdate::PatchMatchTarget { new: b_m },
            SlotUpdate::PatchParentTarget { new: b_m },
        ],
    ));
    mutates.push((b.addr, vec![SlotUpdate::SetDefunct]));
    mutates
}

/// Unwraps a matched, tree-free macrovertex: rotation only, no tree links.
fn plan_terminal(
    members: &BTreeMap<Address, &MemberInfo>,
    b: &MemberInfo,
) -> Vec<(Address, Vec<SlotUpdate>)> {
    let petals = &b.petals;
    let match_edge = b.match_edge.expect("terminal expansion needs a matched top");
    let cycle: Vec<Address> = petals.iter().map(|p| p.source_blossom).collect();
    let b_m = *cycle
        .iter()
        .find(|&&c| contains_vertex(members, c, match_edge.source_vertex))
        .expect("match edge leaves through a petal member");
    let pos_m = cycle.iter().position(|&c| c == b_m).expect("on the cycle");
    let match_of = rotation_matches(petals, pos_m);

    let mut mutates: Vec<(Address, Vec<SlotUpdate>)> = Vec::new();
    for &c in &cycle {
        let m = if c == b_m {
            DirectedEdge { source_blossom: b_m, ..match_edge }
        } else {
            *match_of.get(&c).expect("rotation covers everyone but b_m")
        };
        mutates.push((
            c,
            vec![
                SlotUpdate::SetPistil(None),
                SlotUpdate::SetParent(None),
                SlotUpdate::SetChildren(Vec::new()),
                SlotUpdate::SetPositive(true),
                SlotUpdate::SetMatch(Some(m)),
            ],
        ));
    }
    mutates.push((
        match_edge.target_blossom,
        vec![SlotUpdate::PatchMatchTarget { new: b_m }],
    ));
    mutates.push((b.addr, vec![SlotUpdate::SetDefunct]));
    mutates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VertexId;

    fn edge(sb: Address, sv: u32, tv: u32, tb: Address) -> DirectedEdge {
        DirectedEdge {
            source_blossom: sb,
            source_vertex: VertexId(sv),
            target_vertex: VertexId(tv),
            target_blossom: tb,
        }
    }

    fn member(addr: Address, min_id: u32) -> MemberInfo {
        MemberInfo {
            addr,
            vertex_id: Some(VertexId(min_id)),
            min_id,
            top_level: true,
            positive: true,
            is_macro: false,
            defunct: false,
            internal_weight: Weight::ZERO,
            pistil: None,
            petals: Vec::new(),
            match_edge: None,
            parent: None,
            children: Vec::new(),
        }
    }

    fn map(ms: &[MemberInfo]) -> BTreeMap<Address, &MemberInfo> {
        ms.iter().map(|m| (m.addr, m)).collect()
    }

    fn find(mutates: &[(Address, Vec<SlotUpdate>)], addr: Address) -> &Vec<SlotUpdate> {
        &mutates.iter().find(|(a, _)| *a == addr).expect("mutate for address").1
    }

    #[test]
    fn contract_wraps_a_root_triangle() {
        // Tree 30(+) - 31(-) - 32(+), tight edge 32-30 closes the cycle.
        let mut r = member(30, 0);
        r.children = vec![edge(30, 0, 1, 31)];
        let mut a = member(31, 1);
        a.positive = false;
        a.parent = Some(edge(31, 1, 0, 30));
        a.match_edge = Some(edge(31, 1, 2, 32));
        a.children = vec![edge(31, 1, 2, 32)];
        let mut x = member(32, 2);
        x.parent = Some(edge(32, 2, 1, 31));
        x.match_edge = Some(edge(32, 2, 1, 31));
        let ms = [r, a, x];
        let e = edge(32, 2, 0, 30);

        let plan = plan_contract(&map(&ms), e, 99);
        assert_eq!(plan.min_id, 0);
        assert_eq!(
            plan.petals,
            vec![edge(30, 0, 1, 31), edge(31, 1, 2, 32), e]
        );
        assert!(plan.parent.is_none() && plan.match_edge.is_none());
        assert!(plan.children.is_empty());
        // Three cycle resets, nothing external to patch.
        assert_eq!(plan.mutates.len(), 3);
        let ups = find(&plan.mutates, 31);
        assert!(ups.contains(&SlotUpdate::SetPistil(Some(99))));
        assert!(ups.contains(&SlotUpdate::SetMatch(None)));
    }

    #[test]
    fn contract_below_the_root_reaims_the_ancestor_links() {
        // 40(+) - 41(-) - 42(+) - 43(-) - 44(+); tight edge 44-42 wraps the
        // lower triangle with nca 42, which is matched to its parent 41.
        let mut r = member(40, 0);
        r.children = vec![edge(40, 0, 1, 41)];
        let mut n1 = member(41, 1);
        n1.positive = false;
        n1.parent = Some(edge(41, 1, 0, 40));
        n1.match_edge = Some(edge(41, 1, 2, 42));
        n1.children = vec![edge(41, 1, 2, 42)];
        let mut nca = member(42, 2);
        nca.parent = Some(edge(42, 2, 1, 41));
        nca.match_edge = Some(edge(42, 2, 1, 41));
        nca.children = vec![edge(42, 2, 3, 43)];
        let mut n3 = member(43, 3);
        n3.positive = false;
        n3.parent = Some(edge(43, 3, 2, 42));
        n3.match_edge = Some(edge(43, 3, 4, 44));
        n3.children = vec![edge(43, 3, 4, 44)];
        let mut n4 = member(44, 4);
        n4.parent = Some(edge(44, 4, 3, 43));
        n4.match_edge = Some(edge(44, 4, 3, 43));
        let ms = [r, n1, nca, n3, n4];
        let e = edge(44, 4, 2, 42);

        let plan = plan_contract(&map(&ms), e, 99);
        assert_eq!(plan.min_id, 2);
        assert_eq!(
            plan.petals,
            vec![edge(42, 2, 3, 43), edge(43, 3, 4, 44), e]
        );
        // The macrovertex takes over the ancestor's links, re-sourced.
        assert_eq!(plan.parent, Some(edge(99, 2, 1, 41)));
        assert_eq!(plan.match_edge, Some(edge(99, 2, 1, 41)));
        assert!(plan.children.is_empty());
        // 41 both re-aims its child edge and re-targets its match.
        let ups = find(&plan.mutates, 41);
        assert!(ups.contains(&SlotUpdate::ReplaceChildTarget { old: 42, new: 99 }));
        assert!(ups.contains(&SlotUpdate::PatchMatchTarget { new: 99 }));
    }

    #[test]
    fn expand_wires_the_petal_path_into_the_tree() {
        // Macro 50 with petals 51-52-53, parent through 51, match through 53.
        let mut b = member(50, 1);
        b.is_macro = true;
        b.vertex_id = None;
        b.positive = false;
        b.petals = vec![edge(51, 1, 2, 52), edge(52, 2, 3, 53), edge(53, 3, 1, 51)];
        b.parent = Some(edge(50, 1, 6, 60));
        b.match_edge = Some(edge(50, 3, 7, 61));
        b.children = vec![edge(50, 3, 7, 61)];
        let mut p1 = member(51, 1);
        p1.pistil = Some(50);
        let mut p2 = member(52, 2);
        p2.pistil = Some(50);
        let mut p3 = member(53, 3);
        p3.pistil = Some(50);
        let up = member(60, 6);
        let down = member(61, 7);
        let ms = [b.clone(), p1, p2, p3, up, down];

        let mutates = plan_expand(&map(&ms), &b);
        // b_p = 51 stays negative and takes the parent edge.
        let u51 = find(&mutates, 51);
        assert!(u51.contains(&SlotUpdate::SetParent(Some(edge(51, 1, 6, 60)))));
        assert!(u51.contains(&SlotUpdate::AddChild(edge(51, 1, 2, 52))));
        assert!(u51.contains(&SlotUpdate::SetMatch(Some(edge(51, 1, 2, 52)))));
        // 52 sits positive in the middle of the path.
        let u52 = find(&mutates, 52);
        assert!(u52.contains(&SlotUpdate::SetPositive(true)));
        assert!(u52.contains(&SlotUpdate::AddChild(edge(52, 2, 3, 53))));
        // b_m = 53 ends negative, matched and parented to the old child.
        let u53 = find(&mutates, 53);
        assert!(u53.contains(&SlotUpdate::SetMatch(Some(edge(53, 3, 7, 61)))));
        assert!(u53.contains(&SlotUpdate::AddChild(edge(53, 3, 7, 61))));
        let last_sign = u53
            .iter()
            .filter_map(|u| match u {
                SlotUpdate::SetPositive(p) => Some(*p),
                _ => None,
            })
            .last();
        assert_eq!(last_sign, Some(false));
        // Outside world re-aimed, macrovertex retired.
        assert_eq!(
            find(&mutates, 60),
            &vec![SlotUpdate::ReplaceChildTarget { old: 50, new: 51 }]
        );
        let u61 = find(&mutates, 61);
        assert!(u61.contains(&SlotUpdate::PatchMatchTarget { new: 53 }));
        assert!(u61.contains(&SlotUpdate::PatchParentTarget { new: 53 }));
        assert_eq!(find(&mutates, 50), &vec![SlotUpdate::SetDefunct]);
    }

    #[test]
    fn terminal_expansion_rotates_and_reaims_the_partner() {
        let mut b = member(70, 1);
        b.is_macro = true;
        b.vertex_id = None;
        b.petals = vec![edge(71, 1, 2, 72), edge(72, 2, 3, 73), edge(73, 3, 1, 71)];
        b.match_edge = Some(edge(70, 2, 9, 80));
        let mut p1 = member(71, 1);
        p1.pistil = Some(70);
        let mut p2 = member(72, 2);
        p2.pistil = Some(70);
        let mut p3 = member(73, 3);
        p3.pistil = Some(70);
        let partner = member(80, 9);
        let ms = [b.clone(), p1, p2, p3, partner];

        let mutates = plan_terminal(&map(&ms), &b);
        // 72 keeps the external match; 71 and 73 pair up internally.
        assert!(find(&mutates, 72).contains(&SlotUpdate::SetMatch(Some(edge(72, 2, 9, 80)))));
        assert!(find(&mutates, 73).contains(&SlotUpdate::SetMatch(Some(edge(73, 3, 1, 71)))));
        assert!(find(&mutates, 71).contains(&SlotUpdate::SetMatch(Some(edge(71, 1, 3, 73)))));
        assert_eq!(
            find(&mutates, 80),
            &vec![SlotUpdate::PatchMatchTarget { new: 72 }]
        );
        assert_eq!(find(&mutates, 70), &vec![SlotUpdate::SetDefunct]);
    }

}
