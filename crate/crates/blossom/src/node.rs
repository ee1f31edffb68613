//! The blossom process: one per vertex, plus one per macrovertex created by
//! contraction. Handles pings, scans, chain walks, the tree lock service,
//! and field mutations ordered by supervisors.
//!
//! A node never computes with another node's live state: everything it needs
//! arrives in the triggering message or in a chain-walk reply. Staleness is
//! tolerated everywhere and caught by supervisor revalidation before any
//! state changes.

use crate::graph::{ProblemGraph, VertexId};
use crate::msg::{
    Address, DirectedEdge, Evidence, LockRequestData, LockReplyData, MatchState, MemberInfo,
    Message, MinSeen, OpCandidate, Pingable, PingData, ScanData, SessionRef,
    SlotUpdate, TreeInfoHopData, TreeInfoReplyData, UnlockData,
};
use crate::sim::{Ctx, Process};
use crate::snapshot::{BlossomSnap, SnapEdge};
use crate::supervisor::{OpKind, SupervisorState};
use crate::trace::TraceEvent;
use crate::weight::Weight;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

/// Scan cooldown after a pass verdict.
const PASS_COOLDOWN: u64 = 4;
/// Scan cooldown after a discarded (stale) scan conclusion.
const STALE_COOLDOWN: u64 = 2;

/// Fixed process layout of a run, shared by every process.
#[derive(Debug)]
pub struct Topology {
    pub graph: Arc<ProblemGraph>,
    pub collector: Address,
    pub dryad: Address,
    /// Vertices occupy `vertex_base .. vertex_base + n` in id order.
    pub vertex_base: Address,
}

impl Topology {
    pub fn vertex_addr(&self, v: VertexId) -> Address {
        self.vertex_base + v.0
    }
}

/// Pure decision rule for one ping: given the sender's side (in the ping)
/// and the receiver's side (in the chain-walk facts), proposes an operation.
pub fn ping_decision(
    graph: &ProblemGraph,
    my_id: VertexId,
    my_pingable: Pingable,
    ping: &PingData,
    facts: &TreeInfoReplyData,
) -> (OpCandidate, Option<MinSeen>) {
    let pair = {
        let (a, b) = (ping.sender_vertex, my_id);
        (a.min(b), a.max(b))
    };
    // The edge is already matched: nothing to propose.
    if facts.topmost_match_pair == Some(pair) {
        return (OpCandidate::Pass, None);
    }
    // Internal edge of one top-level blossom.
    if facts.topmost == ping.blossom {
        return (OpCandidate::Pass, None);
    }
    let adjusted = graph.scaled_weight(ping.sender_vertex, my_id)
        - facts.chain_weight
        - ping.weight;
    let mid_soft = my_pingable == Pingable::Soft;
    let evidence = Some(Evidence { root_min_id: facts.root_min_id, mid_soft });
    // Negative slack means two reweights collided on this edge and the
    // scanning tree must decide whether its commit yields. It does when this
    // side outranks it, or when this side is no longer mid-flight (final
    // duals never yield). Judged here because only the receiver sees both
    // ranks and its own softness at answer time.
    let rewind_hint =
        adjusted.is_negative() && (facts.root_min_id < ping.root_min_id || !mid_soft);
    let slack_seen = Some(MinSeen { amount: adjusted, evidence, rewind_hint });
    if !facts.topmost_positive {
        // Receiver hangs negative in some tree. Edges into the sender's own
        // cluster carry no information; others constrain at full slack, or
        // report a hold when tight.
        if ping.hold_cluster.contains(&facts.root) {
            return (OpCandidate::Pass, None);
        }
        if !adjusted.is_zero() {
            return (OpCandidate::Reweight { amount: adjusted, evidence }, slack_seen);
        }
        return (
            OpCandidate::Hold { bucket: BTreeSet::from([facts.root]) },
            slack_seen,
        );
    }
    if !adjusted.is_zero() {
        // Both endpoints positive. Within one tree (or one jointly held
        // cluster) the slack shrinks from both ends at once, so the cap is
        // half of it; across unrelated trees the full slack caps us. Joint
        // slack is even whenever sender and receiver state agree (tight
        // edges equate chain parities), so rounding down only bites on
        // stale pings, whose conclusions get discarded anyway.
        let joint = facts.root == ping.root || ping.hold_cluster.contains(&facts.root);
        let amount = if joint { adjusted.halve_down() } else { adjusted };
        return (OpCandidate::Reweight { amount, evidence }, slack_seen);
    }
    let edge = DirectedEdge {
        source_blossom: ping.blossom,
        source_vertex: ping.sender_vertex,
        target_vertex: my_id,
        target_blossom: facts.topmost,
    };
    let op = if facts.root == ping.root {
        OpCandidate::Contract { edge }
    } else if facts.root_matched {
        OpCandidate::Graft { edge }
    } else {
        OpCandidate::Augment { edge }
    };
    (op, slack_seen)
}

struct LockHold {
    owner: Address,
    token: u64,
    priority: u32,
}

/// In-progress recursive lock of this node's subtree.
struct LockGather {
    reply_to: Address,
    token: u64,
    outstanding: usize,
    members: Vec<MemberInfo>,
}

struct ScanSession {
    reply: Option<SessionRef>,
    /// For commanded verification scans: answer with a ScanResult here.
    result_to: Option<SessionRef>,
    outstanding: usize,
    acc: OpCandidate,
    min_seen: Option<MinSeen>,
    hold_cluster: Arc<BTreeSet<Address>>,
    version_at_start: u64,
}

pub struct NodeState {
    topo: Arc<Topology>,
    addr: Address,
    vertex_id: Option<VertexId>,
    min_id: u32,
    internal_weight: Weight,
    positive: bool,
    pistil: Option<Address>,
    petals: Vec<DirectedEdge>,
    match_edge: Option<DirectedEdge>,
    parent: Option<DirectedEdge>,
    children: Vec<DirectedEdge>,
    defunct: bool,
    paused: bool,
    pingable: Pingable,
    version: u64,
    lock: Option<LockHold>,
    parked: Vec<LockRequestData>,
    gather: Option<LockGather>,
    roster: Option<Arc<Vec<(VertexId, Address)>>>,
    deferred: VecDeque<(Address, Message)>,
    sessions: BTreeMap<u64, ScanSession>,
    pending_pings: BTreeMap<u64, PingData>,
    next_token: u64,
    cooldown_until: u64,
    /// Set while paused on a joint-reweight conclusion: the foreign roots
    /// this root is tight against. Cluster discovery reads it.
    last_hold: Option<BTreeSet<Address>>,
}

/// Everything a contraction must fix about its newborn macrovertex.
pub struct MacroSeed {
    pub min_id: u32,
    pub petals: Vec<DirectedEdge>,
    pub match_edge: Option<DirectedEdge>,
    pub parent: Option<DirectedEdge>,
    pub children: Vec<DirectedEdge>,
    /// Born locked by the contracting supervisor.
    pub lock_owner: Address,
    pub lock_token: u64,
    pub lock_priority: u32,
}

impl NodeState {
    pub fn vertex(topo: Arc<Topology>, addr: Address, id: VertexId) -> NodeState {
        NodeState {
            topo,
            addr,
            vertex_id: Some(id),
            min_id: id.0,
            internal_weight: Weight::ZERO,
            positive: true,
            pistil: None,
            petals: Vec::new(),
            match_edge: None,
            parent: None,
            children: Vec::new(),
            defunct: false,
            paused: false,
            pingable: Pingable::All,
            version: 0,
            lock: None,
            parked: Vec::new(),
            gather: None,
            roster: None,
            deferred: VecDeque::new(),
            sessions: BTreeMap::new(),
            pending_pings: BTreeMap::new(),
            next_token: 1,
            cooldown_until: 0,
            last_hold: None,
        }
    }

    pub fn macro_node(topo: Arc<Topology>, addr: Address, seed: MacroSeed) -> NodeState {
        NodeState {
            topo,
            addr,
            vertex_id: None,
            min_id: seed.min_id,
            internal_weight: Weight::ZERO,
            positive: true,
            pistil: None,
            petals: seed.petals,
            match_edge: seed.match_edge,
            parent: seed.parent,
            children: seed.children,
            defunct: false,
            paused: false,
            pingable: Pingable::None,
            version: 0,
            lock: Some(LockHold {
                owner: seed.lock_owner,
                token: seed.lock_token,
                priority: seed.lock_priority,
            }),
            parked: Vec::new(),
            gather: None,
            // Macros never ping neighbors directly, so no roster gate.
            roster: Some(Arc::new(Vec::new())),
            deferred: VecDeque::new(),
            sessions: BTreeMap::new(),
            pending_pings: BTreeMap::new(),
            next_token: 1,
            cooldown_until: 0,
            last_hold: None,
        }
    }

    fn fresh_token(&mut self) -> u64 {
        let t = self.next_token;
        self.next_token += 1;
        t
    }

    fn is_macro(&self) -> bool {
        self.vertex_id.is_none()
    }

    fn is_top(&self) -> bool {
        self.pistil.is_none()
    }

    fn member_info(&self) -> MemberInfo {
        MemberInfo {
            addr: self.addr,
            vertex_id: self.vertex_id,
            min_id: self.min_id,
            top_level: self.is_top(),
            positive: self.positive,
            is_macro: self.is_macro(),
            defunct: self.defunct,
            internal_weight: self.internal_weight,
            pistil: self.pistil,
            petals: self.petals.clone(),
            match_edge: self.match_edge,
            parent: self.parent,
            children: self.children.clone(),
        }
    }

    /// An unmatched, unwrapped, unclaimed top may initiate scans.
    fn scan_eligible(&self) -> bool {
        self.roster.is_some()
            && !self.defunct
            && !self.paused
            && self.lock.is_none()
            && self.pingable == Pingable::All
            && self.pistil.is_none()
            && self.parent.is_none()
            && self.match_edge.is_none()
    }

    fn has_root_session(&self) -> bool {
        self.sessions.values().any(|s| s.reply.is_none() && s.result_to.is_none())
    }

    fn accepts(&self, soft: bool) -> bool {
        match self.pingable {
            Pingable::All => true,
            Pingable::Soft => soft,
            Pingable::None => false,
        }
    }

    /// Starts (or continues) a chain walk. Our own hop is taken inline, so
    /// free-standing vertices answer pings without extra round trips.
    fn hop_step(&mut self, ctx: &mut Ctx, mut hop: TreeInfoHopData) {
        if self.defunct {
            // Stale chain into a zombie: answer something shaped like a
            // matched barbell; any operation built on it dies in
            // revalidation.
            let reply = TreeInfoReplyData {
                token: hop.token,
                topmost: self.addr,
                topmost_positive: true,
                topmost_match_pair: None,
                chain_weight: hop.weight,
                root: self.addr,
                root_matched: true,
                root_min_id: self.min_id,
            };
            self.emit_tree_info(ctx, hop.origin, reply);
            return;
        }
        if hop.topmost.is_none() {
            hop.weight += self.internal_weight;
            if let Some(up) = self.pistil {
                ctx.send(up, Message::TreeInfoHop(Box::new(hop)));
                return;
            }
            hop.topmost = Some((self.addr, self.positive));
            hop.topmost_match_pair = self.match_edge.map(DirectedEdge::vertex_pair);
        }
        if let Some(edge) = self.parent {
            ctx.send(edge.target_blossom, Message::TreeInfoHop(Box::new(hop)));
            return;
        }
        let (topmost, topmost_positive) = hop.topmost.expect("set above");
        let reply = TreeInfoReplyData {
            token: hop.token,
            topmost,
            topmost_positive,
            topmost_match_pair: hop.topmost_match_pair,
            chain_weight: hop.weight,
            root: self.addr,
            root_matched: self.match_edge.is_some(),
            root_min_id: self.min_id,
        };
        self.emit_tree_info(ctx, hop.origin, reply);
    }

    fn emit_tree_info(&mut self, ctx: &mut Ctx, origin: Address, reply: TreeInfoReplyData) {
        if origin == self.addr {
            self.handle_tree_info(ctx, reply);
        } else {
            ctx.send(origin, Message::TreeInfoReply(Box::new(reply)));
        }
    }

    fn handle_tree_info(&mut self, ctx: &mut Ctx, facts: TreeInfoReplyData) {
        let Some(ping) = self.pending_pings.remove(&facts.token) else {
            return;
        };
        let my_id = self.vertex_id.expect("pings land on vertices");
        let (op, min_seen) =
            ping_decision(&self.topo.graph, my_id, self.pingable, &ping, &facts);
        ctx.send(
            ping.session.owner,
            Message::Pong(Box::new(crate::msg::PongData {
                token: ping.session.token,
                op,
                min_seen,
            })),
        );
    }

    fn handle_ping(&mut self, ctx: &mut Ctx, ping: PingData) {
        if self.defunct {
            ctx.send(
                ping.session.owner,
                Message::Pong(Box::new(crate::msg::PongData {
                    token: ping.session.token,
                    op: OpCandidate::Pass,
                    min_seen: None,
                })),
            );
            return;
        }
        let token = self.fresh_token();
        self.pending_pings.insert(token, ping);
        let hop = TreeInfoHopData {
            origin: self.addr,
            token,
            weight: Weight::ZERO,
            topmost: None,
            topmost_match_pair: None,
        };
        self.hop_step(ctx, hop);
    }

    /// Entry point for a scan reaching this blossom, including the root's
    /// own initiation (`data.reply == None`, handled inline).
    fn scan_entry(&mut self, ctx: &mut Ctx, data: ScanData, result_to: Option<SessionRef>) {
        if self.defunct {
            if let Some(reply) = data.reply {
                ctx.send(
                    reply.owner,
                    Message::Pong(Box::new(crate::msg::PongData {
                        token: reply.token,
                        op: OpCandidate::Pass,
                        min_seen: None,
                    })),
                );
            }
            return;
        }
        let token = self.fresh_token();
        let here = data.weight + self.internal_weight;
        let top = self.is_top();
        let mut outstanding = 0usize;

        // Positive regions descend and ping; a negative top only relays the
        // scan to its matched child and contributes its own initial verdict.
        let active = !top || self.positive;
        if self.is_macro() && active {
            for petal in &self.petals {
                let fwd = ScanData {
                    reply: Some(SessionRef { owner: self.addr, token }),
                    root: data.root,
                    root_min_id: data.root_min_id,
                    blossom: data.blossom,
                    weight: here,
                    hold_cluster: data.hold_cluster.clone(),
                    soft: data.soft,
                };
                ctx.send(petal.source_blossom, Message::Scan(Box::new(fwd)));
                outstanding += 1;
            }
        }
        if !self.is_macro() && active {
            let my_id = self.vertex_id.expect("vertex");
            let roster = self.roster.clone().expect("roster before scanning");
            for &(vid, vaddr) in roster.iter() {
                if vid == my_id {
                    continue;
                }
                let ping = PingData {
                    session: SessionRef { owner: self.addr, token },
                    root: data.root,
                    root_min_id: data.root_min_id,
                    blossom: data.blossom,
                    weight: here,
                    hold_cluster: data.hold_cluster.clone(),
                    sender_vertex: my_id,
                    soft: data.soft,
                };
                ctx.send(vaddr, Message::Ping(Box::new(ping)));
                outstanding += 1;
            }
        }
        if top {
            for child in &self.children {
                let fwd = ScanData {
                    reply: Some(SessionRef { owner: self.addr, token }),
                    root: data.root,
                    root_min_id: data.root_min_id,
                    blossom: child.target_blossom,
                    weight: Weight::ZERO,
                    hold_cluster: data.hold_cluster.clone(),
                    soft: data.soft,
                };
                ctx.send(child.target_blossom, Message::Scan(Box::new(fwd)));
                outstanding += 1;
            }
        }

        // A negative top's own verdict: its dual caps the reweight, and a
        // drained macrovertex asks to be expanded. Vertex duals may go
        // negative, so a negative vertex contributes nothing.
        let (acc, min_seen) = if top && !self.positive && self.is_macro() {
            if self.internal_weight.is_positive() {
                (
                    OpCandidate::Reweight { amount: self.internal_weight, evidence: None },
                    Some(MinSeen {
                        amount: self.internal_weight,
                        evidence: None,
                        rewind_hint: false,
                    }),
                )
            } else {
                (
                    OpCandidate::Expand { target: self.addr, min_id: self.min_id },
                    Some(MinSeen { amount: Weight::ZERO, evidence: None, rewind_hint: false }),
                )
            }
        } else {
            (OpCandidate::Pass, None)
        };

        let session = ScanSession {
            reply: data.reply,
            result_to,
            outstanding,
            acc,
            min_seen,
            hold_cluster: data.hold_cluster,
            version_at_start: self.version,
        };
        if session.outstanding == 0 {
            self.finish_session(ctx, token, session);
        } else {
            self.sessions.insert(token, session);
        }
    }

    fn handle_pong(&mut self, ctx: &mut Ctx, pong: crate::msg::PongData) {
        let Some(mut session) = self.sessions.remove(&pong.token) else {
            return;
        };
        session.acc = crate::msg::unify(session.acc, pong.op, &session.hold_cluster);
        session.min_seen = MinSeen::merge(session.min_seen, pong.min_seen);
        session.outstanding -= 1;
        if session.outstanding == 0 {
            self.finish_session(ctx, pong.token, session);
        } else {
            self.sessions.insert(pong.token, session);
        }
    }

    fn finish_session(&mut self, ctx: &mut Ctx, _token: u64, session: ScanSession) {
        if let Some(reply) = session.reply {
            ctx.send(
                reply.owner,
                Message::Pong(Box::new(crate::msg::PongData {
                    token: reply.token,
                    op: session.acc,
                    min_seen: session.min_seen,
                })),
            );
            return;
        }
        if let Some(to) = session.result_to {
            ctx.send(
                to.owner,
                Message::ScanResult {
                    token: to.token,
                    op: session.acc,
                    min_seen: session.min_seen,
                },
            );
            return;
        }
        // Root conclusion: only act from an unchanged, still-eligible state.
        if !self.scan_eligible() || self.version != session.version_at_start {
            self.cooldown_until = ctx.now + STALE_COOLDOWN;
            return;
        }
        let op = session.acc;
        self.last_hold = match &op {
            OpCandidate::Hold { bucket } => Some(bucket.clone()),
            _ => None,
        };
        let kind = match op {
            OpCandidate::Pass => {
                self.cooldown_until = ctx.now + PASS_COOLDOWN;
                return;
            }
            OpCandidate::Reweight { amount, .. } => {
                if !amount.is_positive() {
                    // Zero or negative headroom: some neighbor tree is mid
                    // flight; its own rewind machinery restores things.
                    self.cooldown_until = ctx.now + PASS_COOLDOWN;
                    return;
                }
                OpKind::Reweight { amount }
            }
            OpCandidate::Hold { bucket } => OpKind::Multireweight { bucket },
            OpCandidate::Expand { target, .. } => OpKind::Expand { target },
            OpCandidate::Contract { edge } => OpKind::Contract { edge },
            OpCandidate::Graft { edge } => OpKind::Graft { edge },
            OpCandidate::Augment { edge } => OpKind::Augment { edge },
        };
        self.paused = true;
        ctx.spawn(Box::new(SupervisorState::new(
            self.topo.clone(),
            self.addr,
            self.min_id,
            kind,
        )));
    }

    fn handle_lock_tree(&mut self, ctx: &mut Ctx, src: Address, req: LockRequestData) {
        let lockable = !self.defunct && self.pistil.is_none() && self.parent.is_none();
        if !lockable {
            ctx.send(
                src,
                Message::LockReply(Box::new(LockReplyData {
                    token: req.token,
                    granted: false,
                    members: Vec::new(),
                })),
            );
            return;
        }
        if let Some(hold) = &self.lock {
            if req.priority < hold.priority {
                self.parked.push(req);
            } else {
                ctx.send(
                    src,
                    Message::LockReply(Box::new(LockReplyData {
                        token: req.token,
                        granted: false,
                        members: Vec::new(),
                    })),
                );
            }
            return;
        }
        self.acquire(ctx, req, req.owner);
    }

    /// Locks self and propagates through children and petals; replies to
    /// `reply_to` once the whole subtree has reported.
    fn acquire(&mut self, ctx: &mut Ctx, req: LockRequestData, reply_to: Address) {
        debug_assert!(self.lock.is_none());
        self.lock = Some(LockHold {
            owner: req.owner,
            token: req.token,
            priority: req.priority,
        });
        // A locked tree is still static until its supervisor starts mutating
        // (supervisors harden to None first), so soft pings stay answerable.
        // Blocking them here can deadlock: this lock's owner may be parked
        // behind the very supervisor whose scan needs our answer.
        self.pingable = Pingable::Soft;
        self.version += 1;
        let mut targets: Vec<Address> = Vec::new();
        for child in &self.children {
            targets.push(child.target_blossom);
        }
        for petal in &self.petals {
            targets.push(petal.source_blossom);
        }
        let gather = LockGather {
            reply_to,
            token: req.token,
            outstanding: targets.len(),
            members: vec![self.member_info()],
        };
        if gather.outstanding == 0 {
            ctx.send(
                reply_to,
                Message::LockReply(Box::new(LockReplyData {
                    token: req.token,
                    granted: true,
                    members: gather.members,
                })),
            );
            return;
        }
        self.gather = Some(gather);
        for t in targets {
            ctx.send(t, Message::LockSubtree(req));
        }
    }

    fn handle_lock_subtree(&mut self, ctx: &mut Ctx, src: Address, req: LockRequestData) {
        assert!(!self.defunct, "subtree lock reached a dismantled node");
        if self.lock.is_some() {
            // A node reachable from a free root is in no active supervisor's
            // tree, so this hold is from one that already released us; only
            // its unlock is still in flight. Park the descent behind it.
            self.deferred.push_back((src, Message::LockSubtree(req)));
            return;
        }
        self.acquire(ctx, req, src);
    }

    fn handle_lock_reply(&mut self, ctx: &mut Ctx, reply: LockReplyData) {
        let Some(mut gather) = self.gather.take() else {
            return;
        };
        assert!(reply.granted, "subtree grants are unconditional");
        assert_eq!(reply.token, gather.token);
        gather.members.extend(reply.members);
        gather.outstanding -= 1;
        if gather.outstanding == 0 {
            ctx.send(
                gather.reply_to,
                Message::LockReply(Box::new(LockReplyData {
                    token: gather.token,
                    granted: true,
                    members: gather.members,
                })),
            );
        } else {
            self.gather = Some(gather);
        }
    }

    fn handle_unlock(&mut self, ctx: &mut Ctx, src: Address, data: UnlockData) {
        let matches = self.lock.as_ref().is_some_and(|h| h.token == data.token);
        if !matches {
            // A supervisor that gave up before locking this root still owes
            // it an unpause; the lock fields stay untouched.
            if data.unpause && !self.defunct {
                self.paused = false;
                self.last_hold = None;
                if data.cooldown_ticks > 0 {
                    self.cooldown_until = ctx.now + data.cooldown_ticks;
                }
            }
            return;
        }
        debug_assert_eq!(
            self.lock.as_ref().map(|h| h.owner),
            Some(src),
            "unlock token reuse by a different process"
        );
        self.lock = None;
        self.pingable = Pingable::All;
        self.version += 1;
        if data.unpause {
            self.paused = false;
            self.last_hold = None;
        }
        if data.cooldown_ticks > 0 {
            self.cooldown_until = ctx.now + data.cooldown_ticks;
        }
        // Hand the root over to the best parked request; the rest retry.
        let parked = std::mem::take(&mut self.parked);
        if !parked.is_empty() {
            let mut parked = parked;
            parked.sort_by_key(|r| (r.priority, r.owner));
            let still_root = !self.defunct && self.pistil.is_none() && self.parent.is_none();
            let mut granted_one = false;
            for req in parked {
                if still_root && !granted_one {
                    granted_one = true;
                    self.acquire(ctx, req, req.owner);
                } else {
                    ctx.send(
                        req.owner,
                        Message::LockReply(Box::new(LockReplyData {
                            token: req.token,
                            granted: false,
                            members: Vec::new(),
                        })),
                    );
                }
            }
        }
        self.replay_deferred(ctx);
    }

    fn replay_deferred(&mut self, ctx: &mut Ctx) {
        let queued = std::mem::take(&mut self.deferred);
        for (src, msg) in queued {
            self.handle(ctx, src, msg);
        }
    }

    fn apply_update(&mut self, update: SlotUpdate) {
        match update {
            SlotUpdate::SetPositive(p) => self.positive = p,
            SlotUpdate::SetParent(e) => self.parent = e,
            SlotUpdate::SetChildren(v) => self.children = v,
            SlotUpdate::AddChild(e) => self.children.push(e),
            SlotUpdate::ReplaceChildTarget { old, new } => {
                let child = self
                    .children
                    .iter_mut()
                    .find(|c| c.target_blossom == old)
                    .expect("child edge to retarget exists");
                child.target_blossom = new;
            }
            SlotUpdate::SetMatch(e) => self.match_edge = e,
            SlotUpdate::PatchMatchTarget { new } => {
                self.match_edge.as_mut().expect("match edge to patch").target_blossom = new;
            }
            SlotUpdate::PatchParentTarget { new } => {
                self.parent.as_mut().expect("parent edge to patch").target_blossom = new;
            }
            SlotUpdate::SetPistil(p) => self.pistil = p,
            SlotUpdate::SetPetals(v) => self.petals = v,
            SlotUpdate::AddWeight(w) => self.internal_weight += w,
            SlotUpdate::SetDefunct => {
                self.defunct = true;
                self.pistil = None;
                self.petals.clear();
                self.match_edge = None;
                self.parent = None;
                self.children.clear();
                self.paused = false;
            }
        }
        self.version += 1;
    }

    fn handle_augment_step(
        &mut self,
        ctx: &mut Ctx,
        supervisor: Address,
        preceding: DirectedEdge,
    ) {
        debug_assert_eq!(preceding.source_blossom, self.addr);
        let was_matched_along = self
            .match_edge
            .map(|m| m.vertex_pair() == preceding.vertex_pair())
            .unwrap_or(false);
        let new_match = if was_matched_along {
            self.parent.expect("tree blossom matched along its incoming edge has a parent")
        } else {
            preceding
        };
        self.match_edge = Some(new_match);
        self.version += 1;
        match self.parent {
            Some(up) => ctx.send(
                up.target_blossom,
                Message::AugmentStep { supervisor, preceding: up.reversed() },
            ),
            None => {
                // Newly matched end of the path: report coverage downward
                // and tell the supervisor this side is done.
                self.announce_sprout(ctx);
                ctx.send(supervisor, Message::AugmentDone);
            }
        }
    }

    fn announce_sprout(&mut self, ctx: &mut Ctx) {
        if let Some(id) = self.vertex_id {
            ctx.send(self.topo.dryad, Message::Sprout { id });
        } else {
            for petal in &self.petals {
                ctx.send(petal.source_blossom, Message::AnnounceSprout);
            }
        }
    }

    fn match_state(&self) -> MatchState {
        if self.defunct {
            MatchState::Free
        } else if let Some(up) = self.pistil {
            MatchState::Wrapped { next: up }
        } else if let Some(m) = self.match_edge {
            MatchState::Matched { partner: m.target_vertex }
        } else {
            MatchState::Free
        }
    }
}

impl Process for NodeState {
    fn handle(&mut self, ctx: &mut Ctx, src: Address, msg: Message) {
        // Pings and scans respect the pingable gate; all other traffic is
        // answered immediately.
        match msg {
            Message::Ping(p) if !self.defunct && !self.accepts(p.soft) => {
                self.deferred.push_back((src, Message::Ping(p)));
            }
            // A vertex can be pulled into a tree before its roster arrives;
            // a scan hitting it then must wait for the discovery reply.
            Message::Scan(s) if !self.defunct && (!self.accepts(s.soft) || self.roster.is_none()) => {
                self.deferred.push_back((src, Message::Scan(s)));
            }
            Message::Start => {
                if !self.is_macro() {
                    ctx.send(self.topo.dryad, Message::Discover);
                }
            }
            Message::DiscoverReply { roster } => {
                self.roster = Some(roster);
                self.replay_deferred(ctx);
            }
            Message::Ping(p) => self.handle_ping(ctx, *p),
            Message::Scan(s) => self.scan_entry(ctx, *s, None),
            Message::Pong(p) => self.handle_pong(ctx, *p),
            Message::TreeInfoHop(h) => self.hop_step(ctx, *h),
            Message::TreeInfoReply(r) => self.handle_tree_info(ctx, *r),
            Message::SoftScanCommand { reply, hold_cluster } => {
                let data = ScanData {
                    reply: None,
                    root: self.addr,
                    root_min_id: self.min_id,
                    blossom: self.addr,
                    weight: Weight::ZERO,
                    hold_cluster,
                    soft: true,
                };
                self.scan_entry(ctx, data, Some(reply));
            }
            Message::GetNodeFacts { token } => {
                ctx.send(
                    src,
                    Message::NodeFacts { token, info: Box::new(self.member_info()) },
                );
            }
            Message::LockTree(req) => self.handle_lock_tree(ctx, src, req),
            Message::LockSubtree(req) => self.handle_lock_subtree(ctx, src, req),
            Message::LockReply(r) => self.handle_lock_reply(ctx, *r),
            Message::Unlock(u) => self.handle_unlock(ctx, src, u),
            Message::SetPingable { token, ack_to, level } => {
                if self.lock.as_ref().is_some_and(|h| h.token == token) {
                    self.pingable = level;
                    ctx.send(ack_to, Message::Ack { token });
                    if level > Pingable::None {
                        self.replay_deferred(ctx);
                    }
                }
            }
            Message::Mutate(m) => {
                let authorized = self.lock.as_ref().is_some_and(|h| h.token == m.token);
                if authorized {
                    for update in m.updates {
                        self.apply_update(update);
                    }
                    ctx.send(m.ack_to, Message::Ack { token: m.token });
                }
            }
            Message::Ack { .. } => {}
            Message::AugmentStep { supervisor, preceding } => {
                self.handle_augment_step(ctx, supervisor, preceding)
            }
            Message::AugmentDone => {}
            Message::HeldQuery { token } => {
                // Report the hold this root is currently paused on, if any.
                let bucket = self.last_hold.clone();
                ctx.send(
                    src,
                    Message::HeldReply(Box::new(crate::msg::HeldReplyData {
                        token,
                        root: self.addr,
                        min_id: self.min_id,
                        bucket,
                    })),
                );
            }
            Message::AnnounceSprout => {
                if !self.defunct {
                    self.announce_sprout(ctx);
                }
            }
            Message::MatchStatusQuery => {
                ctx.send(
                    src,
                    Message::MatchStatus { id: self.vertex_id, state: self.match_state() },
                );
            }
            Message::TerminalExpandDirective => {
                let ready = self.is_macro()
                    && !self.defunct
                    && self.is_top()
                    && self.match_edge.is_some()
                    && self.parent.is_none()
                    && self.children.is_empty()
                    && self.lock.is_none()
                    && !self.paused;
                if ready {
                    self.paused = true;
                    ctx.spawn(Box::new(SupervisorState::new(
                        self.topo.clone(),
                        self.addr,
                        self.min_id,
                        OpKind::TerminalExpand { target: self.addr },
                    )));
                }
            }
            Message::ScanResult { .. }
            | Message::NodeFacts { .. }
            | Message::HeldReply(_)
            | Message::Sow { .. }
            | Message::Discover
            | Message::Sprout { .. }
            | Message::MatchStatus { .. }
            | Message::Reap { .. }
            | Message::Nudge { .. } => {}
        }
    }

    fn poll(&mut self, ctx: &mut Ctx) {
        if self.scan_eligible() && ctx.now >= self.cooldown_until && !self.has_root_session() {
            ctx.trace(TraceEvent::ScanStart { root: self.addr });
            let data = ScanData {
                reply: None,
                root: self.addr,
                root_min_id: self.min_id,
                blossom: self.addr,
                weight: Weight::ZERO,
                hold_cluster: Arc::new(BTreeSet::from([self.addr])),
                soft: false,
            };
            self.scan_entry(ctx, data, None);
        }
    }

    fn wake_at(&self) -> Option<u64> {
        if self.scan_eligible() && !self.has_root_session() {
            Some(self.cooldown_until)
        } else {
            None
        }
    }

    fn idle(&self) -> bool {
        if self.defunct {
            return true;
        }
        !(self.scan_eligible() && !self.has_root_session())
            && self.sessions.is_empty()
            && self.pending_pings.is_empty()
            && self.deferred.is_empty()
            && self.parked.is_empty()
            && self.gather.is_none()
    }

    fn resting(&self) -> bool {
        self.defunct
            || (self.lock.is_none()
                && !self.paused
                && self.deferred.is_empty()
                && self.parked.is_empty()
                && self.sessions.is_empty()
                && self.pending_pings.is_empty()
                && self.gather.is_none())
    }

    fn snapshot_part(&self) -> Option<BlossomSnap> {
        if self.defunct {
            return None;
        }
        let conv = |e: &DirectedEdge| SnapEdge {
            source_key: e.source_blossom,
            source_vertex: e.source_vertex,
            target_vertex: e.target_vertex,
            target_key: e.target_blossom,
        };
        Some(BlossomSnap {
            key: self.addr,
            vertex_id: self.vertex_id,
            internal_weight: self.internal_weight,
            pistil: self.pistil,
            petals: self.petals.iter().map(conv).collect(),
            match_edge: self.match_edge.as_ref().map(conv),
            parent: self.parent.as_ref().map(conv),
            children: self.children.iter().map(conv).collect(),
            positive: self.positive,
        })
    }

    fn kind(&self) -> &'static str {
        "node"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn facts(
        topmost: Address,
        positive: bool,
        match_pair: Option<(u32, u32)>,
        chain: i64,
        root: Address,
        root_matched: bool,
        root_min_id: u32,
    ) -> TreeInfoReplyData {
        TreeInfoReplyData {
            token: 0,
            topmost,
            topmost_positive: positive,
            topmost_match_pair: match_pair.map(|(a, b)| (VertexId(a), VertexId(b))),
            chain_weight: Weight::from_units(chain),
            root,
            root_matched,
            root_min_id,
        }
    }

    fn ping(root: Address, blossom: Address, weight: i64, sender: u32) -> PingData {
        PingData {
            session: SessionRef { owner: 99, token: 1 },
            root,
            root_min_id: sender,
            blossom,
            weight: Weight::from_units(weight),
            hold_cluster: Arc::new(BTreeSet::from([root])),
            sender_vertex: VertexId(sender),
            soft: false,
        }
    }

    fn k4() -> ProblemGraph {
        // Unit square cycle 0-1-3-2-0 with heavy diagonals.
        ProblemGraph::from_fn(4, |a, b| {
            let pair = (a.0.min(b.0), a.0.max(b.0));
            match pair {
                (0, 1) | (0, 2) | (1, 3) | (2, 3) => Weight::from_units(1),
                _ => Weight::from_units(2),
            }
        })
    }

    #[test]
    fn matched_edge_passes() {
        let g = k4();
        let p = ping(200, 210, 0, 0);
        let f = facts(211, true, Some((0, 1)), 0, 211, true, 1);
        let (op, seen) = ping_decision(&g, VertexId(1), Pingable::All, &p, &f);
        assert_eq!(op, OpCandidate::Pass);
        assert!(seen.is_none());
    }

    #[test]
    fn internal_edge_passes() {
        let g = k4();
        let p = ping(200, 210, 0, 0);
        let f = facts(210, true, None, 0, 200, false, 0);
        let (op, _) = ping_decision(&g, VertexId(1), Pingable::All, &p, &f);
        assert_eq!(op, OpCandidate::Pass);
    }

    #[test]
    fn slack_into_foreign_tree_is_uncut() {
        let g = k4();
        // Edge 0-1 weight 1, no duals spent: slack 1, receiver in another
        // tree: full slack caps the sender.
        let p = ping(200, 210, 0, 0);
        let f = facts(211, true, None, 0, 300, false, 7);
        let (op, seen) = ping_decision(&g, VertexId(1), Pingable::All, &p, &f);
        match op {
            OpCandidate::Reweight { amount, evidence } => {
                assert_eq!(amount, Weight::from_units(1));
                assert_eq!(evidence.unwrap().root_min_id, 7);
                assert!(!evidence.unwrap().mid_soft);
            }
            other => panic!("expected reweight, got {other:?}"),
        }
        assert_eq!(seen.unwrap().amount, Weight::from_units(1));
    }

    #[test]
    fn slack_within_one_tree_is_halved() {
        let g = k4();
        // Same root on both sides: both duals rise together, cap is half.
        let p = ping(200, 210, 0, 0);
        let f = facts(211, true, None, 0, 200, false, 0);
        let (op, _) = ping_decision(&g, VertexId(3), Pingable::All, &p, &f);
        match op {
            // Edge 0-3 weight 2 units, scale 1: adjusted 2, halved 1.
            OpCandidate::Reweight { amount, .. } => assert_eq!(amount, Weight::from_units(1)),
            other => panic!("expected reweight, got {other:?}"),
        }
    }

    #[test]
    fn negative_side_constrains_at_full_slack_or_holds() {
        let g = k4();
        let p = ping(200, 210, 0, 0);
        // Receiver negative in a foreign tree, slack 1: constraint.
        let f = facts(211, false, None, 0, 300, false, 2);
        let (op, _) = ping_decision(&g, VertexId(1), Pingable::All, &p, &f);
        match op {
            OpCandidate::Reweight { amount, .. } => assert_eq!(amount, Weight::from_units(1)),
            other => panic!("expected reweight, got {other:?}"),
        }
        // Tight edge into a foreign negative: hold against that root.
        let f = facts(211, false, None, 1, 300, false, 2);
        let (op, seen) = ping_decision(&g, VertexId(1), Pingable::All, &p, &f);
        assert_eq!(op, OpCandidate::Hold { bucket: BTreeSet::from([300]) });
        assert_eq!(seen.unwrap().amount, Weight::ZERO);
        // Same but the root is already in the sender's cluster: no news.
        let mut p2 = ping(200, 210, 0, 0);
        p2.hold_cluster = Arc::new(BTreeSet::from([200, 300]));
        let (op, _) = ping_decision(&g, VertexId(1), Pingable::All, &p2, &f);
        assert_eq!(op, OpCandidate::Pass);
    }

    #[test]
    fn tight_edges_pick_the_primal_op_by_receiver_root() {
        let g = k4();
        // Slack 0 via sender chain weight 1 on edge 0-1.
        let p = ping(200, 210, 1, 0);
        // Same tree: contract.
        let f = facts(211, true, None, 0, 200, false, 0);
        let (op, _) = ping_decision(&g, VertexId(1), Pingable::All, &p, &f);
        assert!(matches!(op, OpCandidate::Contract { .. }));
        // Foreign matched root: graft.
        let f = facts(211, true, None, 0, 300, true, 2);
        let (op, _) = ping_decision(&g, VertexId(1), Pingable::All, &p, &f);
        assert!(matches!(op, OpCandidate::Graft { .. }));
        // Foreign unmatched root: augment.
        let f = facts(211, true, None, 0, 300, false, 2);
        let (op, seen) = ping_decision(&g, VertexId(1), Pingable::All, &p, &f);
        match op {
            OpCandidate::Augment { edge } => {
                assert_eq!(edge.source_vertex, VertexId(0));
                assert_eq!(edge.target_vertex, VertexId(1));
                assert_eq!(edge.source_blossom, 210);
                assert_eq!(edge.target_blossom, 211);
            }
            other => panic!("expected augment, got {other:?}"),
        }
        assert_eq!(seen.unwrap().amount, Weight::ZERO);
    }

    #[test]
    fn soft_answers_carry_the_mid_soft_mark() {
        let g = k4();
        let p = ping(200, 210, 0, 0);
        let f = facts(211, true, None, 0, 300, false, 7);
        let (op, _) = ping_decision(&g, VertexId(1), Pingable::Soft, &p, &f);
        match op {
            OpCandidate::Reweight { evidence, .. } => assert!(evidence.unwrap().mid_soft),
            other => panic!("expected reweight, got {other:?}"),
        }
    }

    #[test]
    fn collision_hints_name_the_yielding_side() {
        let g = k4();
        // Sender chain 2 on the unit edge 0-1: slack is -1, a collision.
        let p = ping(200, 210, 2, 0); // sender root min id 0
        let hint = |receiver_min: u32, pingable| {
            let f = facts(211, true, None, 0, 300, false, receiver_min);
            let (_, seen) = ping_decision(&g, VertexId(1), pingable, &p, &f);
            let seen = seen.unwrap();
            assert!(seen.amount.is_negative());
            seen.rewind_hint
        };
        // Receiver still mid-flight and outranked by the sender: it yields.
        assert!(!hint(7, Pingable::Soft));
        // Receiver outranks the sender even mid-flight: sender yields.
        let mut p_low = ping(200, 210, 2, 0);
        p_low.root_min_id = 9;
        let f = facts(211, true, None, 0, 300, false, 7);
        let (_, seen) = ping_decision(&g, VertexId(1), Pingable::Soft, &p_low, &f);
        assert!(seen.unwrap().rewind_hint);
        // Receiver's duals are final: sender yields regardless of rank.
        assert!(hint(7, Pingable::All));
        // Positive slack never hints.
        let p_pos = ping(200, 210, 0, 0);
        let (_, seen) = ping_decision(&g, VertexId(1), Pingable::All, &p_pos, &f);
        assert!(!seen.unwrap().rewind_hint);
        // The fold keeps a hint even when a deeper slack arrives without one.
        let hinted = Some(MinSeen {
            amount: Weight::from_units(-1),
            evidence: Some(Evidence { root_min_id: 7, mid_soft: false }),
            rewind_hint: true,
        });
        let deeper = Some(MinSeen {
            amount: Weight::from_units(-2),
            evidence: Some(Evidence { root_min_id: 8, mid_soft: true }),
            rewind_hint: false,
        });
        let merged = MinSeen::merge(hinted, deeper).unwrap();
        assert_eq!(merged.amount, Weight::from_units(-2));
        assert!(merged.rewind_hint);
    }

    #[test]
    fn slot_updates_apply() {
        let topo = Arc::new(Topology {
            graph: Arc::new(k4()),
            collector: 0,
            dryad: 1,
            vertex_base: 3,
        });
        let mut node = NodeState::vertex(topo, 3, VertexId(0));
        let e = DirectedEdge {
            source_blossom: 3,
            source_vertex: VertexId(0),
            target_vertex: VertexId(1),
            target_blossom: 4,
        };
        let v0 = node.version;
        node.apply_update(SlotUpdate::SetMatch(Some(e)));
        node.apply_update(SlotUpdate::PatchMatchTarget { new: 9 });
        assert_eq!(node.match_edge.unwrap().target_blossom, 9);
        node.apply_update(SlotUpdate::AddChild(e));
        node.apply_update(SlotUpdate::ReplaceChildTarget { old: 4, new: 12 });
        assert_eq!(node.children[0].target_blossom, 12);
        node.apply_update(SlotUpdate::AddWeight(Weight::from_units(3)));
        node.apply_update(SlotUpdate::AddWeight(Weight::from_units(-1)));
        assert_eq!(node.internal_weight, Weight::from_units(2));
        assert!(node.version > v0);
        node.apply_update(SlotUpdate::SetDefunct);
        assert!(node.defunct);
        assert!(node.match_edge.is_none() && node.children.is_empty());
    }
}
