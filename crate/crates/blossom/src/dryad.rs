//! Run coordination processes: the driver registers every vertex, the dryad
//! hands out neighbor rosters, watches coverage, and drives the terminal
//! unwrapping once the matching is perfect, and the collector records the
//! final pairs.
//!
//! The coverage signal is the `Sprout` cascade. A vertex sprouts whenever
//! its top-level blossom becomes matched; an unmatched top always contains
//! at least one vertex that has never sprouted (contractions at a tree root
//! keep the never-matched nucleus inside the new macrovertex), so the n-th
//! distinct sprout means the matching is perfect right now.

use crate::graph::VertexId;
use crate::msg::{Address, MatchState, Message};
use crate::node::Topology;
use crate::sim::{Ctx, Process};
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;
use std::sync::Arc;

/// Gap between match-status sweeps while macrovertices unwrap.
const REAP_RETRY_TICKS: u64 = 8;

/// Records the reaped pairs into a cell shared with the caller.
pub struct CollectorState {
    pairs: Rc<RefCell<Vec<(VertexId, VertexId)>>>,
}

impl CollectorState {
    pub fn new(pairs: Rc<RefCell<Vec<(VertexId, VertexId)>>>) -> CollectorState {
        CollectorState { pairs }
    }
}

impl Process for CollectorState {
    fn handle(&mut self, _ctx: &mut Ctx, _src: Address, msg: Message) {
        if let Message::Reap { a, b } = msg {
            self.pairs.borrow_mut().push((a, b));
        }
    }

    fn idle(&self) -> bool {
        true
    }

    fn resting(&self) -> bool {
        true
    }

    fn kind(&self) -> &'static str {
        "collector"
    }
}

/// Registers each vertex with the dryad, then exits.
pub struct DriverState {
    topo: Arc<Topology>,
}

impl DriverState {
    pub fn new(topo: Arc<Topology>) -> DriverState {
        DriverState { topo }
    }
}

impl Process for DriverState {
    fn handle(&mut self, ctx: &mut Ctx, _src: Address, msg: Message) {
        if let Message::Start = msg {
            let n = self.topo.graph.n() as u32;
            for id in self.topo.graph.vertices() {
                ctx.send(
                    self.topo.dryad,
                    Message::Sow {
                        id,
                        vertex: self.topo.vertex_addr(id),
                        expected_total: n,
                    },
                );
            }
            ctx.terminate();
        }
    }

    fn idle(&self) -> bool {
        true
    }

    fn resting(&self) -> bool {
        true
    }

    fn kind(&self) -> &'static str {
        "driver"
    }
}

enum Phase {
    Sowing,
    Solving,
    Reaping,
    Done,
}

/// One match-status sweep: every vertex is asked, wrapped answers are chased
/// up the pistil chain, and matched macrovertex tops become unwrap targets.
struct Round {
    outstanding: usize,
    queried: BTreeSet<Address>,
    matched: BTreeMap<VertexId, VertexId>,
    /// True while every vertex reply so far was a direct match.
    clean: bool,
    directives: BTreeSet<Address>,
}

pub struct DryadState {
    topo: Arc<Topology>,
    phase: Phase,
    expected: u32,
    sown: BTreeMap<VertexId, Address>,
    pending_discovers: Vec<Address>,
    roster: Option<Arc<Vec<(VertexId, Address)>>>,
    sprouted: BTreeSet<VertexId>,
    round: Option<Round>,
}

impl DryadState {
    pub fn new(topo: Arc<Topology>) -> DryadState {
        DryadState {
            topo,
            phase: Phase::Sowing,
            expected: 0,
            sown: BTreeMap::new(),
            pending_discovers: Vec::new(),
            roster: None,
            sprouted: BTreeSet::new(),
            round: None,
        }
    }

    fn on_sow(&mut self, ctx: &mut Ctx, id: VertexId, vertex: Address, expected_total: u32) {
        if !matches!(self.phase, Phase::Sowing) {
            return;
        }
        self.expected = expected_total;
        self.sown.insert(id, vertex);
        if self.sown.len() as u32 == self.expected {
            let roster = Arc::new(self.sown.iter().map(|(&v, &a)| (v, a)).collect::<Vec<_>>());
            for dst in std::mem::take(&mut self.pending_discovers) {
                ctx.send(dst, Message::DiscoverReply { roster: roster.clone() });
            }
            self.roster = Some(roster);
            self.phase = Phase::Solving;
        }
    }

    fn on_sprout(&mut self, ctx: &mut Ctx, id: VertexId) {
        self.sprouted.insert(id);
        if matches!(self.phase, Phase::Solving) && self.sprouted.len() as u32 == self.expected {
            self.phase = Phase::Reaping;
            self.start_round(ctx);
        }
    }

    fn start_round(&mut self, ctx: &mut Ctx) {
        let roster = self.roster.as_ref().expect("reaping starts after sowing");
        let mut queried = BTreeSet::new();
        for &(_, addr) in roster.iter() {
            ctx.send(addr, Message::MatchStatusQuery);
            queried.insert(addr);
        }
        self.round = Some(Round {
            outstanding: roster.len(),
            queried,
            matched: BTreeMap::new(),
            clean: true,
            directives: BTreeSet::new(),
        });
    }

    fn on_status(&mut self, ctx: &mut Ctx, src: Address, id: Option<VertexId>, state: MatchState) {
        let Some(round) = self.round.as_mut() else {
            return;
        };
        round.outstanding -= 1;
        let mut chase = |round: &mut Round, next: Address| {
            if round.queried.insert(next) {
                ctx.send(next, Message::MatchStatusQuery);
                round.outstanding += 1;
            }
        };
        match (id, state) {
            (Some(v), MatchState::Matched { partner }) => {
                round.matched.insert(v, partner);
            }
            (Some(_), MatchState::Wrapped { next }) => {
                round.clean = false;
                chase(round, next);
            }
            // A vertex mid-mutation; the next sweep will see it settled.
            (Some(_), MatchState::Free) => round.clean = false,
            (None, MatchState::Matched { .. }) => {
                round.directives.insert(src);
            }
            (None, MatchState::Wrapped { next }) => chase(round, next),
            // A retired or busy macrovertex; nothing to do with it.
            (None, MatchState::Free) => {}
        }
        if round.outstanding == 0 {
            self.finish_round(ctx);
        }
    }

    fn finish_round(&mut self, ctx: &mut Ctx) {
        let round = self.round.take().expect("a round just completed");
        let done = round.clean
            && round.matched.len() as u32 == self.expected
            && round
                .matched
                .iter()
                .all(|(&v, &p)| v != p && round.matched.get(&p) == Some(&v));
        if done {
            for (&a, &b) in &round.matched {
                if a < b {
                    ctx.send(self.topo.collector, Message::Reap { a, b });
                }
            }
            self.phase = Phase::Done;
            ctx.terminate();
            return;
        }
        for &target in &round.directives {
            ctx.send(target, Message::TerminalExpandDirective);
        }
        ctx.send_delayed(ctx.self_addr, Message::Nudge { tag: 0 }, REAP_RETRY_TICKS);
    }
}

impl Process for DryadState {
    fn handle(&mut self, ctx: &mut Ctx, src: Address, msg: Message) {
        match msg {
            Message::Sow { id, vertex, expected_total } => {
                self.on_sow(ctx, id, vertex, expected_total);
            }
            Message::Discover => match &self.roster {
                Some(roster) => {
                    ctx.send(src, Message::DiscoverReply { roster: roster.clone() })
                }
                None => self.pending_discovers.push(src),
            },
            Message::Sprout { id } => self.on_sprout(ctx, id),
            Message::MatchStatus { id, state } => self.on_status(ctx, src, id, state),
            Message::Nudge { .. } => {
                if matches!(self.phase, Phase::Reaping) && self.round.is_none() {
                    self.start_round(ctx);
                }
            }
            _ => {}
        }
    }

    fn idle(&self) -> bool {
        // An unfinished dryad marks a run as stuck, never as quiescent.
        matches!(self.phase, Phase::Done)
    }

    fn resting(&self) -> bool {
        true
    }

    fn kind(&self) -> &'static str {
        "dryad"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ProblemGraph;
    use crate::sim::{Sim, SimConfig};
    use crate::weight::Weight;

    /// Answers the coordination protocol like a real vertex would, from a
    /// scripted match state.
    struct FakeVertex {
        id: VertexId,
        dryad: Address,
        state: Rc<RefCell<MatchState>>,
        roster_len: Rc<RefCell<usize>>,
    }

    impl Process for FakeVertex {
        fn handle(&mut self, ctx: &mut Ctx, src: Address, msg: Message) {
            match msg {
                Message::Start => ctx.send(self.dryad, Message::Discover),
                Message::DiscoverReply { roster } => {
                    *self.roster_len.borrow_mut() = roster.len();
                    ctx.send(self.dryad, Message::Sprout { id: self.id });
                }
                Message::MatchStatusQuery => {
                    let state = self.state.borrow().clone();
                    ctx.send(src, Message::MatchStatus { id: Some(self.id), state });
                }
                _ => {}
            }
        }

        fn idle(&self) -> bool {
            true
        }

        fn resting(&self) -> bool {
            true
        }

        fn kind(&self) -> &'static str {
            "node"
        }
    }

    /// A wrapped pair's macrovertex: ignores the first `stall` unwrap
    /// directives, then flips its members to directly matched.
    struct FakeMacro {
        members: Vec<(Rc<RefCell<MatchState>>, MatchState)>,
        stall: u32,
        directives_seen: Rc<RefCell<u32>>,
        done: bool,
    }

    impl Process for FakeMacro {
        fn handle(&mut self, ctx: &mut Ctx, src: Address, msg: Message) {
            match msg {
                Message::MatchStatusQuery => {
                    let state = if self.done {
                        MatchState::Free
                    } else {
                        MatchState::Matched { partner: VertexId(0) }
                    };
                    ctx.send(src, Message::MatchStatus { id: None, state });
                }
                Message::TerminalExpandDirective => {
                    let seen = {
                        let mut c = self.directives_seen.borrow_mut();
                        *c += 1;
                        *c
                    };
                    if !self.done && seen > self.stall {
                        for (cell, settled) in &self.members {
                            *cell.borrow_mut() = settled.clone();
                        }
                        self.done = true;
                    }
                }
                _ => {}
            }
        }

        fn idle(&self) -> bool {
            true
        }

        fn resting(&self) -> bool {
            true
        }

        fn kind(&self) -> &'static str {
            "node"
        }
    }

    struct World {
        pairs: Rc<RefCell<Vec<(VertexId, VertexId)>>>,
        roster_lens: Vec<Rc<RefCell<usize>>>,
        states: Vec<Rc<RefCell<MatchState>>>,
        sim: Sim,
        topo: Arc<Topology>,
    }

    /// Collector + dryad + driver + n scripted vertices, in the standard
    /// address layout.
    fn world(states: Vec<MatchState>) -> World {
        let n = states.len();
        let graph = Arc::new(ProblemGraph::from_fn(n, |_, _| Weight::from_units(1)));
        let mut sim = Sim::new(SimConfig { seed: 7, ..SimConfig::default() });
        let topo = Arc::new(Topology {
            graph,
            collector: 0,
            dryad: 1,
            vertex_base: 3,
        });
        let pairs = Rc::new(RefCell::new(Vec::new()));
        sim.spawn_initial(Box::new(CollectorState::new(pairs.clone())));
        sim.spawn_initial(Box::new(DryadState::new(topo.clone())));
        sim.spawn_initial(Box::new(DriverState::new(topo.clone())));
        let states: Vec<Rc<RefCell<MatchState>>> =
            states.into_iter().map(|s| Rc::new(RefCell::new(s))).collect();
        let mut roster_lens = Vec::new();
        for (i, state) in states.iter().enumerate() {
            let roster_len = Rc::new(RefCell::new(0));
            roster_lens.push(roster_len.clone());
            sim.spawn_initial(Box::new(FakeVertex {
                id: VertexId(i as u32),
                dryad: topo.dryad,
                state: state.clone(),
                roster_len,
            }));
        }
        World { pairs, roster_lens, states, sim, topo }
    }

    #[test]
    fn sows_rosters_and_reaps_a_settled_matching() {
        let m = |p| MatchState::Matched { partner: VertexId(p) };
        let mut w = world(vec![m(1), m(0), m(3), m(2)]);
        w.sim.run().expect("quiesces");
        for len in &w.roster_lens {
            assert_eq!(*len.borrow(), 4);
        }
        assert_eq!(
            *w.pairs.borrow(),
            vec![(VertexId(0), VertexId(1)), (VertexId(2), VertexId(3))]
        );
    }

    #[test]
    fn wrapped_pairs_are_unwrapped_through_directives() {
        let m = |p| MatchState::Matched { partner: VertexId(p) };
        let macro_addr = 7;
        let mut w = world(vec![
            m(1),
            m(0),
            MatchState::Wrapped { next: macro_addr },
            MatchState::Wrapped { next: macro_addr },
        ]);
        let directives = Rc::new(RefCell::new(0));
        let spawned = w.sim.spawn_initial(Box::new(FakeMacro {
            members: vec![
                (w.states[2].clone(), m(3)),
                (w.states[3].clone(), m(2)),
            ],
            stall: 0,
            directives_seen: directives.clone(),
            done: false,
        }));
        assert_eq!(spawned, macro_addr);
        w.sim.run().expect("quiesces");
        assert_eq!(*directives.borrow(), 1);
        assert_eq!(
            *w.pairs.borrow(),
            vec![(VertexId(0), VertexId(1)), (VertexId(2), VertexId(3))]
        );
    }

    #[test]
    fn busy_tops_are_retried_until_they_unwrap() {
        let m = |p| MatchState::Matched { partner: VertexId(p) };
        let macro_addr = 5;
        let mut w = world(vec![
            MatchState::Wrapped { next: macro_addr },
            MatchState::Wrapped { next: macro_addr },
        ]);
        let directives = Rc::new(RefCell::new(0));
        w.sim.spawn_initial(Box::new(FakeMacro {
            members: vec![
                (w.states[0].clone(), m(1)),
                (w.states[1].clone(), m(0)),
            ],
            stall: 2,
            directives_seen: directives.clone(),
            done: false,
        }));
        w.sim.run().expect("quiesces");
        assert_eq!(*directives.borrow(), 3);
        assert_eq!(*w.pairs.borrow(), vec![(VertexId(0), VertexId(1))]);
        // The whole retry dance fits in the standard layout's address plan.
        assert_eq!(w.topo.vertex_addr(VertexId(1)), 4);
    }
}
