//! Deterministic discrete-event runtime for the solver's processes.
//!
//! Time advances in integer ticks. Each (sender, receiver) channel is a FIFO
//! queue: a message becomes deliverable `latency` ticks after it was sent,
//! but never before earlier messages on the same channel. Per tick the
//! runtime collects every channel's deliverable head, shuffles them with the
//! run's seeded generator, delivers each, then polls live processes in
//! address order. All randomness flows from the one seed, so a run is a pure
//! function of (instance, configuration).

use crate::msg::{Address, Message};
use crate::snapshot::BlossomSnap;
use crate::trace::{EventTrace, TraceEvent, TraceLevel, TraceRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::fmt;

/// Message latency model. Sampled per send; always at least one tick so a
/// handler never observes its own output in the same tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Latency {
    Fixed(u64),
    /// Uniformly random in `lo..=hi`.
    Uniform(u64, u64),
}

impl Latency {
    fn sample(self, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            Latency::Fixed(k) => k.max(1),
            Latency::Uniform(lo, hi) => {
                let lo = lo.max(1);
                let hi = hi.max(lo);
                rng.gen_range(lo..=hi)
            }
        }
    }
}

impl fmt::Display for Latency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Latency::Fixed(k) => write!(f, "fixed:{k}"),
            Latency::Uniform(lo, hi) => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub seed: u64,
    pub latency: Latency,
    /// Abort with [`RunError::Livelock`] past this tick.
    pub max_ticks: u64,
    pub trace_level: TraceLevel,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            latency: Latency::Fixed(1),
            max_ticks: 1_000_000,
            trace_level: TraceLevel::Counters,
        }
    }
}

/// Effects a handler wants applied after it returns: sends, spawns, traces,
/// and its own termination. Handlers never touch the runtime directly.
pub struct Ctx<'a> {
    pub self_addr: Address,
    pub now: u64,
    next_addr: &'a mut Address,
    sends: Vec<(Address, Message, u64)>,
    spawns: Vec<(Address, Box<dyn Process>)>,
    traces: Vec<TraceEvent>,
    terminate: bool,
}

impl<'a> Ctx<'a> {
    fn new(self_addr: Address, now: u64, next_addr: &'a mut Address) -> Self {
        Ctx {
            self_addr,
            now,
            next_addr,
            sends: Vec::new(),
            spawns: Vec::new(),
            traces: Vec::new(),
            terminate: false,
        }
    }

    pub fn send(&mut self, dst: Address, msg: Message) {
        self.sends.push((dst, msg, 0));
    }

    /// Send with `extra` ticks added on top of the sampled latency; used for
    /// retry timers.
    pub fn send_delayed(&mut self, dst: Address, msg: Message, extra: u64) {
        self.sends.push((dst, msg, extra));
    }

    /// Address the next [`spawn`](Self::spawn) will assign; lets a process
    /// build a body that knows its own address up front.
    pub fn next_spawn_addr(&self) -> Address {
        *self.next_addr
    }

    /// Creates a process next tick; its address is usable immediately. The
    /// runtime mails it a `Start`.
    pub fn spawn(&mut self, body: Box<dyn Process>) -> Address {
        let addr = *self.next_addr;
        *self.next_addr += 1;
        self.spawns.push((addr, body));
        addr
    }

    pub fn trace(&mut self, event: TraceEvent) {
        self.traces.push(event);
    }

    /// Removes this process after the current handler; later mail to it is
    /// dropped (and the drop is traced).
    pub fn terminate(&mut self) {
        self.terminate = true;
    }
}

/// A simulated process. Only `handle` is mandatory; the rest feed the
/// runtime's scheduling, termination, and snapshot machinery.
pub trait Process {
    fn handle(&mut self, ctx: &mut Ctx, src: Address, msg: Message);

    /// Called once per tick (in address order) after deliveries; the place
    /// to initiate work that no incoming message triggers.
    fn poll(&mut self, _ctx: &mut Ctx) {}

    /// Tick at which `poll` would do something, if any; lets the runtime
    /// fast-forward through dead time.
    fn wake_at(&self) -> Option<u64> {
        None
    }

    /// A permanently idle process will never act without new mail. The run
    /// only terminates when every process is idle and no mail is queued; a
    /// non-idle process with no mail in flight is a stuck protocol.
    fn idle(&self) -> bool {
        true
    }

    /// True when this process holds no transient protocol state, so a
    /// forest snapshot taken now is coherent.
    fn resting(&self) -> bool {
        true
    }

    /// Structural contribution to a forest snapshot, with addresses in the
    /// key fields; the caller translates addresses to stable keys.
    fn snapshot_part(&self) -> Option<BlossomSnap> {
        None
    }

    /// Process kind label for spawn traces.
    fn kind(&self) -> &'static str;
}

struct Envelope {
    seq: u64,
    sent_tick: u64,
    sent_event: u64,
    ready_tick: u64,
    msg: Message,
}

#[derive(Debug)]
pub enum RunError {
    /// The tick budget ran out, or no queued mail can ever unblock a
    /// non-idle process.
    Livelock { ticks: u64, trace: EventTrace },
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Livelock { ticks, .. } => {
                write!(f, "no quiescence after {ticks} ticks; livelock suspected")
            }
        }
    }
}

impl std::error::Error for RunError {}

/// What a finished run hands back. Snapshot parts still carry raw addresses.
pub struct SimOutcome {
    pub trace: EventTrace,
    pub ticks: u64,
    /// Forest snapshots at every busy-to-quiescent transition, with ticks.
    pub raw_snapshots: Vec<(u64, Vec<BlossomSnap>)>,
    /// Forest right before the first terminal unwrap directive landed,
    /// with the tick it was taken at. From that tick on the run is reading
    /// the matching out of its macrovertices, not solving.
    pub raw_pre_terminal: Option<(u64, Vec<BlossomSnap>)>,
    pub raw_final: Vec<BlossomSnap>,
    /// Every spawn in order, with the process kind.
    pub spawn_log: Vec<(Address, &'static str)>,
}

pub struct Sim {
    config: SimConfig,
    processes: Vec<Option<Box<dyn Process>>>,
    alive: Vec<bool>,
    queues: BTreeMap<(Address, Address), VecDeque<Envelope>>,
    seq_counters: BTreeMap<(Address, Address), u64>,
    next_addr: Address,
    now: u64,
    rng: ChaCha8Rng,
    trace: EventTrace,
    send_counter: u64,
    spawn_log: Vec<(Address, &'static str)>,
    raw_snapshots: Vec<(u64, Vec<BlossomSnap>)>,
    raw_pre_terminal: Option<(u64, Vec<BlossomSnap>)>,
    was_resting: bool,
}

impl Sim {
    pub fn new(config: SimConfig) -> Sim {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Sim {
            config,
            processes: Vec::new(),
            alive: Vec::new(),
            queues: BTreeMap::new(),
            seq_counters: BTreeMap::new(),
            next_addr: 0,
            now: 0,
            rng,
            trace: EventTrace::default(),
            send_counter: 0,
            spawn_log: Vec::new(),
            raw_snapshots: Vec::new(),
            raw_pre_terminal: None,
            was_resting: false,
        }
    }

    /// Installs a process before the run begins. It receives `Start` from
    /// itself on the first tick.
    pub fn spawn_initial(&mut self, body: Box<dyn Process>) -> Address {
        let addr = self.next_addr;
        self.next_addr += 1;
        self.install(addr, body);
        self.enqueue(addr, addr, Message::Start, 0);
        addr
    }

    fn install(&mut self, addr: Address, body: Box<dyn Process>) {
        debug_assert_eq!(addr as usize, self.processes.len());
        self.trace_event(addr, TraceEvent::Spawn { body: body.kind().to_string() });
        self.spawn_log.push((addr, body.kind()));
        self.processes.push(Some(body));
        self.alive.push(true);
    }

    fn trace_event(&mut self, actor: Address, event: TraceEvent) {
        let record = TraceRecord { tick: self.now, actor, event };
        match self.config.trace_level {
            TraceLevel::Counters => self.trace.count_only(&record.event),
            TraceLevel::StateUpdates => {
                if matches!(record.event, TraceEvent::Deliver { .. }) {
                    self.trace.count_only(&record.event);
                } else {
                    self.trace.push(record);
                }
            }
            TraceLevel::Full => self.trace.push(record),
        }
    }

    fn enqueue(&mut self, src: Address, dst: Address, msg: Message, extra: u64) {
        let latency = self.config.latency.sample(&mut self.rng) + extra;
        let seq = {
            let c = self.seq_counters.entry((src, dst)).or_insert(0);
            let s = *c;
            *c += 1;
            s
        };
        let envelope = Envelope {
            seq,
            sent_tick: self.now,
            sent_event: self.send_counter,
            ready_tick: self.now + latency,
            msg,
        };
        self.send_counter += 1;
        self.queues.entry((src, dst)).or_default().push_back(envelope);
    }

    fn apply_ctx(&mut self, actor: Address, ctx_out: CtxOut) {
        for event in ctx_out.traces {
            self.trace_event(actor, event);
        }
        for (addr, body) in ctx_out.spawns {
            self.install(addr, body);
            self.enqueue(actor, addr, Message::Start, 0);
        }
        for (dst, msg, extra) in ctx_out.sends {
            self.enqueue(actor, dst, msg, extra);
        }
        if ctx_out.terminate {
            self.alive[actor as usize] = false;
            self.processes[actor as usize] = None;
            self.trace_event(actor, TraceEvent::Terminate { reason: "done".to_string() });
        }
    }

    fn run_handler<F>(&mut self, actor: Address, f: F)
    where
        F: FnOnce(&mut dyn Process, &mut Ctx),
    {
        // Take the body out so the handler can borrow the world via Ctx.
        let mut body = self.processes[actor as usize].take().expect("live process");
        let mut next_addr = self.next_addr;
        let mut ctx = Ctx::new(actor, self.now, &mut next_addr);
        f(body.as_mut(), &mut ctx);
        let out = CtxOut {
            sends: ctx.sends,
            spawns: ctx.spawns,
            traces: ctx.traces,
            terminate: ctx.terminate,
        };
        self.next_addr = next_addr;
        self.processes[actor as usize] = Some(body);
        self.apply_ctx(actor, out);
    }

    fn deliver(&mut self, src: Address, dst: Address) {
        let envelope = self
            .queues
            .get_mut(&(src, dst))
            .and_then(|q| q.pop_front())
            .expect("scheduled head exists");
        if let Some(q) = self.queues.get(&(src, dst)) {
            if q.is_empty() {
                self.queues.remove(&(src, dst));
            }
        }
        let dropped = !self.alive[dst as usize];
        if matches!(self.config.trace_level, TraceLevel::Full) || dropped {
            self.trace_event(
                dst,
                TraceEvent::Deliver {
                    src,
                    dst,
                    seq: envelope.seq,
                    sent_tick: envelope.sent_tick,
                    sent_event: envelope.sent_event,
                    msg: envelope.msg.summary(),
                    dropped,
                },
            );
        } else {
            self.trace.count_only(&TraceEvent::Deliver {
                src,
                dst,
                seq: envelope.seq,
                sent_tick: envelope.sent_tick,
                sent_event: envelope.sent_event,
                msg: String::new(),
                dropped,
            });
        }
        if dropped {
            return;
        }
        if envelope.msg.is_terminal_directive() && self.raw_pre_terminal.is_none() {
            self.raw_pre_terminal = Some((self.now, self.collect_snapshot()));
        }
        self.run_handler(dst, |p, ctx| p.handle(ctx, src, envelope.msg));
    }

    fn collect_snapshot(&self) -> Vec<BlossomSnap> {
        self.processes
            .iter()
            .flatten()
            .filter_map(|p| p.snapshot_part())
            .collect()
    }

    fn all_resting(&self) -> bool {
        self.queues.is_empty() && self.processes.iter().flatten().all(|p| p.resting())
    }

    fn livelock(&mut self) -> RunError {
        self.trace.ticks = self.now;
        RunError::Livelock { ticks: self.now, trace: std::mem::take(&mut self.trace) }
    }

    /// Runs to quiescence or to the tick budget. Each loop iteration is one
    /// simulated tick; stretches where nothing can happen are skipped.
    pub fn run(&mut self) -> Result<SimOutcome, RunError> {
        loop {
            if self.now > self.config.max_ticks {
                return Err(self.livelock());
            }

            // Heads deliverable this tick, one per channel.
            let mut ready: Vec<(Address, Address)> = self
                .queues
                .iter()
                .filter(|(_, q)| q.front().is_some_and(|e| e.ready_tick <= self.now))
                .map(|(&k, _)| k)
                .collect();
            ready.sort_unstable();
            ready.shuffle(&mut self.rng);
            for (src, dst) in ready {
                self.deliver(src, dst);
            }

            for addr in 0..self.processes.len() as Address {
                if self.alive[addr as usize] {
                    self.run_handler(addr, |p, ctx| p.poll(ctx));
                }
            }

            let resting = self.all_resting();
            if resting && !self.was_resting {
                let snap = self.collect_snapshot();
                self.raw_snapshots.push((self.now, snap));
            }
            self.was_resting = resting;

            // Pick the next tick worth simulating.
            let next_mail = self
                .queues
                .values()
                .filter_map(|q| q.front())
                .map(|e| e.ready_tick)
                .min();
            let next_wake = self
                .processes
                .iter()
                .flatten()
                .filter_map(|p| p.wake_at())
                .min();
            match next_mail.into_iter().chain(next_wake).min() {
                // A wake in the past still means "poll me next tick".
                Some(target) => self.now = target.max(self.now + 1),
                None => {
                    if self.processes.iter().flatten().all(|p| p.idle()) {
                        break;
                    }
                    // Someone still wants to act but nothing can ever reach
                    // them: a stuck protocol, not quiescence.
                    return Err(self.livelock());
                }
            }
        }

        self.trace.ticks = self.now;
        let raw_final = self.collect_snapshot();
        Ok(SimOutcome {
            trace: std::mem::take(&mut self.trace),
            ticks: self.now,
            raw_snapshots: std::mem::take(&mut self.raw_snapshots),
            raw_pre_terminal: self.raw_pre_terminal.take(),
            raw_final,
            spawn_log: std::mem::take(&mut self.spawn_log),
        })
    }
}

struct CtxOut {
    sends: Vec<(Address, Message, u64)>,
    spawns: Vec<(Address, Box<dyn Process>)>,
    traces: Vec<TraceEvent>,
    terminate: bool,
}
