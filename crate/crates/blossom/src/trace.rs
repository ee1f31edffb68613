//! Event traces: a line-oriented JSON record of everything observable a run
//! did, plus cheap always-on counters.
//!
//! Both solvers emit the same format, so the auditor and the examples do not
//! care where a trace came from. Serialization is deterministic (ordered
//! structs and BTree maps only), which lets tests assert byte-identical
//! traces for identical configurations.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::weight::Weight;

/// One trace line: when, who, what.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub actor: u32,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// The observable events. `deliver` lines dominate by volume and are only
/// recorded at [`TraceLevel::Full`]; the rest are structural state updates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum TraceEvent {
    /// A message arrived at `dst` and was handled (or dropped if the
    /// recipient terminated earlier).
    Deliver {
        src: u32,
        dst: u32,
        /// Per (src, dst) channel sequence number, starting at 0.
        seq: u64,
        sent_tick: u64,
        /// Index of this send among all sends, for happens-before checks.
        sent_event: u64,
        msg: String,
        dropped: bool,
    },
    Spawn {
        body: String,
    },
    Terminate {
        reason: String,
    },
    /// A barbell was attached to a tree.
    Graft { root: u32, edge: (u32, u32) },
    /// Two trees were joined into matched pairs along an edge.
    Augment { edge: (u32, u32) },
    /// An odd cycle was wrapped into a macrovertex.
    Contract { root: u32, edge: (u32, u32) },
    /// A weightless macrovertex was unwrapped.
    Expand { root: u32, macro_min_id: u32 },
    /// A single tree changed its dual weights by `amount`.
    Reweight { root: u32, amount: Weight },
    /// A cluster of mutually held trees changed dual weights together.
    Multireweight { roots: Vec<u32>, amount: Weight },
    /// A committed reweight was undone in favour of a competing tree.
    Rewind { root: u32, evidence_root: u32, amount: Weight },
    /// A supervisor locked the listed trees (by root min-id).
    Lock { roots: Vec<u32> },
    Unlock { roots: Vec<u32> },
    /// A supervisor gave up before committing.
    Abort { stage: String },
    /// An unmatched root started probing its surroundings.
    ScanStart { root: u32 },
}

impl TraceEvent {
    /// Stable lowercase tag, identical to the serialized `kind` field.
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::Deliver { .. } => "deliver",
            TraceEvent::Spawn { .. } => "spawn",
            TraceEvent::Terminate { .. } => "terminate",
            TraceEvent::Graft { .. } => "graft",
            TraceEvent::Augment { .. } => "augment",
            TraceEvent::Contract { .. } => "contract",
            TraceEvent::Expand { .. } => "expand",
            TraceEvent::Reweight { .. } => "reweight",
            TraceEvent::Multireweight { .. } => "multireweight",
            TraceEvent::Rewind { .. } => "rewind",
            TraceEvent::Lock { .. } => "lock",
            TraceEvent::Unlock { .. } => "unlock",
            TraceEvent::Abort { .. } => "abort",
            TraceEvent::ScanStart { .. } => "scan_start",
        }
    }

    /// True for the events that commit a structural or dual change.
    pub fn is_commit(&self) -> bool {
        matches!(
            self,
            TraceEvent::Graft { .. }
                | TraceEvent::Augment { .. }
                | TraceEvent::Contract { .. }
                | TraceEvent::Expand { .. }
                | TraceEvent::Reweight { .. }
                | TraceEvent::Multireweight { .. }
        )
    }
}

/// How much a run records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceLevel {
    /// Counters only; no records.
    Counters,
    /// Structural events (everything except `deliver`).
    StateUpdates,
    /// Everything, including one record per delivered message.
    Full,
}

/// A run's recorded events plus always-on counters.
#[derive(Clone, Debug, Default)]
pub struct EventTrace {
    pub records: Vec<TraceRecord>,
    /// Messages delivered, counted even when not recorded.
    pub messages_delivered: u64,
    /// Ticks the simulation ran for (serial runs leave this 0).
    pub ticks: u64,
    /// Count per event kind, counted even when not recorded.
    pub kind_counts: BTreeMap<&'static str, u64>,
}

impl EventTrace {
    pub fn count(&self, kind: &str) -> u64 {
        self.kind_counts.get(kind).copied().unwrap_or(0)
    }

    /// Renders one JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            let line = serde_json::to_string(record).expect("trace records serialize");
            let _ = writeln!(out, "{line}");
        }
        out
    }

    /// Parses what [`to_jsonl`](Self::to_jsonl) produced. Counters are
    /// rebuilt from the records, so a `Counters`-level round trip is lossy
    /// by design.
    pub fn from_jsonl(text: &str) -> Result<EventTrace, serde_json::Error> {
        let mut trace = EventTrace::default();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord = serde_json::from_str(line)?;
            trace.push(record);
        }
        trace.ticks = trace.records.iter().map(|r| r.tick).max().unwrap_or(0);
        Ok(trace)
    }

    /// Appends a record and maintains the counters.
    pub fn push(&mut self, record: TraceRecord) {
        *self.kind_counts.entry(record.event.kind()).or_insert(0) += 1;
        if let TraceEvent::Deliver { .. } = record.event {
            self.messages_delivered += 1;
        }
        self.records.push(record);
    }

    /// Counts a suppressed event so counters stay exact at low trace levels.
    pub fn count_only(&mut self, event: &TraceEvent) {
        *self.kind_counts.entry(event.kind()).or_insert(0) += 1;
        if let TraceEvent::Deliver { .. } = event {
            self.messages_delivered += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventTrace {
        let mut t = EventTrace::default();
        t.push(TraceRecord {
            tick: 1,
            actor: 7,
            event: TraceEvent::Deliver {
                src: 3,
                dst: 7,
                seq: 0,
                sent_tick: 0,
                sent_event: 12,
                msg: "Ping".into(),
                dropped: false,
            },
        });
        t.push(TraceRecord {
            tick: 4,
            actor: 9,
            event: TraceEvent::Reweight {
                root: 2,
                amount: Weight::from_half_units(3),
            },
        });
        t.push(TraceRecord {
            tick: 6,
            actor: 9,
            event: TraceEvent::Rewind {
                root: 2,
                evidence_root: 0,
                amount: Weight::from_half_units(3),
            },
        });
        t
    }

    #[test]
    fn jsonl_round_trips() {
        let t = sample();
        let text = t.to_jsonl();
        let back = EventTrace::from_jsonl(&text).unwrap();
        assert_eq!(back.records, t.records);
        assert_eq!(back.messages_delivered, 1);
        assert_eq!(back.count("rewind"), 1);
        assert_eq!(back.ticks, 6);
    }

    #[test]
    fn lines_have_the_documented_shape() {
        let t = sample();
        let first = t.to_jsonl().lines().next().unwrap().to_string();
        let v: serde_json::Value = serde_json::from_str(&first).unwrap();
        assert_eq!(v["tick"], 1);
        assert_eq!(v["actor"], 7);
        assert_eq!(v["kind"], "deliver");
        assert_eq!(v["payload"]["src"], 3);
        assert_eq!(v["payload"]["dropped"], false);
    }

    #[test]
    fn weights_serialize_as_half_units() {
        let t = sample();
        let line = t.to_jsonl().lines().nth(1).unwrap().to_string();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["payload"]["amount"], 3);
    }

    #[test]
    fn counters_without_records() {
        let mut t = EventTrace::default();
        t.count_only(&TraceEvent::Spawn { body: "node".into() });
        t.count_only(&TraceEvent::Deliver {
            src: 0,
            dst: 1,
            seq: 0,
            sent_tick: 0,
            sent_event: 0,
            msg: "Start".into(),
            dropped: false,
        });
        assert_eq!(t.count("spawn"), 1);
        assert_eq!(t.messages_delivered, 1);
        assert!(t.records.is_empty());
    }
}
