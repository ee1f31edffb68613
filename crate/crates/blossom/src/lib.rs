//! Minimum-weight perfect matching on complete graphs, three ways:
//!
//! * a distributed solver in which every vertex is an actor and matching
//!   trees coordinate through message passing alone, run on a deterministic
//!   discrete-event simulator;
//! * a serial blossom solver used as a fast reference;
//! * an exhaustive oracle for small instances.
//!
//! All three agree exactly; the integration tests cross-check them against
//! each other, against structural validators run on simulator snapshots, and
//! against an optimality certificate extracted from the distributed run.
//!
//! Start with the `examples/` directory: each example is a runnable tour of
//! one capability (solving, tracing, verification, scheduler sweeps).

pub mod cli;
pub mod dryad;
pub mod graph;
pub mod hungarian;
pub mod msg;
pub mod node;
pub mod oracle;
pub mod samples;
pub mod serial;
pub mod sim;
pub mod snapshot;
pub mod solver;
pub mod supervisor;
pub mod trace;
pub mod verify;
pub mod weight;

pub use graph::{Matching, Metric, ProblemGraph, VertexId};
pub use weight::Weight;
