//! Diagnosis of slow and hang anomalies in collective communication, driven
//! by a discrete-event simulator with deterministic fault injection.
//!
//! The crate has five cooperating layers:
//!
//! - [`trace`]: the diagnostic data model — trace ids, per-rank probing
//!   frames with fixed binary layouts, and metric snapshots.
//! - [`sim`]: a discrete-event simulator of multi-rank Ring/Tree collectives
//!   decomposed into per-channel send/recv units, with six injectable
//!   anomaly classes.
//! - [`probe`]: the per-rank sampler deriving progress rates from counter
//!   changes and emitting snapshots on completion and heartbeat.
//! - [`collector`]: snapshot transport, ordering, persistence, and replay.
//! - [`analyzer`]: detection (baseline, extreme-round selection, slowdown
//!   ratio) and root-cause location (decision tree over counters, rates,
//!   and duration contributions).
//!
//! [`pipeline`] wires everything together to run scenario scripts
//! end-to-end; see the `examples/` directory for one runnable walk-through
//! per capability, and the `commdiag` binary for the `run`/`replay`/`report`
//! commands.

pub mod analyzer;
pub mod collector;
pub mod error;
pub mod pipeline;
pub mod probe;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
