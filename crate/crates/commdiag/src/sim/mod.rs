//! Discrete-event simulation of multi-rank collectives with deterministic
//! fault injection.

pub mod comm;
pub mod config;
pub mod engine;
pub mod fault;
pub mod plan;
pub mod scenario;

pub use comm::Communicator;
pub use config::ClusterConfig;
pub use engine::{
    default_substitute, Cluster, NoopHooks, RoundCompletion, SimClock, SimHooks, TraceEvent,
    TraceEventKind,
};
pub use fault::{FaultKind, FaultSpec};
pub use plan::{decompose_op, ChannelPlan, CollectivePlan, RankPlan, StepPlan};
pub use scenario::{Expectation, Scenario, ScenarioStep};
