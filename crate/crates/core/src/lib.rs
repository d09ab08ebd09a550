//! Slotted network simulator with lifetime-limited packets, and a constrained
//! multi-agent actor-critic controller that routes and schedules traffic at
//! minimum resource cost subject to per-commodity timely-throughput targets.
//!
//! * [`graph`]: topology, commodities and path enumeration.
//! * [`env`]: path/lifetime queues and the per-slot transition.
//! * [`nn`]: MLPs with manual backpropagation, Adam and a binary checkpoint format.
//! * [`agents`]: routing and scheduling actors, the centralized critic and replay.
//! * [`lagrangian`]: reward shaping, constraint estimates and the dual update.
//! * [`baselines`]: backpressure and a UMW-style policy.
//! * [`harness`]: configuration, training protocol, metrics and sweeps.

pub mod agents;
pub mod baselines;
pub mod env;
pub mod graph;
pub mod harness;
pub mod lagrangian;
pub mod nn;

pub use env::{ArrivalBatch, Env, NetAction, QueueState, StepOutcome};
pub use graph::{Commodity, Link, Network, NetworkGraph, Path};
pub use harness::{ExperimentConfig, PolicyKind};
