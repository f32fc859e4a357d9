//! Stream-processing runtime: topologies of spouts and bolts connected by
//! bounded queues, with XOR-based tuple-tree acking and timeout replay.

pub mod acker;
pub mod clock;
pub mod component;
pub mod envelope;
pub mod executor;
pub mod fault;
pub mod grouping;
pub mod report;
pub mod topology;

pub use acker::{AckError, AckerState, Origin, ReplayRequest, RootEntry, SpoutRef};
pub use clock::Clock;
pub use component::{Bolt, BoltError, Component, EmitError, Spout, SpoutEmission, SpoutError, SpoutPoll};
pub use envelope::{Payload, TupleEnvelope, TupleId, TupleIdGen};
pub use executor::{run, Collector, RunError, RunOptions, StopCondition, DEFAULT_REPLAY_BUDGET};
pub use fault::{FaultPlan, KillSpec};
pub use grouping::{route, stable_hash, Grouping, RouteError};
pub use report::{NodeCounts, RunReport};
pub use topology::{EdgeSpec, NodeKind, NodeSpec, StreamDecl, Topology, TopologyError, TopologySpec};
