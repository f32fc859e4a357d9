use std::sync::Arc;

use thiserror::Error;

use super::acker::AckError;
use super::envelope::{Payload, TupleEnvelope};
use super::executor::Collector;
use super::grouping::RouteError;

/// A tuple a spout wants to emit. `msg_id` is the spout's own handle for
/// the message and is reported back through `ack` / `replay` / `fail`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpoutEmission {
    pub msg_id: u64,
    pub stream: String,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpoutPoll {
    Emit(SpoutEmission),
    /// Nothing to emit right now (backpressure or rate limit).
    Idle,
    /// No new messages will appear; replays may still be requested.
    Exhausted,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpoutError {
    #[error("source gone: {0}")]
    SourceGone(String),
    #[error("{0}")]
    Other(String),
}

pub trait Spout: Send {
    fn next_tuple(&mut self, now_ms: u64, wall_ms: i64) -> Result<SpoutPoll, SpoutError>;

    /// The tree of `msg_id` completed.
    fn ack(&mut self, msg_id: u64);

    /// Re-create the original emission for `msg_id`, if still retained.
    fn replay(&mut self, msg_id: u64) -> Option<SpoutEmission>;

    /// Replay budget exhausted; the message is given up.
    fn fail(&mut self, msg_id: u64);

    /// Clock time at which an idle spout wants to be polled again.
    fn next_wakeup(&self) -> Option<u64> {
        None
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        Vec::new()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmitError {
    #[error("stream {0:?} is not declared by this node")]
    UnknownStream(String),
    #[error(transparent)]
    Ack(#[from] AckError),
    #[error(transparent)]
    Route(#[from] RouteError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoltError {
    /// Unrecoverable; the run is aborted.
    #[error("fatal: {0}")]
    Fatal(String),
    #[error(transparent)]
    Emit(#[from] EmitError),
}

pub trait Bolt: Send {
    /// Processes one input. The bolt is responsible for acking or failing
    /// `input`, possibly later (e.g. after a join).
    fn execute(&mut self, input: TupleEnvelope, out: &mut Collector<'_>) -> Result<(), BoltError>;

    /// Periodic callback; also delivered when a virtual clock advances.
    fn tick(&mut self, _out: &mut Collector<'_>) -> Result<(), BoltError> {
        Ok(())
    }

    fn next_wakeup(&self) -> Option<u64> {
        None
    }

    /// Called once at shutdown. Emissions are not possible any more.
    fn finish(&mut self) -> Result<(), BoltError> {
        Ok(())
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        Vec::new()
    }
}

pub type SpoutFactory = Arc<dyn Fn(usize) -> Box<dyn Spout> + Send + Sync>;
pub type BoltFactory = Arc<dyn Fn(usize) -> Box<dyn Bolt> + Send + Sync>;

/// Implementation bound to a topology node. Factories receive the instance index.
#[derive(Clone)]
pub enum Component {
    Spout(SpoutFactory),
    Bolt(BoltFactory),
}

impl Component {
    pub fn spout<F, S>(f: F) -> Self
    where
        F: Fn(usize) -> S + Send + Sync + 'static,
        S: Spout + 'static,
    {
        Component::Spout(Arc::new(move |i| Box::new(f(i))))
    }

    pub fn bolt<F, B>(f: F) -> Self
    where
        F: Fn(usize) -> B + Send + Sync + 'static,
        B: Bolt + 'static,
    {
        Component::Bolt(Arc::new(move |i| Box::new(f(i))))
    }
}
