//! XOR tuple-tree tracking.
//!
//! Each root keeps the XOR of every tuple id emitted into its tree and every
//! id acked out of it. Since each id enters the XOR exactly twice (emit and
//! ack), the value returns to zero exactly when the tree is fully processed.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use super::envelope::{Payload, TupleEnvelope, TupleId, TupleIdGen};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum AckError {
    #[error("anchors belong to different tuple trees")]
    MixedRoots,
    #[error("a bolt emission needs at least one anchor")]
    NoAnchors,
    #[error("unknown root {0:#x}")]
    UnknownRoot(TupleId),
    #[error("root {0:#x} is already tracked")]
    DuplicateRoot(TupleId),
}

/// Identifies the spout executor instance that owns a root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpoutRef {
    pub node: usize,
    pub instance: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootEntry {
    pub xor: u64,
    pub deadline_ms: u64,
    pub spout: SpoutRef,
    pub msg_id: u64,
}

/// Instruction for a spout to re-emit message `msg_id` under a fresh root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayRequest {
    pub old_root: TupleId,
    pub spout: SpoutRef,
    pub msg_id: u64,
}

/// How a new envelope joins a tree.
#[derive(Debug, Clone, Copy)]
pub enum Origin<'a> {
    /// Spout emission into an already opened root.
    Spout { root_id: TupleId },
    Anchored(&'a [&'a TupleEnvelope]),
}

#[derive(Debug, Default)]
pub struct AckerState {
    roots: HashMap<TupleId, RootEntry>,
    deadlines: BTreeSet<(u64, TupleId)>,
}

impl AckerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> usize {
        self.roots.len()
    }

    pub fn entry(&self, root_id: TupleId) -> Option<&RootEntry> {
        self.roots.get(&root_id)
    }

    pub fn next_deadline(&self) -> Option<u64> {
        self.deadlines.first().map(|(d, _)| *d)
    }

    /// Starts tracking an empty tree (xor 0). Spout emissions are then folded
    /// in with [`AckerState::emit`] or [`AckerState::record_xor`].
    pub fn open_root(&mut self, root_id: TupleId, spout: SpoutRef, msg_id: u64, deadline_ms: u64) -> Result<(), AckError> {
        if self.roots.contains_key(&root_id) {
            return Err(AckError::DuplicateRoot(root_id));
        }
        self.roots.insert(root_id, RootEntry { xor: 0, deadline_ms, spout, msg_id });
        self.deadlines.insert((deadline_ms, root_id));
        Ok(())
    }

    /// Removes a root without replay, e.g. one that was opened but received no tuples.
    pub fn close_root(&mut self, root_id: TupleId) -> Option<RootEntry> {
        self.remove(root_id)
    }

    /// Creates an envelope with a fresh id and folds it into its tree.
    pub fn emit(
        &mut self,
        ids: &mut TupleIdGen,
        origin: Origin<'_>,
        stream: &str,
        payload: Payload,
    ) -> Result<TupleEnvelope, AckError> {
        let envelope = match origin {
            Origin::Spout { root_id } => TupleEnvelope::spout(ids, root_id, stream, payload),
            Origin::Anchored(anchors) => TupleEnvelope::anchored(ids, anchors, stream, payload)?,
        };
        self.record_xor(envelope.root_id, envelope.tuple_id)?;
        Ok(envelope)
    }

    /// XORs `value` into the tree. Returns true if the tree completed.
    pub fn record_xor(&mut self, root_id: TupleId, value: u64) -> Result<bool, AckError> {
        let entry = self.roots.get_mut(&root_id).ok_or(AckError::UnknownRoot(root_id))?;
        entry.xor ^= value;
        if entry.xor == 0 {
            self.remove(root_id);
            return Ok(true);
        }
        Ok(false)
    }

    /// Acks one tuple. Returns true iff the tree is now fully processed;
    /// completed roots are forgotten.
    pub fn ack(&mut self, tuple_id: TupleId, root_id: TupleId) -> Result<bool, AckError> {
        self.record_xor(root_id, tuple_id)
    }

    /// Explicit failure: drop the root and request a replay right away.
    pub fn fail(&mut self, root_id: TupleId) -> Option<ReplayRequest> {
        self.remove(root_id).map(|e| ReplayRequest { old_root: root_id, spout: e.spout, msg_id: e.msg_id })
    }

    /// Timeout check for a single root: replays only when `now` is past the
    /// deadline and the tree is incomplete.
    pub fn on_timeout(&mut self, root_id: TupleId, now_ms: u64) -> Option<ReplayRequest> {
        match self.roots.get(&root_id) {
            Some(e) if now_ms > e.deadline_ms && e.xor != 0 => self.fail(root_id),
            _ => None,
        }
    }

    /// All roots whose deadline has passed, in deadline order.
    pub fn expire(&mut self, now_ms: u64) -> Vec<ReplayRequest> {
        let due: Vec<TupleId> = self
            .deadlines
            .iter()
            .take_while(|(d, _)| *d < now_ms)
            .map(|(_, r)| *r)
            .collect();
        due.into_iter().filter_map(|r| self.on_timeout(r, now_ms)).collect()
    }

    fn remove(&mut self, root_id: TupleId) -> Option<RootEntry> {
        let entry = self.roots.remove(&root_id)?;
        self.deadlines.remove(&(entry.deadline_ms, root_id));
        Some(entry)
    }
}
