use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::acker::AckError;

pub type TupleId = u64;

/// Keyed record carried by a tuple: a few string fields used for grouping
/// plus an opaque body (an encoded frame for most streams).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Payload {
    fields: BTreeMap<String, String>,
    body: Arc<[u8]>,
}

impl Payload {
    pub fn new(body: impl Into<Arc<[u8]>>) -> Self {
        Payload { fields: BTreeMap::new(), body: body.into() }
    }

    pub fn with_field(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.fields.insert(key.into(), value.into());
        self
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &str)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }
}

/// Immutable delivery record for one tuple on one edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleEnvelope {
    pub tuple_id: TupleId,
    pub root_id: TupleId,
    pub stream: Arc<str>,
    pub payload: Payload,
    /// Parent tuple ids; empty exactly for spout emissions.
    pub anchors: Vec<TupleId>,
}

impl TupleEnvelope {
    /// A spout emission belonging to the tree rooted at `root_id`.
    pub fn spout(ids: &mut TupleIdGen, root_id: TupleId, stream: &str, payload: Payload) -> Self {
        TupleEnvelope {
            tuple_id: ids.next_id(),
            root_id,
            stream: Arc::from(stream),
            payload,
            anchors: Vec::new(),
        }
    }

    /// A bolt emission anchored to `anchors`, which must all share one root.
    pub fn anchored(
        ids: &mut TupleIdGen,
        anchors: &[&TupleEnvelope],
        stream: &str,
        payload: Payload,
    ) -> Result<Self, AckError> {
        let first = anchors.first().ok_or(AckError::NoAnchors)?;
        if anchors.iter().any(|a| a.root_id != first.root_id) {
            return Err(AckError::MixedRoots);
        }
        Ok(TupleEnvelope {
            tuple_id: ids.next_id(),
            root_id: first.root_id,
            stream: Arc::from(stream),
            payload,
            anchors: anchors.iter().map(|a| a.tuple_id).collect(),
        })
    }

    pub fn is_spout_emission(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Seeded generator of nonzero 64-bit tuple and root ids.
#[derive(Debug, Clone)]
pub struct TupleIdGen {
    rng: ChaCha8Rng,
}

impl TupleIdGen {
    pub fn new(seed: u64) -> Self {
        TupleIdGen { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn next_id(&mut self) -> TupleId {
        loop {
            let id = self.rng.next_u64();
            if id != 0 {
                return id;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_nonzero_and_seeded() {
        let mut a = TupleIdGen::new(9);
        let mut b = TupleIdGen::new(9);
        for _ in 0..1000 {
            let x = a.next_id();
            assert_ne!(x, 0);
            assert_eq!(x, b.next_id());
        }
    }

    #[test]
    fn anchored_keeps_root_and_rejects_mixed_roots() {
        let mut ids = TupleIdGen::new(1);
        let p = Payload::new(vec![1u8]);
        let a = TupleEnvelope::spout(&mut ids, 10, "s", p.clone());
        let b = TupleEnvelope::spout(&mut ids, 10, "s", p.clone());
        let c = TupleEnvelope::spout(&mut ids, 11, "s", p.clone());
        let child = TupleEnvelope::anchored(&mut ids, &[&a, &b], "t", p.clone()).unwrap();
        assert_eq!(child.root_id, 10);
        assert_eq!(child.anchors, vec![a.tuple_id, b.tuple_id]);
        assert!(!child.is_spout_emission());
        assert_eq!(TupleEnvelope::anchored(&mut ids, &[&a, &c], "t", p.clone()), Err(AckError::MixedRoots));
        assert_eq!(TupleEnvelope::anchored(&mut ids, &[], "t", p), Err(AckError::NoAnchors));
    }
}
