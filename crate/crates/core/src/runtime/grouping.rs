use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::envelope::Payload;

/// Stream grouping of an edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Grouping {
    Shuffle,
    Fields(String),
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grouping::Shuffle => write!(f, "shuffle"),
            Grouping::Fields(k) => write!(f, "fields({k})"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RouteError {
    #[error("payload has no field {0:?} required by fields grouping")]
    MissingKey(String),
    #[error("parallelism must be positive")]
    ZeroParallelism,
}

/// 64-bit FNV-1a; stable across runs and platforms.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Instance index for a fields-grouping key value.
pub fn fields_index(key_value: &str, parallelism: usize) -> usize {
    (stable_hash(key_value.as_bytes()) % parallelism as u64) as usize
}

/// Picks the target instance of an edge for a payload.
pub fn route<R: Rng + ?Sized>(
    payload: &Payload,
    grouping: &Grouping,
    parallelism: usize,
    rng: &mut R,
) -> Result<usize, RouteError> {
    if parallelism == 0 {
        return Err(RouteError::ZeroParallelism);
    }
    match grouping {
        Grouping::Shuffle => Ok(if parallelism == 1 { 0 } else { rng.gen_range(0..parallelism) }),
        Grouping::Fields(key) => {
            let value = payload.field(key).ok_or_else(|| RouteError::MissingKey(key.clone()))?;
            Ok(fields_index(value, parallelism))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fields_grouping_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Payload::new(Vec::new()).with_field("streamId", "cam7");
        let g = Grouping::Fields("streamId".into());
        let a = route(&p, &g, 4, &mut rng).unwrap();
        let b = route(&p, &g, 4, &mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, fields_index("cam7", 4));
    }

    #[test]
    fn parallelism_one_always_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Payload::new(Vec::new()).with_field("k", "v");
        for _ in 0..100 {
            assert_eq!(route(&p, &Grouping::Shuffle, 1, &mut rng).unwrap(), 0);
            assert_eq!(route(&p, &Grouping::Fields("k".into()), 1, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn missing_key_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Payload::new(Vec::new());
        assert_eq!(
            route(&p, &Grouping::Fields("streamId".into()), 2, &mut rng),
            Err(RouteError::MissingKey("streamId".into()))
        );
    }

    #[test]
    fn shuffle_spreads_load() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let p = Payload::new(Vec::new());
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[route(&p, &Grouping::Shuffle, 4, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((1500..=3500).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(stable_hash(b""), 0xcbf29ce484222325);
        assert_eq!(stable_hash(b"a"), 0xaf63dc4c8601ec8c);
    }
}
